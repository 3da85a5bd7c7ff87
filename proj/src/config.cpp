#include "fedlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "fedlab/errors.hpp"

namespace fedlab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& raw, const std::string& where) {
  T value{};
  const std::string t = trim(raw);
  auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ConfigError(where + ": cannot parse '" + t + "'");
  return value;
}

template <>
double parse_number<double>(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  try {
    std::size_t pos = 0;
    double value = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return value;
  } catch (const std::exception&) {
    throw ConfigError(where + ": cannot parse '" + t + "'");
  }
}

std::vector<Field> field_table() {
  std::vector<Field> fields;
  auto def = [&](const char* sec, const char* key, auto getter, auto setter) {
    fields.push_back(Field{sec, key, getter, setter});
  };

#define FEDLAB_STR_FIELD(sec, key, member)                                          \
  def(sec, key, [](const ExperimentConfig& c) { return c.member; },                 \
      [](ExperimentConfig& c, const std::string& v, const std::string&) {           \
        c.member = trim(v);                                                         \
      })
#define FEDLAB_INT_FIELD(sec, key, member)                                          \
  def(sec, key, [](const ExperimentConfig& c) { return std::to_string(c.member); }, \
      [](ExperimentConfig& c, const std::string& v, const std::string& where) {     \
        c.member = parse_number<int>(v, where);                                     \
      })
#define FEDLAB_I64_FIELD(sec, key, member)                                          \
  def(sec, key, [](const ExperimentConfig& c) { return std::to_string(c.member); }, \
      [](ExperimentConfig& c, const std::string& v, const std::string& where) {     \
        c.member = parse_number<std::int64_t>(v, where);                            \
      })
#define FEDLAB_U64_FIELD(sec, key, member)                                          \
  def(sec, key, [](const ExperimentConfig& c) { return std::to_string(c.member); }, \
      [](ExperimentConfig& c, const std::string& v, const std::string& where) {     \
        c.member = parse_number<std::uint64_t>(v, where);                           \
      })
#define FEDLAB_DBL_FIELD(sec, key, member)                                          \
  def(sec, key, [](const ExperimentConfig& c) { return format_double(c.member); },  \
      [](ExperimentConfig& c, const std::string& v, const std::string& where) {     \
        c.member = parse_number<double>(v, where);                                  \
      })

  FEDLAB_STR_FIELD("data", "dataset", data.dataset);
  FEDLAB_STR_FIELD("data", "mnist_dir", data.mnist_dir);
  FEDLAB_INT_FIELD("data", "synth_classes", data.synth_classes);
  FEDLAB_INT_FIELD("data", "synth_per_class", data.synth_per_class);
  FEDLAB_I64_FIELD("data", "train_subset", data.train_subset);
  FEDLAB_I64_FIELD("data", "test_subset", data.test_subset);
  FEDLAB_DBL_FIELD("data", "phi", data.phi);

  FEDLAB_INT_FIELD("fl", "clients", fl.clients);
  FEDLAB_INT_FIELD("fl", "per_round", fl.per_round);
  FEDLAB_INT_FIELD("fl", "rounds", fl.rounds);
  FEDLAB_INT_FIELD("fl", "local_epochs", fl.local_epochs);
  FEDLAB_DBL_FIELD("fl", "lr", fl.lr);
  FEDLAB_INT_FIELD("fl", "batch", fl.batch);
  FEDLAB_INT_FIELD("fl", "test_batch", fl.test_batch);
  FEDLAB_U64_FIELD("fl", "seed", fl.seed);

  FEDLAB_STR_FIELD("attack", "kind", attack.kind);
  FEDLAB_INT_FIELD("attack", "malicious", attack.malicious);
  FEDLAB_INT_FIELD("attack", "frequency", attack.frequency);
  FEDLAB_DBL_FIELD("attack", "alpha", attack.alpha);
  FEDLAB_DBL_FIELD("attack", "beta", attack.beta);
  FEDLAB_DBL_FIELD("attack", "atk_lr", attack.atk_lr);
  FEDLAB_INT_FIELD("attack", "poison_epochs", attack.poison_epochs);
  FEDLAB_DBL_FIELD("attack", "epsilon", attack.epsilon);
  FEDLAB_DBL_FIELD("attack", "gamma", attack.gamma);
  FEDLAB_STR_FIELD("attack", "atlas", attack.atlas);

  FEDLAB_STR_FIELD("defense", "kind", defense.kind);
  FEDLAB_DBL_FIELD("defense", "nc_rho", defense.nc_rho);
  FEDLAB_DBL_FIELD("defense", "dp_rho", defense.dp_rho);
  FEDLAB_DBL_FIELD("defense", "dp_sigma", defense.dp_sigma);
  FEDLAB_INT_FIELD("defense", "krum_f", defense.krum_f);
  FEDLAB_INT_FIELD("defense", "mk_m", defense.mk_m);
  FEDLAB_DBL_FIELD("defense", "rlr_threshold", defense.rlr_threshold);
  FEDLAB_DBL_FIELD("defense", "rlr_server_lr", defense.rlr_server_lr);
  FEDLAB_DBL_FIELD("defense", "fedrad_server_frac", defense.fedrad_server_frac);
  FEDLAB_INT_FIELD("defense", "fedrad_epochs", defense.fedrad_epochs);
  FEDLAB_DBL_FIELD("defense", "fedrad_temperature", defense.fedrad_temperature);
  FEDLAB_DBL_FIELD("defense", "fedrad_lr", defense.fedrad_lr);
  FEDLAB_INT_FIELD("defense", "ds_seeds", defense.ds_seeds);
  FEDLAB_INT_FIELD("defense", "ds_noise_samples", defense.ds_noise_samples);
  FEDLAB_DBL_FIELD("defense", "ds_tau", defense.ds_tau);
  FEDLAB_DBL_FIELD("defense", "ds_te_frac", defense.ds_te_frac);
  FEDLAB_DBL_FIELD("defense", "ds_clip", defense.ds_clip);
  FEDLAB_INT_FIELD("defense", "rb_pca_dims", defense.rb_pca_dims);
  FEDLAB_INT_FIELD("defense", "rb_clusters", defense.rb_clusters);

  FEDLAB_INT_FIELD("eval", "stride", eval.stride);
  FEDLAB_INT_FIELD("eval", "dump_samples", eval.dump_samples);

#undef FEDLAB_STR_FIELD
#undef FEDLAB_INT_FIELD
#undef FEDLAB_I64_FIELD
#undef FEDLAB_U64_FIELD
#undef FEDLAB_DBL_FIELD
  return fields;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = field_table();
  return table;
}

void check(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ConfigError(field + ": " + msg);
}

bool one_of(const std::string& v, std::initializer_list<const char*> options) {
  return std::any_of(options.begin(), options.end(),
                     [&](const char* o) { return v == o; });
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw FormatError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!one_of(section, {"data", "fl", "attack", "defense", "eval"}))
        throw ConfigError("unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = t.substr(eq + 1);
    if (section.empty())
      throw ConfigError("key '" + key + "' appears before any [section]");
    const std::string where = section + "." + key;
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) {
      return f.section == section && f.key == key;
    });
    if (it == table.end()) throw ConfigError("unknown key " + where);
    it->set(cfg, value, where);
  }
  validate_config(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void validate_config(ExperimentConfig& cfg) {
  check(one_of(cfg.data.dataset, {"synth", "mnist"}), "data.dataset",
        "must be one of: synth, mnist");
  check(cfg.data.synth_classes >= 2, "data.synth_classes", "needs at least 2 classes");
  check(cfg.data.synth_per_class >= 1, "data.synth_per_class", "must be positive");
  check(cfg.data.train_subset >= 0, "data.train_subset", "must be >= 0");
  check(cfg.data.test_subset >= 0, "data.test_subset", "must be >= 0");
  check(cfg.data.phi > 0.0, "data.phi", "must be > 0");

  check(cfg.fl.clients >= 1, "fl.clients", "must be positive");
  check(cfg.fl.per_round >= 1 && cfg.fl.per_round <= cfg.fl.clients, "fl.per_round",
        "must satisfy 1 <= per_round <= clients");
  check(cfg.fl.rounds >= 1, "fl.rounds", "must be positive");
  check(cfg.fl.local_epochs >= 1, "fl.local_epochs", "must be positive");
  check(cfg.fl.lr >= 0.0, "fl.lr", "must be >= 0");
  check(cfg.fl.batch >= 1, "fl.batch", "must be positive");
  check(cfg.fl.test_batch >= 1, "fl.test_batch", "must be positive");

  check(one_of(cfg.attack.kind, {"none", "venomancer", "blend_tod", "eps_bounded"}),
        "attack.kind", "must be one of: none, venomancer, blend_tod, eps_bounded");
  check(cfg.attack.malicious >= 0, "attack.malicious", "must be >= 0");
  check(cfg.attack.malicious <= cfg.fl.per_round, "attack.malicious",
        "cannot exceed fl.per_round (P <= M)");
  check(cfg.attack.frequency >= 1, "attack.frequency", "must be >= 1");
  check(cfg.attack.alpha >= 0.0 && cfg.attack.alpha <= 1.0, "attack.alpha",
        "must lie in [0,1]");
  check(cfg.attack.beta >= 0.0 && cfg.attack.beta <= 1.0, "attack.beta", "must lie in [0,1]");
  check(cfg.attack.atk_lr >= 0.0, "attack.atk_lr", "must be >= 0");
  check(cfg.attack.poison_epochs >= 1, "attack.poison_epochs", "must be positive");
  check(cfg.attack.epsilon > 0.0, "attack.epsilon", "must be > 0");
  check(cfg.attack.gamma >= 0.0 && cfg.attack.gamma <= 1.0, "attack.gamma",
        "must lie in [0,1]");

  check(one_of(cfg.defense.kind, {"fedavg", "nc", "weak_dp", "krum", "multi_krum", "rlr",
                                  "fedrad", "deepsight", "rflbat"}),
        "defense.kind",
        "must be one of: fedavg, nc, weak_dp, krum, multi_krum, rlr, fedrad, deepsight, "
        "rflbat");
  check(cfg.defense.nc_rho > 0.0, "defense.nc_rho", "must be > 0");
  check(cfg.defense.dp_rho > 0.0, "defense.dp_rho", "must be > 0");
  check(cfg.defense.dp_sigma >= 0.0, "defense.dp_sigma", "must be >= 0");
  if (cfg.defense.krum_f < 0) cfg.defense.krum_f = cfg.attack.malicious;
  if (cfg.defense.mk_m < 0)
    cfg.defense.mk_m = std::max(1, cfg.fl.per_round - cfg.attack.malicious);
  if (cfg.defense.kind == "krum" || cfg.defense.kind == "multi_krum")
    check(cfg.fl.per_round >= cfg.defense.krum_f + 3, "defense.krum_f",
          "krum needs per_round >= f + 3");
  if (cfg.defense.kind == "multi_krum")
    check(cfg.defense.mk_m >= 1 && cfg.defense.mk_m <= cfg.fl.per_round, "defense.mk_m",
          "must satisfy 1 <= m <= per_round");
  check(cfg.defense.rlr_threshold >= 0.0, "defense.rlr_threshold", "must be >= 0");
  check(cfg.defense.rlr_server_lr > 0.0, "defense.rlr_server_lr", "must be > 0");
  check(cfg.defense.fedrad_server_frac > 0.0 && cfg.defense.fedrad_server_frac < 1.0,
        "defense.fedrad_server_frac", "must lie in (0,1)");
  check(cfg.defense.fedrad_epochs >= 0, "defense.fedrad_epochs", "must be >= 0");
  check(cfg.defense.fedrad_temperature > 0.0, "defense.fedrad_temperature", "must be > 0");
  check(cfg.defense.fedrad_lr > 0.0, "defense.fedrad_lr", "must be > 0");
  check(cfg.defense.ds_seeds >= 1, "defense.ds_seeds", "must be >= 1");
  check(cfg.defense.ds_noise_samples >= 1, "defense.ds_noise_samples", "must be >= 1");
  check(cfg.defense.ds_tau >= 0.0 && cfg.defense.ds_tau <= 1.0, "defense.ds_tau",
        "must lie in [0,1]");
  check(cfg.defense.ds_te_frac > 0.0 && cfg.defense.ds_te_frac < 1.0, "defense.ds_te_frac",
        "must lie in (0,1)");
  check(cfg.defense.ds_clip > 0.0, "defense.ds_clip", "must be > 0");
  check(cfg.defense.rb_pca_dims >= 1, "defense.rb_pca_dims", "must be >= 1");
  check(cfg.defense.rb_clusters >= 1, "defense.rb_clusters", "must be >= 1");

  check(cfg.eval.stride >= 1, "eval.stride", "must be >= 1");
  check(cfg.eval.dump_samples >= 0, "eval.dump_samples", "must be >= 0");
}

std::string echo_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << "\n";
  }
  return out.str();
}

std::string list_catalog() {
  std::ostringstream out;
  out << "attacks:\n"
      << "  none         clean training only\n"
      << "  venomancer   generator-crafted per-sample noise, any target class at inference\n"
      << "               params: attack.malicious, attack.frequency, attack.alpha,\n"
      << "                       attack.beta, attack.atk_lr, attack.poison_epochs\n"
      << "  blend_tod    fixed per-class patterns blended at ratio gamma\n"
      << "               params: attack.malicious, attack.frequency, attack.alpha,\n"
      << "                       attack.gamma, attack.poison_epochs, attack.atlas\n"
      << "  eps_bounded  generator noise scaled to an l-inf budget epsilon\n"
      << "               params: attack.malicious, attack.frequency, attack.alpha,\n"
      << "                       attack.beta, attack.atk_lr, attack.poison_epochs,\n"
      << "                       attack.epsilon\n"
      << "defenses:\n"
      << "  fedavg       sample-weighted averaging, no filtering\n"
      << "  nc           l2 norm clipping          params: defense.nc_rho\n"
      << "  weak_dp      clip + gaussian noise     params: defense.dp_rho, defense.dp_sigma\n"
      << "  krum         closest-update selection  params: defense.krum_f\n"
      << "  multi_krum   m lowest-score updates    params: defense.krum_f, defense.mk_m\n"
      << "  rlr          sign-vote lr flipping     params: defense.rlr_threshold,\n"
      << "                                                 defense.rlr_server_lr\n"
      << "  fedrad       median-logit distillation params: defense.fedrad_server_frac,\n"
      << "                                                 defense.fedrad_epochs,\n"
      << "                                                 defense.fedrad_temperature,\n"
      << "                                                 defense.fedrad_lr\n"
      << "  deepsight    update-energy inspection  params: defense.ds_seeds,\n"
      << "                                                 defense.ds_noise_samples,\n"
      << "                                                 defense.ds_tau, defense.ds_te_frac,\n"
      << "                                                 defense.ds_clip\n"
      << "  rflbat       pca + kmeans filtering    params: defense.rb_pca_dims,\n"
      << "                                                 defense.rb_clusters\n";
  return out.str();
}

}  // namespace fedlab
