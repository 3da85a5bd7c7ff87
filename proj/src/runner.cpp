#include "fedlab/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "fedlab/errors.hpp"
#include "fedlab/pgm_io.hpp"
#include "fedlab/rng.hpp"

namespace fedlab {

namespace {

LabeledDataset load_train(const ExperimentConfig& cfg) {
  if (cfg.data.dataset == "synth")
    return synth_dataset(cfg.data.synth_classes, cfg.data.synth_per_class, cfg.fl.seed);
  LabeledDataset ds = load_idx(cfg.data.mnist_dir + "/train-images-idx3-ubyte",
                               cfg.data.mnist_dir + "/train-labels-idx1-ubyte");
  return subset(ds, cfg.data.train_subset);
}

LabeledDataset load_test(const ExperimentConfig& cfg) {
  if (cfg.data.dataset == "synth") {
    // Same prototypes (same seed), disjoint sample noise stream.
    const int per_class = std::max(1, cfg.data.synth_per_class / 2);
    LabeledDataset ds =
        synth_dataset(cfg.data.synth_classes, per_class, cfg.fl.seed, /*sample_salt=*/1);
    return subset(ds, cfg.data.test_subset);
  }
  LabeledDataset ds = load_idx(cfg.data.mnist_dir + "/t10k-images-idx3-ubyte",
                               cfg.data.mnist_dir + "/t10k-labels-idx1-ubyte");
  return subset(ds, cfg.data.test_subset);
}

}  // namespace

Experiment::Experiment(ExperimentConfig cfg, int threads) : cfg_(std::move(cfg)) {
  validate_config(cfg_);
  threads_ = threads > 0 ? threads
                         : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  train_ = load_train(cfg_);
  test_ = load_test(cfg_);
  if (train_.classes != test_.classes)
    throw ConfigError("train/test class counts differ");

  // FedRAD holds back a server split before clients are partitioned.
  if (cfg_.defense.kind == "fedrad") {
    const std::int64_t hold =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                      static_cast<double>(train_.size()) *
                                      cfg_.defense.fedrad_server_frac));
    auto rng = make_stream(cfg_.fl.seed, Stream::kServerSplit);
    std::vector<std::int64_t> all(static_cast<std::size_t>(train_.size()));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<std::int64_t> server_rows(all.begin(), all.begin() + hold);
    std::vector<std::int64_t> client_rows(all.begin() + hold, all.end());
    std::sort(server_rows.begin(), server_rows.end());
    std::sort(client_rows.begin(), client_rows.end());
    LabeledDataset server;
    server.classes = train_.classes;
    server.images = train_.gather(server_rows);
    server.labels = train_.gather_labels(server_rows);
    LabeledDataset clients;
    clients.classes = train_.classes;
    clients.images = train_.gather(client_rows);
    clients.labels = train_.gather_labels(client_rows);
    server_data_ = std::move(server);
    train_ = std::move(clients);
  }

  spec_ = ClassifierSpec::small_cnn(train_.height(), train_.width(), train_.channels(),
                                    train_.classes);
  auto part_rng = make_stream(cfg_.fl.seed, Stream::kPartition);
  partition_ = dirichlet_partition(train_, cfg_.fl.clients, cfg_.data.phi, part_rng);

  attack_ = make_attack(cfg_, train_.height(), train_.width(), train_.channels(),
                        train_.classes);
  defense_ = make_defense(cfg_);

  auto init_rng = make_stream(cfg_.fl.seed, Stream::kInitClassifier);
  global_ = init_classifier(spec_, init_rng);
}

std::vector<int> Experiment::round_selection(int round) const {
  auto rng = make_stream(cfg_.fl.seed, Stream::kSelection, static_cast<std::uint64_t>(round));
  const int n = cfg_.fl.clients;
  const int m = cfg_.fl.per_round;
  const int p = attack_->malicious_count();
  if (attack_->attack_round(round) && p > 0) {
    // Malicious ids participate on attack rounds; the rest of the slots
    // are drawn uniformly from the benign pool.
    std::vector<int> pool;
    for (int id = p; id < n; ++id) pool.push_back(id);
    std::vector<int> picked = select_from_pool(pool, std::max(0, m - p), rng);
    for (int id = 0; id < p && id < m; ++id) picked.push_back(id);
    std::sort(picked.begin(), picked.end());
    return picked;
  }
  return select_clients(n, m, rng);
}

std::optional<RoundMetrics> Experiment::run_round() {
  const auto start = std::chrono::steady_clock::now();
  const int t = ++round_;
  const std::vector<int> selected = round_selection(t);
  const bool attacking = attack_->attack_round(t);

  struct Slot {
    ClientUpdate update;
    std::optional<GeneratorCandidate> candidate;
  };
  std::vector<Slot> slots(selected.size());
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int id = selected[i];
      try {
        const auto& shard = partition_.clients[static_cast<std::size_t>(id)];
        if (attacking && attack_->is_malicious(id)) {
          MaliciousResult res = attack_->train_malicious(id, t, global_, spec_, train_, shard);
          slots[i].update = std::move(res.update);
          slots[i].candidate = std::move(res.candidate);
        } else {
          auto rng = make_stream(cfg_.fl.seed, Stream::kClientTrain,
                                 static_cast<std::uint64_t>(t),
                                 static_cast<std::uint64_t>(id));
          ParameterVector local = benign_local_training(
              global_, spec_, train_, shard, static_cast<float>(cfg_.fl.lr),
              cfg_.fl.local_epochs, cfg_.fl.batch, rng);
          slots[i].update =
              make_update(id, global_, local, static_cast<std::int64_t>(shard.size()));
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  const int workers = std::min<int>(threads_, static_cast<int>(selected.size()));
  if (workers <= 1) {
    work(0, slots.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (slots.size() + workers - 1) / static_cast<std::size_t>(workers);
    for (int w = 0; w < workers; ++w) {
      const std::size_t begin = static_cast<std::size_t>(w) * chunk;
      const std::size_t end = std::min(slots.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const Error& e) {
      throw Error("round " + std::to_string(t) + ": " + e.what());
    }
  }

  std::vector<ClientUpdate> updates;
  std::vector<GeneratorCandidate> candidates;
  for (auto& slot : slots) {
    updates.push_back(std::move(slot.update));
    if (slot.candidate) candidates.push_back(std::move(*slot.candidate));
  }

  DefenseContext ctx;
  ctx.global = &global_;
  ctx.spec = &spec_;
  ctx.server_data = server_data_.size() > 0 ? &server_data_ : nullptr;
  ctx.batch = cfg_.fl.test_batch;
  ctx.rng = make_stream(cfg_.fl.seed, Stream::kDefense, static_cast<std::uint64_t>(t));
  DefenseResult defended;
  try {
    defended = defense_->apply(updates, ctx);
  } catch (const Error& e) {
    throw Error("round " + std::to_string(t) + " (" + defense_->name() + "): " + e.what());
  }

  if (defended.params_override) {
    global_ = std::move(*defended.params_override);
  } else if (defended.delta_override) {
    if (defended.delta_override->size() != global_.values.size())
      throw ConfigError("defense delta has wrong dimension");
    for (std::size_t i = 0; i < global_.values.size(); ++i)
      global_.values[i] = static_cast<float>(static_cast<double>(global_.values[i]) +
                                             (*defended.delta_override)[i]);
  } else if (!defended.survivors.empty()) {
    global_ = fedavg_aggregate(global_, defended.survivors);
  }
  // No survivors: the round leaves the global model untouched.

  attack_->end_round(std::move(candidates));

  const bool eval_now = (t % cfg_.eval.stride == 0) || t == cfg_.fl.rounds;
  if (!eval_now) return std::nullopt;

  int malicious_selected = 0;
  for (int id : selected)
    if (attack_->is_malicious(id)) ++malicious_selected;
  RoundMetrics m = evaluate(t, std::move(defended.diag), malicious_selected);
  m.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  history_.push_back(m);
  return m;
}

PoisonFn Experiment::poison_fn() const {
  return [this](const Tensor& x, const std::vector<int>& targets) {
    return attack_->poison(x, targets);
  };
}

RoundMetrics Experiment::evaluate(int round,
                                  std::vector<std::pair<std::string, double>> defense_cols,
                                  int malicious_selected) {
  RoundMetrics m;
  m.round = round;
  m.malicious_selected = malicious_selected;
  m.defense_cols = std::move(defense_cols);
  m.ca = clean_accuracy(global_, spec_, test_, cfg_.fl.test_batch);
  auto rng = make_stream(cfg_.fl.seed, Stream::kEval, static_cast<std::uint64_t>(round));
  m.ba = backdoor_accuracy(global_, spec_, poison_fn(), test_, cfg_.fl.test_batch, rng);
  m.per_class_ba = per_target_ba(global_, spec_, poison_fn(), test_, cfg_.fl.test_batch);
  return m;
}

void Experiment::run(std::ostream& csv) {
  csv << csv_header(train_.classes, defense_->diag_columns()) << "\n";
  csv.flush();
  try {
    while (round_ < cfg_.fl.rounds) {
      auto metrics = run_round();
      if (metrics) {
        csv << csv_row(*metrics) << "\n";
        csv.flush();
      }
    }
  } catch (const std::exception& e) {
    csv << "# error: " << e.what() << "\n";
    csv.flush();
    throw;
  }
}

void Experiment::dump_samples(const std::string& dir, int count) const {
  if (count <= 0) return;
  std::filesystem::create_directories(dir);
  auto rng = make_stream(cfg_.fl.seed, Stream::kDump);
  const std::int64_t n = std::min<std::int64_t>(count, test_.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const Tensor clean = test_.image(i);
    const std::vector<int> truth = {test_.labels[static_cast<std::size_t>(i)]};
    const std::vector<int> target = sample_targets(truth, test_.classes, rng);
    const Tensor poison = attack_->poison(clean, target);
    char name[64];
    std::snprintf(name, sizeof(name), "sample_%03lld_clean.pgm", static_cast<long long>(i));
    write_pgm(dir + "/" + name, clean);
    std::snprintf(name, sizeof(name), "sample_%03lld_poison_t%d.pgm",
                  static_cast<long long>(i), target[0]);
    write_pgm(dir + "/" + name, poison);
  }
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x464c434bu;  // "FLCK"

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError(path + ": truncated checkpoint");
  return v;
}

void write_params(std::ostream& out, const ParameterVector& pv) {
  write_u32(out, static_cast<std::uint32_t>(pv.layout->segments().size()));
  for (const Segment& seg : pv.layout->segments()) {
    write_u32(out, static_cast<std::uint32_t>(seg.name.size()));
    out.write(seg.name.data(), static_cast<std::streamsize>(seg.name.size()));
    write_u32(out, static_cast<std::uint32_t>(seg.shape.size()));
    for (int d : seg.shape) write_u32(out, static_cast<std::uint32_t>(d));
  }
  write_u32(out, static_cast<std::uint32_t>(pv.values.size()));
  out.write(reinterpret_cast<const char*>(pv.values.data()),
            static_cast<std::streamsize>(pv.values.size() * sizeof(float)));
}

ParameterVector read_params(std::istream& in, const std::string& path) {
  const std::uint32_t nseg = read_u32(in, path);
  std::vector<std::pair<std::string, std::vector<int>>> tensors;
  for (std::uint32_t i = 0; i < nseg; ++i) {
    const std::uint32_t len = read_u32(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const std::uint32_t rank = read_u32(in, path);
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<int>(read_u32(in, path)));
    tensors.emplace_back(std::move(name), std::move(shape));
  }
  ParameterVector pv = ParameterVector::zeros(Layout::build(std::move(tensors)));
  const std::uint32_t count = read_u32(in, path);
  if (count != pv.values.size()) throw FormatError(path + ": checkpoint size mismatch");
  in.read(reinterpret_cast<char*>(pv.values.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw FormatError(path + ": truncated checkpoint data");
  return pv;
}

}  // namespace

void Experiment::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  write_u32(out, kCheckpointMagic);
  write_u32(out, 1);  // version
  write_params(out, global_);
  const GeneratorState* gen = attack_->best_generator();
  out.put(gen ? 1 : 0);
  if (gen) write_params(out, gen->params);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  if (read_u32(in, path) != kCheckpointMagic) throw FormatError(path + ": bad magic");
  if (read_u32(in, path) != 1) throw FormatError(path + ": unsupported version");
  Checkpoint ck{read_params(in, path), std::nullopt};
  const int has_gen = in.get();
  if (has_gen == 1) ck.generator = read_params(in, path);
  return ck;
}

}  // namespace fedlab
