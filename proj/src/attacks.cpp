#include "fedlab/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "fedlab/errors.hpp"
#include "fedlab/graph.hpp"
#include "fedlab/optim.hpp"
#include "fedlab/pgm_io.hpp"
#include "fedlab/rng.hpp"

namespace fedlab {

std::vector<int> sample_targets(const std::vector<int>& labels, int classes,
                                std::mt19937_64& rng) {
  if (classes < 2) throw ConfigError("sample_targets needs at least 2 classes");
  std::vector<int> targets(labels.size());
  std::uniform_int_distribution<int> dist(0, classes - 2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes)
      throw InputError("sample_targets: label " + std::to_string(y) + " out of range");
    int t = dist(rng);
    if (t >= y) ++t;  // skip the true class
    targets[i] = t;
  }
  return targets;
}

namespace {

// 3x5 digit glyphs, row-major bits.
constexpr const char* kGlyphs[10] = {
    "111101101101111",  // 0
    "010110010010111",  // 1
    "111001111100111",  // 2
    "111001111001111",  // 3
    "101101111001001",  // 4
    "111100111001111",  // 5
    "111100111101111",  // 6
    "111001010010010",  // 7
    "111101111101111",  // 8
    "111101111001111",  // 9
};
constexpr int kGlyphH = 5;
constexpr int kGlyphW = 3;

}  // namespace

TriggerAtlas TriggerAtlas::builtin(int classes, int h, int w, int c) {
  if (h < kGlyphH || w < kGlyphW)
    throw ConfigError("image too small for builtin trigger patterns");
  TriggerAtlas atlas;
  for (int k = 0; k < classes; ++k) {
    Tensor pattern = Tensor::zeros({h, w, c});
    Tensor mask = Tensor::zeros({h, w, c});
    const char* glyph = kGlyphs[k % 10];
    for (int y = 0; y < kGlyphH; ++y) {
      for (int x = 0; x < kGlyphW; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t at =
              (static_cast<std::size_t>(y) * w + x) * static_cast<std::size_t>(c) + ch;
          mask.data[at] = 1.0f;
          if (glyph[y * kGlyphW + x] == '1') pattern.data[at] = 1.0f;
        }
      }
    }
    atlas.patterns.push_back(std::move(pattern));
    atlas.masks.push_back(std::move(mask));
  }
  return atlas;
}

TriggerAtlas TriggerAtlas::from_directory(const std::string& dir, int classes, int h,
                                          int w, int c) {
  TriggerAtlas atlas;
  for (int k = 0; k < classes; ++k) {
    const Tensor patch = read_pgm(dir + "/" + std::to_string(k) + ".pgm");
    const int ph = patch.dim(1), pw = patch.dim(2);
    if (ph > h || pw > w)
      throw ConfigError("trigger " + std::to_string(k) + " is " + std::to_string(ph) + "x" +
                        std::to_string(pw) + ", larger than the image");
    Tensor pattern = Tensor::zeros({h, w, c});
    Tensor mask = Tensor::zeros({h, w, c});
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t at =
              (static_cast<std::size_t>(y) * w + x) * static_cast<std::size_t>(c) + ch;
          mask.data[at] = 1.0f;
          pattern.data[at] = patch.data[static_cast<std::size_t>(y) * pw + x];
        }
      }
    }
    atlas.patterns.push_back(std::move(pattern));
    atlas.masks.push_back(std::move(mask));
  }
  return atlas;
}

Tensor blend_tod_poison(const Tensor& x, const std::vector<int>& targets, double gamma,
                        const TriggerAtlas& atlas, bool train_mode) {
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("blend ratio must lie in [0,1]");
  if (x.rank() != 4) throw ConfigError("blend_tod_poison expects [B,H,W,C]");
  const int batch = x.dim(0);
  if (static_cast<int>(targets.size()) != batch)
    throw InputError("blend_tod_poison: target count does not match batch");
  const std::int64_t px = x.size() / batch;
  Tensor out = x;
  for (int n = 0; n < batch; ++n) {
    const int t = targets[static_cast<std::size_t>(n)];
    if (t < 0 || t >= static_cast<int>(atlas.patterns.size()))
      throw ConfigError("no trigger pattern for target class " + std::to_string(t));
    const Tensor& pat = atlas.patterns[static_cast<std::size_t>(t)];
    const Tensor& mask = atlas.masks[static_cast<std::size_t>(t)];
    if (pat.size() != px)
      throw ConfigError("trigger pattern size does not match image size");
    float* dst = out.data.data() + static_cast<std::int64_t>(n) * px;
    if (train_mode) {
      const float g = static_cast<float>(gamma);
      for (std::int64_t i = 0; i < px; ++i)
        dst[i] = (1.0f - g) * dst[i] +
                 g * pat.data[static_cast<std::size_t>(i)] * mask.data[static_cast<std::size_t>(i)];
    } else {
      for (std::int64_t i = 0; i < px; ++i) {
        float v = dst[i] + pat.data[static_cast<std::size_t>(i)] * mask.data[static_cast<std::size_t>(i)];
        dst[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      }
    }
  }
  return out;
}

Tensor eps_bounded_poison(const GeneratorState& gen, const Tensor& x,
                          const std::vector<int>& targets, double eps) {
  if (eps <= 0.0) throw ConfigError("eps_bounded_poison needs eps > 0");
  Tensor noise = generator_forward(gen, x, targets);
  for (auto& v : noise.data) v *= static_cast<float>(eps);
  return apply_trigger(x, noise);
}

const GeneratorCandidate& select_best_generator(
    const std::vector<GeneratorCandidate>& candidates) {
  if (candidates.empty()) throw ConfigError("select_best_generator: no candidates");
  const GeneratorCandidate* best = &candidates.front();
  for (const auto& c : candidates) {
    if (c.local_ba > best->local_ba ||
        (c.local_ba == best->local_ba && c.client_id < best->client_id))
      best = &c;
  }
  return *best;
}

void stage1_generator_step(const ParameterVector& classifier, const ClassifierSpec& spec,
                           GeneratorState& gen, const Tensor& batch,
                           const std::vector<int>& targets, double beta, double atk_lr,
                           double eps) {
  Graph g;
  BoundParams theta = bind_params(g, classifier, false);
  BoundParams xi = bind_params(g, gen.params, true);
  int x = g.constant(batch);
  int noise = generator_forward(g, gen.spec, xi, x, targets);
  if (eps > 0.0) noise = g.scale(noise, static_cast<float>(eps));
  int poison = g.clip01(g.add(x, noise));
  int logits = forward_classifier(g, spec, theta, poison);
  int l_backdoor = g.cross_entropy(logits, targets);
  int l_visual = g.cosine_distance(poison, x);
  int loss = g.add_scaled(l_backdoor, l_visual, static_cast<float>(beta),
                          static_cast<float>(1.0 - beta));
  if (!std::isfinite(g.value(loss).data[0]))
    throw NumericError("non-finite generator loss (stage 1)");
  if (atk_lr == 0.0) return;
  g.backward(loss);
  adam_step(gen.opt, gen.params, collect_grads(g, xi, gen.params.layout),
            static_cast<float>(atk_lr));
}

void stage2_inject_step(ParameterVector& classifier, const ClassifierSpec& spec,
                        const GeneratorState& gen, const Tensor& batch,
                        const std::vector<int>& y_true, const std::vector<int>& targets,
                        double alpha, double lr, double eps) {
  Tensor noise = generator_forward(gen, batch, targets);
  if (eps > 0.0)
    for (auto& v : noise.data) v *= static_cast<float>(eps);
  const Tensor poison = apply_trigger(batch, noise);

  Graph g;
  BoundParams theta = bind_params(g, classifier, true);
  int xc = g.constant(batch);
  int xp = g.constant(poison);
  int l_clean = g.cross_entropy(forward_classifier(g, spec, theta, xc), y_true);
  int l_backdoor = g.cross_entropy(forward_classifier(g, spec, theta, xp), targets);
  int loss = g.add_scaled(l_clean, l_backdoor, static_cast<float>(alpha),
                          static_cast<float>(1.0 - alpha));
  if (!std::isfinite(g.value(loss).data[0]))
    throw NumericError("non-finite injection loss (stage 2)");
  if (lr == 0.0) return;
  g.backward(loss);
  sgd_step(classifier, collect_grads(g, theta, classifier.layout), static_cast<float>(lr));
}

double backdoor_rate(const ParameterVector& params, const ClassifierSpec& spec,
                     const Tensor& x, const std::vector<int>& y_true,
                     const PoisonFn& poison, std::mt19937_64& rng) {
  const std::vector<int> targets = sample_targets(y_true, spec.classes, rng);
  const Tensor poisoned = poison(x, targets);
  const std::vector<int> pred = argmax_rows(forward_classifier(params, spec, poisoned));
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == targets[i]) ++hits;
  return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

// Shared scaffolding for the generator-based attacks and the no-attack
// baseline (which keeps an untrained generator around for evaluation).
class GeneratorAttackBase : public Attack {
 public:
  GeneratorAttackBase(const ExperimentConfig& cfg, int h, int w, int c, int classes)
      : cfg_(cfg) {
    spec_.in_h = h;
    spec_.in_w = w;
    spec_.in_c = c;
    spec_.classes = classes;
    auto rng = make_stream(cfg.fl.seed, Stream::kInitGenerator);
    best_ = init_generator(spec_, rng);
  }

  int malicious_count() const override { return cfg_.attack.malicious; }
  bool attack_round(int round) const override {
    return malicious_count() > 0 && round % cfg_.attack.frequency == 0;
  }

  void end_round(std::vector<GeneratorCandidate> candidates) override {
    if (candidates.empty()) return;
    best_ = select_best_generator(candidates).state;
  }

  const GeneratorState* best_generator() const override { return &best_; }

 protected:
  virtual double noise_scale() const { return 0.0; }  // 0 = unscaled

  Tensor poison_with(const GeneratorState& gen, const ParameterVector&, const Tensor& x,
                     const std::vector<int>& targets) const {
    Tensor noise = generator_forward(gen, x, targets);
    const double eps = noise_scale();
    if (eps > 0.0)
      for (auto& v : noise.data) v *= static_cast<float>(eps);
    return apply_trigger(x, noise);
  }

  MaliciousResult run_two_stage(int client_id, int round, const ParameterVector& global,
                                const ClassifierSpec& cls,
                                const LabeledDataset& ds,
                                const std::vector<std::int64_t>& indices) const {
    if (indices.empty()) throw ConfigError("malicious client has no data");
    // Hold out the tail 10% of the client's shard for local BA scoring.
    std::vector<std::int64_t> train_idx = indices;
    std::vector<std::int64_t> eval_idx;
    if (indices.size() >= 2) {
      const std::size_t held = std::max<std::size_t>(1, indices.size() / 10);
      eval_idx.assign(train_idx.end() - static_cast<std::ptrdiff_t>(held), train_idx.end());
      train_idx.resize(train_idx.size() - held);
    } else {
      eval_idx = train_idx;
    }

    ParameterVector local = global;
    GeneratorState gen = best_;  // weights and Adam moments travel together
    auto shuffle_rng = make_stream(cfg_.fl.seed, Stream::kClientTrain,
                                   static_cast<std::uint64_t>(round),
                                   static_cast<std::uint64_t>(client_id));
    auto target_rng = make_stream(cfg_.fl.seed, Stream::kAttackTargets,
                                  static_cast<std::uint64_t>(round),
                                  static_cast<std::uint64_t>(client_id));
    const double eps = noise_scale();
    for (int e = 0; e < cfg_.attack.poison_epochs; ++e) {
      for (const auto& rows : make_batches(train_idx, cfg_.fl.batch, shuffle_rng)) {
        const Tensor batch = ds.gather(rows);
        const std::vector<int> y_true = ds.gather_labels(rows);
        const std::vector<int> targets = sample_targets(y_true, cls.classes, target_rng);
        stage1_generator_step(local, cls, gen, batch, targets, cfg_.attack.beta,
                              cfg_.attack.atk_lr, eps);
        stage2_inject_step(local, cls, gen, batch, y_true, targets, cfg_.attack.alpha,
                           cfg_.fl.lr, eps);
      }
    }

    auto eval_rng = make_stream(cfg_.fl.seed, Stream::kAttackTargets,
                                static_cast<std::uint64_t>(round),
                                0x10000u + static_cast<std::uint64_t>(client_id));
    const Tensor eval_x = ds.gather(eval_idx);
    const std::vector<int> eval_y = ds.gather_labels(eval_idx);
    const double local_ba = backdoor_rate(
        local, cls, eval_x, eval_y,
        [&](const Tensor& x, const std::vector<int>& t) {
          return poison_with(gen, local, x, t);
        },
        eval_rng);

    MaliciousResult res;
    res.update = make_update(client_id, global, local,
                             static_cast<std::int64_t>(indices.size()));
    res.candidate = GeneratorCandidate{client_id, std::move(gen), local_ba};
    return res;
  }

  ExperimentConfig cfg_;
  GeneratorSpec spec_;
  GeneratorState best_;
};

class VenomancerAttack : public GeneratorAttackBase {
 public:
  using GeneratorAttackBase::GeneratorAttackBase;
  std::string name() const override { return "venomancer"; }
  MaliciousResult train_malicious(int client_id, int round, const ParameterVector& global,
                                  const ClassifierSpec& spec, const LabeledDataset& ds,
                                  const std::vector<std::int64_t>& indices) const override {
    return run_two_stage(client_id, round, global, spec, ds, indices);
  }
  Tensor poison(const Tensor& x, const std::vector<int>& targets) const override {
    return poison_with(best_, {}, x, targets);
  }
};

class EpsBoundedAttack : public GeneratorAttackBase {
 public:
  using GeneratorAttackBase::GeneratorAttackBase;
  std::string name() const override { return "eps_bounded"; }
  MaliciousResult train_malicious(int client_id, int round, const ParameterVector& global,
                                  const ClassifierSpec& spec, const LabeledDataset& ds,
                                  const std::vector<std::int64_t>& indices) const override {
    return run_two_stage(client_id, round, global, spec, ds, indices);
  }
  Tensor poison(const Tensor& x, const std::vector<int>& targets) const override {
    return eps_bounded_poison(best_, x, targets, cfg_.attack.epsilon);
  }

 protected:
  double noise_scale() const override { return cfg_.attack.epsilon; }
};

// Clean baseline: nobody attacks, but evaluation still has an (untrained)
// generator to poison with, so backdoor accuracy reads as a control.
class NoneAttack : public GeneratorAttackBase {
 public:
  using GeneratorAttackBase::GeneratorAttackBase;
  std::string name() const override { return "none"; }
  int malicious_count() const override { return 0; }
  bool attack_round(int) const override { return false; }
  MaliciousResult train_malicious(int, int, const ParameterVector&, const ClassifierSpec&,
                                  const LabeledDataset&,
                                  const std::vector<std::int64_t>&) const override {
    throw ConfigError("the none attack has no malicious clients");
  }
  Tensor poison(const Tensor& x, const std::vector<int>& targets) const override {
    return poison_with(best_, {}, x, targets);
  }
};

class BlendTodAttack : public Attack {
 public:
  BlendTodAttack(const ExperimentConfig& cfg, int h, int w, int c, int classes)
      : cfg_(cfg) {
    atlas_ = cfg.attack.atlas == "builtin"
                 ? TriggerAtlas::builtin(classes, h, w, c)
                 : TriggerAtlas::from_directory(cfg.attack.atlas, classes, h, w, c);
    classes_ = classes;
  }

  std::string name() const override { return "blend_tod"; }
  int malicious_count() const override { return cfg_.attack.malicious; }
  bool attack_round(int round) const override {
    return malicious_count() > 0 && round % cfg_.attack.frequency == 0;
  }

  MaliciousResult train_malicious(int client_id, int round, const ParameterVector& global,
                                  const ClassifierSpec& spec, const LabeledDataset& ds,
                                  const std::vector<std::int64_t>& indices) const override {
    if (indices.empty()) throw ConfigError("malicious client has no data");
    ParameterVector local = global;
    auto shuffle_rng = make_stream(cfg_.fl.seed, Stream::kClientTrain,
                                   static_cast<std::uint64_t>(round),
                                   static_cast<std::uint64_t>(client_id));
    auto target_rng = make_stream(cfg_.fl.seed, Stream::kAttackTargets,
                                  static_cast<std::uint64_t>(round),
                                  static_cast<std::uint64_t>(client_id));
    for (int e = 0; e < cfg_.attack.poison_epochs; ++e) {
      for (const auto& rows : make_batches(indices, cfg_.fl.batch, shuffle_rng)) {
        const Tensor batch = ds.gather(rows);
        const std::vector<int> y_true = ds.gather_labels(rows);
        const std::vector<int> targets = sample_targets(y_true, classes_, target_rng);
        const Tensor poison =
            blend_tod_poison(batch, targets, cfg_.attack.gamma, atlas_, true);

        Graph g;
        BoundParams theta = bind_params(g, local, true);
        int l_clean =
            g.cross_entropy(forward_classifier(g, spec, theta, g.constant(batch)), y_true);
        int l_backdoor =
            g.cross_entropy(forward_classifier(g, spec, theta, g.constant(poison)), targets);
        int loss = g.add_scaled(l_clean, l_backdoor, static_cast<float>(cfg_.attack.alpha),
                                static_cast<float>(1.0 - cfg_.attack.alpha));
        if (!std::isfinite(g.value(loss).data[0]))
          throw NumericError("non-finite injection loss (blend)");
        if (cfg_.fl.lr == 0.0) continue;
        g.backward(loss);
        sgd_step(local, collect_grads(g, theta, local.layout),
                 static_cast<float>(cfg_.fl.lr));
      }
    }
    MaliciousResult res;
    res.update = make_update(client_id, global, local,
                             static_cast<std::int64_t>(indices.size()));
    return res;
  }

  void end_round(std::vector<GeneratorCandidate>) override {}

  Tensor poison(const Tensor& x, const std::vector<int>& targets) const override {
    return blend_tod_poison(x, targets, cfg_.attack.gamma, atlas_, false);
  }

 private:
  ExperimentConfig cfg_;
  TriggerAtlas atlas_;
  int classes_ = 0;
};

}  // namespace

std::unique_ptr<Attack> make_attack(const ExperimentConfig& cfg, int img_h, int img_w,
                                    int img_c, int classes) {
  const std::string& kind = cfg.attack.kind;
  if (kind == "none") return std::make_unique<NoneAttack>(cfg, img_h, img_w, img_c, classes);
  if (kind == "venomancer")
    return std::make_unique<VenomancerAttack>(cfg, img_h, img_w, img_c, classes);
  if (kind == "eps_bounded")
    return std::make_unique<EpsBoundedAttack>(cfg, img_h, img_w, img_c, classes);
  if (kind == "blend_tod")
    return std::make_unique<BlendTodAttack>(cfg, img_h, img_w, img_c, classes);
  throw ConfigError("unknown attack kind: " + kind);
}

}  // namespace fedlab
