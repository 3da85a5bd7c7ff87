#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fedlab/classifier.hpp"
#include "fedlab/config.hpp"
#include "fedlab/data.hpp"
#include "fedlab/fl.hpp"
#include "fedlab/generator.hpp"

namespace fedlab {

// One uniformly random wrong class per batch row.
std::vector<int> sample_targets(const std::vector<int>& labels, int classes,
                                std::mt19937_64& rng);

// Fixed per-class trigger patterns with a binary placement mask, both
// stored at full image size (patch sits in the top-left corner).
struct TriggerAtlas {
  std::vector<Tensor> patterns;  // [H,W,C] each, values in [0,1]
  std::vector<Tensor> masks;     // [H,W,C], 0/1

  static TriggerAtlas builtin(int classes, int h, int w, int c);
  // Loads <dir>/<class>.pgm patches; mask covers each patch's extent.
  static TriggerAtlas from_directory(const std::string& dir, int classes, int h, int w,
                                     int c);
};

// Blended fixed-pattern poisoning. Training mode mixes the whole image
// with the masked pattern at ratio gamma; inference mode adds the masked
// pattern at full strength and clips.
Tensor blend_tod_poison(const Tensor& x, const std::vector<int>& targets, double gamma,
                        const TriggerAtlas& atlas, bool train_mode);

// Generator noise scaled to an l-inf budget, then clipped into [0,1].
Tensor eps_bounded_poison(const GeneratorState& gen, const Tensor& x,
                          const std::vector<int>& targets, double eps);

struct GeneratorCandidate {
  int client_id = 0;
  GeneratorState state;
  double local_ba = 0.0;
};

// Argmax over local backdoor accuracy; ties go to the lowest client id.
const GeneratorCandidate& select_best_generator(
    const std::vector<GeneratorCandidate>& candidates);

// One generator update (Adam on the generator, classifier frozen):
// loss = beta * backdoor CE + (1 - beta) * visual cosine distance.
// eps > 0 scales the noise before the trigger is applied.
void stage1_generator_step(const ParameterVector& classifier, const ClassifierSpec& spec,
                           GeneratorState& gen, const Tensor& batch,
                           const std::vector<int>& targets, double beta, double atk_lr,
                           double eps = 0.0);

// One classifier update (SGD on the classifier, generator frozen):
// loss = alpha * clean CE + (1 - alpha) * backdoor CE on the poisoned batch.
void stage2_inject_step(ParameterVector& classifier, const ClassifierSpec& spec,
                        const GeneratorState& gen, const Tensor& batch,
                        const std::vector<int>& y_true, const std::vector<int>& targets,
                        double alpha, double lr, double eps = 0.0);

struct MaliciousResult {
  ClientUpdate update;
  std::optional<GeneratorCandidate> candidate;
};

// Attack behaviours as seen by the round loop. train_malicious must be
// safe to call concurrently for different clients; end_round runs after
// the round barrier.
class Attack {
 public:
  virtual ~Attack() = default;
  virtual std::string name() const = 0;
  virtual int malicious_count() const = 0;
  bool is_malicious(int client_id) const { return client_id < malicious_count(); }
  virtual bool attack_round(int round) const = 0;
  virtual MaliciousResult train_malicious(int client_id, int round,
                                          const ParameterVector& global,
                                          const ClassifierSpec& spec,
                                          const LabeledDataset& ds,
                                          const std::vector<std::int64_t>& indices) const = 0;
  virtual void end_round(std::vector<GeneratorCandidate> candidates) = 0;
  // Inference-time poisoning toward the requested targets.
  virtual Tensor poison(const Tensor& x, const std::vector<int>& targets) const = 0;
  virtual const GeneratorState* best_generator() const { return nullptr; }
};

std::unique_ptr<Attack> make_attack(const ExperimentConfig& cfg, int img_h, int img_w,
                                    int img_c, int classes);

// Fraction of poisoned samples classified as their sampled target; targets
// are drawn uniformly excluding each sample's true class.
using PoisonFn = std::function<Tensor(const Tensor&, const std::vector<int>&)>;
double backdoor_rate(const ParameterVector& params, const ClassifierSpec& spec,
                     const Tensor& x, const std::vector<int>& y_true,
                     const PoisonFn& poison, std::mt19937_64& rng);

}  // namespace fedlab
