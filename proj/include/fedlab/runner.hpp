#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedlab/attacks.hpp"
#include "fedlab/classifier.hpp"
#include "fedlab/config.hpp"
#include "fedlab/data.hpp"
#include "fedlab/defenses.hpp"
#include "fedlab/metrics.hpp"

namespace fedlab {

// One federated experiment: datasets, partition, attack/defense plumbing
// and the round loop. Client training within a round runs on `threads`
// workers; results are identical for any thread count.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg, int threads = 0);

  const ExperimentConfig& config() const { return cfg_; }
  const ClassifierSpec& classifier_spec() const { return spec_; }
  const ParameterVector& global_params() const { return global_; }
  const LabeledDataset& train_data() const { return train_; }
  const LabeledDataset& test_data() const { return test_; }
  const ClientPartition& partition() const { return partition_; }
  const Attack& attack() const { return *attack_; }
  int round() const { return round_; }
  const std::vector<RoundMetrics>& history() const { return history_; }

  // Ids participating in the given round (malicious ids forced in on
  // attack rounds).
  std::vector<int> round_selection(int round) const;

  // Advances one round; returns metrics when the round is evaluated
  // (every eval.stride rounds and always on the final round).
  std::optional<RoundMetrics> run_round();

  RoundMetrics evaluate(int round,
                        std::vector<std::pair<std::string, double>> defense_cols,
                        int malicious_selected);

  // Full run: streams the CSV (header + one row per evaluated round,
  // flushed as produced). On failure appends "# error: ..." and rethrows.
  void run(std::ostream& csv);

  void dump_samples(const std::string& dir, int count) const;
  void save_checkpoint(const std::string& path) const;

  PoisonFn poison_fn() const;

 private:
  ExperimentConfig cfg_;
  int threads_ = 1;
  ClassifierSpec spec_;
  LabeledDataset train_;
  LabeledDataset test_;
  LabeledDataset server_data_;  // fedrad only, withheld from clients
  ClientPartition partition_;
  std::unique_ptr<Attack> attack_;
  std::unique_ptr<Defense> defense_;
  ParameterVector global_;
  int round_ = 0;
  std::vector<RoundMetrics> history_;
};

// Loads a checkpoint written by save_checkpoint (classifier parameters
// plus, when present, the best generator parameters).
struct Checkpoint {
  ParameterVector classifier;
  std::optional<ParameterVector> generator;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fedlab
