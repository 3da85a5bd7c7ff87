#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fedlab/attacks.hpp"
#include "fedlab/classifier.hpp"
#include "fedlab/data.hpp"

namespace fedlab {

// Eager loss helpers over the same graph ops the training paths use.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

struct VisualLoss {
  double value = 0.0;
  int zero_norm_samples = 0;  // rows where a zero-norm image forced distance 0
};
VisualLoss visual_loss(const Tensor& x_poison, const Tensor& x_clean);

struct RoundMetrics {
  int round = 0;
  double ca = 0.0;
  double ba = 0.0;
  std::vector<double> per_class_ba;
  int malicious_selected = 0;
  std::vector<std::pair<std::string, double>> defense_cols;
  double wall_seconds = 0.0;  // diagnostics only, never serialized
};

double clean_accuracy(const ParameterVector& params, const ClassifierSpec& spec,
                      const LabeledDataset& test, int batch);

// Uniform random wrong-class targets per sample, poisoned through the
// attack's inference path.
double backdoor_accuracy(const ParameterVector& params, const ClassifierSpec& spec,
                         const PoisonFn& poison, const LabeledDataset& test, int batch,
                         std::mt19937_64& rng);

// For each target class c: poison every test sample whose true label is
// not c toward c and report the misclassification-as-c rate.
std::vector<double> per_target_ba(const ParameterVector& params, const ClassifierSpec& spec,
                                  const PoisonFn& poison, const LabeledDataset& test,
                                  int batch);

std::string csv_header(int classes, const std::vector<std::string>& defense_cols);
std::string csv_row(const RoundMetrics& m);

}  // namespace fedlab
