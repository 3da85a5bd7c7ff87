#include "fedlab/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "fedlab/errors.hpp"
#include "fedlab/graph.hpp"

namespace fedlab {

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  Graph g;
  return g.value(g.cross_entropy(g.constant(logits), labels)).data[0];
}

VisualLoss visual_loss(const Tensor& x_poison, const Tensor& x_clean) {
  Graph g;
  const int id = g.cosine_distance(g.constant(x_poison), g.constant(x_clean));
  return VisualLoss{static_cast<double>(g.value(id).data[0]), g.zero_norm_samples()};
}

namespace {

std::vector<std::vector<std::int64_t>> sequential_batches(std::int64_t n, int batch) {
  std::vector<std::vector<std::int64_t>> out;
  for (std::int64_t i = 0; i < n; i += batch) {
    std::vector<std::int64_t> rows;
    for (std::int64_t j = i; j < std::min(n, i + batch); ++j) rows.push_back(j);
    out.push_back(std::move(rows));
  }
  return out;
}

}  // namespace

double clean_accuracy(const ParameterVector& params, const ClassifierSpec& spec,
                      const LabeledDataset& test, int batch) {
  if (test.size() == 0) throw ConfigError("clean_accuracy: empty test set");
  std::int64_t hits = 0;
  for (const auto& rows : sequential_batches(test.size(), batch)) {
    const std::vector<int> pred =
        argmax_rows(forward_classifier(params, spec, test.gather(rows)));
    const std::vector<int> truth = test.gather_labels(rows);
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

double backdoor_accuracy(const ParameterVector& params, const ClassifierSpec& spec,
                         const PoisonFn& poison, const LabeledDataset& test, int batch,
                         std::mt19937_64& rng) {
  if (test.size() == 0) throw ConfigError("backdoor_accuracy: empty test set");
  std::int64_t hits = 0;
  for (const auto& rows : sequential_batches(test.size(), batch)) {
    const Tensor x = test.gather(rows);
    const std::vector<int> truth = test.gather_labels(rows);
    const std::vector<int> targets = sample_targets(truth, spec.classes, rng);
    const std::vector<int> pred =
        argmax_rows(forward_classifier(params, spec, poison(x, targets)));
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == targets[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

std::vector<double> per_target_ba(const ParameterVector& params, const ClassifierSpec& spec,
                                  const PoisonFn& poison, const LabeledDataset& test,
                                  int batch) {
  std::vector<double> out(static_cast<std::size_t>(spec.classes), 0.0);
  for (int c = 0; c < spec.classes; ++c) {
    std::int64_t hits = 0, eligible = 0;
    for (const auto& rows : sequential_batches(test.size(), batch)) {
      std::vector<std::int64_t> keep;
      for (std::int64_t r : rows)
        if (test.labels[static_cast<std::size_t>(r)] != c) keep.push_back(r);
      if (keep.empty()) continue;
      const Tensor x = test.gather(keep);
      const std::vector<int> targets(keep.size(), c);
      const std::vector<int> pred =
          argmax_rows(forward_classifier(params, spec, poison(x, targets)));
      for (int p : pred)
        if (p == c) ++hits;
      eligible += static_cast<std::int64_t>(keep.size());
    }
    out[static_cast<std::size_t>(c)] =
        eligible > 0 ? static_cast<double>(hits) / static_cast<double>(eligible) : 0.0;
  }
  return out;
}

std::string csv_header(int classes, const std::vector<std::string>& defense_cols) {
  std::ostringstream os;
  os << "round,ca,ba";
  for (int c = 0; c < classes; ++c) os << ",ba_c" << c;
  os << ",malicious_selected";
  for (const auto& col : defense_cols) os << "," << col;
  return os.str();
}

std::string csv_row(const RoundMetrics& m) {
  char buf[32];
  std::ostringstream os;
  os << m.round;
  auto frac = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    os << ',' << buf;
  };
  frac(m.ca);
  frac(m.ba);
  for (double v : m.per_class_ba) frac(v);
  os << ',' << m.malicious_selected;
  for (const auto& [name, value] : m.defense_cols) frac(value);
  return os.str();
}

}  // namespace fedlab
