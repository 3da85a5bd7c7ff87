#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fedlab/classifier.hpp"
#include "fedlab/config.hpp"
#include "fedlab/data.hpp"
#include "fedlab/fl.hpp"

namespace fedlab {

double l2_norm(const std::vector<float>& v);

// Scales each update onto the rho-ball. A small relative tolerance keeps
// the operation exactly idempotent despite float rounding.
std::vector<ClientUpdate> norm_clip(const std::vector<ClientUpdate>& updates, double rho,
                                    int* clipped_count = nullptr);

// norm_clip followed by i.i.d. Gaussian coordinate noise.
std::vector<ClientUpdate> weak_dp(const std::vector<ClientUpdate>& updates, double rho,
                                  double sigma, std::mt19937_64& rng,
                                  int* clipped_count = nullptr);

// Sum of squared distances to each update's M-f-2 nearest neighbours.
std::vector<double> krum_scores(const std::vector<ClientUpdate>& updates, int f);
// Index (into `updates`) of the lowest-score update; ties -> lowest id.
int krum_select(const std::vector<ClientUpdate>& updates, int f);
// Indices of the m lowest-score updates.
std::vector<int> multi_krum_select(const std::vector<ClientUpdate>& updates, int f, int m);

// Sign-vote aggregation: dimensions whose |sum of update signs| falls
// below the threshold get their learning rate negated.
std::vector<double> rlr_aggregate(const std::vector<ClientUpdate>& updates,
                                  double threshold, double server_lr,
                                  std::int64_t* flipped_dims = nullptr);

struct FedradResult {
  ParameterVector distilled;
  std::vector<double> scores;   // median-hit counts per update (input order)
  std::vector<double> weights;  // scores normalised to sum 1
  double final_distill_loss = 0.0;
};

// Median-logit ensemble scoring plus knowledge distillation from the
// median logits into a copy of the global model.
FedradResult fedrad(const std::vector<ClientUpdate>& updates, const ParameterVector& global,
                    const ClassifierSpec& spec, const LabeledDataset& server_data,
                    int epochs, double temperature, double lr, int batch,
                    std::mt19937_64& rng);

struct DeepsightResult {
  std::vector<int> survivors;        // indices into the input updates
  std::vector<double> te;            // threshold exceedings per update
  std::vector<char> suspicious;      // TE strictly below the median TE
  std::vector<std::vector<double>> neup;  // per update, per class
};

DeepsightResult deepsight(const std::vector<ClientUpdate>& updates,
                          const ParameterVector& global, const ClassifierSpec& spec,
                          int seeds, int noise_samples, double tau, double te_frac,
                          std::mt19937_64& rng);

struct RflbatResult {
  std::vector<int> survivors;
  std::vector<int> cluster_of;        // cluster label per update
  std::vector<double> explained;      // descending explained-variance fractions
  std::vector<double> cluster_similarity;
};

RflbatResult rflbat(const std::vector<ClientUpdate>& updates, int pca_dims, int clusters,
                    std::mt19937_64& rng);

// k-means++ with Lloyd iterations; returns a cluster label per point.
std::vector<int> kmeans(const std::vector<std::vector<double>>& points, int k,
                        int max_iters, std::mt19937_64& rng);

// --- round-level plumbing -------------------------------------------------

struct DefenseContext {
  const ParameterVector* global = nullptr;
  const ClassifierSpec* spec = nullptr;
  const LabeledDataset* server_data = nullptr;  // fedrad only
  int batch = 256;
  std::mt19937_64 rng;
};

struct DefenseResult {
  std::vector<ClientUpdate> survivors;
  std::optional<std::vector<double>> delta_override;  // rlr: ready-made delta
  std::optional<ParameterVector> params_override;     // fedrad: full replacement
  std::vector<std::pair<std::string, double>> diag;
};

class Defense {
 public:
  virtual ~Defense() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> diag_columns() const = 0;
  virtual DefenseResult apply(const std::vector<ClientUpdate>& updates,
                              DefenseContext& ctx) const = 0;
};

std::unique_ptr<Defense> make_defense(const ExperimentConfig& cfg);

}  // namespace fedlab
