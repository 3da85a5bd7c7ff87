#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fedlab/classifier.hpp"
#include "fedlab/data.hpp"
#include "fedlab/params.hpp"

namespace fedlab {

// Per-round client contribution: local params minus the global snapshot.
struct ClientUpdate {
  int client_id = 0;
  std::vector<float> delta;
  std::int64_t samples = 1;
};

// M distinct ids drawn uniformly without replacement from [0, total).
std::vector<int> select_clients(int total, int count, std::mt19937_64& rng);

// Uniform draw restricted to a pool of candidate ids.
std::vector<int> select_from_pool(const std::vector<int>& pool, int count,
                                  std::mt19937_64& rng);

// Shuffled mini-batch index lists for one epoch.
std::vector<std::vector<std::int64_t>> make_batches(std::vector<std::int64_t> indices,
                                                    int batch, std::mt19937_64& rng);

// Mini-batch SGD on cross-entropy, starting from the global snapshot.
// lr == 0 short-circuits the update so the result equals the input exactly.
ParameterVector benign_local_training(const ParameterVector& global,
                                      const ClassifierSpec& spec, const LabeledDataset& ds,
                                      const std::vector<std::int64_t>& indices, float lr,
                                      int epochs, int batch, std::mt19937_64& rng);

// Sample-count weighted delta, accumulated pairwise in double over updates
// sorted by client id (aggregation is order-independent by construction).
std::vector<double> fedavg_delta(const std::vector<ClientUpdate>& updates,
                                 std::size_t dims);

ParameterVector fedavg_aggregate(const ParameterVector& global,
                                 const std::vector<ClientUpdate>& updates);

ClientUpdate make_update(int client_id, const ParameterVector& global,
                         const ParameterVector& local, std::int64_t samples);

}  // namespace fedlab
