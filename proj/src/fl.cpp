#include "fedlab/fl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedlab/errors.hpp"
#include "fedlab/graph.hpp"
#include "fedlab/optim.hpp"

namespace fedlab {

std::vector<int> select_clients(int total, int count, std::mt19937_64& rng) {
  if (count > total)
    throw ConfigError("cannot select " + std::to_string(count) + " of " +
                      std::to_string(total) + " clients");
  std::vector<int> ids(static_cast<std::size_t>(total));
  std::iota(ids.begin(), ids.end(), 0);
  return select_from_pool(ids, count, rng);
}

std::vector<int> select_from_pool(const std::vector<int>& pool, int count,
                                  std::mt19937_64& rng) {
  if (count > static_cast<int>(pool.size()))
    throw ConfigError("selection pool too small");
  std::vector<int> ids = pool;
  // Partial Fisher-Yates; only the first `count` slots are needed.
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> dist(i, static_cast<int>(ids.size()) - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(dist(rng))]);
  }
  ids.resize(static_cast<std::size_t>(count));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::vector<std::int64_t>> make_batches(std::vector<std::int64_t> indices,
                                                    int batch, std::mt19937_64& rng) {
  std::shuffle(indices.begin(), indices.end(), rng);
  std::vector<std::vector<std::int64_t>> out;
  for (std::size_t i = 0; i < indices.size(); i += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(indices.size(), i + static_cast<std::size_t>(batch));
    out.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(i),
                     indices.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

ParameterVector benign_local_training(const ParameterVector& global,
                                      const ClassifierSpec& spec, const LabeledDataset& ds,
                                      const std::vector<std::int64_t>& indices, float lr,
                                      int epochs, int batch, std::mt19937_64& rng) {
  if (indices.empty()) throw ConfigError("benign_local_training: empty client dataset");
  ParameterVector local = global;
  for (int e = 0; e < epochs; ++e) {
    for (const auto& rows : make_batches(indices, batch, rng)) {
      Graph g;
      BoundParams bp = bind_params(g, local, true);
      int x = g.constant(ds.gather(rows));
      int logits = forward_classifier(g, spec, bp, x);
      int loss = g.cross_entropy(logits, ds.gather_labels(rows));
      if (!std::isfinite(g.value(loss).data[0]))
        throw NumericError("non-finite training loss");
      if (lr == 0.0f) continue;  // exact fixed point
      g.backward(loss);
      sgd_step(local, collect_grads(g, bp, local.layout), lr);
    }
  }
  return local;
}

std::vector<double> fedavg_delta(const std::vector<ClientUpdate>& updates,
                                 std::size_t dims) {
  if (updates.empty()) throw ConfigError("fedavg: no updates to aggregate");
  std::vector<const ClientUpdate*> ordered;
  ordered.reserve(updates.size());
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.delta.size() != dims)
      throw ConfigError("fedavg: update from client " + std::to_string(u.client_id) +
                        " has " + std::to_string(u.delta.size()) + " dims, expected " +
                        std::to_string(dims));
    if (u.samples < 1)
      throw ConfigError("fedavg: client " + std::to_string(u.client_id) +
                        " reports no samples");
    ordered.push_back(&u);
    total += static_cast<double>(u.samples);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) {
              return a->client_id < b->client_id;
            });

  // Pairwise tree reduction over the id-sorted list.
  std::vector<std::vector<double>> terms;
  terms.reserve(ordered.size());
  for (const ClientUpdate* u : ordered) {
    const double w = static_cast<double>(u->samples) / total;
    std::vector<double> t(dims);
    for (std::size_t d = 0; d < dims; ++d) t[d] = w * static_cast<double>(u->delta[d]);
    terms.push_back(std::move(t));
  }
  while (terms.size() > 1) {
    std::vector<std::vector<double>> next;
    for (std::size_t i = 0; i + 1 < terms.size(); i += 2) {
      for (std::size_t d = 0; d < dims; ++d) terms[i][d] += terms[i + 1][d];
      next.push_back(std::move(terms[i]));
    }
    if (terms.size() % 2 == 1) next.push_back(std::move(terms.back()));
    terms = std::move(next);
  }
  return std::move(terms.front());
}

ParameterVector fedavg_aggregate(const ParameterVector& global,
                                 const std::vector<ClientUpdate>& updates) {
  const std::vector<double> delta = fedavg_delta(updates, global.values.size());
  ParameterVector out = global;
  for (std::size_t d = 0; d < out.values.size(); ++d)
    out.values[d] = static_cast<float>(static_cast<double>(out.values[d]) + delta[d]);
  return out;
}

ClientUpdate make_update(int client_id, const ParameterVector& global,
                         const ParameterVector& local, std::int64_t samples) {
  if (!same_layout(global.layout, local.layout))
    throw ConfigError("client update layout mismatch");
  ClientUpdate u;
  u.client_id = client_id;
  u.samples = samples;
  u.delta.resize(global.values.size());
  for (std::size_t i = 0; i < u.delta.size(); ++i)
    u.delta[i] = local.values[i] - global.values[i];
  return u;
}

}  // namespace fedlab
