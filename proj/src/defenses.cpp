#include "fedlab/defenses.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedlab/errors.hpp"
#include "fedlab/graph.hpp"
#include "fedlab/optim.hpp"

namespace fedlab {

double l2_norm(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

std::vector<ClientUpdate> norm_clip(const std::vector<ClientUpdate>& updates, double rho,
                                    int* clipped_count) {
  if (rho <= 0.0) throw ConfigError("norm_clip threshold must be > 0");
  std::vector<ClientUpdate> out = updates;
  int clipped = 0;
  for (auto& u : out) {
    const double norm = l2_norm(u.delta);
    // The tolerance band absorbs the element rounding of a previous clip,
    // making clip(clip(u)) == clip(u) bit-exact.
    if (norm <= rho * (1.0 + 1e-6)) continue;
    const double s = rho / norm;
    for (auto& v : u.delta) v = static_cast<float>(static_cast<double>(v) * s);
    ++clipped;
  }
  if (clipped_count) *clipped_count = clipped;
  return out;
}

std::vector<ClientUpdate> weak_dp(const std::vector<ClientUpdate>& updates, double rho,
                                  double sigma, std::mt19937_64& rng, int* clipped_count) {
  if (sigma < 0.0) throw ConfigError("weak_dp sigma must be >= 0");
  std::vector<ClientUpdate> out = norm_clip(updates, rho, clipped_count);
  if (sigma == 0.0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& u : out)
    for (auto& v : u.delta) v = static_cast<float>(static_cast<double>(v) + noise(rng));
  return out;
}

namespace {

std::vector<std::vector<double>> pairwise_sq_dists(const std::vector<ClientUpdate>& updates) {
  const std::size_t m = updates.size();
  std::vector<std::vector<double>> d(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      double acc = 0.0;
      const auto& a = updates[i].delta;
      const auto& b = updates[j].delta;
      for (std::size_t t = 0; t < a.size(); ++t) {
        const double diff = static_cast<double>(a[t]) - static_cast<double>(b[t]);
        acc += diff * diff;
      }
      d[i][j] = d[j][i] = acc;
    }
  }
  return d;
}

}  // namespace

std::vector<double> krum_scores(const std::vector<ClientUpdate>& updates, int f) {
  const int m = static_cast<int>(updates.size());
  if (f < 0) throw ConfigError("krum: f must be >= 0");
  if (m < f + 3)
    throw ConfigError("krum needs at least f + 3 = " + std::to_string(f + 3) +
                      " updates, got " + std::to_string(m));
  const int neighbours = m - f - 2;
  const auto dists = pairwise_sq_dists(updates);
  std::vector<double> scores(static_cast<std::size_t>(m), 0.0);
  std::vector<double> row;
  for (int i = 0; i < m; ++i) {
    row.clear();
    for (int j = 0; j < m; ++j)
      if (j != i) row.push_back(dists[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    std::nth_element(row.begin(), row.begin() + neighbours - 1, row.end());
    double acc = 0.0;
    for (int t = 0; t < neighbours; ++t) acc += row[static_cast<std::size_t>(t)];
    scores[static_cast<std::size_t>(i)] = acc;
  }
  return scores;
}

int krum_select(const std::vector<ClientUpdate>& updates, int f) {
  const auto scores = krum_scores(updates, f);
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    const auto si = scores[static_cast<std::size_t>(i)];
    const auto sb = scores[static_cast<std::size_t>(best)];
    if (si < sb || (si == sb && updates[static_cast<std::size_t>(i)].client_id <
                                    updates[static_cast<std::size_t>(best)].client_id))
      best = i;
  }
  return best;
}

std::vector<int> multi_krum_select(const std::vector<ClientUpdate>& updates, int f, int m) {
  if (m < 1 || m > static_cast<int>(updates.size()))
    throw ConfigError("multi_krum: m must satisfy 1 <= m <= update count");
  const auto scores = krum_scores(updates, f);
  std::vector<int> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto sa = scores[static_cast<std::size_t>(a)];
    const auto sb = scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa < sb;
    return updates[static_cast<std::size_t>(a)].client_id <
           updates[static_cast<std::size_t>(b)].client_id;
  });
  order.resize(static_cast<std::size_t>(m));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<double> rlr_aggregate(const std::vector<ClientUpdate>& updates,
                                  double threshold, double server_lr,
                                  std::int64_t* flipped_dims) {
  if (updates.empty()) throw ConfigError("rlr: no updates");
  const std::size_t dims = updates.front().delta.size();
  std::vector<double> delta = fedavg_delta(updates, dims);
  std::int64_t flipped = 0;
  for (std::size_t d = 0; d < dims; ++d) {
    int sign_sum = 0;
    for (const auto& u : updates) {
      const float v = u.delta[d];
      sign_sum += (v > 0.0f) - (v < 0.0f);
    }
    const double agreement = std::abs(static_cast<double>(sign_sum));
    if (agreement >= threshold) {
      delta[d] *= server_lr;
    } else {
      delta[d] *= -server_lr;
      ++flipped;
    }
  }
  if (flipped_dims) *flipped_dims = flipped;
  return delta;
}

FedradResult fedrad(const std::vector<ClientUpdate>& updates, const ParameterVector& global,
                    const ClassifierSpec& spec, const LabeledDataset& server_data,
                    int epochs, double temperature, double lr, int batch,
                    std::mt19937_64& rng) {
  if (updates.empty()) throw ConfigError("fedrad: no updates");
  if (server_data.size() == 0) throw ConfigError("fedrad: empty server dataset");
  const int m = static_cast<int>(updates.size());
  const int k = spec.classes;
  const std::int64_t s = server_data.size();

  // Client logits on the server data.
  std::vector<std::int64_t> all(static_cast<std::size_t>(s));
  std::iota(all.begin(), all.end(), 0);
  const Tensor server_x = server_data.gather(all);
  std::vector<Tensor> logits;
  logits.reserve(static_cast<std::size_t>(m));
  for (const auto& u : updates) {
    ParameterVector client = global;
    for (std::size_t i = 0; i < client.values.size(); ++i) client.values[i] += u.delta[i];
    logits.push_back(forward_classifier(client, spec, server_x));
  }

  // Median logit per (sample, class); a client scores each time its logit
  // realises the middle order statistic(s).
  Tensor median = Tensor::zeros({static_cast<int>(s), k});
  std::vector<double> scores(static_cast<std::size_t>(m), 0.0);
  std::vector<float> vals(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < s; ++i) {
    for (int c = 0; c < k; ++c) {
      for (int j = 0; j < m; ++j)
        vals[static_cast<std::size_t>(j)] =
            logits[static_cast<std::size_t>(j)].data[static_cast<std::size_t>(i) * k + c];
      std::vector<float> sorted = vals;
      std::sort(sorted.begin(), sorted.end());
      float med;
      float lo, hi;
      if (m % 2 == 1) {
        lo = hi = sorted[static_cast<std::size_t>(m / 2)];
        med = lo;
      } else {
        lo = sorted[static_cast<std::size_t>(m / 2 - 1)];
        hi = sorted[static_cast<std::size_t>(m / 2)];
        med = 0.5f * (lo + hi);
      }
      median.data[static_cast<std::size_t>(i) * k + c] = med;
      for (int j = 0; j < m; ++j) {
        const float v = vals[static_cast<std::size_t>(j)];
        if (v == lo || v == hi) scores[static_cast<std::size_t>(j)] += 1.0;
      }
    }
  }
  double total = std::accumulate(scores.begin(), scores.end(), 0.0);
  std::vector<double> weights(scores.size(), 1.0 / m);
  if (total > 0.0)
    for (std::size_t i = 0; i < scores.size(); ++i) weights[i] = scores[i] / total;

  // Distill the median ensemble into a copy of the global model.
  FedradResult res;
  res.distilled = global;
  res.scores = std::move(scores);
  res.weights = std::move(weights);
  const float t = static_cast<float>(temperature);
  for (int e = 0; e < epochs; ++e) {
    for (const auto& rows : make_batches(all, batch, rng)) {
      Graph g;
      BoundParams bp = bind_params(g, res.distilled, true);
      int x = g.constant(server_data.gather(rows));
      int z = forward_classifier(g, spec, bp, x);
      Tensor target = Tensor::zeros({static_cast<int>(rows.size()), k});
      for (std::size_t n = 0; n < rows.size(); ++n) {
        // Teacher probabilities: softened median logits.
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c)
          mx = std::max(mx, static_cast<double>(
                                median.data[static_cast<std::size_t>(rows[n]) * k + c]) / t);
        double denom = 0.0;
        for (int c = 0; c < k; ++c)
          denom += std::exp(static_cast<double>(
                                median.data[static_cast<std::size_t>(rows[n]) * k + c]) / t - mx);
        for (int c = 0; c < k; ++c)
          target.data[n * static_cast<std::size_t>(k) + c] = static_cast<float>(
              std::exp(static_cast<double>(
                           median.data[static_cast<std::size_t>(rows[n]) * k + c]) / t - mx) /
              denom);
      }
      int loss = g.soft_cross_entropy(z, std::move(target), t);
      res.final_distill_loss = g.value(loss).data[0];
      if (!std::isfinite(res.final_distill_loss))
        throw NumericError("non-finite distillation loss");
      if (lr == 0.0) continue;
      g.backward(loss);
      sgd_step(res.distilled, collect_grads(g, bp, res.distilled.layout),
               static_cast<float>(lr));
    }
  }
  return res;
}

namespace {

// Output-layer weight/bias segments: the trailing dense layer of the
// classifier layout.
std::pair<const Segment*, const Segment*> output_layer(const Layout& layout, int classes) {
  const Segment* w = nullptr;
  const Segment* b = nullptr;
  for (const auto& seg : layout.segments()) {
    if (seg.shape.size() == 2 && seg.shape[1] == classes && seg.name.ends_with(".w"))
      w = &seg;
    if (seg.shape.size() == 1 && seg.shape[0] == classes && seg.name.ends_with(".b"))
      b = &seg;
  }
  if (!w || !b) throw ConfigError("deepsight: cannot locate the output layer segments");
  return {w, b};
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

std::vector<double> softmax_row(const float* z, int k) {
  double mx = z[0];
  for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(z[j]));
  std::vector<double> p(static_cast<std::size_t>(k));
  double denom = 0.0;
  for (int j = 0; j < k; ++j) {
    p[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(z[j]) - mx);
    denom += p[static_cast<std::size_t>(j)];
  }
  for (auto& v : p) v /= denom;
  return p;
}

}  // namespace

std::vector<int> kmeans(const std::vector<std::vector<double>>& points, int k,
                        int max_iters, std::mt19937_64& rng) {
  const int n = static_cast<int>(points.size());
  if (n == 0) return {};
  k = std::min(k, n);
  const std::size_t dim = points.front().size();

  auto sq_dist = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc;
  };

  // k-means++ seeding
  std::vector<std::vector<double>> centers;
  std::uniform_int_distribution<int> first(0, n - 1);
  centers.push_back(points[static_cast<std::size_t>(first(rng))]);
  std::vector<double> d2(static_cast<std::size_t>(n));
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(points[static_cast<std::size_t>(i)], c));
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(points[static_cast<std::size_t>(first(rng))]);
      continue;
    }
    std::uniform_real_distribution<double> pick(0.0, total);
    double r = pick(rng);
    int chosen = n - 1;
    for (int i = 0; i < n; ++i) {
      r -= d2[static_cast<std::size_t>(i)];
      if (r <= 0.0) {
        chosen = i;
        break;
      }
    }
    centers.push_back(points[static_cast<std::size_t>(chosen)]);
  }

  std::vector<int> label(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < static_cast<int>(centers.size()); ++c) {
        const double d = sq_dist(points[static_cast<std::size_t>(i)],
                                 centers[static_cast<std::size_t>(c)]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (label[static_cast<std::size_t>(i)] != best) {
        label[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    for (int c = 0; c < static_cast<int>(centers.size()); ++c) {
      std::vector<double> mean(dim, 0.0);
      int count = 0;
      for (int i = 0; i < n; ++i) {
        if (label[static_cast<std::size_t>(i)] != c) continue;
        ++count;
        for (std::size_t t = 0; t < dim; ++t) mean[t] += points[static_cast<std::size_t>(i)][t];
      }
      if (count > 0) {
        for (auto& v : mean) v /= count;
        centers[static_cast<std::size_t>(c)] = std::move(mean);
      }
    }
    if (!changed) break;
  }
  return label;
}

DeepsightResult deepsight(const std::vector<ClientUpdate>& updates,
                          const ParameterVector& global, const ClassifierSpec& spec,
                          int seeds, int noise_samples, double tau, double te_frac,
                          std::mt19937_64& rng) {
  if (updates.empty()) throw ConfigError("deepsight: no updates");
  const int m = static_cast<int>(updates.size());
  const int k = spec.classes;
  auto [w_seg, b_seg] = output_layer(*global.layout, k);
  const int d_in = w_seg->shape[0];

  DeepsightResult res;
  res.neup.assign(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(k), 0.0));
  res.te.assign(static_cast<std::size_t>(m), 0.0);

  // NEUP: normalized squared output-layer update energies per class.
  for (int i = 0; i < m; ++i) {
    const auto& delta = updates[static_cast<std::size_t>(i)].delta;
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      double e = std::abs(static_cast<double>(delta[b_seg->offset + static_cast<std::size_t>(c)]));
      for (int j = 0; j < d_in; ++j)
        e += std::abs(static_cast<double>(
            delta[w_seg->offset + static_cast<std::size_t>(j) * k + static_cast<std::size_t>(c)]));
      const double sq = e * e;
      res.neup[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = sq;
      total += sq;
    }
    if (total > 0.0)
      for (auto& v : res.neup[static_cast<std::size_t>(i)]) v /= total;
    else
      for (auto& v : res.neup[static_cast<std::size_t>(i)]) v = 1.0 / k;
    const double mx = *std::max_element(res.neup[static_cast<std::size_t>(i)].begin(),
                                        res.neup[static_cast<std::size_t>(i)].end());
    int exceed = 0;
    for (double v : res.neup[static_cast<std::size_t>(i)])
      if (v > te_frac * mx) ++exceed;
    res.te[static_cast<std::size_t>(i)] = exceed;
  }

  // Suspicious = few classes dominate the output-layer energy.
  const double te_boundary = median_of(res.te);
  res.suspicious.assign(static_cast<std::size_t>(m), 0);
  for (int i = 0; i < m; ++i)
    res.suspicious[static_cast<std::size_t>(i)] = res.te[static_cast<std::size_t>(i)] < te_boundary ? 1 : 0;

  // DDifs: per class, mean ratio of client to global predicted
  // probabilities on random noise inputs, averaged over seeds.
  std::vector<std::vector<double>> ddif(static_cast<std::size_t>(m),
                                        std::vector<double>(static_cast<std::size_t>(k), 0.0));
  std::vector<ParameterVector> clients;
  clients.reserve(static_cast<std::size_t>(m));
  for (const auto& u : updates) {
    ParameterVector c = global;
    for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] += u.delta[i];
    clients.push_back(std::move(c));
  }
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  for (int s = 0; s < seeds; ++s) {
    Tensor noise = Tensor::zeros({noise_samples, spec.in_h, spec.in_w, spec.in_c});
    for (auto& v : noise.data) v = unit(rng);
    const Tensor glogits = forward_classifier(global, spec, noise);
    std::vector<std::vector<double>> gprobs(static_cast<std::size_t>(noise_samples));
    for (int n = 0; n < noise_samples; ++n)
      gprobs[static_cast<std::size_t>(n)] =
          softmax_row(glogits.data.data() + static_cast<std::int64_t>(n) * k, k);
    for (int i = 0; i < m; ++i) {
      const Tensor clogits = forward_classifier(clients[static_cast<std::size_t>(i)], spec, noise);
      for (int n = 0; n < noise_samples; ++n) {
        const auto cp = softmax_row(clogits.data.data() + static_cast<std::int64_t>(n) * k, k);
        for (int c = 0; c < k; ++c)
          ddif[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] +=
              cp[static_cast<std::size_t>(c)] /
              (gprobs[static_cast<std::size_t>(n)][static_cast<std::size_t>(c)] + 1e-12);
      }
    }
  }
  const double denom = static_cast<double>(seeds) * noise_samples;
  for (auto& row : ddif)
    for (auto& v : row) v /= denom;

  // Cluster on standardized (NEUP, DDif) features; reject clusters that
  // contain suspicious clients at a fraction >= tau.
  std::vector<std::vector<double>> feats(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    auto& f = feats[static_cast<std::size_t>(i)];
    f.insert(f.end(), res.neup[static_cast<std::size_t>(i)].begin(),
             res.neup[static_cast<std::size_t>(i)].end());
    f.insert(f.end(), ddif[static_cast<std::size_t>(i)].begin(),
             ddif[static_cast<std::size_t>(i)].end());
  }
  const std::size_t fdim = feats.front().size();
  for (std::size_t j = 0; j < fdim; ++j) {
    double mean = 0.0;
    for (const auto& f : feats) mean += f[j];
    mean /= m;
    double var = 0.0;
    for (const auto& f : feats) var += (f[j] - mean) * (f[j] - mean);
    var /= m;
    const double sd = std::sqrt(var);
    for (auto& f : feats) f[j] = sd > 0.0 ? (f[j] - mean) / sd : 0.0;
  }
  const std::vector<int> label = kmeans(feats, 2, 50, rng);
  const int nclusters = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
  for (int c = 0; c < nclusters; ++c) {
    int members = 0, bad = 0;
    for (int i = 0; i < m; ++i) {
      if (label[static_cast<std::size_t>(i)] != c) continue;
      ++members;
      bad += res.suspicious[static_cast<std::size_t>(i)];
    }
    if (members == 0) continue;
    const double frac = static_cast<double>(bad) / members;
    const bool reject = bad > 0 && frac >= tau;
    if (!reject)
      for (int i = 0; i < m; ++i)
        if (label[static_cast<std::size_t>(i)] == c) res.survivors.push_back(i);
  }
  std::sort(res.survivors.begin(), res.survivors.end());
  return res;
}

RflbatResult rflbat(const std::vector<ClientUpdate>& updates, int pca_dims, int clusters,
                    std::mt19937_64& rng) {
  if (updates.empty()) throw ConfigError("rflbat: no updates");
  const int m = static_cast<int>(updates.size());
  const std::size_t dims = updates.front().delta.size();

  RflbatResult res;
  res.cluster_of.assign(static_cast<std::size_t>(m), 0);

  // Degenerate case: identical updates carry no direction information.
  bool all_same = true;
  for (int i = 1; i < m && all_same; ++i)
    all_same = updates[static_cast<std::size_t>(i)].delta ==
               updates[0].delta;
  if (all_same || m == 1) {
    res.survivors.resize(static_cast<std::size_t>(m));
    std::iota(res.survivors.begin(), res.survivors.end(), 0);
    res.explained.assign(1, 1.0);
    res.cluster_similarity.assign(1, 1.0);
    return res;
  }

  // PCA via the M x M Gram matrix of centred updates.
  std::vector<std::vector<double>> centred(static_cast<std::size_t>(m),
                                           std::vector<double>(dims, 0.0));
  std::vector<double> mean(dims, 0.0);
  for (const auto& u : updates)
    for (std::size_t d = 0; d < dims; ++d) mean[d] += static_cast<double>(u.delta[d]) / m;
  for (int i = 0; i < m; ++i)
    for (std::size_t d = 0; d < dims; ++d)
      centred[static_cast<std::size_t>(i)][d] =
          static_cast<double>(updates[static_cast<std::size_t>(i)].delta[d]) - mean[d];

  Eigen::MatrixXd gram(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < dims; ++d)
        acc += centred[static_cast<std::size_t>(i)][d] * centred[static_cast<std::size_t>(j)][d];
      gram(i, j) = acc;
      gram(j, i) = acc;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericError("rflbat: eigendecomposition failed");

  // Eigenvalues ascend; take the top components with positive variance.
  const int take = std::min(pca_dims, m);
  double total_var = 0.0;
  for (int i = 0; i < m; ++i) total_var += std::max(0.0, eig.eigenvalues()(i));
  std::vector<std::vector<double>> coords(static_cast<std::size_t>(m));
  for (int c = 0; c < take; ++c) {
    const int col = m - 1 - c;
    const double lambda = eig.eigenvalues()(col);
    if (lambda <= 0.0) break;
    res.explained.push_back(total_var > 0.0 ? lambda / total_var : 0.0);
    const double scale = std::sqrt(lambda);
    for (int i = 0; i < m; ++i)
      coords[static_cast<std::size_t>(i)].push_back(eig.eigenvectors()(i, col) * scale);
  }
  if (res.explained.empty()) {
    res.survivors.resize(static_cast<std::size_t>(m));
    std::iota(res.survivors.begin(), res.survivors.end(), 0);
    res.cluster_similarity.assign(1, 1.0);
    return res;
  }

  res.cluster_of = kmeans(coords, clusters, 50, rng);
  const int nclusters = *std::max_element(res.cluster_of.begin(), res.cluster_of.end()) + 1;

  // Mean pairwise cosine similarity of the raw member updates.
  res.cluster_similarity.assign(static_cast<std::size_t>(nclusters), 1.0);
  for (int c = 0; c < nclusters; ++c) {
    std::vector<int> members;
    for (int i = 0; i < m; ++i)
      if (res.cluster_of[static_cast<std::size_t>(i)] == c) members.push_back(i);
    if (members.size() < 2) continue;
    double acc = 0.0;
    int pairs = 0;
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        const auto& ua = updates[static_cast<std::size_t>(members[a])].delta;
        const auto& ub = updates[static_cast<std::size_t>(members[b])].delta;
        double dot = 0.0;
        for (std::size_t d = 0; d < dims; ++d)
          dot += static_cast<double>(ua[d]) * static_cast<double>(ub[d]);
        const double na = l2_norm(ua), nb = l2_norm(ub);
        acc += (na > 0.0 && nb > 0.0) ? dot / (na * nb) : 1.0;
        ++pairs;
      }
    }
    res.cluster_similarity[static_cast<std::size_t>(c)] = acc / pairs;
  }

  // Candidates: similarity strictly above the across-cluster median; the
  // largest candidate wins. No strict winner (k=1, exact ties) -> all
  // clusters stay candidates.
  const double med = median_of(res.cluster_similarity);
  std::vector<int> candidates;
  for (int c = 0; c < nclusters; ++c)
    if (res.cluster_similarity[static_cast<std::size_t>(c)] > med) candidates.push_back(c);
  if (candidates.empty())
    for (int c = 0; c < nclusters; ++c) candidates.push_back(c);
  int accepted = candidates.front();
  int best_count = 0;
  for (int c : candidates) {
    int count = 0;
    for (int i = 0; i < m; ++i)
      if (res.cluster_of[static_cast<std::size_t>(i)] == c) ++count;
    if (count > best_count) {
      best_count = count;
      accepted = c;
    }
  }
  for (int i = 0; i < m; ++i)
    if (res.cluster_of[static_cast<std::size_t>(i)] == accepted) res.survivors.push_back(i);
  return res;
}

// --- Defense wrappers -------------------------------------------------------

namespace {

class FedAvgDefense : public Defense {
 public:
  std::string name() const override { return "fedavg"; }
  std::vector<std::string> diag_columns() const override { return {}; }
  DefenseResult apply(const std::vector<ClientUpdate>& updates,
                      DefenseContext&) const override {
    DefenseResult r;
    r.survivors = updates;
    return r;
  }
};

class NormClipDefense : public Defense {
 public:
  explicit NormClipDefense(double rho) : rho_(rho) {}
  std::string name() const override { return "nc"; }
  std::vector<std::string> diag_columns() const override { return {"nc_clipped"}; }
  DefenseResult apply(const std::vector<ClientUpdate>& updates,
                      DefenseContext&) const override {
    DefenseResult r;
    int clipped = 0;
    r.survivors = norm_clip(updates, rho_, &clipped);
    r.diag = {{"nc_clipped", static_cast<double>(clipped)}};
    return r;
  }

 private:
  double rho_;
};

class WeakDpDefense : public Defense {
 public:
  WeakDpDefense(double rho, double sigma) : rho_(rho), sigma_(sigma) {}
  std::string name() const override { return "weak_dp"; }
  std::vector<std::string> diag_columns() const override { return {"dp_clipped"}; }
  DefenseResult apply(const std::vector<ClientUpdate>& updates,
                      DefenseContext& ctx) const override {
    DefenseResult r;
    int clipped = 0;
    r.survivors = weak_dp(updates, rho_, sigma_, ctx.rng, &clipped);
    r.diag = {{"dp_clipped", static_cast<double>(clipped)}};
    return r;
  }

 private:
  double rho_;
  double sigma_;
};

class KrumDefense : public Defense {
 public:
  explicit KrumDefense(int f) : f_(f) {}
  std::string name() const override { return "krum"; }
  std::vector<std::string> diag_columns() const override { return {"krum_selected"}; }
  DefenseResult apply(const std::vector<ClientUpdate>& updates,
                      DefenseContext&) const override {
    DefenseResult r;
    const int pick = krum_select(updates, f_);
    r.survivors = {updates[static_cast<std::size_t>(pick)]};
    r.diag = {{"krum_selected", static_cast<double>(r.survivors.front().client_id)}};
    return r;
  }

 private:
  int f_;
};

class MultiKrumDefense : public Defense {
 public:
  MultiKrumDefense(int f, int m) : f_(f), m_(m) {}
  std::string name() const override { return "multi_krum"; }
  std::vector<std::string> diag_columns() const override { return {"mk_accepted"}; }
  DefenseResult apply(const std::vector<ClientUpdate>& updates,
                      DefenseContext&) const override {
    DefenseResult r;
    for (int idx : multi_krum_select(updates, f_, std::min(m_, static_cast<int>(updates.size()))))
      r.survivors.push_back(updates[static_cast<std::size_t>(idx)]);
    r.diag = {{"mk_accepted", static_cast<double>(r.survivors.size())}};
    return r;
  }

 private:
  int f_;
  int m_;
};

class RlrDefense : public Defense {
 public:
  RlrDefense(double threshold, double server_lr)
      : threshold_(threshold), server_lr_(server_lr) {}
  std::string name() const override { return "rlr"; }
  std::vector<std::string> diag_columns() const override { return {"rlr_flipped"}; }
  DefenseResult apply(const std::vector<ClientUpdate>& updates,
                      DefenseContext&) const override {
    DefenseResult r;
    std::int64_t flipped = 0;
    r.delta_override = rlr_aggregate(updates, threshold_, server_lr_, &flipped);
    r.survivors = updates;
    r.diag = {{"rlr_flipped", static_cast<double>(flipped)}};
    return r;
  }

 private:
  double threshold_;
  double server_lr_;
};

class FedradDefense : public Defense {
 public:
  FedradDefense(int epochs, double temperature, double lr)
      : epochs_(epochs), temperature_(temperature), lr_(lr) {}
  std::string name() const override { return "fedrad"; }
  std::vector<std::string> diag_columns() const override {
    return {"fedrad_smin", "fedrad_smax"};
  }
  DefenseResult apply(const std::vector<ClientUpdate>& updates,
                      DefenseContext& ctx) const override {
    if (!ctx.server_data || !ctx.global || !ctx.spec)
      throw ConfigError("fedrad needs a server dataset and the global model");
    DefenseResult r;
    FedradResult fr = fedrad(updates, *ctx.global, *ctx.spec, *ctx.server_data, epochs_,
                             temperature_, lr_, ctx.batch, ctx.rng);
    const auto [mn, mx] = std::minmax_element(fr.scores.begin(), fr.scores.end());
    r.diag = {{"fedrad_smin", *mn}, {"fedrad_smax", *mx}};
    r.params_override = std::move(fr.distilled);
    r.survivors = updates;
    return r;
  }

 private:
  int epochs_;
  double temperature_;
  double lr_;
};

class DeepsightDefense : public Defense {
 public:
  DeepsightDefense(int seeds, int noise_samples, double tau, double te_frac, double clip)
      : seeds_(seeds), noise_samples_(noise_samples), tau_(tau), te_frac_(te_frac),
        clip_(clip) {}
  std::string name() const override { return "deepsight"; }
  std::vector<std::string> diag_columns() const override {
    return {"ds_accepted", "ds_suspicious"};
  }
  DefenseResult apply(const std::vector<ClientUpdate>& updates,
                      DefenseContext& ctx) const override {
    if (!ctx.global || !ctx.spec)
      throw ConfigError("deepsight needs the global model");
    DefenseResult r;
    DeepsightResult ds = deepsight(updates, *ctx.global, *ctx.spec, seeds_, noise_samples_,
                                   tau_, te_frac_, ctx.rng);
    std::vector<ClientUpdate> kept;
    for (int idx : ds.survivors) kept.push_back(updates[static_cast<std::size_t>(idx)]);
    r.survivors = norm_clip(kept, clip_);
    const double suspicious =
        std::accumulate(ds.suspicious.begin(), ds.suspicious.end(), 0.0);
    r.diag = {{"ds_accepted", static_cast<double>(ds.survivors.size())},
              {"ds_suspicious", suspicious}};
    return r;
  }

 private:
  int seeds_;
  int noise_samples_;
  double tau_;
  double te_frac_;
  double clip_;
};

class RflbatDefense : public Defense {
 public:
  RflbatDefense(int pca_dims, int clusters) : pca_dims_(pca_dims), clusters_(clusters) {}
  std::string name() const override { return "rflbat"; }
  std::vector<std::string> diag_columns() const override { return {"rb_accepted"}; }
  DefenseResult apply(const std::vector<ClientUpdate>& updates,
                      DefenseContext& ctx) const override {
    DefenseResult r;
    RflbatResult rb = rflbat(updates, pca_dims_, clusters_, ctx.rng);
    for (int idx : rb.survivors) r.survivors.push_back(updates[static_cast<std::size_t>(idx)]);
    r.diag = {{"rb_accepted", static_cast<double>(rb.survivors.size())}};
    return r;
  }

 private:
  int pca_dims_;
  int clusters_;
};

}  // namespace

std::unique_ptr<Defense> make_defense(const ExperimentConfig& cfg) {
  const auto& d = cfg.defense;
  if (d.kind == "fedavg") return std::make_unique<FedAvgDefense>();
  if (d.kind == "nc") return std::make_unique<NormClipDefense>(d.nc_rho);
  if (d.kind == "weak_dp") return std::make_unique<WeakDpDefense>(d.dp_rho, d.dp_sigma);
  if (d.kind == "krum") return std::make_unique<KrumDefense>(d.krum_f);
  if (d.kind == "multi_krum") return std::make_unique<MultiKrumDefense>(d.krum_f, d.mk_m);
  if (d.kind == "rlr") return std::make_unique<RlrDefense>(d.rlr_threshold, d.rlr_server_lr);
  if (d.kind == "fedrad")
    return std::make_unique<FedradDefense>(d.fedrad_epochs, d.fedrad_temperature, d.fedrad_lr);
  if (d.kind == "deepsight")
    return std::make_unique<DeepsightDefense>(d.ds_seeds, d.ds_noise_samples, d.ds_tau,
                                              d.ds_te_frac, d.ds_clip);
  if (d.kind == "rflbat") return std::make_unique<RflbatDefense>(d.rb_pca_dims, d.rb_clusters);
  throw ConfigError("unknown defense kind: " + d.kind);
}

}  // namespace fedlab
