#include <doctest.h>

#include <cmath>
#include <cstring>

#include "fedlab/classifier.hpp"
#include "fedlab/errors.hpp"
#include "fedlab/generator.hpp"
#include "fedlab/graph.hpp"
#include "fedlab/metrics.hpp"
#include "fedlab/optim.hpp"
#include "fedlab/rng.hpp"
#include "oracle_utils.hpp"

using namespace fedlab;

TEST_CASE("tensor shape/data consistency is enforced") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0f, 2.0f}), ConfigError);
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
}

TEST_CASE("forward_classifier: zero weights give zero logits") {
  ClassifierSpec spec = ClassifierSpec::small_cnn(8, 8, 1, 4);
  ParameterVector pv = ParameterVector::zeros(spec.make_layout());
  std::mt19937_64 rng(1);
  Tensor x = oracle::random_tensor({3, 8, 8, 1}, rng, 0.0f, 1.0f);
  Tensor logits = forward_classifier(pv, spec, x);
  CHECK(logits.shape == std::vector<int>{3, 4});
  for (float v : logits.data) CHECK(v == 0.0f);
}

TEST_CASE("forward_classifier: identity dense maps one-hot input to itself") {
  ClassifierSpec spec;
  spec.in_h = 1;
  spec.in_w = 1;
  spec.in_c = 5;
  spec.classes = 5;
  spec.layers = {DenseLayer{5}};
  ParameterVector pv = ParameterVector::zeros(spec.make_layout());
  const Segment& w = pv.layout->find("dense0.w");
  for (int i = 0; i < 5; ++i) pv.values[w.offset + static_cast<std::size_t>(i) * 5 + i] = 1.0f;
  Tensor x = Tensor::zeros({1, 1, 1, 5});
  x.data[2] = 1.0f;
  Tensor logits = forward_classifier(pv, spec, x);
  for (int i = 0; i < 5; ++i) CHECK(logits.data[static_cast<std::size_t>(i)] == x.data[static_cast<std::size_t>(i)]);
}

TEST_CASE("forward_classifier matches the scalar-loop oracle") {
  ClassifierSpec spec = ClassifierSpec::small_cnn(8, 8, 1, 4, 4, 8);
  std::mt19937_64 rng(7);
  ParameterVector pv = init_classifier(spec, rng);
  Tensor x = oracle::random_tensor({5, 8, 8, 1}, rng, 0.0f, 1.0f);
  Tensor fast = forward_classifier(pv, spec, x);
  Tensor slow = oracle::scalar_forward(pv, spec, x);
  double scale = 0.0;
  for (float v : slow.data) scale = std::max(scale, static_cast<double>(std::abs(v)));
  for (std::size_t i = 0; i < fast.data.size(); ++i)
    CHECK(std::abs(fast.data[i] - slow.data[i]) <= 1e-5 * (scale + 1.0));
}

TEST_CASE("forward_classifier rejects shape mismatches") {
  ClassifierSpec spec = ClassifierSpec::small_cnn(8, 8, 1, 4);
  ParameterVector pv = ParameterVector::zeros(spec.make_layout());
  CHECK_THROWS_AS(forward_classifier(pv, spec, Tensor::zeros({1, 7, 8, 1})), ConfigError);
}

TEST_CASE("cross_entropy: uniform logits give ln(K)") {
  Tensor logits = Tensor::full({4, 10}, 0.37f);
  const double loss = cross_entropy(logits, {0, 3, 7, 9});
  CHECK(loss == doctest::Approx(2.302585092994046).epsilon(1e-6));
}

TEST_CASE("cross_entropy: loss vanishes with a growing correct-class margin") {
  double prev = 1e9;
  for (float margin : {2.0f, 8.0f, 32.0f}) {
    Tensor logits = Tensor::zeros({1, 5});
    logits.data[3] = margin;
    const double loss = cross_entropy(logits, {3});
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-10);
}

TEST_CASE("cross_entropy matches the scalar softmax oracle on a fixed batch") {
  // expected = mean(lse(row) - row[label]) computed with plain softmax
  Tensor logits({2, 3}, {1.0f, 2.0f, 0.5f, 0.2f, -0.3f, 0.1f});
  const double loss = cross_entropy(logits, {1, 0});
  CHECK(loss == doctest::Approx(0.6925982198306023).epsilon(1e-6));
}

TEST_CASE("cross_entropy stays finite for huge logits") {
  Tensor logits({2, 4}, {1e4f, -1e4f, 5e3f, 0.0f, -1e4f, 1e4f, 0.0f, -5e3f});
  CHECK(std::isfinite(cross_entropy(logits, {0, 1})));
}

TEST_CASE("cross_entropy rejects out-of-range labels") {
  Tensor logits = Tensor::zeros({1, 3});
  CHECK_THROWS_AS(cross_entropy(logits, {3}), InputError);
  CHECK_THROWS_AS(cross_entropy(logits, {-1}), InputError);
}

TEST_CASE("visual_loss: identical, antipodal and fixed-pair values") {
  Tensor a({1, 2, 2, 1}, {0.2f, 0.4f, 0.4f, 0.1f});
  CHECK(visual_loss(a, a).value == doctest::Approx(0.0).epsilon(1e-9));

  Tensor neg = a;
  for (auto& v : neg.data) v = -v;
  CHECK(visual_loss(neg, a).value == doctest::Approx(2.0).epsilon(1e-6));

  // expected = 1 - dot/(|u||v|) computed by hand
  Tensor b({1, 2, 2, 1}, {0.1f, 0.5f, 0.3f, 0.2f});
  CHECK(visual_loss(a, b).value == doctest::Approx(0.052303372313218466).epsilon(1e-6));
}

TEST_CASE("visual_loss is symmetric and flags zero-norm rows") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = oracle::random_tensor({3, 4, 4, 1}, rng, 0.0f, 1.0f);
    Tensor b = oracle::random_tensor({3, 4, 4, 1}, rng, 0.0f, 1.0f);
    CHECK(visual_loss(a, b).value == doctest::Approx(visual_loss(b, a).value).epsilon(1e-7));
  }
  Tensor zero = Tensor::zeros({2, 2, 2, 1});
  Tensor other = Tensor::full({2, 2, 2, 1}, 0.5f);
  VisualLoss res = visual_loss(zero, other);
  CHECK(res.value == 0.0);
  CHECK(res.zero_norm_samples == 2);
}

namespace {

// Gradient check harness: loss = sum(op(x) * w) for fixed random weights,
// analytic gradient vs central differences on the leaf under test.
struct FdCheck {
  double rel_error;
};

template <typename BuildOp>
FdCheck fd_check_against(const Tensor& x0, BuildOp build, double h = 1e-3) {
  Graph g;
  int x = g.leaf(x0, true);
  int loss = build(g, x);
  g.backward(loss);
  const Tensor analytic = g.grad(x);

  auto f = [&](const std::vector<float>& xs) {
    Graph gg;
    int xx = gg.leaf(Tensor(x0.shape, xs), true);
    int ll = build(gg, xx);
    return static_cast<double>(gg.value(ll).data[0]);
  };
  const std::vector<double> fd = oracle::central_diff(f, x0.data, h);
  return FdCheck{oracle::max_rel_error(fd, analytic.data)};
}

int weighted_sum(Graph& g, int out, std::uint64_t salt) {
  std::mt19937_64 rng(salt);
  Tensor w = oracle::random_tensor(g.value(out).shape, rng, -1.0f, 1.0f);
  return g.sum(g.mul(out, g.constant(std::move(w))));
}

}  // namespace

TEST_CASE("backward: gradient of sum(params) is all ones") {
  Graph g;
  int x = g.leaf(Tensor({4}, {1.0f, -2.0f, 3.0f, 0.5f}), true);
  g.backward(g.sum(x));
  for (float v : g.grad(x).data) CHECK(v == 1.0f);
}

TEST_CASE("backward: gradient of 0.5*|theta|^2 is theta") {
  Graph g;
  Tensor theta({5}, {0.3f, -1.2f, 0.0f, 2.5f, -0.7f});
  int x = g.leaf(theta, true);
  int loss = g.scale(g.sum(g.mul(x, x)), 0.5f);
  g.backward(loss);
  for (std::size_t i = 0; i < theta.data.size(); ++i)
    CHECK(g.grad(x).data[i] == doctest::Approx(theta.data[i]).epsilon(1e-6));
}

TEST_CASE("backward: disconnected trainable leaf keeps a zero gradient") {
  Graph g;
  int used = g.leaf(Tensor({2}, {1.0f, 2.0f}), true);
  int unused = g.leaf(Tensor({2}, {5.0f, 6.0f}), true);
  g.backward(g.sum(used));
  for (float v : g.grad(unused).data) CHECK(v == 0.0f);
}

TEST_CASE("gradient check: elementwise and reduction ops") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    Tensor x = oracle::random_tensor({2, 6}, rng, -2.0f, 2.0f);
    Tensor other = oracle::random_tensor({2, 6}, rng, -2.0f, 2.0f);

    auto check = [&](auto build) {
      CHECK(fd_check_against(x, build).rel_error < 1e-3);
    };
    check([&](Graph& g, int xx) {
      return weighted_sum(g, g.add(xx, g.constant(other)), 1);
    });
    check([&](Graph& g, int xx) {
      return weighted_sum(g, g.sub(g.constant(other), xx), 2);
    });
    check([&](Graph& g, int xx) {
      return weighted_sum(g, g.mul(xx, g.constant(other)), 3);
    });
    check([&](Graph& g, int xx) { return weighted_sum(g, g.scale(xx, -1.7f), 4); });
    check([&](Graph& g, int xx) {
      return weighted_sum(g, g.add_scaled(xx, g.constant(other), 0.3f, 0.7f), 5);
    });
    check([&](Graph& g, int xx) { return weighted_sum(g, g.tanh_act(xx), 6); });
  }
}

TEST_CASE("gradient check: relu and clip away from their kinks") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 8; ++trial) {
    Tensor x = oracle::random_tensor({3, 5}, rng, -2.0f, 2.0f);
    for (auto& v : x.data)
      if (std::abs(v) < 0.05f) v = 0.2f;
    CHECK(fd_check_against(x, [&](Graph& g, int xx) {
            return weighted_sum(g, g.relu(xx), 7);
          }).rel_error < 1e-3);

    Tensor xc = oracle::random_tensor({3, 5}, rng, 0.1f, 0.9f);
    CHECK(fd_check_against(xc, [&](Graph& g, int xx) {
            return weighted_sum(g, g.clip01(xx), 8);
          }).rel_error < 1e-3);
  }
}

TEST_CASE("clip01 blocks gradient outside [0,1] and apply_trigger clips") {
  Graph g;
  int x = g.leaf(Tensor({4}, {-0.5f, 0.5f, 1.5f, 0.9f}), true);
  g.backward(weighted_sum(g, g.clip01(x), 9));
  CHECK(g.grad(x).data[0] == 0.0f);
  CHECK(g.grad(x).data[2] == 0.0f);
  CHECK(g.grad(x).data[1] != 0.0f);

  Tensor img({1, 1, 2, 1}, {0.9f, 0.1f});
  Tensor noise({1, 1, 2, 1}, {0.5f, -0.5f});
  Tensor out = apply_trigger(img, noise);
  CHECK(out.data[0] == 1.0f);
  CHECK(out.data[1] == 0.0f);
  Tensor same = apply_trigger(img, Tensor::zeros({1, 1, 2, 1}));
  CHECK(same.data == img.data);
}

TEST_CASE("gradient check: dense, conv, transposed conv, pooling") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 4; ++trial) {
    // dense wrt x, w, b
    Tensor x = oracle::random_tensor({3, 4}, rng);
    Tensor w = oracle::random_tensor({4, 5}, rng);
    Tensor b = oracle::random_tensor({5}, rng);
    CHECK(fd_check_against(x, [&](Graph& g, int xx) {
            return weighted_sum(g, g.dense(xx, g.constant(w), g.constant(b)), 20);
          }).rel_error < 1e-3);
    CHECK(fd_check_against(w, [&](Graph& g, int ww) {
            return weighted_sum(g, g.dense(g.constant(x), ww, g.constant(b)), 21);
          }).rel_error < 1e-3);
    CHECK(fd_check_against(b, [&](Graph& g, int bb) {
            return weighted_sum(g, g.dense(g.constant(x), g.constant(w), bb), 22);
          }).rel_error < 1e-3);

    // conv2d (stride 1 and stride 2) wrt x, w, b
    Tensor cx = oracle::random_tensor({2, 6, 6, 2}, rng);
    Tensor cw = oracle::random_tensor({3, 3, 3, 2}, rng);
    Tensor cb = oracle::random_tensor({3}, rng);
    for (int stride : {1, 2}) {
      CHECK(fd_check_against(cx, [&](Graph& g, int xx) {
              return weighted_sum(g, g.conv2d(xx, g.constant(cw), g.constant(cb), stride, 1),
                                  23);
            }).rel_error < 1e-3);
      CHECK(fd_check_against(cw, [&](Graph& g, int ww) {
              return weighted_sum(g, g.conv2d(g.constant(cx), ww, g.constant(cb), stride, 1),
                                  24);
            }).rel_error < 1e-3);
      CHECK(fd_check_against(cb, [&](Graph& g, int bb) {
              return weighted_sum(g, g.conv2d(g.constant(cx), g.constant(cw), bb, stride, 1),
                                  25);
            }).rel_error < 1e-3);
    }

    // conv2d_transpose wrt x, w, b
    Tensor tx = oracle::random_tensor({2, 3, 3, 4}, rng);
    Tensor tw = oracle::random_tensor({4, 4, 4, 2}, rng);
    Tensor tb = oracle::random_tensor({2}, rng);
    CHECK(fd_check_against(tx, [&](Graph& g, int xx) {
            return weighted_sum(g, g.conv2d_transpose(xx, g.constant(tw), g.constant(tb), 2, 1),
                                26);
          }).rel_error < 1e-3);
    CHECK(fd_check_against(tw, [&](Graph& g, int ww) {
            return weighted_sum(g, g.conv2d_transpose(g.constant(tx), ww, g.constant(tb), 2, 1),
                                27);
          }).rel_error < 1e-3);
    CHECK(fd_check_against(tb, [&](Graph& g, int bb) {
            return weighted_sum(g, g.conv2d_transpose(g.constant(tx), g.constant(tw), bb, 2, 1),
                                28);
          }).rel_error < 1e-3);

    // maxpool (distinct cell values w.h.p.)
    Tensor px = oracle::random_tensor({2, 4, 4, 3}, rng);
    CHECK(fd_check_against(px, [&](Graph& g, int xx) {
            return weighted_sum(g, g.maxpool2(xx), 29);
          }).rel_error < 1e-3);
  }
}

TEST_CASE("gradient check: embedding gather, broadcast, concat") {
  std::mt19937_64 rng(14);
  Tensor table = oracle::random_tensor({6, 4}, rng);
  std::vector<int> rows = {1, 5, 0, 5};
  CHECK(fd_check_against(table, [&](Graph& g, int tt) {
          return weighted_sum(g, g.gather_rows(tt, rows), 30);
        }).rel_error < 1e-3);

  Tensor v = oracle::random_tensor({3, 4}, rng);
  CHECK(fd_check_against(v, [&](Graph& g, int vv) {
          return weighted_sum(g, g.broadcast_hw(vv, 2, 5), 31);
        }).rel_error < 1e-3);

  Tensor a = oracle::random_tensor({2, 3, 3, 2}, rng);
  Tensor bpart = oracle::random_tensor({2, 3, 3, 4}, rng);
  CHECK(fd_check_against(a, [&](Graph& g, int aa) {
          return weighted_sum(g, g.concat_channels(aa, g.constant(bpart)), 32);
        }).rel_error < 1e-3);
  CHECK(fd_check_against(bpart, [&](Graph& g, int bb) {
          return weighted_sum(g, g.concat_channels(g.constant(a), bb), 33);
        }).rel_error < 1e-3);
}

TEST_CASE("gradient check: loss ops") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 6; ++trial) {
    Tensor logits = oracle::random_tensor({4, 5}, rng, -2.0f, 2.0f);
    std::vector<int> labels = {0, 2, 4, 1};
    CHECK(fd_check_against(logits, [&](Graph& g, int zz) {
            return g.cross_entropy(zz, labels);
          }).rel_error < 1e-3);

    Tensor ref = oracle::random_tensor({3, 2, 2, 1}, rng, 0.1f, 1.0f);
    Tensor xp = oracle::random_tensor({3, 2, 2, 1}, rng, 0.1f, 1.0f);
    CHECK(fd_check_against(xp, [&](Graph& g, int xx) {
            return g.cosine_distance(xx, g.constant(ref));
          }).rel_error < 1e-3);

    Tensor soft = oracle::random_tensor({3, 4}, rng, -1.0f, 1.0f);
    Tensor probs = Tensor::zeros({3, 4});
    for (int n = 0; n < 3; ++n) {
      double tot = 0.0;
      for (int k = 0; k < 4; ++k) {
        probs.data[static_cast<std::size_t>(n) * 4 + k] =
            0.1f + 0.2f * static_cast<float>((n + k) % 4);
        tot += probs.data[static_cast<std::size_t>(n) * 4 + k];
      }
      for (int k = 0; k < 4; ++k)
        probs.data[static_cast<std::size_t>(n) * 4 + k] /= static_cast<float>(tot);
    }
    // T^2 inflates the loss value relative to its gradients, so a larger
    // step keeps float quantization noise out of the differences.
    CHECK(fd_check_against(soft, [&](Graph& g, int zz) {
            return g.soft_cross_entropy(zz, probs, 2.0f);
          }, 1e-2).rel_error < 1e-3);
  }
}

TEST_CASE("gradient check: random two-conv net end to end") {
  // Smooth activations keep central differences valid at h=1e-3; the
  // relu/maxpool kinks are covered by the per-op checks above.
  std::mt19937_64 rng(16);
  Tensor x = oracle::random_tensor({2, 8, 8, 1}, rng, 0.0f, 1.0f);
  Tensor w1 = oracle::random_tensor({4, 3, 3, 1}, rng, -0.5f, 0.5f);
  Tensor b1 = oracle::random_tensor({4}, rng, -0.1f, 0.1f);
  Tensor w2 = oracle::random_tensor({6, 3, 3, 4}, rng, -0.5f, 0.5f);
  Tensor b2 = oracle::random_tensor({6}, rng, -0.1f, 0.1f);
  Tensor wd = oracle::random_tensor({24, 3}, rng, -0.5f, 0.5f);
  Tensor bd = oracle::random_tensor({3}, rng, -0.1f, 0.1f);
  const std::vector<int> labels = {0, 2};

  // Builds the net with `which` as the trainable leaf and the rest constant.
  auto net = [&](int which) {
    return [&, which](Graph& g, int leaf) {
      auto pick = [&](int slot, const Tensor& t) {
        return slot == which ? leaf : g.constant(t);
      };
      int h1 = g.tanh_act(g.conv2d(g.constant(x), pick(0, w1), pick(1, b1), 2, 1));
      int h2 = g.tanh_act(g.conv2d(h1, pick(2, w2), pick(3, b2), 2, 1));
      int z = g.dense(g.flatten(h2), pick(4, wd), pick(5, bd));
      return g.cross_entropy(z, labels);
    };
  };
  const Tensor* tensors[6] = {&w1, &b1, &w2, &b2, &wd, &bd};
  for (int slot = 0; slot < 6; ++slot)
    CHECK(fd_check_against(*tensors[slot], net(slot)).rel_error < 1e-3);
}

TEST_CASE("sgd_step arithmetic and error paths") {
  auto layout = Layout::build({{"w", {2}}});
  ParameterVector pv = ParameterVector::zeros(layout);
  pv.values = {1.0f, 1.0f};
  Gradient g = Gradient::zeros(layout);

  SUBCASE("zero gradient leaves params unchanged") {
    ParameterVector copy = pv;
    sgd_step(copy, g, 0.5f);
    CHECK(copy.values == pv.values);
  }
  SUBCASE("textbook update") {
    g.values = {1.0f, 2.0f};
    sgd_step(pv, g, 0.5f);
    CHECK(pv.values[0] == doctest::Approx(0.5f));
    CHECK(pv.values[1] == doctest::Approx(0.0f));
  }
  SUBCASE("three chained steps match the closed form") {
    g.values = {0.5f, 0.5f};
    for (int i = 0; i < 3; ++i) sgd_step(pv, g, 0.1f);
    CHECK(pv.values[0] == doctest::Approx(1.0f - 3 * 0.05f).epsilon(1e-6));
  }
  SUBCASE("non-finite gradient raises NumericError") {
    g.values = {std::numeric_limits<float>::quiet_NaN(), 0.0f};
    CHECK_THROWS_AS(sgd_step(pv, g, 0.1f), NumericError);
  }
  SUBCASE("lr must be positive") {
    CHECK_THROWS_AS(sgd_step(pv, g, 0.0f), ConfigError);
  }
}

TEST_CASE("adam_step: no-op on zero gradient, sign-step first update, 5-step trace") {
  auto layout = Layout::build({{"w", {1}}});

  SUBCASE("zero gradient with zero moments") {
    ParameterVector pv = ParameterVector::zeros(layout);
    pv.values = {0.75f};
    AdamState st = AdamState::zeros(1);
    adam_step(st, pv, Gradient::zeros(layout), 0.01f);
    CHECK(pv.values[0] == 0.75f);
  }

  SUBCASE("first step moves by lr*sign(g)") {
    for (float gv : {0.3f, -0.02f, 1.7f}) {
      ParameterVector pv = ParameterVector::zeros(layout);
      pv.values = {1.0f};
      AdamState st = AdamState::zeros(1);
      Gradient g = Gradient::zeros(layout);
      g.values = {gv};
      adam_step(st, pv, g, 0.01f);
      const float expect = 1.0f - 0.01f * (gv > 0 ? 1.0f : -1.0f);
      CHECK(pv.values[0] == doctest::Approx(expect).epsilon(1e-6));
    }
  }

  SUBCASE("five steps match the scalar recurrence") {
    // frozen from the bias-corrected recurrence evaluated in double
    const double expected[5] = {0.9900000003333334, 0.9885547950928597,
                                0.9827187795593836, 0.9818745104805003,
                                0.9804311408186847};
    const float grads[5] = {0.3f, -0.2f, 0.5f, -0.4f, 0.1f};
    ParameterVector pv = ParameterVector::zeros(layout);
    pv.values = {1.0f};
    AdamState st = AdamState::zeros(1);
    for (int t = 0; t < 5; ++t) {
      Gradient g = Gradient::zeros(layout);
      g.values = {grads[t]};
      adam_step(st, pv, g, 0.01f);
      CHECK(pv.values[0] == doctest::Approx(expected[t]).epsilon(1e-7));
    }
  }
}

TEST_CASE("generator: conditioning, zero weights, determinism") {
  GeneratorSpec spec;
  spec.in_h = 8;
  spec.in_w = 8;
  spec.in_c = 1;
  spec.classes = 4;
  std::mt19937_64 rng = make_stream(99, Stream::kInitGenerator);
  GeneratorState gen = init_generator(spec, rng);
  std::mt19937_64 xrng(5);
  Tensor x = oracle::random_tensor({2, 8, 8, 1}, xrng, 0.0f, 1.0f);

  SUBCASE("different targets produce different noise") {
    Tensor d0 = generator_forward(gen, x, {0, 0});
    Tensor d1 = generator_forward(gen, x, {1, 1});
    CHECK(d0.shape == x.shape);
    CHECK(d0.data != d1.data);
  }

  SUBCASE("zero weights produce zero noise") {
    GeneratorState zero = gen;
    std::fill(zero.params.values.begin(), zero.params.values.end(), 0.0f);
    Tensor d = generator_forward(zero, x, {2, 3});
    for (float v : d.data) CHECK(v == 0.0f);
  }

  SUBCASE("same seed and input give byte-identical noise") {
    std::mt19937_64 rng2 = make_stream(99, Stream::kInitGenerator);
    GeneratorState gen2 = init_generator(spec, rng2);
    Tensor a = generator_forward(gen, x, {1, 3});
    Tensor b = generator_forward(gen2, x, {1, 3});
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
  }

  SUBCASE("target out of range is rejected") {
    CHECK_THROWS_AS(generator_forward(gen, x, {0, 4}), InputError);
  }

  SUBCASE("noise lives in (-1,1) so trigger output stays in [0,1]") {
    Tensor d = generator_forward(gen, x, {1, 2});
    for (float v : d.data) {
      CHECK(v > -1.0f);
      CHECK(v < 1.0f);
    }
    Tensor poisoned = apply_trigger(x, d);
    for (float v : poisoned.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("classifier spec validation catches bad chains") {
  ClassifierSpec bad;
  bad.in_h = 8;
  bad.in_w = 8;
  bad.in_c = 1;
  bad.classes = 4;
  bad.layers = {DenseLayer{3}};  // output dim != classes
  CHECK_THROWS_AS(bad.make_layout(), ConfigError);

  ClassifierSpec odd = ClassifierSpec::small_cnn(7, 7, 1, 4);
  CHECK_THROWS_AS(odd.make_layout(), ConfigError);  // 7 is not pool-able
}
