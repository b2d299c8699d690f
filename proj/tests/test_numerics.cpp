#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "pointmt/checkpoint.hpp"
#include "pointmt/gradcheck.hpp"
#include "pointmt/graph.hpp"
#include "pointmt/layers.hpp"
#include "pointmt/verification.hpp"

using namespace pointmt;

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor<double> t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t(1, 2), 6);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(LinearForward, IdentityCase) {
  LinearLayer<double> layer{Tensor<double>::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}), std::nullopt};
  const auto y = linear_forward(Tensor<double>({3}, std::vector<double>{1, 0, 0}), layer);
  EXPECT_EQ(y, Tensor<double>({3}, std::vector<double>{1, 0, 0}));
}

TEST(LinearForward, ScalarAffine) {
  LinearLayer<double> layer{Tensor<double>::matrix(1, 1, {3}), Tensor<double>({1}, std::vector<double>{1})};
  const auto y = linear_forward(Tensor<double>({1}, std::vector<double>{2}), layer);
  EXPECT_EQ(y[0], 7);
}

TEST(LinearForward, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  const auto x = oracle::uniform({4, 3}, rng);
  const auto layer = LinearLayer<double>::random(3, 2, true, rng);
  EXPECT_LT(max_abs_diff(linear_forward(x, layer), oracle::matmul(x, layer)), 1e-6);
  const auto no_bias = LinearLayer<double>{layer.weight, std::nullopt};
  EXPECT_LT(max_abs_diff(linear_forward(x, no_bias), oracle::matmul(x, no_bias)), 1e-6);
}

TEST(LinearForward, HigherRankBroadcastsOverLeadingAxes) {
  std::mt19937_64 rng(2);
  const auto x = oracle::uniform({2, 3, 4}, rng);
  const auto layer = LinearLayer<double>::random(4, 5, true, rng);
  const auto y = linear_forward(x, layer);
  EXPECT_EQ(y.shape(), (Shape{2, 3, 5}));
  EXPECT_LT(max_abs_diff(y.reshaped({6, 5}), oracle::matmul(x.reshaped({6, 4}), layer)), 1e-12);
}

TEST(LinearForward, ExtentMismatchIsShapeError) {
  std::mt19937_64 rng(3);
  const auto layer = LinearLayer<double>::random(3, 2, true, rng);
  EXPECT_THROW(linear_forward(Tensor<double>({2, 4}), layer), ShapeError);
}

TEST(Gemm, RowResultIndependentOfBatch) {
  std::mt19937_64 rng(4);
  const auto x = oracle::uniform({7, 5}, rng).cast<float>();
  const auto layer = LinearLayer<double>::random(5, 6, true, rng);
  LinearLayer<float> lf{layer.weight.cast<float>(), layer.bias->cast<float>()};
  const auto all = linear_forward(x, lf);
  for (std::size_t r = 0; r < 7; ++r) {
    Tensor<float> one({1, 5});
    std::copy(x.row(r).begin(), x.row(r).end(), one.data().begin());
    const auto y = linear_forward(one, lf);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(y[j], all(r, j));
  }
}

TEST(Softmax, UniformScores) {
  const auto p = softmax(Tensor<double>({3}, std::vector<double>{0, 0, 0}), 0);
  for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, AnalyticTwoClass) {
  const auto p = softmax(Tensor<double>({2}, std::vector<double>{std::log(2.0), 0}), 0);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, TemperatureMatchesDirectEvaluation) {
  const auto p = softmax(Tensor<double>({3}, std::vector<double>{1, 2, 3}), 0, 2.0);
  const auto ref = oracle::direct_softmax({1, 2, 3}, 2.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], ref[i], 1e-15);
}

TEST(Softmax, NonPositiveTemperatureIsDomainError) {
  const Tensor<double> s({3}, std::vector<double>{1, 2, 3});
  EXPECT_THROW(softmax(s, 0, 0.0), DomainError);
  EXPECT_THROW(softmax(s, 0, -1.0), DomainError);
  EXPECT_THROW(softmax(Tensor<double>({2, 2}), 0, Tensor<double>({1, 2}, std::vector<double>{1, 0})),
               DomainError);
}

TEST(Softmax, PerChannelTemperatureBroadcast) {
  std::mt19937_64 rng(5);
  const auto s = oracle::uniform({4, 3}, rng, -3, 3);
  const Tensor<double> t({1, 3}, std::vector<double>{0.5, 1.0, 4.0});
  const auto p = softmax(s, 0, t);
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<double> col;
    for (std::size_t a = 0; a < 4; ++a) col.push_back(s(a, j));
    const auto ref = oracle::direct_softmax(col, t[j]);
    for (std::size_t a = 0; a < 4; ++a) EXPECT_NEAR(p(a, j), ref[a], 1e-14);
  }
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = oracle::uniform({3, 7}, rng, -20, 20);
    const auto p = softmax(s, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0;
      for (double v : p.row(r)) total += v;
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
    for (auto& v : s.data()) v += 123.25;
    EXPECT_LT(max_abs_diff(softmax(s, 1), p), 1e-12);
  }
}

TEST(Pool, MaxAndMean) {
  EXPECT_EQ(pool(Tensor<double>({3}, std::vector<double>{1, 5, 3}), 0, PoolMode::max).values[0], 5);
  EXPECT_EQ(pool(Tensor<double>({2}, std::vector<double>{2, 4}), 0, PoolMode::mean).values[0], 3);
  const auto r = pool(Tensor<double>({3}, std::vector<double>{1, 5, 3}), 0, PoolMode::max);
  EXPECT_EQ(r.argmax.at(0), 1u);
}

TEST(Pool, EmptyAxisIsDomainError) {
  EXPECT_THROW(pool(Tensor<double>({0, 3}), 0, PoolMode::max), DomainError);
}

TEST(Pool, PermutationInvariant) {
  std::mt19937_64 rng(7);
  const auto x = oracle::uniform({9, 4}, rng);
  const auto perm = oracle::random_permutation(9, rng);
  for (PoolMode mode : {PoolMode::max, PoolMode::mean}) {
    EXPECT_LT(max_abs_diff(pool(x, 0, mode).values, pool(oracle::permute_rows(x, perm), 0, mode).values),
              1e-15);
  }
}

TEST(Pool, MaxBackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const auto x = oracle::uniform({5, 3}, rng);
  const auto upstream = oracle::uniform({3}, rng);
  const auto fwd = pool(x, 0, PoolMode::max);
  const auto grad = pool_backward(fwd, upstream, x.shape(), 0, PoolMode::max);
  auto objective = [&](const Tensor<double>& in) {
    const auto v = pool(in, 0, PoolMode::max).values;
    double acc = 0;
    for (std::size_t j = 0; j < 3; ++j) acc += v[j] * upstream[j];
    return acc;
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto plus = x, minus = x;
    plus[i] += 1e-5;
    minus[i] -= 1e-5;
    const double numeric = (objective(plus) - objective(minus)) / 2e-5;
    EXPECT_NEAR(grad[i], numeric, 1e-8);
  }
  // Only the argmax slot of each column receives gradient.
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t r = 0; r < 5; ++r) {
      if (r != fwd.argmax[j]) EXPECT_EQ(grad(r, j), 0.0);
    }
  }
  const auto mean_grad = pool_backward(pool(x, 0, PoolMode::mean), upstream, x.shape(), 0, PoolMode::mean);
  EXPECT_NEAR(mean_grad(2, 1), upstream[1] / 5.0, 1e-15);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  const Tensor<double> x({1, 4}, std::vector<double>{3, 3, 3, 3});
  const auto y = layer_normalize(x, Tensor<double>({4}, 1.0), Tensor<double>({4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, AlreadyNormalizedRow) {
  const auto y = layer_normalize(Tensor<double>({1, 2}, std::vector<double>{-1, 1}),
                                 Tensor<double>({2}, 1.0), Tensor<double>({2}));
  EXPECT_NEAR(y[0], -1.0, 1e-5);
  EXPECT_NEAR(y[1], 1.0, 1e-5);
}

TEST(LayerNorm, RandomRowStatistics) {
  std::mt19937_64 rng(9);
  const auto x = oracle::uniform({6, 16}, rng, -5, 5);
  const auto y = layer_normalize(x, Tensor<double>({16}, 1.0), Tensor<double>({16}));
  for (std::size_t r = 0; r < 6; ++r) {
    double mean = 0, var = 0;
    for (double v : y.row(r)) mean += v / 16;
    for (double v : y.row(r)) var += (v - mean) * (v - mean) / 16;
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
  const auto gain = oracle::uniform({16}, rng), shift = oracle::uniform({16}, rng);
  const auto z = layer_normalize(x, gain, shift);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(z(2, j), y(2, j) * gain[j] + shift[j], 1e-12);
}

TEST(ParameterStoreTest, UniqueNamesAndCounts) {
  ParameterStore<double> store;
  std::mt19937_64 rng(10);
  const auto h = LinearHandle::create(store, "stem", 3, 64, true, rng);
  EXPECT_EQ(store.scalar_count(), 256u);
  EXPECT_THROW(store.add("stem.weight", Tensor<double>({1})), std::invalid_argument);
  EXPECT_EQ(store.find("stem.bias"), h.bias);
  EXPECT_EQ(store[h.weight].gradient.shape(), store[h.weight].value.shape());
  ParameterStore<double> empty;
  EXPECT_EQ(empty.scalar_count(), 0u);
}

TEST(GraphTest, ForwardIsDeterministic) {
  std::mt19937_64 rng(11);
  ParameterStore<double> store;
  const auto layer = LinearHandle::create(store, "l", 4, 3, true, rng);
  const auto x = oracle::uniform({5, 4}, rng);
  auto run = [&] {
    Graph<double> g;
    Var y = ops::relu(g, ops::linear(g, g.input(x), layer, store));
    Var loss = ops::weighted_sum(g, y, Tensor<double>({5, 3}, 1.0));
    g.backward(loss);
    std::vector<Tensor<double>> grads(store.size());
    g.accumulate_parameter_grads(grads);
    return std::make_pair(g.value(y), grads);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(GraphTest, CrossEntropyValue) {
  Graph<double> g(false);
  Var ce = ops::softmax_cross_entropy(g, g.constant(Tensor<double>({1, 8})), 3);
  EXPECT_NEAR(g.value(ce)[0], std::log(8.0), 1e-15);
  Var sharp = ops::softmax_cross_entropy(
      g, g.constant(Tensor<double>({1, 2}, std::vector<double>{20, 0})), 0);
  EXPECT_LT(g.value(sharp)[0], 1e-8);
  EXPECT_THROW(ops::softmax_cross_entropy(g, g.constant(Tensor<double>({1, 2})), 2), ArgumentError);
}

TEST(GradCheck, SingleLinearLayer) {
  std::mt19937_64 rng(12);
  ParameterStore<double> store;
  const auto layer = LinearHandle::create(store, "l", 2, 4, true, rng);
  Fragment f = [&](Graph<double>& g, const ParameterStore<double>& p, const std::vector<Var>& in) {
    return ops::linear(g, in[0], layer, p);
  };
  const auto report = grad_check(f, store, {oracle::uniform({3, 2}, rng)}, 1e-6);
  EXPECT_TRUE(report.passed()) << report.worst << " " << report.max_relative_error;
  EXPECT_EQ(report.checked, 2u * 4 + 4 + 3 * 2);
}

TEST(GradCheck, DetectsWrongGradient) {
  // A fragment whose backward is deliberately scaled must be caught.
  Fragment f = [](Graph<double>& g, const ParameterStore<double>&, const std::vector<Var>& in) {
    Tensor<double> y = g.value(in[0]);
    for (auto& v : y.data()) v = v * v;
    return g.emit(y, {in[0]}, [x = in[0]](Graph<double>& gg, const Tensor<double>& up) {
      auto& dx = gg.grad_buffer(x);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += up[i] * 3.0 * gg.value(x)[i];
    });
  };
  ParameterStore<double> none;
  std::mt19937_64 rng(13);
  const auto report = grad_check(f, none, {oracle::uniform({2, 2}, rng)}, 1e-4);
  EXPECT_FALSE(report.passed());
}

TEST(GradCheck, NonFiniteIsVerificationFailure) {
  Fragment f = [](Graph<double>& g, const ParameterStore<double>&, const std::vector<Var>& in) {
    Tensor<double> y = g.value(in[0]);
    y[0] = std::numeric_limits<double>::quiet_NaN();
    return g.emit(y, {in[0]}, [](Graph<double>&, const Tensor<double>&) {});
  };
  ParameterStore<double> none;
  EXPECT_THROW(grad_check(f, none, {Tensor<double>({1, 2}, 1.0)}, 1e-4), VerificationError);
}

TEST(GradCheck, FullSuitePasses) {
  for (const auto& c : run_gradcheck_suite()) {
    EXPECT_TRUE(c.report.passed()) << c.name << ": " << c.report.max_relative_error << " at "
                                   << c.report.worst;
  }
}

TEST(Checkpoint, RoundTripIsBitExactInFloat) {
  std::mt19937_64 rng(14);
  ParameterStore<float> store;
  LinearHandle::create(store, "a", 3, 4, true, rng);
  store.add("gain", Tensor<float>({4}, 0.25f));
  const auto dir = std::filesystem::temp_directory_path() / "pmt_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(store, dir / "model.json", nlohmann::json{{"epoch", 3}});

  ParameterStore<float> other;
  std::mt19937_64 rng2(99);
  LinearHandle::create(other, "a", 3, 4, true, rng2);
  other.add("gain", Tensor<float>({4}));
  const auto meta = load_checkpoint(other, dir / "model.json");
  EXPECT_EQ(meta.at("epoch"), 3);
  for (std::size_t i = 0; i < store.size(); ++i) EXPECT_EQ(store[i].value, other[i].value);

  const auto manifest = read_checkpoint_manifest(dir / "model.json");
  EXPECT_EQ(manifest.at("version"), "pmt-ckpt-1");
  EXPECT_EQ(manifest.at("parameters")[1].at("offset"), 12 * 4);
  EXPECT_EQ(std::filesystem::file_size(dir / "model.bin"), (12u + 4 + 4) * 4);

  ParameterStore<float> mismatched;
  mismatched.add("a.weight", Tensor<float>({4, 3}));
  EXPECT_THROW(load_checkpoint(mismatched, dir / "model.json"), ParseError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, LittleEndianEncoding) {
  std::vector<std::uint8_t> bytes;
  append_f32_le(bytes, 1.0f);
  EXPECT_EQ(bytes, (std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3f}));
  EXPECT_EQ(read_f32_le(bytes, 0), 1.0f);
  EXPECT_THROW(read_u32_le(bytes, 1), ParseError);
}
