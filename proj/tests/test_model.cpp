#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "pointmt/model.hpp"

using namespace pointmt;

namespace {

Tensor<double> random_cloud(std::mt19937_64& rng, std::size_t n) {
  return normalize_cloud(PointCloud<double>{oracle::uniform({n, 3}, rng), std::nullopt, std::nullopt})
      .coords;
}

HeadParams<double> random_head(std::mt19937_64& rng, std::size_t c, std::size_t hidden,
                               std::size_t classes) {
  return {LinearLayer<double>::random(c, hidden, true, rng),
          LinearLayer<double>::random(hidden, classes, true, rng), PoolMode::max};
}

std::vector<double> classify_oracle(const std::vector<double>& f, const HeadParams<double>& head) {
  auto h = oracle::affine(f, head.hidden);
  for (auto& v : h) v = std::max(v, 0.0);
  return oracle::affine(h, head.output);
}

std::vector<double> max_rows(const Tensor<double>& x) {
  std::vector<double> out(x.cols(), -INFINITY);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] = std::max(out[j], x(i, j));
  }
  return out;
}

}  // namespace

TEST(ModelConfigTest, ReferenceStageCounts) {
  const auto config = ModelConfig::reference();
  EXPECT_EQ(config.stage_sizes(1024), (std::vector<std::size_t>{1024, 512, 256}));
  EXPECT_EQ(config.stage_sizes(16), (std::vector<std::size_t>{16, 8, 4}));
  EXPECT_EQ(config.channels.back(), 256u);
  EXPECT_EQ(config.neighborhood_sizes, (std::vector<std::size_t>{8, 12, 16}));
}

TEST(ModelConfigTest, FloorRounding) {
  EXPECT_EQ(ModelConfig::reference().stage_sizes(1023),
            (std::vector<std::size_t>{1023, 511, 255}));
  ModelConfig c = ModelConfig::toy();
  c.ratios = {1, 4, 8};
  EXPECT_EQ(c.stage_sizes(5), (std::vector<std::size_t>{5, 1, 1}));
}

TEST(ModelConfigTest, ValidationErrors) {
  ModelConfig c = ModelConfig::reference();
  EXPECT_THROW(c.validate_for(16), ConfigError);  // k = 12 > 8 surviving points
  c.channels = {64, 128};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::toy();
  c.ratios[1] = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_branch_mode("both"), ConfigError);
  EXPECT_EQ(parse_head("traditional"), HeadKind::traditional);
}

TEST(MtBlock, OutputShape) {
  std::mt19937_64 rng(1);
  const auto coords = random_cloud(rng, 12);
  const auto nbr = knn(coords, coords, 4);
  for (auto mode : {BranchMode::hybrid, BranchMode::mlp_only, BranchMode::attn_only}) {
    const auto p = MtBlockParams<double>::random(5, 7, mode, rng);
    EXPECT_EQ(mt_block_forward(oracle::uniform({12, 5}, rng), nbr, p).shape(), (Shape{12, 7}));
  }
  const auto p = MtBlockParams<double>::random(5, 7, BranchMode::hybrid, rng);
  EXPECT_THROW(mt_block_forward(oracle::uniform({12, 6}, rng), nbr, p), ShapeError);
}

TEST(MtBlock, MlpOnlyMatchesReferencePath) {
  std::mt19937_64 rng(2);
  const std::size_t n = 10, c = 4, k = 3;
  const auto coords = random_cloud(rng, n);
  const auto nbr = knn(coords, coords, k);
  const auto x = oracle::uniform({n, c}, rng);
  auto p = MtBlockParams<double>::random(c, c, BranchMode::mlp_only, rng);
  p.norm_gain = oracle::uniform({c}, rng, 0.5, 1.5);
  p.norm_shift = oracle::uniform({c}, rng);

  // Reference: FC1, shared two-layer map on relative features, max over the
  // neighbors, FC2, layer norm, residual.
  Tensor<double> ref({n, c});
  const auto h = oracle::matmul(x, p.fc1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> pooled(c, -INFINITY);
    for (std::size_t a = 0; a < k; ++a) {
      auto u = oracle::affine(oracle::difference(oracle::row_of(h, nbr(i, a)), oracle::row_of(h, i)), p.mlp1);
      for (auto& v : u) v = std::max(v, 0.0);
      u = oracle::affine(u, p.mlp2);
      for (std::size_t j = 0; j < c; ++j) pooled[j] = std::max(pooled[j], std::max(u[j], 0.0));
    }
    const auto y = oracle::affine(pooled, p.fc2);
    double mean = 0, var = 0;
    for (double v : y) mean += v / c;
    for (double v : y) var += (v - mean) * (v - mean) / c;
    for (std::size_t j = 0; j < c; ++j) {
      ref(i, j) = (y[j] - mean) / std::sqrt(var + 1e-5) * p.norm_gain[j] + p.norm_shift[j] + x(i, j);
    }
  }
  EXPECT_LT(max_abs_diff(mt_block_forward(x, nbr, p), ref), 1e-12);

  // A hybrid block whose attention half of FC2 is zeroed is the same path.
  auto hybrid = MtBlockParams<double>::random(c, c, BranchMode::hybrid, rng);
  hybrid.fc1 = p.fc1;
  hybrid.mlp1 = p.mlp1;
  hybrid.mlp2 = p.mlp2;
  hybrid.norm_gain = p.norm_gain;
  hybrid.norm_shift = p.norm_shift;
  hybrid.fc2.weight = Tensor<double>({2 * c, c});
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t j = 0; j < c; ++j) hybrid.fc2.weight(r, j) = p.fc2.weight(r, j);
  }
  hybrid.fc2.bias = p.fc2.bias;
  EXPECT_LT(max_abs_diff(mt_block_forward(x, nbr, hybrid), ref), 1e-12);
}

TEST(MtBlock, PermutationEquivariant) {
  std::mt19937_64 rng(3);
  const std::size_t n = 14;
  const auto coords = random_cloud(rng, n);
  const auto x = oracle::uniform({n, 6}, rng);
  const auto perm = oracle::random_permutation(n, rng);
  const auto p = MtBlockParams<double>::random(6, 6, BranchMode::hybrid, rng);
  const auto y = mt_block_forward(x, knn(coords, coords, 5), p);
  const auto pc = oracle::permute_rows(coords, perm);
  const auto yp = mt_block_forward(oracle::permute_rows(x, perm), knn(pc, pc, 5), p);
  EXPECT_LT(max_abs_diff(yp, oracle::permute_rows(y, perm)), 1e-12);
}

TEST(SpfHead, SinglePointAllLogitsAgree) {
  std::mt19937_64 rng(4);
  const auto head = random_head(rng, 6, 3, 4);
  const auto out = spf_head_forward(oracle::uniform({1, 6}, rng), head);
  EXPECT_EQ(out.point_logits, out.shape_logit);
  EXPECT_EQ(out.combined, out.shape_logit);
}

TEST(SpfHead, IdenticalFeatures) {
  std::mt19937_64 rng(5);
  const auto head = random_head(rng, 6, 3, 4);
  Tensor<double> f({5, 6});
  const auto row = oracle::uniform({6}, rng);
  for (std::size_t i = 0; i < 5; ++i) std::copy(row.data().begin(), row.data().end(), f.row(i).begin());
  const auto out = spf_head_forward(f, head);
  const auto point_logit = pool(out.point_logits, 0, PoolMode::mean).values;
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(point_logit[j], out.shape_logit[j], 1e-14);
}

TEST(SpfHead, CompositionalOracle) {
  std::mt19937_64 rng(6);
  const auto head = random_head(rng, 8, 4, 5);
  const auto f = oracle::uniform({7, 8}, rng);
  const auto out = spf_head_forward(f, head);
  const auto shape_ref = classify_oracle(max_rows(f), head);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(out.shape_logit[j], shape_ref[j], 1e-12);
    double mean = 0;
    for (std::size_t i = 0; i < 7; ++i) mean += out.point_logits(i, j) / 7;
    EXPECT_NEAR(out.combined[j], 0.5 * (mean + out.shape_logit[j]), 1e-14);
  }
  for (std::size_t i = 0; i < 7; ++i) {
    const auto ref = classify_oracle(oracle::row_of(f, i), head);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(out.point_logits(i, j), ref[j], 1e-12);
  }
}

TEST(TraditionalHead, EqualsShapeLogitExactly) {
  std::mt19937_64 rng(7);
  const auto head = random_head(rng, 8, 4, 5);
  for (std::size_t n : {1, 3, 9}) {
    const auto f = oracle::uniform({n, 8}, rng);
    EXPECT_EQ(traditional_head_forward(f, head), spf_head_forward(f, head).shape_logit);
    const auto ref = classify_oracle(max_rows(f), head);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(traditional_head_forward(f, head)[j], ref[j], 1e-12);
  }
  const auto single = oracle::uniform({1, 8}, rng);
  const auto ref = classify_oracle(oracle::row_of(single, 0), head);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(traditional_head_forward(single, head)[j], ref[j], 1e-12);
}

TEST(ParamCount, Examples) {
  ParameterStore<double> store;
  std::mt19937_64 rng(8);
  LinearHandle::create(store, "l", 3, 64, true, rng);
  EXPECT_EQ(store.scalar_count(), 256u);
  EXPECT_EQ(ParameterStore<double>{}.scalar_count(), 0u);
}

TEST(ParamCount, BreakdownMatchesConstructedModel) {
  for (auto mode : {BranchMode::hybrid, BranchMode::mlp_only, BranchMode::attn_only}) {
    for (auto config : {ModelConfig::toy(), ModelConfig::desk(8), ModelConfig::reference()}) {
      config.branch_mode = mode;
      Classifier<float> model(config, 1);
      EXPECT_EQ(param_count(config), model.parameters().scalar_count());
      config.bias = false;
      EXPECT_EQ(param_count(config), Classifier<float>(config, 1).parameters().scalar_count());
    }
  }
  const auto groups = param_breakdown(ModelConfig::reference());
  ASSERT_EQ(groups.size(), 5u);
  EXPECT_EQ(groups.front().module, "stem");
  EXPECT_EQ(groups.front().count, 3u * 64 + 64 + 2 * 64);
}

TEST(ClassifierTest, InferenceShapesAndStageCounts) {
  std::mt19937_64 rng(9);
  ModelConfig config = ModelConfig::toy();
  Classifier<double> model(config, 3);
  const auto out = model.infer(random_cloud(rng, 16));
  EXPECT_EQ(out.stage_counts, (std::vector<std::size_t>{16, 8, 4}));
  EXPECT_EQ(out.features.shape(), (Shape{4, 8}));
  EXPECT_EQ(out.spf.point_logits.shape(), (Shape{4, 2}));
  EXPECT_EQ(out.prediction, out.spf.combined);
  EXPECT_TRUE(out.prediction.all_finite());
  EXPECT_THROW(model.infer(random_cloud(rng, 10)), ConfigError);  // stage 2 keeps 2 < k = 3
}

TEST(ClassifierTest, HeadsShareShapeLogit) {
  std::mt19937_64 rng(10);
  ModelConfig config = ModelConfig::toy();
  Classifier<double> spf(config, 5);
  config.head = HeadKind::traditional;
  Classifier<double> trad(config, 5);
  const auto cloud = random_cloud(rng, 16);
  const auto a = spf.infer(cloud), b = trad.infer(cloud);
  EXPECT_EQ(b.prediction, a.spf.shape_logit);
  EXPECT_EQ(b.spf.shape_logit, a.spf.shape_logit);
}

TEST(ClassifierTest, HeadParamsReproduceInference) {
  std::mt19937_64 rng(11);
  Classifier<double> model(ModelConfig::toy(), 7);
  const auto out = model.infer(random_cloud(rng, 16));
  const auto ref = spf_head_forward(out.features, model.head_params());
  EXPECT_EQ(ref.combined, out.spf.combined);
  EXPECT_EQ(ref.point_logits, out.spf.point_logits);
}

TEST(ClassifierTest, PermutationInvariant) {
  std::mt19937_64 rng(12);
  Classifier<double> model(ModelConfig::desk(8), 2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto cloud = random_cloud(rng, 64);
    const auto perm = oracle::random_permutation(64, rng);
    const auto a = model.infer(cloud).spf.combined;
    const auto b = model.infer(oracle::permute_rows(cloud, perm)).spf.combined;
    EXPECT_LT(max_abs_diff(a, b), 1e-5);
  }
}

TEST(ClassifierTest, AttentionTracesCoverStage) {
  std::mt19937_64 rng(13);
  Classifier<double> model(ModelConfig::toy(), 7);
  const auto traces = model.attention_traces(random_cloud(rng, 16), 1, 0);
  ASSERT_EQ(traces.size(), 8u);
  EXPECT_EQ(traces[0].w.shape(), (Shape{4, 6}));
  EXPECT_THROW(model.attention_traces(random_cloud(rng, 16), 3, 0), ArgumentError);
}
