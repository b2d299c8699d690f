#include "pointmt/verification.hpp"

#include <random>

#include "pointmt/attention.hpp"
#include "pointmt/geometry.hpp"
#include "pointmt/model.hpp"

namespace pointmt {

namespace {

using Store = ParameterStore<double>;
using G = Graph<double>;

Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Var bias_of(G& g, const Store& s, const LinearHandle& h) {
  return h.bias ? g.parameter(s, *h.bias) : Var{};
}

struct AttentionHandles {
  LinearHandle q, k, v;

  static AttentionHandles create(Store& s, const std::string& name, std::size_t c,
                                 std::mt19937_64& rng) {
    return {LinearHandle::create(s, name + ".q", c, c, true, rng),
            LinearHandle::create(s, name + ".k", c, c, true, rng),
            LinearHandle::create(s, name + ".v", c, c, true, rng)};
  }
};

struct BlockHandles {
  LinearHandle fc1, mlp1, mlp2, fc2;
  AttentionHandles attn;
  ParamId gain = 0, shift = 0;
  BlockSpec spec;

  static BlockHandles create(Store& s, std::size_t in, std::size_t c, BranchMode mode,
                             std::mt19937_64& rng) {
    BlockHandles b;
    b.spec = BlockSpec{in, c, mode, AttentionOptions{}, in == c};
    b.fc1 = LinearHandle::create(s, "fc1", in, c, true, rng);
    std::size_t fused = 0;
    if (mode != BranchMode::attn_only) {
      b.mlp1 = LinearHandle::create(s, "mlp1", c, c, true, rng);
      b.mlp2 = LinearHandle::create(s, "mlp2", c, c, true, rng);
      fused += c;
    }
    if (mode != BranchMode::mlp_only) {
      b.attn = AttentionHandles::create(s, "attn", c, rng);
      fused += c;
    }
    b.fc2 = LinearHandle::create(s, "fc2", fused, c, true, rng);
    // Non-trivial gain/shift so their gradients are exercised.
    b.gain = s.add("norm.gain", uniform({c}, rng, 0.5, 1.5));
    b.shift = s.add("norm.shift", uniform({c}, rng, -0.5, 0.5));
    return b;
  }

  BlockVars bind(G& g, const Store& s) const {
    BlockVars v;
    v.fc1_w = g.parameter(s, fc1.weight);
    v.fc1_b = bias_of(g, s, fc1);
    if (spec.mode != BranchMode::attn_only) {
      v.mlp1_w = g.parameter(s, mlp1.weight);
      v.mlp1_b = bias_of(g, s, mlp1);
      v.mlp2_w = g.parameter(s, mlp2.weight);
      v.mlp2_b = bias_of(g, s, mlp2);
    }
    if (spec.mode != BranchMode::mlp_only) {
      v.q_w = g.parameter(s, attn.q.weight);
      v.q_b = bias_of(g, s, attn.q);
      v.k_w = g.parameter(s, attn.k.weight);
      v.k_b = bias_of(g, s, attn.k);
      v.v_w = g.parameter(s, attn.v.weight);
      v.v_b = bias_of(g, s, attn.v);
    }
    v.fc2_w = g.parameter(s, fc2.weight);
    v.fc2_b = bias_of(g, s, fc2);
    v.norm_gain = g.parameter(s, gain);
    v.norm_shift = g.parameter(s, shift);
    return v;
  }
};

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckCase> cases;
  auto run = [&](const std::string& name, Store& store, const Fragment& f,
                 const std::vector<Tensor<double>>& inputs, double tol) {
    cases.push_back({name, grad_check(f, store, inputs, tol, seed)});
  };
  auto run_free = [&](const std::string& name, const Fragment& f,
                      const std::vector<Tensor<double>>& inputs) {
    Store none;
    run(name, none, f, inputs, tolerance);
  };

  {
    Store s;
    const auto layer = LinearHandle::create(s, "linear", 2, 4, true, rng);
    run("linear", s,
        [&](G& g, const Store& p, const std::vector<Var>& in) {
          return ops::linear(g, in[0], layer, p);
        },
        {uniform({3, 2}, rng)}, std::min(tolerance, 1e-6));
  }
  run_free("relu", [](G& g, const Store&, const std::vector<Var>& in) { return ops::relu(g, in[0]); },
           {uniform({4, 5}, rng)});
  run_free("add", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::add(g, in[0], in[1]);
  }, {uniform({3, 4}, rng), uniform({3, 4}, rng)});
  run_free("average", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::average(g, in[0], in[1]);
  }, {uniform({1, 4}, rng), uniform({1, 4}, rng)});
  run_free("concat_cols", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::concat_cols(g, in[0], in[1]);
  }, {uniform({3, 2}, rng), uniform({3, 4}, rng)});
  run_free("concat_rows", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::concat_rows(g, in[0], in[1]);
  }, {uniform({3, 4}, rng), uniform({1, 4}, rng)});
  run_free("slice_rows", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::slice_rows(g, in[0], 1, 3);
  }, {uniform({4, 3}, rng)});
  run_free("gather_rows", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::gather_rows(g, in[0], {2, 0, 2, 3});
  }, {uniform({4, 3}, rng)});
  {
    Store s;
    const ParamId gain = s.add("gain", uniform({6}, rng, 0.5, 1.5));
    const ParamId shift = s.add("shift", uniform({6}, rng));
    run("layer_norm", s,
        [&](G& g, const Store& p, const std::vector<Var>& in) {
          return ops::layer_norm(g, in[0], g.parameter(p, gain), g.parameter(p, shift));
        },
        {uniform({4, 6}, rng)}, tolerance);
  }
  const NeighborhoodIndex nbr6 = [&] {
    const Tensor<double> coords = uniform({6, 3}, rng);
    return knn(coords, coords, 3);
  }();
  {
    Store s;
    const ParamId bias = s.add("bias", uniform({4}, rng));
    run("relative_rows", s,
        [&](G& g, const Store& p, const std::vector<Var>& in) {
          return ops::relative_rows(g, in[0], nbr6, g.parameter(p, bias));
        },
        {uniform({6, 4}, rng)}, tolerance);
  }
  run_free("group_max", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::group_max(g, in[0], 3);
  }, {uniform({12, 4}, rng)});
  run_free("reduce_rows.max", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::reduce_rows(g, in[0], PoolMode::max);
  }, {uniform({5, 4}, rng)});
  run_free("reduce_rows.mean", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::reduce_rows(g, in[0], PoolMode::mean);
  }, {uniform({5, 4}, rng)});
  {
    Store none;
    run("softmax_columns", none,
        [](G& g, const Store&, const std::vector<Var>& in) {
          return ops::softmax_columns(g, in[0], in[1]);
        },
        {uniform({5, 4}, rng, -2.0, 2.0), uniform({1, 4}, rng, 0.5, 2.0)},
        std::min(tolerance, 1e-5));
  }
  run_free("softmax_cross_entropy", [](G& g, const Store&, const std::vector<Var>& in) {
    return ops::softmax_cross_entropy(g, in[0], 2);
  }, {uniform({1, 5}, rng, -2.0, 2.0)});

  const Tensor<double> cloud8 = uniform({8, 3}, rng);
  const NeighborhoodIndex nbr8 = knn(cloud8, cloud8, 4);
  for (bool ta : {false, true}) {
    Store s;
    const auto attn = AttentionHandles::create(s, "attn", 4, rng);
    AttentionOptions options;
    options.ta_enabled = ta;
    run(ta ? "ta_attention" : "linear_attention", s,
        [&](G& g, const Store& p, const std::vector<Var>& in) {
          Var q = ops::linear(g, in[0], attn.q, p);
          Var pk = ops::linear(g, in[0], g.parameter(p, attn.k.weight), Var{});
          Var pv = ops::linear(g, in[0], g.parameter(p, attn.v.weight), Var{});
          return ops::local_attention(g, q, pk, pv, bias_of(g, p, attn.k), bias_of(g, p, attn.v),
                                      nbr8, options);
        },
        {uniform({8, 4}, rng)}, tolerance);
  }

  struct BlockCase {
    const char* name;
    std::size_t in;
    BranchMode mode;
  };
  for (const BlockCase bc : {BlockCase{"mt_block.hybrid", 4, BranchMode::hybrid},
                             BlockCase{"mt_block.hybrid.widen", 3, BranchMode::hybrid},
                             BlockCase{"mt_block.mlp_only", 4, BranchMode::mlp_only},
                             BlockCase{"mt_block.attn_only", 4, BranchMode::attn_only}}) {
    Store s;
    const BlockHandles block = BlockHandles::create(s, bc.in, 4, bc.mode, rng);
    run(bc.name, s,
        [&](G& g, const Store& p, const std::vector<Var>& in) {
          return mt_block(g, in[0], nbr8, block.spec, block.bind(g, p));
        },
        {uniform({8, bc.in}, rng)}, tolerance);
  }

  for (HeadKind head : {HeadKind::spf, HeadKind::traditional}) {
    ModelConfig config = ModelConfig::toy();
    config.head = head;
    Classifier<double> model(config, seed);
    const Tensor<double> coords =
        normalize_cloud(PointCloud<double>{uniform({16, 3}, rng), std::nullopt, std::nullopt}).coords;
    const Pyramid<double> pyramid = model.prepare(coords);
    run("classifier." + to_string(head), model.parameters(),
        [&](G& g, const Store&, const std::vector<Var>& in) {
          return ops::softmax_cross_entropy(g, model.forward(g, in[0], pyramid).prediction, 1);
        },
        {coords}, tolerance);
  }
  return cases;
}

}  // namespace pointmt
