#include "pointmt/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace pointmt {

template <typename T>
AttentionParams<T> AttentionParams<T>::random(std::size_t channels, bool ta_enabled,
                                              std::mt19937_64& rng) {
  AttentionParams<T> p;
  p.linear_q = LinearLayer<T>::random(channels, channels, true, rng);
  p.linear_k = LinearLayer<T>::random(channels, channels, true, rng);
  p.linear_v = LinearLayer<T>::random(channels, channels, true, rng);
  p.options.ta_enabled = ta_enabled;
  return p;
}

namespace {

template <typename T>
void softmax_inplace(T* v, std::size_t len) {
  T peak = v[0];
  for (std::size_t a = 1; a < len; ++a) peak = std::max(peak, v[a]);
  T total = 0;
  for (std::size_t a = 0; a < len; ++a) {
    v[a] = std::exp(v[a] - peak);
    total += v[a];
  }
  for (std::size_t a = 0; a < len; ++a) v[a] /= total;
}

void check_neighborhood(const NeighborhoodIndex& nbr, std::size_t n, const char* what) {
  if (nbr.queries != n) {
    throw ShapeError(std::string(what) + ": neighborhood has " + std::to_string(nbr.queries) +
                     " rows for " + std::to_string(n) + " points");
  }
  if (nbr.k == 0) throw ShapeError(std::string(what) + ": empty neighborhood");
  for (std::size_t idx : nbr.indices) {
    if (idx >= n) throw InvariantError(std::string(what) + ": neighbor index out of range");
  }
}

template <typename T>
void check_params(const AttentionParams<T>& p, std::size_t c, const char* what) {
  for (const LinearLayer<T>* layer : {&p.linear_q, &p.linear_k, &p.linear_v}) {
    if (layer->in_features() != c || layer->out_features() != c) {
      throw ShapeError(std::string(what) + ": projection " + shape_string(layer->weight.shape()) +
                       " does not match channel width " + std::to_string(c));
    }
  }
  if (!(p.options.epsilon > 0)) throw DomainError(std::string(what) + ": epsilon must be > 0");
}

template <typename T>
std::size_t self_position(const NeighborhoodIndex& nbr, std::size_t i) {
  for (std::size_t j = 0; j < nbr.k; ++j) {
    if (nbr(i, j) == i) return j;
  }
  return 0;
}

template <typename T>
AttentionResult<T> run_attention(const Tensor<T>& features, const NeighborhoodIndex& nbr,
                                 const AttentionParams<T>& params, bool with_traces,
                                 const char* what) {
  require_rank(features.shape(), 2, what);
  const std::size_t c = features.cols();
  check_params(params, c, what);
  Graph<T> g(false);
  Var x = g.constant(features);
  auto bind = [&](const LinearLayer<T>& layer, bool with_bias) {
    Var w = g.constant(layer.weight);
    Var b = with_bias && layer.bias ? g.constant(*layer.bias) : Var{};
    return ops::linear(g, x, w, b);
  };
  Var q = bind(params.linear_q, true);
  Var pk = bind(params.linear_k, false);
  Var pv = bind(params.linear_v, false);
  Var bk = params.linear_k.bias ? g.constant(*params.linear_k.bias) : Var{};
  Var bv = params.linear_v.bias ? g.constant(*params.linear_v.bias) : Var{};
  AttentionResult<T> result;
  Var z = ops::local_attention(g, q, pk, pv, bk, bv, nbr, params.options,
                               with_traces ? &result.traces : nullptr);
  result.z = g.value(z);
  return result;
}

}  // namespace

template <typename T>
AttentionResult<T> linear_local_attention(const Tensor<T>& features, const NeighborhoodIndex& nbr,
                                          const AttentionParams<T>& params, bool with_traces) {
  if (params.options.ta_enabled) {
    throw ArgumentError("linear_local_attention: parameters have temperature adaptation enabled");
  }
  return run_attention(features, nbr, params, with_traces, "linear_local_attention");
}

template <typename T>
AttentionResult<T> ta_attention(const Tensor<T>& features, const NeighborhoodIndex& nbr,
                                const AttentionParams<T>& params, bool with_traces) {
  if (!params.options.ta_enabled) {
    throw ArgumentError("ta_attention: parameters have temperature adaptation disabled");
  }
  return run_attention(features, nbr, params, with_traces, "ta_attention");
}

template <typename T>
Tensor<T> channel_second_moment(const Tensor<T>& w_token, const Tensor<T>& v_mat) {
  require_rank(v_mat.shape(), 2, "channel_second_moment");
  const std::size_t k = v_mat.rows(), c = v_mat.cols();
  if (w_token.size() != k) throw ShapeError("channel_second_moment: weight length mismatch");
  Tensor<T> out({c});
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t j = 0; j < c; ++j) out[j] += w_token[a] * v_mat(a, j) * v_mat(a, j);
  }
  return out;
}

template <typename T>
Tensor<T> temperature(const Tensor<T>& v2_bar, std::size_t k, double epsilon) {
  if (k == 0) throw ArgumentError("temperature: k must be >= 1");
  if (!(epsilon > 0)) throw DomainError("temperature: epsilon must be > 0");
  const T sqrt_k = std::sqrt(static_cast<T>(k));
  Tensor<T> t(v2_bar.shape());
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (v2_bar[j] < T(0)) throw DomainError("temperature: negative second moment");
    t[j] = T(1) / std::max(v2_bar[j] / sqrt_k, static_cast<T>(epsilon));
  }
  return t;
}

template <typename T>
ChannelStats<T> moment_decomposition(const Tensor<T>& w_token, const Tensor<T>& v_mat) {
  require_rank(v_mat.shape(), 2, "moment_decomposition");
  const std::size_t k = v_mat.rows(), c = v_mat.cols();
  if (w_token.size() != k) throw ShapeError("moment_decomposition: weight length mismatch");
  ChannelStats<T> stats{Tensor<T>({c}), Tensor<T>({c}), channel_second_moment(w_token, v_mat)};
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t j = 0; j < c; ++j) stats.weighted_mean[j] += w_token[a] * v_mat(a, j);
  }
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t j = 0; j < c; ++j) {
      const T d = v_mat(a, j) - stats.weighted_mean[j];
      stats.diversity[j] += w_token[a] * d * d;
    }
  }
  return stats;
}

FlopBreakdown flop_count(AttentionMode mode, std::size_t n, std::size_t k, std::size_t c) {
  if (n == 0 || k == 0 || c == 0) throw ArgumentError("flop_count: sizes must be >= 1");
  const std::uint64_t N = n, K = k, C = c;
  const std::uint64_t queries = mode == AttentionMode::linear ? 1 : K;
  FlopBreakdown f;
  f.projection = 3 * N * C * C + N * C;
  f.gather = N * 4 * K * C;
  f.score = N * queries * K * (C + 1);
  f.softmax = N * queries * K * 4;
  f.aggregation = N * queries * K * C;
  return f;
}

template <typename T>
ProjectedFeatures<T> project(const Tensor<T>& features, const AttentionParams<T>& params,
                             FlopBreakdown* counter) {
  require_rank(features.shape(), 2, "project");
  const std::size_t n = features.rows(), c = features.cols();
  check_params(params, c, "project");
  ProjectedFeatures<T> out;
  out.q = linear_forward(features, params.linear_q);
  out.pk = linear_forward(features, LinearLayer<T>{params.linear_k.weight, std::nullopt});
  out.pv = linear_forward(features, LinearLayer<T>{params.linear_v.weight, std::nullopt});
  out.bias_k = params.linear_k.bias.value_or(Tensor<T>({c}));
  out.bias_v = params.linear_v.bias.value_or(Tensor<T>({c}));
  if (counter) {
    counter->projection += 3 * n * c * c;
    if (params.linear_q.bias) counter->projection += n * c;
  }
  return out;
}

template <typename T>
Tensor<T> attention_core(const ProjectedFeatures<T>& in, const NeighborhoodIndex& nbr,
                         AttentionMode mode, FlopBreakdown* counter) {
  const std::size_t n = in.q.rows(), c = in.q.cols(), k = nbr.k;
  check_neighborhood(nbr, n, "attention_core");
  const T sqrt_c = std::sqrt(static_cast<T>(c));
  const std::size_t queries = mode == AttentionMode::linear ? 1 : k;
  Tensor<T> z({n, c});
  std::vector<T> kmat(k * c), vmat(k * c), weights(k), out(c);
  for (std::size_t i = 0; i < n; ++i) {
    const T* center_k = in.pk.data().data() + i * c;
    const T* center_v = in.pv.data().data() + i * c;
    for (std::size_t a = 0; a < k; ++a) {
      const T* ok = in.pk.data().data() + nbr(i, a) * c;
      const T* ov = in.pv.data().data() + nbr(i, a) * c;
      for (std::size_t j = 0; j < c; ++j) {
        kmat[a * c + j] = ok[j] - center_k[j] + in.bias_k[j];
        vmat[a * c + j] = ov[j] - center_v[j] + in.bias_v[j];
      }
    }
    if (counter) counter->gather += 4 * k * c;

    const std::size_t keep = mode == AttentionMode::linear ? 0 : self_position<T>(nbr, i);
    for (std::size_t qa = 0; qa < queries; ++qa) {
      const std::size_t qrow = mode == AttentionMode::linear ? i : nbr(i, qa);
      const T* qv = in.q.data().data() + qrow * c;
      for (std::size_t a = 0; a < k; ++a) {
        T dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += qv[j] * kmat[a * c + j];
        weights[a] = dot / sqrt_c;
      }
      if (counter) counter->score += k * (c + 1);
      softmax_inplace(weights.data(), k);
      if (counter) counter->softmax += 4 * k;
      std::fill(out.begin(), out.end(), T(0));
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t j = 0; j < c; ++j) out[j] += weights[a] * vmat[a * c + j];
      }
      if (counter) counter->aggregation += k * c;
      if (qa == keep) std::copy(out.begin(), out.end(), z.row(i).begin());
    }
  }
  return z;
}

template <typename T>
Tensor<T> quadratic_local_attention(const Tensor<T>& features, const NeighborhoodIndex& nbr,
                                    const AttentionParams<T>& params) {
  return attention_core(project(features, params), nbr, AttentionMode::quadratic);
}

namespace ops {

template <typename T>
Var local_attention(Graph<T>& g, Var q, Var pk, Var pv, Var bias_k, Var bias_v,
                    const NeighborhoodIndex& nbr, const AttentionOptions& options,
                    std::vector<AttentionTrace<T>>* traces) {
  const Tensor<T>& qv = g.value(q);
  const Tensor<T>& pkv = g.value(pk);
  const Tensor<T>& pvv = g.value(pv);
  if (qv.rank() != 2 || pkv.shape() != qv.shape() || pvv.shape() != qv.shape()) {
    throw ShapeError("local_attention: projected inputs must share one N x C shape");
  }
  const std::size_t n = qv.rows(), c = qv.cols(), k = nbr.k;
  check_neighborhood(nbr, n, "local_attention");
  const T* bk = nullptr;
  const T* bv = nullptr;
  if (bias_k.valid()) {
    if (g.value(bias_k).size() != c) throw ShapeError("local_attention: key bias width");
    bk = g.value(bias_k).data().data();
  }
  if (bias_v.valid()) {
    if (g.value(bias_v).size() != c) throw ShapeError("local_attention: value bias width");
    bv = g.value(bias_v).data().data();
  }
  if (!(options.epsilon > 0)) throw DomainError("local_attention: epsilon must be > 0");

  const bool ta = options.ta_enabled;
  const T sqrt_c = std::sqrt(static_cast<T>(c));
  const T sqrt_k = std::sqrt(static_cast<T>(k));
  const T eps = static_cast<T>(options.epsilon);

  struct Cache {
    std::vector<T> kmat, vmat;   // n*k*c
    std::vector<T> score, w;     // n*k
    std::vector<T> u;            // n*c, u = 1 / T
    std::vector<char> active;    // n*c, u depends on V2 (not clamped or forced)
    std::vector<T> wmat;         // n*k*c, TA only
  };
  auto cache = std::make_shared<Cache>();
  cache->kmat.resize(n * k * c);
  cache->vmat.resize(n * k * c);
  cache->score.resize(n * k);
  cache->w.resize(n * k);
  if (ta) {
    cache->u.resize(n * c);
    cache->active.resize(n * c);
    cache->wmat.resize(n * k * c);
  }
  if (traces) traces->clear();

  Tensor<T> z({n, c});
  std::vector<T> column(k);
  for (std::size_t i = 0; i < n; ++i) {
    T* K = cache->kmat.data() + i * k * c;
    T* V = cache->vmat.data() + i * k * c;
    const T* center_k = pkv.data().data() + i * c;
    const T* center_v = pvv.data().data() + i * c;
    for (std::size_t a = 0; a < k; ++a) {
      const T* ok = pkv.data().data() + nbr(i, a) * c;
      const T* ov = pvv.data().data() + nbr(i, a) * c;
      for (std::size_t j = 0; j < c; ++j) {
        K[a * c + j] = ok[j] - center_k[j] + (bk ? bk[j] : T(0));
        V[a * c + j] = ov[j] - center_v[j] + (bv ? bv[j] : T(0));
      }
    }
    const T* qi = qv.data().data() + i * c;
    T* s = cache->score.data() + i * k;
    T* w = cache->w.data() + i * k;
    for (std::size_t a = 0; a < k; ++a) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += qi[j] * K[a * c + j];
      s[a] = dot / sqrt_c;
      w[a] = s[a];
    }
    softmax_inplace(w, k);

    T* zi = z.data().data() + i * c;
    if (!ta) {
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t j = 0; j < c; ++j) zi[j] += w[a] * V[a * c + j];
      }
    } else {
      T* u = cache->u.data() + i * c;
      char* active = cache->active.data() + i * c;
      T* W = cache->wmat.data() + i * k * c;
      for (std::size_t j = 0; j < c; ++j) {
        T m = 0;
        for (std::size_t a = 0; a < k; ++a) m += w[a] * V[a * c + j] * V[a * c + j];
        const T ratio = m / sqrt_k;
        if (options.force_unit_temperature) {
          u[j] = T(1);
          active[j] = 0;
        } else {
          u[j] = std::max(ratio, eps);
          active[j] = ratio > eps;
        }
        // Score / T with T = 1 / u.
        for (std::size_t a = 0; a < k; ++a) column[a] = s[a] * u[j];
        softmax_inplace(column.data(), k);
        for (std::size_t a = 0; a < k; ++a) W[a * c + j] = column[a];
      }
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t j = 0; j < c; ++j) zi[j] += W[a * c + j] * V[a * c + j];
      }
    }

    if (traces) {
      AttentionTrace<T> tr;
      tr.center = i;
      tr.q = Tensor<T>({c}, std::vector<T>(qi, qi + c));
      tr.k_mat = Tensor<T>({k, c}, std::vector<T>(K, K + k * c));
      tr.v_mat = Tensor<T>({k, c}, std::vector<T>(V, V + k * c));
      tr.score = Tensor<T>({k}, std::vector<T>(s, s + k));
      tr.w_token = Tensor<T>({k}, std::vector<T>(w, w + k));
      tr.v2_bar = channel_second_moment(tr.w_token, tr.v_mat);
      tr.temperature = Tensor<T>({c}, T(1));
      tr.w = Tensor<T>({k, c});
      if (ta) {
        for (std::size_t j = 0; j < c; ++j) tr.temperature[j] = T(1) / cache->u[i * c + j];
        std::copy_n(cache->wmat.data() + i * k * c, k * c, tr.w.data().begin());
      } else {
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t j = 0; j < c; ++j) tr.w(a, j) = w[a];
        }
      }
      tr.z = Tensor<T>({c}, std::vector<T>(zi, zi + c));
      traces->push_back(std::move(tr));
    }
  }

  return g.emit(std::move(z), {q, pk, pv, bias_k, bias_v},
                [=, idx = nbr.indices](Graph<T>& g, const Tensor<T>& dz) {
    const Tensor<T>& qv = g.value(q);
    std::vector<T> dK(k * c), dV(k * c), ds(k), dw(k);
    for (std::size_t i = 0; i < n; ++i) {
      const T* K = cache->kmat.data() + i * k * c;
      const T* V = cache->vmat.data() + i * k * c;
      const T* s = cache->score.data() + i * k;
      const T* w = cache->w.data() + i * k;
      const T* dzi = dz.data().data() + i * c;
      std::fill(dK.begin(), dK.end(), T(0));
      std::fill(dV.begin(), dV.end(), T(0));
      std::fill(ds.begin(), ds.end(), T(0));
      std::fill(dw.begin(), dw.end(), T(0));

      if (!ta) {
        for (std::size_t a = 0; a < k; ++a) {
          T acc = 0;
          for (std::size_t j = 0; j < c; ++j) {
            acc += dzi[j] * V[a * c + j];
            dV[a * c + j] += dzi[j] * w[a];
          }
          dw[a] = acc;
        }
      } else {
        const T* u = cache->u.data() + i * c;
        const char* active = cache->active.data() + i * c;
        const T* W = cache->wmat.data() + i * k * c;
        for (std::size_t j = 0; j < c; ++j) {
          T dot = 0;
          for (std::size_t a = 0; a < k; ++a) {
            dV[a * c + j] += dzi[j] * W[a * c + j];
            dot += W[a * c + j] * dzi[j] * V[a * c + j];
          }
          T du = 0;
          for (std::size_t a = 0; a < k; ++a) {
            const T dscaled = W[a * c + j] * (dzi[j] * V[a * c + j] - dot);
            ds[a] += dscaled * u[j];
            du += dscaled * s[a];
          }
          if (active[j]) {
            const T dm = du / sqrt_k;
            for (std::size_t a = 0; a < k; ++a) {
              const T vv = V[a * c + j];
              dw[a] += dm * vv * vv;
              dV[a * c + j] += dm * w[a] * T(2) * vv;
            }
          }
        }
      }
      // back through W_token = softmax(score)
      T wdot = 0;
      for (std::size_t a = 0; a < k; ++a) wdot += w[a] * dw[a];
      for (std::size_t a = 0; a < k; ++a) ds[a] += w[a] * (dw[a] - wdot);

      const T* qi = qv.data().data() + i * c;
      if (g.requires_grad(q)) {
        T* dq = g.grad_buffer(q).data().data() + i * c;
        for (std::size_t a = 0; a < k; ++a) {
          const T f = ds[a] / sqrt_c;
          for (std::size_t j = 0; j < c; ++j) dq[j] += f * K[a * c + j];
        }
      }
      for (std::size_t a = 0; a < k; ++a) {
        const T f = ds[a] / sqrt_c;
        for (std::size_t j = 0; j < c; ++j) dK[a * c + j] = f * qi[j];
      }
      auto scatter = [&](Var proj, Var bias, const std::vector<T>& d) {
        if (g.requires_grad(proj)) {
          T* gp = g.grad_buffer(proj).data().data();
          for (std::size_t a = 0; a < k; ++a) {
            T* other = gp + idx[i * k + a] * c;
            T* center = gp + i * c;
            for (std::size_t j = 0; j < c; ++j) {
              other[j] += d[a * c + j];
              center[j] -= d[a * c + j];
            }
          }
        }
        if (bias.valid() && g.requires_grad(bias)) {
          T* gb = g.grad_buffer(bias).data().data();
          for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t j = 0; j < c; ++j) gb[j] += d[a * c + j];
          }
        }
      };
      scatter(pk, bias_k, dK);
      scatter(pv, bias_v, dV);
    }
  });
}

}  // namespace ops

#define POINTMT_INSTANTIATE(T)                                                                   \
  template struct AttentionParams<T>;                                                            \
  template AttentionResult<T> linear_local_attention<T>(const Tensor<T>&,                        \
                                                        const NeighborhoodIndex&,                \
                                                        const AttentionParams<T>&, bool);        \
  template AttentionResult<T> ta_attention<T>(const Tensor<T>&, const NeighborhoodIndex&,        \
                                              const AttentionParams<T>&, bool);                  \
  template Tensor<T> channel_second_moment<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> temperature<T>(const Tensor<T>&, std::size_t, double);                      \
  template ChannelStats<T> moment_decomposition<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> quadratic_local_attention<T>(const Tensor<T>&, const NeighborhoodIndex&,    \
                                                  const AttentionParams<T>&);                    \
  template ProjectedFeatures<T> project<T>(const Tensor<T>&, const AttentionParams<T>&,          \
                                           FlopBreakdown*);                                      \
  template Tensor<T> attention_core<T>(const ProjectedFeatures<T>&, const NeighborhoodIndex&,    \
                                       AttentionMode, FlopBreakdown*);                           \
  template Var ops::local_attention<T>(Graph<T>&, Var, Var, Var, Var, Var,                       \
                                       const NeighborhoodIndex&, const AttentionOptions&,        \
                                       std::vector<AttentionTrace<T>>*);

POINTMT_INSTANTIATE(float)
POINTMT_INSTANTIATE(double)

#undef POINTMT_INSTANTIATE

}  // namespace pointmt
