#include "pointmt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pointmt {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

void require_finite(double v, const std::string& name) {
  if (!std::isfinite(v)) throw VerificationError("non-finite value encountered at " + name);
}

}  // namespace

GradCheckReport grad_check(const Fragment& fragment, ParameterStore<double>& params,
                           const std::vector<Tensor<double>>& inputs, double tolerance,
                           std::uint64_t seed, double step) {
  std::vector<Tensor<double>> current = inputs;
  Tensor<double> projection;

  auto evaluate = [&](bool record, std::vector<Tensor<double>>* param_grads,
                      std::vector<Tensor<double>>* input_grads) {
    Graph<double> g(record);
    std::vector<Var> vars;
    for (const auto& t : current) vars.push_back(g.input(t));
    Var out = fragment(g, params, vars);
    if (projection.empty()) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      projection = Tensor<double>(g.value(out).shape());
      for (auto& v : projection.data()) v = dist(rng);
    }
    Var loss = ops::weighted_sum(g, out, projection);
    const double value = g.value(loss)[0];
    if (record) {
      g.backward(loss);
      param_grads->assign(params.size(), Tensor<double>());
      g.accumulate_parameter_grads(*param_grads);
      for (std::size_t i = 0; i < params.size(); ++i) {
        if ((*param_grads)[i].empty()) (*param_grads)[i] = Tensor<double>(params[i].value.shape());
      }
      input_grads->clear();
      for (Var v : vars) input_grads->push_back(g.grad(v));
    }
    return value;
  };

  std::vector<Tensor<double>> param_grads, input_grads;
  require_finite(evaluate(true, &param_grads, &input_grads), "forward pass");

  GradCheckReport report;
  report.tolerance = tolerance;
  auto probe = [&](double& slot, double analytic, const std::string& name) {
    require_finite(analytic, name + " (analytic gradient)");
    const double saved = slot;
    slot = saved + step;
    const double plus = evaluate(false, nullptr, nullptr);
    slot = saved - step;
    const double minus = evaluate(false, nullptr, nullptr);
    slot = saved;
    require_finite(plus, name);
    require_finite(minus, name);
    const double numeric = (plus - minus) / (2 * step);
    const double err = relative_error(analytic, numeric);
    ++report.checked;
    if (report.worst.empty() || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst = name;
    }
  };

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& value = params[p].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      probe(value[i], param_grads[p][i], params[p].name + "[" + std::to_string(i) + "]");
    }
  }
  for (std::size_t t = 0; t < current.size(); ++t) {
    for (std::size_t i = 0; i < current[t].size(); ++i) {
      probe(current[t][i], input_grads[t][i],
            "input" + std::to_string(t) + "[" + std::to_string(i) + "]");
    }
  }
  return report;
}

}  // namespace pointmt
