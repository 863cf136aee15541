// Finite-difference gradient oracle shared by the unit and acceptance suites.
#ifndef ASYMCODEC_TESTS_GRADCHECK_HPP
#define ASYMCODEC_TESTS_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "asymcodec/autodiff.hpp"
#include "asymcodec/likelihood.hpp"
#include "asymcodec/ops.hpp"
#include "asymcodec/parameters.hpp"

namespace asymcodec::testing {

using VarD = Var<double>;

inline TensorD random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                             double min_abs = 0.0) {
  TensorD t(shape);
  for (Index i = 0; i < t.size(); ++i) {
    double v;
    do {
      v = lo + (hi - lo) * unit_uniform(rng);
    } while (std::abs(v) < min_abs);
    t[i] = v;
  }
  return t;
}

struct GradCheckResult {
  double max_rel_error = 0;
  int coordinates = 0;
};

/// Central differences (step h) against autodiff for `loss_fn(inputs)`.
/// Checks up to `samples` coordinates per input, chosen at random. The
/// relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(std::vector<VarD> inputs, const std::function<VarD(const std::vector<VarD>&)>& loss_fn,
                                  std::mt19937_64& rng, int samples = 100, double h = 1e-4, double floor = 1e-4) {
  for (auto& v : inputs) v.zero_grad();
  VarD loss = loss_fn(inputs);
  backward(loss);
  GradCheckResult result;
  for (auto& v : inputs) {
    if (!v.requires_grad()) continue;
    TensorD analytic = v.grad();
    const Index n = v.value().size();
    std::vector<Index> coords;
    if (n <= samples) {
      for (Index i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int s = 0; s < samples; ++s) coords.push_back(static_cast<Index>(rng() % static_cast<std::uint64_t>(n)));
    }
    for (Index i : coords) {
      const double saved = v.value()[i];
      double plus, minus;
      {
        NoGradGuard guard;
        v.mutable_value()[i] = saved + h;
        plus = loss_fn(inputs).value()[0];
        v.mutable_value()[i] = saved - h;
        minus = loss_fn(inputs).value()[0];
        v.mutable_value()[i] = saved;
      }
      const double numeric = (plus - minus) / (2 * h);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.coordinates;
    }
  }
  return result;
}

/// sum(weights * out) with fixed random weights, so every output element
/// contributes a distinct sensitivity.
inline VarD weighted_sum(const VarD& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, VarD::constant(random_tensor(out.shape(), rng, 0.5, 1.5))));
}

struct GradCase {
  const char* name;
  std::vector<VarD> inputs;
  std::function<VarD(const std::vector<VarD>&)> fn;
};

/// One case per differentiable tensor op, with inputs kept away from kinks.
inline std::vector<GradCase> op_grad_cases(std::mt19937_64& rng) {
  auto param = [&](Shape s, double lo = -1, double hi = 1, double min_abs = 0) {
    return VarD::parameter(random_tensor(s, rng, lo, hi, min_abs));
  };
  std::vector<GradCase> cases;
  for (auto pad : {Padding::Zero, Padding::SameReflect, Padding::Valid}) {
    for (int stride : {1, 2}) {
      cases.push_back({"conv2d", {param(Shape(2, 3, 7, 6)), param(Shape(2, 3, 3, 3)), param(Shape(1, 2, 1, 1))},
                       [pad, stride](const auto& in) { return weighted_sum(conv2d(in[0], in[1], in[2], {stride, pad})); }});
    }
  }
  for (int stride : {1, 2}) {
    cases.push_back({"conv2d_transpose", {param(Shape(2, 3, 3, 4)), param(Shape(3, 2, 3, 3)), param(Shape(1, 2, 1, 1))},
                     [stride](const auto& in) { return weighted_sum(conv2d_transpose(in[0], in[1], in[2], stride)); }});
  }
  cases.push_back({"depthwise_conv2d", {param(Shape(2, 3, 5, 5)), param(Shape(3, 1, 3, 3)), param(Shape(1, 3, 1, 1))},
                   [](const auto& in) { return weighted_sum(depthwise_conv2d(in[0], in[1], in[2], Padding::SameReflect)); }});
  for (bool inverse : {false, true}) {
    cases.push_back({"gdn", {param(Shape(2, 3, 3, 3)), param(Shape(1, 3, 1, 1), 0.5, 1.5), param(Shape(3, 3, 1, 1), 0.0, 0.5)},
                     [inverse](const auto& in) {
                       return weighted_sum(generalized_divisive_norm(in[0], in[1], in[2], inverse));
                     }});
  }
  cases.push_back({"leaky_relu", {param(Shape(1, 2, 3, 3), -1, 1, 0.01)},
                   [](const auto& in) { return weighted_sum(leaky_relu(in[0], 0.2)); }});
  cases.push_back({"relu", {param(Shape(1, 2, 3, 3), -1, 1, 0.01)}, [](const auto& in) { return weighted_sum(relu(in[0])); }});
  cases.push_back({"tanh", {param(Shape(1, 2, 3, 3))}, [](const auto& in) { return weighted_sum(tanh(in[0])); }});
  cases.push_back({"softsign", {param(Shape(1, 2, 3, 3), -1, 1, 0.01)},
                   [](const auto& in) { return weighted_sum(softsign(in[0])); }});
  cases.push_back({"sigmoid", {param(Shape(1, 2, 3, 3), -3, 3)}, [](const auto& in) { return weighted_sum(sigmoid(in[0])); }});
  cases.push_back({"softplus", {param(Shape(1, 2, 3, 3), -3, 3)}, [](const auto& in) { return weighted_sum(softplus(in[0])); }});
  cases.push_back({"pow", {param(Shape(1, 2, 3, 3), 0.2, 2)}, [](const auto& in) { return weighted_sum(pow(in[0], 0.7)); }});
  cases.push_back({"clamp", {param(Shape(1, 2, 3, 3), -0.9, 0.9)},
                   [](const auto& in) { return weighted_sum(clamp(in[0], -1.0, 1.0)); }});
  cases.push_back({"mul/div/sub", {param(Shape(1, 2, 3, 3)), param(Shape(1, 2, 3, 3), 0.5, 2)},
                   [](const auto& in) { return weighted_sum(div(sub(mul(in[0], in[1]), in[0]), in[1])); }});
  cases.push_back({"concat/slice", {param(Shape(2, 2, 3, 3)), param(Shape(2, 3, 3, 3))},
                   [](const auto& in) { return weighted_sum(slice_channels(concat_channels<double>({in[0], in[1]}), 1, 3)); }});
  cases.push_back({"broadcast_channels", {param(Shape(1, 3, 1, 1))},
                   [](const auto& in) { return weighted_sum(broadcast_channels(in[0], Shape(2, 3, 2, 2))); }});
  cases.push_back({"avg_pool2/mean_spatial", {param(Shape(2, 2, 4, 5))},
                   [](const auto& in) { return weighted_sum(mean_spatial(avg_pool2(in[0]))); }});
  cases.push_back({"mean", {param(Shape(2, 2, 4, 5))}, [](const auto& in) { return mean(square(in[0])); }});
  cases.push_back({"mixture_bits", {param(Shape(2, 2, 2, 3), -2, 2), param(Shape(2, 12, 2, 3), -1, 1)},
                   [](const auto& in) { return weighted_sum(mixture_bits(in[0], in[1], MixtureLayout{2, 2})); }});
  cases.push_back({"add/scale/add_scalar", {param(Shape(1, 2, 3, 3)), param(Shape(1, 2, 3, 3))},
                   [](const auto& in) { return weighted_sum(add_scalar(scale(add(in[0], in[1]), 1.7), 0.3)); }});
  return cases;
}

}  // namespace asymcodec::testing

#endif  // ASYMCODEC_TESTS_GRADCHECK_HPP
