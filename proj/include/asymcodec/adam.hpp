#ifndef ASYMCODEC_ADAM_HPP
#define ASYMCODEC_ADAM_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "asymcodec/autodiff.hpp"

namespace asymcodec {

template <typename Scalar>
struct AdamState {
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor<Scalar>> m, v;
};

/// One bias-corrected Adam update over `params`, using their accumulated
/// gradients. Parameters without a gradient are treated as having a zero one.
template <typename Scalar>
void adam_step(std::vector<Var<Scalar>>& params, AdamState<Scalar>& state, double lr) {
  if (!(lr > 0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameter list");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(state.beta1), b2 = static_cast<Scalar>(state.beta2);
  const auto step_size = static_cast<Scalar>(lr / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  const auto eps = static_cast<Scalar>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (state.m[i].shape() != p.shape()) throw std::invalid_argument("adam_step: moment shape mismatch");
    if (!p.has_grad()) {
      state.m[i].array() *= b1;
      state.v[i].array() *= b2;
    } else {
      const auto& g = p.node()->grad.array();
      state.m[i].array() = b1 * state.m[i].array() + (Scalar(1) - b1) * g;
      state.v[i].array() = b2 * state.v[i].array() + (Scalar(1) - b2) * g.square();
    }
    p.mutable_value().array() -= step_size * state.m[i].array() / ((state.v[i].array() * inv_c2).sqrt() + eps);
  }
}

}  // namespace asymcodec

#endif  // ASYMCODEC_ADAM_HPP
