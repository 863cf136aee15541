#ifndef ASYMCODEC_PARAMETERS_HPP
#define ASYMCODEC_PARAMETERS_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "asymcodec/autodiff.hpp"

namespace asymcodec {

/// Uniform double in [0, 1) from the top 53 bits; platform independent,
/// unlike std::uniform_real_distribution.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Named, ordered collection of learnable tensors. Modules register their
/// parameters here at construction and keep handles to the shared nodes.
template <typename Scalar>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  Var<Scalar> add(const std::string& name, Tensor<Scalar> init) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    auto v = Var<Scalar>::parameter(std::move(init));
    params_.emplace(name, v);
    order_.push_back(name);
    return v;
  }

  /// Kernel drawn from U(-b, b) with b = gain / sqrt(fan_in).
  Var<Scalar> add_uniform(const std::string& name, const Shape& shape, Index fan_in, double gain = 1.0) {
    Tensor<Scalar> t(shape);
    const double bound = gain / std::sqrt(static_cast<double>(fan_in));
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>((2.0 * unit_uniform(rng_) - 1.0) * bound);
    return add(name, std::move(t));
  }

  Var<Scalar> add_constant(const std::string& name, const Shape& shape, Scalar value) {
    return add(name, Tensor<Scalar>(shape, value));
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Var<Scalar> get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  /// Registration order.
  const std::vector<std::string>& names() const { return order_; }

  std::vector<Var<Scalar>> all() const {
    std::vector<Var<Scalar>> out;
    for (const auto& n : order_) out.push_back(params_.at(n));
    return out;
  }

  /// Number of scalars in parameters whose name starts with `prefix`.
  Index count(const std::string& prefix = "") const {
    Index total = 0;
    for (const auto& [name, v] : params_) {
      if (name.compare(0, prefix.size(), prefix) == 0) total += v.value().size();
    }
    return total;
  }

  void zero_grad() {
    for (auto& [name, v] : params_) v.zero_grad();
  }

  /// Sets every parameter under `prefix` to zero.
  void fill(const std::string& prefix, Scalar value) {
    for (auto& [name, v] : params_) {
      if (name.compare(0, prefix.size(), prefix) == 0) v.mutable_value().array() = value;
    }
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::map<std::string, Var<Scalar>> params_;
  std::vector<std::string> order_;
};

}  // namespace asymcodec

#endif  // ASYMCODEC_PARAMETERS_HPP
