#include <cmath>
#include <random>

#include "asymcodec/networks.hpp"
#include "asymcodec/quantization.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace asymcodec;
using asymcodec::testing::random_tensor;
using asymcodec::testing::VarD;

TEST_CASE("training noise") {
  std::mt19937_64 rng(1);
  VarD y(random_tensor(Shape(2, 4, 8, 8), rng, -10, 10));
  auto a = quantize_train(y, 42);
  auto b = quantize_train(y, 42);
  CHECK((a.value().array() == b.value().array()).all());
  CHECK((a.value().array() - y.value().array()).abs().maxCoeff() <= 0.5);
  CHECK((quantize_train(y, 43).value().array() != a.value().array()).any());

  auto noise = uniform_noise<double>(Shape(1, 1, 1000, 1000), 7);
  CHECK(noise.array().minCoeff() >= -0.5);
  CHECK(noise.array().maxCoeff() < 0.5);
  CHECK(std::abs(noise.array().mean()) < 0.002);

  // The noise is an additive constant: d out / d y = 1.
  auto yp = VarD::parameter(y.value());
  backward(sum(quantize_train(yp, 1)));
  CHECK((yp.grad().array() == 1.0).all());
}

TEST_CASE("inference rounding") {
  TensorD t(Shape(1, 1, 1, 7));
  const double in[] = {0.4, 1.5, -0.5, -1.5, 3.0, -2.0, 2.49};
  const double out[] = {0, 2, -1, -2, 3, -2, 2};
  for (int i = 0; i < 7; ++i) t[i] = in[i];
  auto r = quantize_infer(t);
  for (int i = 0; i < 7; ++i) CHECK(r[i] == out[i]);
  CHECK((quantize_infer(r).array() == r.array()).all());

  std::mt19937_64 rng(2);
  auto y = random_tensor(Shape(1, 3, 16, 16), rng, -100, 100);
  CHECK((quantize_infer(y).array() - y.array()).abs().maxCoeff() <= 0.5);

  t[0] = 2047.4;
  CHECK(quantize_infer(t)[0] == 2047);
  t[0] = 2047.6;
  CHECK_THROWS_AS(quantize_infer(t), SymbolRangeError);
  t[0] = -2048.6;
  CHECK_THROWS_AS(quantize_infer(t), SymbolRangeError);
  t[0] = NAN;
  CHECK_THROWS_AS(quantize_infer(t), SymbolRangeError);
}

TEST_CASE("post-quantization filter") {
  std::mt19937_64 rng(3);
  ParameterStore<double> store(1);
  PostQuantFilter<double> pqf(store, 4);
  CHECK(pqf.kernel().shape() == Shape(4, 1, 3, 3));
  VarD y(random_tensor(Shape(1, 4, 5, 7), rng, -3, 3));
  CHECK((pqf(y).value().array() == y.value().array()).all());

  // Constant field c through a kernel summing to s with bias b gives c*s + b.
  auto& k = store.get("pqf.kernel").mutable_value();
  for (Index i = 0; i < k.size(); ++i) k[i] = 0.05 * static_cast<double>(i % 9);
  auto& b = store.get("pqf.bias").mutable_value();
  for (Index c = 0; c < 4; ++c) b[c] = 0.1 * static_cast<double>(c);
  const double s = 0.05 * 36, cval = 1.75;
  auto out = pqf(VarD(TensorD(Shape(1, 4, 6, 6), cval))).value();
  for (Index c = 0; c < 4; ++c) {
    for (Index i = 0; i < 36; ++i) CHECK(out.plane_data(0, c)[i] == doctest::Approx(cval * s + 0.1 * c).epsilon(1e-14));
  }
  CHECK_THROWS_AS(pqf(VarD(TensorD(Shape(1, 3, 4, 4)))), ShapeError);
}

TEST_CASE("filter loss") {
  ParameterStore<double> store(1);
  PostQuantFilter<double> pqf(store, 1);
  std::mt19937_64 rng(4);
  VarD y_tilde(random_tensor(Shape(1, 1, 2, 5), rng));
  CHECK(pqf.loss(y_tilde, y_tilde).value()[0] == 0.0);
  VarD y_hat(TensorD(y_tilde.shape(), y_tilde.value().array() + 0.5));
  CHECK(pqf.loss(y_hat, y_tilde).value()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(pqf.loss(y_hat, VarD(TensorD(Shape(1, 1, 5, 2)))), ShapeError);

  // Only the filter parameters learn from this term.
  auto yp = VarD::parameter(y_hat.value());
  backward(pqf.loss(yp, y_tilde));
  CHECK(!yp.has_grad());
  CHECK(pqf.kernel().has_grad());
}

TEST_CASE("filter loss gradient matches finite differences") {
  ParameterStore<double> store(1);
  PostQuantFilter<double> pqf(store, 3);
  std::mt19937_64 rng(5);
  store.get("pqf.kernel").mutable_value() = random_tensor(Shape(3, 1, 3, 3), rng, -0.5, 0.5);
  TensorD rounded = random_tensor(Shape(1, 3, 6, 6), rng, -3, 3);
  rounded.array() = rounded.array().round();
  VarD y_hat(rounded);
  VarD y_tilde(random_tensor(Shape(1, 3, 6, 6), rng, -3, 3));
  auto res = asymcodec::testing::grad_check({pqf.kernel(), pqf.bias()},
                                            [&](const std::vector<VarD>&) { return pqf.loss(y_hat, y_tilde); }, rng);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("identity filter leaves the decode path unchanged") {
  ModelConfig cfg;
  cfg.n_latent = cfg.n_hyper = cfg.base_width = 8;
  CodecModel<double> with(cfg, 2);
  cfg.pqf_enabled = false;
  CodecModel<double> without(cfg, 2);
  std::mt19937_64 rng(6);
  VarD x(random_tensor(Shape(1, 3, 64, 64), rng));
  auto a = with.forward(x, QuantMode::Round);
  auto b = without.forward(x, QuantMode::Round);
  CHECK((a.x_hat.value().array() == b.x_hat.value().array()).all());
}
