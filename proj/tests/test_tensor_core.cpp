#include <cmath>
#include <random>

#include "asymcodec/adam.hpp"
#include "asymcodec/likelihood.hpp"
#include "asymcodec/ops.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace asymcodec;
using asymcodec::testing::grad_check;
using asymcodec::testing::random_tensor;
using asymcodec::testing::VarD;
using asymcodec::testing::weighted_sum;

namespace {

// Dense matrix of a zero-padded "same" conv, built by direct index arithmetic.
Eigen::MatrixXd conv_matrix(const TensorD& k, Index in_h, Index in_w, int stride) {
  const Index oc = k.batch(), ic = k.channels(), kh = k.height(), kw = k.width();
  const Index oh = (in_h + stride - 1) / stride, ow = (in_w + stride - 1) / stride;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(oc * oh * ow, ic * in_h * in_w);
  for (Index o = 0; o < oc; ++o)
    for (Index y = 0; y < oh; ++y)
      for (Index x = 0; x < ow; ++x)
        for (Index i = 0; i < ic; ++i)
          for (Index ky = 0; ky < kh; ++ky)
            for (Index kx = 0; kx < kw; ++kx) {
              const Index iy = y * stride + ky - kh / 2, ix = x * stride + kx - kw / 2;
              if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) continue;
              m((o * oh + y) * ow + x, (i * in_h + iy) * in_w + ix) += k(o, i, ky, kx);
            }
  return m;
}

Eigen::VectorXd flat(const TensorD& t) { return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size()); }

}  // namespace

TEST_CASE("tensor invariants") {
  TensorD t(Shape(2, 3, 4, 5));
  CHECK(t.size() == 120);
  CHECK(t.array().size() == 120);
  CHECK_THROWS_AS(TensorD(Shape(1, 1, 2, 2), TensorD::Array::Zero(3)), ShapeError);
  t(1, 2, 3, 4) = 7;
  CHECK(t[t.size() - 1] == 7);
}

TEST_CASE("conv2d examples") {
  VarD ones(TensorD(Shape(1, 1, 3, 3), 1.0));
  VarD k(TensorD(Shape(1, 1, 3, 3), 1.0));
  auto out = conv2d(ones, k, VarD(), {1, Padding::Zero});
  CHECK(out.value()(0, 0, 1, 1) == doctest::Approx(9.0));
  CHECK(out.value()(0, 0, 0, 0) == doctest::Approx(4.0));

  std::mt19937_64 rng(1);
  VarD x(random_tensor(Shape(2, 3, 5, 6), rng));
  TensorD ident(Shape(3, 3, 1, 1));
  for (int c = 0; c < 3; ++c) ident(c, c, 0, 0) = 1;
  auto same = conv2d(x, VarD(ident), VarD(), {});
  CHECK((same.value().array() == x.value().array()).all());

  VarD x44(random_tensor(Shape(1, 1, 4, 4), rng));
  auto s2 = conv2d(x44, k, VarD(), {2, Padding::SameReflect});
  CHECK(s2.shape() == Shape(1, 1, 2, 2));
  auto valid = conv2d(x44, k, VarD(), {1, Padding::Valid});
  CHECK(valid.shape() == Shape(1, 1, 2, 2));
}

TEST_CASE("conv2d errors") {
  VarD x(TensorD(Shape(1, 2, 4, 4)));
  VarD k(TensorD(Shape(1, 3, 3, 3)));
  CHECK_THROWS_WITH_AS(conv2d(x, k, VarD(), {}), doctest::Contains("channels"), ShapeError);
  VarD k2(TensorD(Shape(1, 2, 3, 3)));
  CHECK_THROWS_AS(conv2d(x, k2, VarD(), {3, Padding::Zero}), ShapeError);
  CHECK_THROWS_AS(conv2d(x, k2, VarD(TensorD(Shape(1, 2, 1, 1))), {}), ShapeError);
}

TEST_CASE("reflect padding mirrors without repeating the edge") {
  TensorD row(Shape(1, 1, 1, 4));
  for (int i = 0; i < 4; ++i) row(0, 0, 0, i) = i + 1;  // 1 2 3 4
  TensorD k(Shape(1, 1, 1, 3));
  k(0, 0, 0, 0) = 1;  // picks the left neighbour
  auto out = conv2d(VarD(row), VarD(k), VarD(), {1, Padding::SameReflect});
  CHECK(out.value()(0, 0, 0, 0) == 2);  // mirror of index -1 is index 1
  CHECK(out.value()(0, 0, 0, 1) == 1);
}

TEST_CASE("conv2d_transpose shape, identity and adjointness") {
  std::mt19937_64 rng(2);
  VarD x(random_tensor(Shape(1, 1, 2, 2), rng));
  VarD k(random_tensor(Shape(1, 1, 3, 3), rng));
  CHECK(conv2d_transpose(x, k, VarD(), 2).shape() == Shape(1, 1, 4, 4));
  VarD one(TensorD(Shape(1, 1, 1, 1), 1.0));
  CHECK((conv2d_transpose(x, one, VarD(), 1).value().array() == x.value().array()).all());

  for (int stride : {1, 2}) {
    TensorD kern = random_tensor(Shape(3, 2, 3, 3), rng);  // conv: 2 -> 3 channels
    TensorD a = random_tensor(Shape(1, 2, 4, 4), rng);
    const Index oh = 4 / stride;
    TensorD b = random_tensor(Shape(1, 3, oh, oh), rng);
    auto fwd = conv2d(VarD(a), VarD(kern), VarD(), {stride, Padding::Zero});
    auto adj = conv2d_transpose(VarD(b), VarD(kern), VarD(), stride);
    Eigen::MatrixXd m = conv_matrix(kern, 4, 4, stride);
    CHECK((flat(fwd.value()) - m * flat(a)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((flat(adj.value()) - m.transpose() * flat(b)).cwiseAbs().maxCoeff() < 1e-10);
    const double lhs = flat(fwd.value()).dot(flat(b));
    const double rhs = flat(a).dot(flat(adj.value()));
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("gdn examples") {
  auto run = [](double x, double beta, double gamma, bool inverse) {
    VarD in(TensorD(Shape(1, 1, 1, 1), x));
    return generalized_divisive_norm(in, VarD(TensorD(Shape(1, 1, 1, 1), beta)),
                                     VarD(TensorD(Shape(1, 1, 1, 1), gamma)), inverse)
        .value()[0];
  };
  CHECK(run(3, 1, 0, false) == 3.0);
  CHECK(run(1, 1, 1, false) == doctest::Approx(0.70710678118654752).epsilon(1e-12));
  const double half = run(5, 4, 0, false);
  CHECK(half == 2.5);
  CHECK(run(half, 4, 0, true) == 5.0);

  VarD bad(TensorD(Shape(1, 1, 1, 1), NAN));
  VarD b(TensorD(Shape(1, 1, 1, 1), 1.0)), g(TensorD(Shape(1, 1, 1, 1)));
  CHECK_THROWS_AS(gdn(bad, b, g), std::domain_error);
  CHECK_THROWS_AS(gdn(VarD(TensorD(Shape(1, 2, 1, 1))), b, g), ShapeError);
}

TEST_CASE("activation values") {
  auto eval = [](auto fn, double x) { return fn(VarD(TensorD(Shape(1, 1, 1, 1), x))).value()[0]; };
  CHECK(eval([](const VarD& v) { return asymcodec::tanh(v); }, 0.0) == 0.0);
  CHECK(eval([](const VarD& v) { return softsign(v); }, 0.0) == 0.0);
  CHECK(eval([](const VarD& v) { return asymcodec::tanh(v); }, 1.0) == doctest::Approx(0.7615941559557649).epsilon(1e-14));
  CHECK(eval([](const VarD& v) { return softsign(v); }, 0.7615941559557649) ==
        doctest::Approx(0.4323323583816937).epsilon(1e-14));
  CHECK(eval([](const VarD& v) { return leaky_relu(v, 0.2); }, -2.0) == doctest::Approx(-0.4));
  const double s = eval([](const VarD& v) { return sigmoid(v); }, 30.0);
  CHECK(s < 1.0);
  CHECK(s > 0.0);
}

TEST_CASE("backward basics") {
  TensorD xv(Shape(1, 1, 1, 2));
  xv[0] = 1;
  xv[1] = 2;
  auto x = VarD::parameter(xv);
  auto loss = sum(square(x));
  backward(loss);
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  backward(loss);
  CHECK(x.grad()[1] == 8.0);  // accumulates

  auto unused = VarD::parameter(TensorD(Shape(1, 1, 1, 3), 1.0));
  CHECK((unused.grad().array() == 0).all());

  CHECK_THROWS_AS(backward(square(x)), ShapeError);
}

TEST_CASE("finite differences: two-layer conv net") {
  std::mt19937_64 rng(3);
  auto x = VarD::parameter(random_tensor(Shape(2, 2, 6, 6), rng));
  auto k1 = VarD::parameter(random_tensor(Shape(4, 2, 3, 3), rng));
  auto b1 = VarD::parameter(random_tensor(Shape(1, 4, 1, 1), rng));
  auto k2 = VarD::parameter(random_tensor(Shape(3, 4, 3, 3), rng));
  auto res = grad_check({x, k1, b1, k2},
                        [](const std::vector<VarD>& in) {
                          auto h = tanh(conv2d(in[0], in[1], in[2], {2, Padding::SameReflect}));
                          return weighted_sum(conv2d(h, in[3], VarD(), {1, Padding::Zero}));
                        },
                        rng, 100);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("finite differences: every op") {
  std::mt19937_64 rng(4);
  for (auto& c : testing::op_grad_cases(rng)) {
    CAPTURE(c.name);
    auto res = grad_check(c.inputs, c.fn, rng, 100);
    CHECK(res.coordinates > 0);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("adam") {
  auto p = VarD::parameter(TensorD(Shape(1, 1, 1, 1), 0.0));
  std::vector<VarD> params{p};
  AdamState<double> state;
  adam_step(params, state, 0.1);
  CHECK(p.value()[0] == 0.0);
  CHECK(state.step == 1);

  auto q = VarD::parameter(TensorD(Shape(1, 1, 1, 1), 0.0));
  std::vector<VarD> qs{q};
  AdamState<double> qstate;
  backward(sum(q));  // g = 1
  adam_step(qs, qstate, 0.1);
  CHECK(q.value()[0] == doctest::Approx(-0.1 / (1 + 1e-8)).epsilon(1e-12));
  const double after_one = q.value()[0];
  adam_step(qs, qstate, 0.1);  // same accumulated gradient, evolved state
  CHECK(q.value()[0] != after_one);
  CHECK(qstate.step == 2);

  CHECK_THROWS_AS(adam_step(qs, qstate, 0.0), std::invalid_argument);
}

TEST_CASE("ops are deterministic") {
  std::mt19937_64 rng(5);
  TensorD x = random_tensor(Shape(1, 4, 8, 8), rng);
  TensorD k = random_tensor(Shape(4, 4, 3, 3), rng);
  auto a = conv2d(VarD(x), VarD(k), VarD(), {2, Padding::Zero});
  auto b = conv2d(VarD(x), VarD(k), VarD(), {2, Padding::Zero});
  CHECK((a.value().array() == b.value().array()).all());
}

TEST_CASE("gdn denominator stays above beta_min") {
  std::mt19937_64 rng(6);
  TensorD x = random_tensor(Shape(1, 3, 4, 4), rng, -50, 50);
  // beta at its floor and gamma zero give the smallest possible denominator.
  TensorD beta(Shape(1, 3, 1, 1), 1e-6), gamma(Shape(3, 3, 1, 1));
  auto y = gdn(VarD(x), VarD(beta), VarD(gamma));
  for (Index i = 0; i < x.size(); ++i) {
    const double denom = x[i] / y.value()[i];
    CHECK(denom * denom >= 1e-6 * (1 - 1e-9));
  }
}
