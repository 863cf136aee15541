#include <random>

#include "asymcodec/blocks.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace asymcodec;
using asymcodec::testing::random_tensor;
using asymcodec::testing::VarD;

namespace {

bool equal(const TensorD& a, const TensorD& b) { return a.shape() == b.shape() && (a.array() == b.array()).all(); }

// Weights + biases of a k x k convolution.
Index conv_count(Index in, Index out, Index k) { return out * in * k * k + out; }
Index rb_count(Index c, Index k) { return 2 * conv_count(c, c, k); }
Index gdn_count(Index c) { return c + c * c; }

}  // namespace

TEST_CASE("residual block") {
  std::mt19937_64 rng(1);
  ParameterStore<double> store(7);
  ResidualBlock<double> rb(store, "rb", 8);
  VarD x(random_tensor(Shape(1, 8, 16, 16), rng));
  CHECK(rb(x).shape() == x.shape());
  CHECK(!equal(rb(x).value(), x.value()));

  store.fill("", 0.0);
  CHECK(equal(rb(x).value(), x.value()));

  // With a zero branch the Jacobian is the identity.
  auto xp = VarD::parameter(x.value());
  backward(sum(rb(xp)));
  CHECK((xp.grad().array() == 1.0).all());
  CHECK(store.get("rb.conv2.weight").has_grad());

  CHECK_THROWS_AS(rb(VarD(TensorD(Shape(1, 4, 4, 4)))), ShapeError);
}

TEST_CASE("concatenated residual block") {
  std::mt19937_64 rng(2);
  ParameterStore<double> store(3);
  ConcatenatedResidualBlock<double> crb1(store, "crb1", 8, 1);
  ConcatenatedResidualBlock<double> crb3(store, "crb3", 8, 3);
  VarD x(random_tensor(Shape(1, 8, 8, 8), rng));
  CHECK(crb3(x).shape() == x.shape());

  CHECK(store.count("crb3.") == 3 * rb_count(8, 3));
  CHECK(store.count("crb1.") == rb_count(8, 3));

  store.fill("", 0.0);
  TensorD twice(x.shape(), 2.0 * x.value().array());
  CHECK(equal(crb1(x).value(), twice));
  CHECK(equal(crb3(x).value(), twice));
}

TEST_CASE("original MSRB") {
  std::mt19937_64 rng(3);
  ParameterStore<double> store(4);
  OriginalMsrb<double> block(store, "msrb", 8, {3, 5});
  VarD x(random_tensor(Shape(1, 8, 8, 8), rng));
  CHECK(block(x).shape() == x.shape());
  store.fill("", 0.0);
  CHECK(equal(block(x).value(), x.value()));

  // Equal kernels with tied weights make the two branches identical.
  ParameterStore<double> tied(5);
  OriginalMsrb<double> sym(tied, "sym", 4, {3, 3});
  tied.get("sym.branch_b1.weight").mutable_value() = tied.get("sym.branch_a1.weight").value();
  tied.get("sym.branch_b1.bias").mutable_value() = tied.get("sym.branch_a1.bias").value();
  VarD x4(random_tensor(Shape(1, 4, 6, 6), rng));
  auto [s1, p1] = sym.first_stage(x4);
  CHECK(equal(s1.value(), p1.value()));
}

TEST_CASE("improved MSRB") {
  std::mt19937_64 rng(4);
  ParameterStore<double> store(6);
  ImprovedMsrb<double> block(store, "msrb", 16, {3, 5});
  VarD x(random_tensor(Shape(1, 16, 8, 8), rng));
  CHECK(block(x).shape() == x.shape());

  // Layer list: two full-width residual blocks, two 1x1 reductions to half
  // width, two half-width residual blocks, a 1x1 fusion and GDN.
  const Index c = 16, h = 8;
  const Index expected = rb_count(c, 3) + rb_count(c, 5) + 2 * conv_count(2 * c, h, 1) + rb_count(h, 3) +
                         rb_count(h, 5) + conv_count(c, c, 1) + gdn_count(c);
  CHECK(expected == 22928);
  CHECK(store.count("msrb.") == expected);

  ParameterStore<double> crbs(1);
  for (int i = 0; i < 3; ++i) ConcatenatedResidualBlock<double>(crbs, "crb" + std::to_string(i), 16, 3);
  CHECK(store.count("msrb.") < crbs.count());

  store.fill("", 0.0);
  CHECK(equal(block(x).value(), x.value()));
  CHECK_THROWS_AS(block(VarD(TensorD(Shape(1, 8, 8, 8)))), ShapeError);
}

TEST_CASE("attention module gate") {
  std::mt19937_64 rng(5);
  ParameterStore<double> store(8);
  AttentionModule<double> att(store, "att", 4);
  VarD x(random_tensor(Shape(1, 4, 6, 6), rng));
  CHECK(att(x).shape() == x.shape());

  auto g = att.gate(x).value();
  CHECK((g.array() > 0).all());
  CHECK((g.array() < 1).all());

  store.get("att.mask_out.weight").mutable_value().array() = 0;
  store.get("att.mask_out.bias").mutable_value().array() = -60;
  CHECK((att(x).value().array() - x.value().array()).abs().maxCoeff() < 1e-20);

  // Gate fully open with a zero trunk branch: each trunk RB is the identity,
  // so out = x + x.
  store.get("att.mask_out.bias").mutable_value().array() = 60;
  store.fill("att.trunk", 0.0);
  CHECK((att(x).value().array() - 2.0 * x.value().array()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("block config validation") {
  BlockConfig cfg;
  cfg.channels = 16;
  CHECK_NOTHROW(cfg.validate());
  cfg.branch_kernels = {3, 4};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.branch_kernels = {3, 3};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.branch_kernels = {3, 5};
  cfg.channels = 15;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(block_kind_from_string(to_string(BlockKind::Crb)) == BlockKind::Crb);
  CHECK_THROWS_AS(block_kind_from_string("nope"), std::invalid_argument);
}

TEST_CASE("block gradients match finite differences") {
  std::mt19937_64 rng(9);
  // Small step: leaky ReLU kinks sit within 1e-4 of some pre-activations.
  for (auto kind : {BlockKind::ResidualBlock, BlockKind::Crb, BlockKind::OriginalMsrb, BlockKind::ImprovedMsrb}) {
    CAPTURE(to_string(kind));
    ParameterStore<double> store(10);
    auto block = make_block(store, "b", BlockConfig{kind, 4, {3, 5}, 2});
    auto x = VarD::parameter(random_tensor(Shape(1, 4, 5, 5), rng));
    std::vector<VarD> inputs{x};
    for (auto& p : store.all()) inputs.push_back(p);
    auto res = asymcodec::testing::grad_check(
        inputs, [&](const std::vector<VarD>& in) { return asymcodec::testing::weighted_sum((*block)(in[0])); }, rng, 20, 1e-6);
    CHECK(res.max_rel_error < 1e-4);
  }
}
