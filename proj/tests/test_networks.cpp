#include <cmath>
#include <random>

#include "asymcodec/networks.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace asymcodec;
using asymcodec::testing::random_tensor;
using asymcodec::testing::VarD;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.n_latent = 8;
  c.n_hyper = 8;
  c.base_width = 8;
  return c;
}

VarD random_image(Index h, Index w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return VarD(random_tensor(Shape(1, 3, h, w), rng));
}

}  // namespace

TEST_CASE("backbone shapes") {
  CodecModel<double> model(small_config(), 3);
  auto x = random_image(64, 64, 1);
  auto y = model.encode_backbone(x);
  CHECK(y.shape() == Shape(1, 8, 4, 4));
  auto z = model.hyper_encode(y);
  CHECK(z.shape() == Shape(1, 8, 1, 1));
  auto psi = model.hyper_decode(z);
  CHECK(psi.shape() == Shape(1, 16, 4, 4));
  CHECK(model.entropy_params(psi).shape() == Shape(1, 3 * 3 * 8, 4, 4));
  auto x_hat = model.decode_backbone(y);
  CHECK(x_hat.shape() == x.shape());
  CHECK(x_hat.value().array().abs().maxCoeff() <= 1.0);

  auto wide = model.forward(random_image(64, 128, 2), QuantMode::Round);
  CHECK(wide.x_hat.shape() == Shape(1, 3, 64, 128));

  CHECK_THROWS_AS(model.encode_backbone(random_image(40, 64, 1)), ShapeError);
  CHECK_THROWS_AS(model.encode_backbone(VarD(TensorD(Shape(1, 1, 64, 64)))), ShapeError);
  CHECK_THROWS_AS(model.decode_backbone(VarD(TensorD(Shape(1, 4, 4, 4)))), ShapeError);
  CHECK_THROWS_AS(model.entropy_params(VarD(TensorD(Shape(1, 8, 4, 4)))), ShapeError);
}

TEST_CASE("zero input maps to a zero latent") {
  CodecModel<double> model(small_config(), 4);
  auto y = model.encode_backbone(VarD(TensorD(Shape(1, 3, 32, 32))));
  CHECK(y.value().array().abs().maxCoeff() == 0.0);
}

TEST_CASE("parameter accounting") {
  auto cfg = small_config();
  const Index block = [&] {
    ParameterStore<double> s(0);
    make_block(s, "b", cfg.block(cfg.base_width));
    return s.count();
  }();

  cfg.encoder_msrb_stages = 3;
  CodecModel<double> three(cfg);
  cfg.encoder_msrb_stages = 1;
  CodecModel<double> one(cfg);
  CHECK(three.parameters().count() - one.parameters().count() == 2 * block);
  CHECK(three.parameters().count("encoder.") - one.parameters().count("encoder.") == 2 * block);

  cfg.decoder_msrb_stages = 3;
  CodecModel<double> dec3(cfg);
  cfg.decoder_msrb_stages = 1;
  CodecModel<double> dec1(cfg);
  CHECK(dec1.parameters().count("decoder.") < dec3.parameters().count("decoder."));
  CHECK(dec3.parameters().count("decoder.") - dec1.parameters().count("decoder.") == 2 * block);
}

TEST_CASE("importance map values") {
  // softsign(tanh(w)) by hand.
  auto oracle = [](double w) {
    const double t = std::tanh(w);
    return t / (1.0 + std::abs(t));
  };
  CHECK(oracle(1.0) == doctest::Approx(0.4323324).epsilon(1e-7));
  TensorD w(Shape(1, 1, 1, 4));
  w[0] = 0;
  w[1] = 1;
  w[2] = 40;
  w[3] = -3;
  auto m = softsign(tanh(VarD(w))).value();
  CHECK(m[0] == 0.0);
  CHECK(m[1] == doctest::Approx(oracle(1.0)).epsilon(1e-15));
  CHECK(m[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m[3] == doctest::Approx(oracle(-3.0)).epsilon(1e-15));
}

TEST_CASE("learned importance map stays inside the composition bound") {
  auto cfg = small_config();
  CodecModel<double> model(cfg, 5);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto x = random_image(64, 64, 10 + seed);
    auto y = model.encode_backbone(x);
    auto scaled = scale(y, 50.0);
    auto m = model.importance_map(scaled);
    REQUIRE(m.has_value());
    CHECK(m->shape() == y.shape());
    CHECK(m->value().array().abs().maxCoeff() < 0.5 + 1e-7);
  }
  cfg.importance = ImportanceMode::Off;
  CodecModel<double> off(cfg, 5);
  CHECK_FALSE(off.importance_map(VarD(TensorD(Shape(1, 8, 4, 4)))).has_value());
  CHECK(off.parameters().count("importance.") == 0);
}

TEST_CASE("prior importance mask ramp") {
  auto cfg = small_config();
  cfg.importance = ImportanceMode::Prior;
  CodecModel<double> model(cfg, 6);
  const Index n = cfg.n_latent;
  TensorD y(Shape(1, n, 1, 3));
  y(0, 0, 0, 0) = 0.0;
  y(0, 0, 0, 1) = static_cast<double>(n);
  y(0, 0, 0, 2) = 3.5;
  auto m = model.importance_map(VarD(y))->value();
  for (Index c = 0; c < n; ++c) {
    CHECK(m(0, c, 0, 0) == 0.0);
    CHECK(m(0, c, 0, 1) == 1.0);
  }
  CHECK(m(0, 3, 0, 2) == 0.5);
  CHECK(m(0, 2, 0, 2) == 1.0);
  CHECK(m(0, 4, 0, 2) == 0.0);
}

TEST_CASE("apply_mask") {
  std::mt19937_64 rng(7);
  VarD y(random_tensor(Shape(1, 4, 3, 3), rng, -5, 5));
  CHECK((apply_mask(y, VarD(TensorD(y.shape(), 0.0))).value().array() == 0).all());
  CHECK((apply_mask(y, VarD(TensorD(y.shape(), 1.0))).value().array() == y.value().array()).all());
  VarD m(random_tensor(y.shape(), rng));
  CHECK((apply_mask(y, m).value().array().abs() <= y.value().array().abs()).all());

  // Zeroing one channel of the mask zeroes that channel of the rounded latent.
  TensorD mt = m.value();
  for (Index i = 0; i < 9; ++i) mt.plane_data(0, 2)[i] = 0;
  auto y_hat = quantize_infer(apply_mask(y, VarD(mt)).value());
  for (Index i = 0; i < 9; ++i) CHECK(y_hat.plane_data(0, 2)[i] == 0.0);
}

TEST_CASE("entropy head is a valid mixture") {
  CodecModel<double> model(small_config(), 8);
  auto r = model.forward(random_image(64, 64, 3), QuantMode::Round);
  const auto& layout = model.mixture_layout();
  MixtureSample mix;
  const Shape& s = r.y_hat.shape();
  for (Index c = 0; c < s.channels(); ++c) {
    for (Index y = 0; y < s.height(); ++y) {
      for (Index x = 0; x < s.width(); ++x) {
        read_mixture(r.head.value(), layout, 0, c, y, x, mix);
        double total = 0;
        for (Index k = 0; k < layout.components; ++k) {
          total += mix.weights[k];
          CHECK(mix.scales[k] >= kScaleMin);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
  CHECK(r.bits_y.value().all_finite());
  CHECK(r.bits_z.value().all_finite());
  CHECK((r.bits_y.value().array() >= 0).all());
}

TEST_CASE("forward is deterministic and noise is seeded") {
  CodecModel<double> a(small_config(), 9);
  CodecModel<double> b(small_config(), 9);
  auto x = random_image(64, 64, 4);
  auto ra = a.forward(x, QuantMode::Noise, 5);
  auto rb = b.forward(x, QuantMode::Noise, 5);
  CHECK((ra.x_hat.value().array() == rb.x_hat.value().array()).all());
  auto rc = a.forward(x, QuantMode::Noise, 6);
  CHECK((ra.y_hat.value().array() != rc.y_hat.value().array()).any());
  auto rr = a.forward(x, QuantMode::Round);
  CHECK((rr.y_hat.value().array() == rr.y_hat.value().array().round()).all());
}

TEST_CASE("every parameter receives gradient from the total objective") {
  CodecModel<double> model(small_config(), 11);
  auto& store = model.parameters();
  store.zero_grad();
  auto x = random_image(64, 64, 12);
  auto r = model.forward(x, QuantMode::Noise, 1);
  auto distortion = mean(square(sub(r.x_hat, x)));
  auto rate = add(sum(r.bits_y), sum(r.bits_z));
  auto pq = model.pqf().loss(r.y_hat, r.y_tilde);
  backward(add(add(scale(distortion, 100.0), scale(rate, 1.0 / 4096)), pq));
  for (const auto& name : store.names()) {
    CAPTURE(name);
    auto p = store.get(name);
    REQUIRE(p.has_grad());
    CHECK(p.grad().array().abs().maxCoeff() > 0);
  }
}

TEST_CASE("decoder gradient reaches the filter only through its own loss") {
  CodecModel<double> model(small_config(), 13);
  auto& store = model.parameters();
  store.zero_grad();
  auto x = random_image(64, 64, 14);
  auto r = model.forward(x, QuantMode::Noise, 2);
  backward(mean(square(sub(r.x_hat, x))));
  CHECK(!store.get("pqf.kernel").has_grad());
  CHECK(store.get("decoder.stage4.up.weight").has_grad());
}

TEST_CASE("model config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.k_mixture = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.k_mixture = 6;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.encoder_msrb_stages = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.decoder_msrb_stages = 0;
  CHECK_NOTHROW(c.validate());
  CHECK(ModelConfig::preset(128).n_latent == 128);
  CHECK(ModelConfig::preset(256).n_hyper == 256);
  CHECK_THROWS_AS(ModelConfig::preset(64), std::invalid_argument);
  CHECK(importance_mode_from_string(to_string(ImportanceMode::Prior)) == ImportanceMode::Prior);
}
