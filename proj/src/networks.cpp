#include "asymcodec/networks.hpp"

#include <stdexcept>

namespace asymcodec {

std::string to_string(ImportanceMode mode) {
  switch (mode) {
    case ImportanceMode::Learned:
      return "learned";
    case ImportanceMode::Off:
      return "off";
    case ImportanceMode::Prior:
      return "prior";
  }
  return "unknown";
}

ImportanceMode importance_mode_from_string(const std::string& name) {
  if (name == "learned" || name == "on") return ImportanceMode::Learned;
  if (name == "off") return ImportanceMode::Off;
  if (name == "prior") return ImportanceMode::Prior;
  throw std::invalid_argument("unknown importance mode '" + name + "'");
}

void ModelConfig::validate() const {
  if (n_latent <= 0) throw std::invalid_argument("n_latent must be positive");
  if (n_hyper <= 0) throw std::invalid_argument("n_hyper must be positive");
  if (k_mixture < 1 || k_mixture > 5) throw std::invalid_argument("k_mixture must be in [1, 5]");
  if (base_width <= 0) throw std::invalid_argument("base_width must be positive");
  if (encoder_msrb_stages < 0 || encoder_msrb_stages > 3) {
    throw std::invalid_argument("encoder_msrb_stages must be in [0, 3]");
  }
  if (decoder_msrb_stages < 0 || decoder_msrb_stages > 3) {
    throw std::invalid_argument("decoder_msrb_stages must be in [0, 3]");
  }
  if ((encoder_msrb_stages == 0) != (decoder_msrb_stages == 0)) {
    throw std::invalid_argument("MSRB stages must be disabled in encoder and decoder together");
  }
  if (encoder_msrb_stages > 0) block(base_width).validate();
}

ModelConfig ModelConfig::preset(Index n) {
  if (n != 128 && n != 256) throw std::invalid_argument("presets exist for N = 128 and N = 256");
  ModelConfig c;
  c.n_latent = n;
  c.n_hyper = n;
  c.base_width = n == 128 ? 128 : 192;
  return c;
}

}  // namespace asymcodec
