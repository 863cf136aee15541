#include "asymcodec/blocks.hpp"

#include <stdexcept>

namespace asymcodec {

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::ResidualBlock:
      return "residual";
    case BlockKind::Crb:
      return "crb";
    case BlockKind::OriginalMsrb:
      return "original_msrb";
    case BlockKind::ImprovedMsrb:
      return "improved_msrb";
  }
  return "unknown";
}

BlockKind block_kind_from_string(const std::string& name) {
  if (name == "residual") return BlockKind::ResidualBlock;
  if (name == "crb") return BlockKind::Crb;
  if (name == "original_msrb") return BlockKind::OriginalMsrb;
  if (name == "improved_msrb") return BlockKind::ImprovedMsrb;
  throw std::invalid_argument("unknown block kind '" + name + "'");
}

void BlockConfig::validate() const {
  if (channels <= 0) throw std::invalid_argument("block channels must be positive");
  if (kind == BlockKind::OriginalMsrb || kind == BlockKind::ImprovedMsrb) {
    for (int k : branch_kernels) {
      if (k <= 0 || k % 2 == 0) throw std::invalid_argument("branch kernel sizes must be odd, got " + std::to_string(k));
    }
    if (branch_kernels[0] == branch_kernels[1]) throw std::invalid_argument("branch kernel sizes must differ");
    if (channels % 2 != 0) throw std::invalid_argument("MSRB channels must be even");
  }
  if (kind == BlockKind::Crb && crb_depth <= 0) throw std::invalid_argument("CRB depth must be positive");
}

}  // namespace asymcodec
