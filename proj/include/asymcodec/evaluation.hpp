#ifndef ASYMCODEC_EVALUATION_HPP
#define ASYMCODEC_EVALUATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "asymcodec/image.hpp"
#include "asymcodec/metrics.hpp"
#include "asymcodec/networks.hpp"

namespace asymcodec {

/// Codes `image`, decodes the stream, and measures the round trip. bpp counts
/// every byte of the serialized stream over the true pixel count.
RdPoint evaluate_image(const CodecModel<float>& model, const Image& image, std::uint64_t id, bool use_pqf = true);

/// evaluate_image over `images` with up to `threads` workers. Results keep
/// the input order regardless of scheduling.
std::vector<RdPoint> evaluate_images(const CodecModel<float>& model, const std::vector<Image>& images,
                                     std::uint64_t id, unsigned threads, bool use_pqf = true);

/// Arithmetic mean of every column.
RdPoint mean_point(const std::vector<RdPoint>& points);

inline constexpr const char* kEvalCsvHeader = "name,bpp,psnr_db,msssim,msssim_db";
std::string format_eval_row(const std::string& name, const RdPoint& p);

}  // namespace asymcodec

#endif  // ASYMCODEC_EVALUATION_HPP
