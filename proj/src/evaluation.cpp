#include "asymcodec/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "asymcodec/codec.hpp"

namespace asymcodec {

RdPoint evaluate_image(const CodecModel<float>& model, const Image& image, std::uint64_t id, bool use_pqf) {
  const auto bytes = compress(model, image, id, use_pqf).serialize();
  const Image decoded = decompress(model, CodecBitstream::parse(bytes), id);
  const auto ref = image_to_tensor<double>(image), out = image_to_tensor<double>(decoded);
  return RdPoint::make(bits_per_pixel(bytes.size(), image.width, image.height), psnr(ref, out), ms_ssim(ref, out));
}

std::vector<RdPoint> evaluate_images(const CodecModel<float>& model, const std::vector<Image>& images,
                                     std::uint64_t id, unsigned threads, bool use_pqf) {
  std::vector<RdPoint> out(images.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      try {
        out[i] = evaluate_image(model, images[i], id, use_pqf);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = images.size();
      }
    }
  };
  const unsigned n = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(std::max<std::size_t>(images.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

RdPoint mean_point(const std::vector<RdPoint>& points) {
  RdPoint m;
  if (points.empty()) return m;
  for (const auto& p : points) {
    m.bpp += p.bpp;
    m.psnr_db += p.psnr_db;
    m.msssim += p.msssim;
    m.msssim_db += p.msssim_db;
  }
  const auto n = static_cast<double>(points.size());
  m.bpp /= n;
  m.psnr_db /= n;
  m.msssim /= n;
  m.msssim_db /= n;
  return m;
}

std::string format_eval_row(const std::string& name, const RdPoint& p) {
  char buf[128];
  std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g", p.bpp, p.psnr_db, p.msssim, p.msssim_db);
  return name + buf;
}

}  // namespace asymcodec
