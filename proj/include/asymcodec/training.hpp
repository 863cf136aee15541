#ifndef ASYMCODEC_TRAINING_HPP
#define ASYMCODEC_TRAINING_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "asymcodec/adam.hpp"
#include "asymcodec/image.hpp"
#include "asymcodec/metrics.hpp"
#include "asymcodec/networks.hpp"

namespace asymcodec {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or empty image directory.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration or plan text.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Distortion { Mse, MsSsim };

std::string to_string(Distortion d);
Distortion distortion_from_string(const std::string& name);

/// Rate-distortion trade-offs used for the full-size models.
inline constexpr double kFullSizeMseLambdas[] = {0.0016, 0.0032, 0.0075, 0.015, 0.023, 0.03, 0.045};
inline constexpr double kFullSizeMsSsimLambdas[] = {12, 40, 80, 120};

/// Full-size schedule: lambda1 phase of 20 000 and lr halving every 100 000
/// of 1.5e6 steps. Desk runs keep these ratios.
inline constexpr double kLambda1Fraction = 20000.0 / 1.5e6;
inline constexpr double kLrHalvingFraction = 100000.0 / 1.5e6;

struct TrainConfig {
  double lambda = 0.01;
  Distortion distortion = Distortion::Mse;
  long total_steps = 150000;
  long lambda1_steps = 2000;
  long lr_halving_interval = 10000;
  double lr_base = 1e-4;
  long batch_size = 8;
  Index crop_min = 64;
  Index crop_max = 384;
  bool augment = true;
  std::uint64_t seed = 1;
  long checkpoint_every = 0;
  ModelConfig model;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  /// lambda1 is 1 for the first lambda1_steps steps and 0 afterwards.
  double lambda1_at(long step) const { return step < lambda1_steps ? 1.0 : 0.0; }

  /// lr_base through the first half; in the second half halved after every
  /// lr_halving_interval steps.
  double lr_at(long step) const;

  /// Schedule lengths derived from total_steps by the full-size ratios.
  static long scaled_lambda1_steps(long total_steps);
  static long scaled_halving_interval(long total_steps);
};

/// Applies one model key ("n_latent", "block_kind", ...). Returns false for
/// keys that are not model keys; throws ConfigError on bad values.
bool apply_model_key(ModelConfig& config, const std::string& key, const std::string& value);

/// Applies one training or model key. Returns false for unknown keys.
bool apply_train_key(TrainConfig& config, const std::string& key, const std::string& value);

/// `key = value` lines, '#' comments, blank lines ignored. When total_steps is
/// given without lambda1_steps or lr_halving_interval, those follow the
/// full-size ratios. Throws ConfigError with the line number on any problem.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& config);

/// Every .ppm file in `dir`, sorted by name. Throws DatasetError when the
/// directory is missing or holds none and ImageError for unreadable files.
struct NamedImage {
  std::string name;
  Image image;
};
std::vector<NamedImage> load_image_dir(const std::filesystem::path& dir);

/// Draws training batches: per step one side length (a multiple of 64 in
/// [crop_min, crop_max] that fits every chosen image), random offsets, and
/// optionally a random horizontal flip and quarter-turn rotation.
class CropSampler {
 public:
  CropSampler(std::vector<Image> images, Index crop_min, Index crop_max, bool augment, std::uint64_t seed);

  /// (batch, 3, s, s) samples in [-1, 1].
  TensorF next(long batch);

  std::size_t size() const { return images_.size(); }

 private:
  std::vector<Image> images_;
  Index crop_min_, crop_max_;
  bool augment_;
  std::mt19937_64 rng_;
};

/// Loss value and its components. Rates are in bits per pixel.
template <typename Scalar>
struct LossTerms {
  Var<Scalar> total;
  double distortion = 0, rate_y = 0, rate_z = 0, l_pq = 0;

  double rate() const { return rate_y + rate_z; }
};

/// L = lambda * D + R_y + R_z + lambda1 * L_PQ. D is the per-pixel MSE on the
/// [0, 255] scale or 1 - MS-SSIM. The filter loss enters the graph only when
/// lambda1 is nonzero. Throws TrainingError when a component is not finite.
template <typename Scalar>
LossTerms<Scalar> total_loss(const Var<Scalar>& x, const ForwardResult<Scalar>& r, const Var<Scalar>& l_pq,
                             double lambda, double lambda1, Distortion distortion) {
  const Shape& s = x.shape();
  const auto pixels = static_cast<Scalar>(s.batch() * s.height() * s.width());
  Var<Scalar> d;
  if (distortion == Distortion::Mse) {
    d = scale(mean(square(sub(r.x_hat, x))), Scalar(127.5 * 127.5));
  } else {
    const auto to255 = [](const Var<Scalar>& v) { return scale(add_scalar(v, Scalar(1)), Scalar(127.5)); };
    d = add_scalar(scale(ms_ssim_var(to255(x), to255(r.x_hat)), Scalar(-1)), Scalar(1));
  }
  const auto ry = scale(sum(r.bits_y), Scalar(1) / pixels);
  const auto rz = scale(sum(r.bits_z), Scalar(1) / pixels);

  LossTerms<Scalar> out;
  out.distortion = static_cast<double>(d.value()[0]);
  out.rate_y = static_cast<double>(ry.value()[0]);
  out.rate_z = static_cast<double>(rz.value()[0]);
  out.l_pq = l_pq.defined() ? static_cast<double>(l_pq.value()[0]) : 0.0;
  const std::pair<const char*, double> parts[] = {
      {"distortion", out.distortion}, {"rate_y", out.rate_y}, {"rate_z", out.rate_z}, {"l_pq", out.l_pq}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw TrainingError(std::string("non-finite loss component ") + name + " = " + std::to_string(v));
  }

  out.total = add(add(scale(d, static_cast<Scalar>(lambda)), ry), rz);
  if (lambda1 != 0 && l_pq.defined()) out.total = add(out.total, scale(l_pq, static_cast<Scalar>(lambda1)));
  return out;
}

/// One row of the metric log.
struct StepLog {
  long step = 0;
  double loss = 0, distortion = 0, rate = 0, l_pq = 0, lr = 0, lambda1 = 0;
};

inline constexpr const char* kTrainLogHeader = "step,loss,distortion,rate_bpp,l_pq,lr,lambda1";
std::string format_log_row(const StepLog& row);

using TrainModel = CodecModel<float>;

/// Adam training at desk scale. Deterministic given the configuration seed.
class Trainer {
 public:
  /// Throws ConfigError for an invalid configuration or an empty dataset and
  /// ImageError when an image is smaller than the minimum crop.
  Trainer(const TrainConfig& config, std::vector<Image> dataset);

  /// Runs one optimizer step. Throws TrainingError on a non-finite loss.
  StepLog step();

  /// Steps until total_steps. When `checkpoint_dir` is set, writes
  /// step_NNNNNN.alc every checkpoint_every steps and final.alc at the end.
  std::vector<StepLog> run(const std::function<void(const StepLog&)>& on_step = {},
                           const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

  TrainModel& model() { return *model_; }
  const TrainModel& model() const { return *model_; }
  const TrainConfig& config() const { return config_; }
  long steps_done() const { return step_; }

 private:
  TrainConfig config_;
  std::unique_ptr<TrainModel> model_;
  CropSampler sampler_;
  std::vector<Var<float>> params_;
  AdamState<float> adam_;
  long step_ = 0;
};

/// Loss components of `x` (batch 1, padded) under noise quantization, without
/// recording a graph. Used to compare estimated and coded rates.
LossTerms<float> evaluate_loss(const TrainModel& model, const TensorF& x, double lambda, Distortion distortion,
                               std::uint64_t seed);

}  // namespace asymcodec

#endif  // ASYMCODEC_TRAINING_HPP
