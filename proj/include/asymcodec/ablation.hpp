#ifndef ASYMCODEC_ABLATION_HPP
#define ASYMCODEC_ABLATION_HPP

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "asymcodec/training.hpp"

namespace asymcodec {

struct AblationVariant {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
  TrainConfig config;
};

/// Shared training settings plus one section per variant:
///
///   train = images/          # relative to the plan file
///   eval = images/           # optional, defaults to train
///   lambdas = 0.01, 0.03
///   total_steps = 3000
///   [baseline]
///   msrb = off
///   [asymmetric]
///   decoder_msrb_stages = 1
///
/// Each variant trains once per lambda with the same seed and data.
struct AblationPlan {
  TrainConfig base;
  std::vector<double> lambdas;
  std::filesystem::path train_dir, eval_dir;
  std::vector<AblationVariant> variants;
};

/// Throws ConfigError on syntax errors, unknown keys, and flag combinations
/// that cannot be realized (block settings with MSRB disabled, branch kernels
/// on a kind without branches, decoder stages without encoder stages, ...).
AblationPlan parse_ablation_plan(const std::string& text, const std::filesystem::path& base_dir);
AblationPlan load_ablation_plan(const std::filesystem::path& path);

struct AblationResult {
  std::string variant;
  double lambda = 0;
  Index parameters = 0, encoder_parameters = 0, decoder_parameters = 0;
  double final_loss = 0;
  RdPoint point;
};

using AblationProgress = std::function<void(const std::string& variant, double lambda, const StepLog&)>;

/// Trains every (variant, lambda) pair and evaluates it on `eval` by real
/// encode/decode. Rows are ordered by variant, then lambda.
std::vector<AblationResult> run_ablation(const AblationPlan& plan, const std::vector<Image>& train,
                                         const std::vector<Image>& eval, unsigned threads,
                                         const AblationProgress& progress = {},
                                         const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

inline constexpr const char* kAblationCsvHeader =
    "variant,lambda,parameters,encoder_parameters,decoder_parameters,final_loss,bpp,psnr_db,msssim,msssim_db";
std::string format_ablation_csv(const std::vector<AblationResult>& rows);

/// Text table comparing each variant against the first one at equal lambda,
/// with BD-rate when a variant has at least four points.
std::string format_ablation_table(const std::vector<AblationResult>& rows);

/// Encoder and decoder parameter counts of a model.
template <typename Scalar>
std::pair<Index, Index> split_parameter_count(const CodecModel<Scalar>& model) {
  const auto& p = model.parameters();
  return {p.count("encoder."), p.count("decoder.")};
}

}  // namespace asymcodec

#endif  // ASYMCODEC_ABLATION_HPP
