#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "asymcodec/ablation.hpp"
#include "asymcodec/checkpoint.hpp"
#include "asymcodec/codec.hpp"
#include "asymcodec/evaluation.hpp"
#include "asymcodec/training.hpp"

namespace fs = std::filesystem;
using namespace asymcodec;

namespace {

enum ExitCode : int {
  kOk = 0,
  kBadArgs = 2,
  kIoError = 3,
  kCheckpointError = 4,
  kInternalError = 5,
  kBitstreamError = 6,
};

unsigned worker_threads() {
  if (const char* env = std::getenv("ASYMCODEC_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw ConfigError(std::string("ASYMCODEC_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_text(const fs::path& path, const std::string& text) { write_file(path, std::vector<std::uint8_t>(text.begin(), text.end())); }

struct Loaded {
  std::unique_ptr<CodecModel<float>> model;
  std::uint64_t id = 0;
};

Loaded load(const fs::path& path) {
  const auto bytes = read_file(path);
  Loaded out;
  out.model = instantiate<float>(decode_checkpoint(bytes));
  out.id = fnv1a64(bytes);
  return out;
}

int cmd_encode(const fs::path& model_path, const fs::path& input, const fs::path& output, bool no_pqf) {
  const auto m = load(model_path);
  const Image img = read_ppm(input);
  const auto bytes = compress(*m.model, img, m.id, !no_pqf).serialize();
  write_file(output, bytes);
  std::printf("%ldx%ld %zu bytes %.6f bpp\n", static_cast<long>(img.width), static_cast<long>(img.height), bytes.size(),
              bits_per_pixel(bytes.size(), img.width, img.height));
  return kOk;
}

int cmd_decode(const fs::path& model_path, const fs::path& input, const fs::path& output) {
  const auto m = load(model_path);
  const auto stream = CodecBitstream::parse(read_file(input));
  write_ppm(output, decompress(*m.model, stream, m.id));
  return kOk;
}

int cmd_eval(const fs::path& model_path, const fs::path& dataset, const fs::path& csv, bool no_pqf) {
  const auto m = load(model_path);
  const auto files = load_image_dir(dataset);
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(f.image);
  const auto points = evaluate_images(*m.model, images, m.id, worker_threads(), !no_pqf);
  std::string out = std::string(kEvalCsvHeader) + "\n";
  for (std::size_t i = 0; i < points.size(); ++i) out += format_eval_row(files[i].name, points[i]) + "\n";
  const auto mean = mean_point(points);
  out += format_eval_row("mean", mean) + "\n";
  write_text(csv, out);
  std::printf("%zu images: %.6f bpp, %.4f dB PSNR, %.6f MS-SSIM\n", points.size(), mean.bpp, mean.psnr_db, mean.msssim);
  return kOk;
}

int cmd_train(const fs::path& config_path, const fs::path& dataset, const fs::path& out_dir, long log_every) {
  const auto config = load_train_config(config_path);
  std::vector<Image> images;
  for (auto& f : load_image_dir(dataset)) images.push_back(std::move(f.image));
  fs::create_directories(out_dir);
  write_text(out_dir / "config.txt", format_train_config(config));
  std::ofstream log(out_dir / "train_log.csv");
  if (!log) throw std::ios_base::failure("cannot write " + (out_dir / "train_log.csv").string());
  log << kTrainLogHeader << "\n";
  Trainer trainer(config, std::move(images));
  trainer.run(
      [&](const StepLog& r) {
        log << format_log_row(r) << "\n";
        if (log_every > 0 && (r.step % log_every == 0 || r.step + 1 == config.total_steps)) {
          std::fprintf(stderr, "step %ld loss %.6g D %.6g R %.6g bpp L_PQ %.6g lr %.3g\n", r.step, r.loss,
                       r.distortion, r.rate, r.l_pq, r.lr);
        }
      },
      out_dir);
  log.flush();
  if (!log) throw std::ios_base::failure("failed writing the training log");
  std::printf("wrote %s\n", (out_dir / "final.alc").string().c_str());
  return kOk;
}

int cmd_ablate(const fs::path& plan_path, const fs::path& out_dir, long log_every) {
  const auto plan = load_ablation_plan(plan_path);
  std::vector<Image> train, eval;
  for (auto& f : load_image_dir(plan.train_dir)) train.push_back(std::move(f.image));
  for (auto& f : load_image_dir(plan.eval_dir)) eval.push_back(std::move(f.image));
  fs::create_directories(out_dir);
  const auto rows = run_ablation(
      plan, train, eval, worker_threads(),
      [&](const std::string& variant, double lambda, const StepLog& r) {
        if (log_every > 0 && r.step % log_every == 0) {
          std::fprintf(stderr, "%s lambda=%g step %ld loss %.6g\n", variant.c_str(), lambda, r.step, r.loss);
        }
      },
      out_dir);
  write_text(out_dir / "ablation.csv", format_ablation_csv(rows));
  const auto table = format_ablation_table(rows);
  write_text(out_dir / "ablation.txt", table);
  std::fputs(table.c_str(), stdout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asymmetric learned image codec"};
  app.require_subcommand(1);

  fs::path model, input, output, dataset, csv, config, plan, out_dir;
  bool no_pqf = false;
  long log_every = 100;

  auto* encode = app.add_subcommand("encode", "Compress a PPM image");
  encode->add_option("--model", model, "Checkpoint (.alc)")->required();
  encode->add_option("--input", input, "Input image (binary PPM)")->required();
  encode->add_option("--output", output, "Output bitstream")->required();
  encode->add_flag("--no-pqf", no_pqf, "Mark the stream to be decoded without the post-quantization filter");

  auto* decode = app.add_subcommand("decode", "Decompress a bitstream to PPM");
  decode->add_option("--model", model, "Checkpoint (.alc)")->required();
  decode->add_option("--input", input, "Input bitstream")->required();
  decode->add_option("--output", output, "Output image (binary PPM)")->required();

  auto* eval = app.add_subcommand("eval", "Rate-distortion of every image in a directory");
  eval->add_option("--model", model, "Checkpoint (.alc)")->required();
  eval->add_option("--dataset", dataset, "Directory of PPM images")->required();
  eval->add_option("--csv", csv, "Output CSV")->required();
  eval->add_flag("--no-pqf", no_pqf, "Decode without the post-quantization filter");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config, "Training configuration (key = value)")->required();
  train->add_option("--dataset", dataset, "Directory of PPM images")->required();
  train->add_option("--out", out_dir, "Output directory for checkpoints and the log")->required();
  train->add_option("--log-every", log_every, "Progress interval on stderr (0 disables)");

  auto* ablate = app.add_subcommand("ablate", "Train and compare ablation variants");
  ablate->add_option("--plan", plan, "Ablation plan")->required();
  ablate->add_option("--out", out_dir, "Output directory")->required();
  ablate->add_option("--log-every", log_every, "Progress interval on stderr (0 disables)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadArgs;
  }

  try {
    if (*encode) return cmd_encode(model, input, output, no_pqf);
    if (*decode) return cmd_decode(model, input, output);
    if (*eval) return cmd_eval(model, dataset, csv, no_pqf);
    if (*train) return cmd_train(config, dataset, out_dir, log_every);
    if (*ablate) return cmd_ablate(plan, out_dir, log_every);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const ImageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const CheckpointError& e) {
    std::cerr << "error: corrupt checkpoint: " << e.what() << "\n";
    return kCheckpointError;
  } catch (const BitstreamError& e) {
    std::cerr << "error: invalid bitstream: " << e.what() << "\n";
    return kBitstreamError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kInternalError;
}
