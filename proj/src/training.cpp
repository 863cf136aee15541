#include "asymcodec/training.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "asymcodec/checkpoint.hpp"

namespace asymcodec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "': expected a number, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "off" || value == "no") return false;
  throw ConfigError("'" + key + "': expected on/off, got '" + value + "'");
}

template <typename F>
auto rethrow_as_config(const std::string& key, F f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(Distortion d) { return d == Distortion::Mse ? "mse" : "ms-ssim"; }

Distortion distortion_from_string(const std::string& name) {
  if (name == "mse") return Distortion::Mse;
  if (name == "ms-ssim" || name == "msssim") return Distortion::MsSsim;
  throw std::invalid_argument("unknown distortion '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(lambda > 0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive and finite");
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (lambda1_steps < 0 || lambda1_steps > total_steps) throw ConfigError("lambda1_steps must be in [0, total_steps]");
  if (lr_halving_interval <= 0) throw ConfigError("lr_halving_interval must be positive");
  if (!(lr_base > 0) || !std::isfinite(lr_base)) throw ConfigError("lr_base must be positive and finite");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (crop_min < kPadMultiple || crop_min % kPadMultiple != 0 || crop_max < crop_min || crop_max % kPadMultiple != 0) {
    throw ConfigError("crop sizes must be multiples of 64 with 64 <= crop_min <= crop_max");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  rethrow_as_config("model", [&] { model.validate(); });
}

double TrainConfig::lr_at(long step) const {
  const long half = total_steps / 2;
  if (step < half) return lr_base;
  return lr_base * std::ldexp(1.0, -static_cast<int>(std::min<long>((step - half) / lr_halving_interval, 1000)));
}

long TrainConfig::scaled_lambda1_steps(long total) {
  return std::max<long>(1, std::lround(static_cast<double>(total) * kLambda1Fraction));
}

long TrainConfig::scaled_halving_interval(long total) {
  return std::max<long>(1, std::lround(static_cast<double>(total) * kLrHalvingFraction));
}

bool apply_model_key(ModelConfig& c, const std::string& key, const std::string& value) {
  if (key == "n_latent") {
    c.n_latent = parse_number<Index>(key, value);
  } else if (key == "n_hyper") {
    c.n_hyper = parse_number<Index>(key, value);
  } else if (key == "k_mixture") {
    c.k_mixture = parse_number<Index>(key, value);
  } else if (key == "encoder_msrb_stages") {
    c.encoder_msrb_stages = parse_number<int>(key, value);
  } else if (key == "decoder_msrb_stages") {
    c.decoder_msrb_stages = parse_number<int>(key, value);
  } else if (key == "msrb") {
    if (!parse_bool(key, value)) c.encoder_msrb_stages = c.decoder_msrb_stages = 0;
  } else if (key == "base_width") {
    c.base_width = parse_number<Index>(key, value);
  } else if (key == "attention") {
    c.attention_enabled = parse_bool(key, value);
  } else if (key == "block_kind") {
    c.block_kind = rethrow_as_config(key, [&] { return block_kind_from_string(value); });
  } else if (key == "branch_kernels") {
    const auto comma = value.find(',');
    if (comma == std::string::npos) throw ConfigError("'branch_kernels': expected two sizes as 'a,b'");
    c.branch_kernels = {parse_number<int>(key, trim(value.substr(0, comma))),
                        parse_number<int>(key, trim(value.substr(comma + 1)))};
  } else if (key == "crb_depth") {
    c.crb_depth = parse_number<int>(key, value);
  } else if (key == "importance") {
    c.importance = rethrow_as_config(key, [&] { return importance_mode_from_string(value); });
  } else if (key == "pqf") {
    c.pqf_enabled = parse_bool(key, value);
  } else if (key == "preset") {
    c = rethrow_as_config(key, [&] { return ModelConfig::preset(parse_number<Index>(key, value)); });
  } else {
    return false;
  }
  return true;
}

bool apply_train_key(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "lambda") {
    c.lambda = parse_number<double>(key, value);
  } else if (key == "distortion") {
    c.distortion = rethrow_as_config(key, [&] { return distortion_from_string(value); });
  } else if (key == "total_steps") {
    c.total_steps = parse_number<long>(key, value);
  } else if (key == "lambda1_steps") {
    c.lambda1_steps = parse_number<long>(key, value);
  } else if (key == "lr_halving_interval") {
    c.lr_halving_interval = parse_number<long>(key, value);
  } else if (key == "lr_base") {
    c.lr_base = parse_number<double>(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_number<long>(key, value);
  } else if (key == "crop_min") {
    c.crop_min = parse_number<Index>(key, value);
  } else if (key == "crop_max") {
    c.crop_max = parse_number<Index>(key, value);
  } else if (key == "augment") {
    c.augment = parse_bool(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "checkpoint_every") {
    c.checkpoint_every = parse_number<long>(key, value);
  } else {
    return apply_model_key(c.model, key, value);
  }
  return true;
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(number) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      if (!apply_train_key(c, key, value)) throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (seen.count("total_steps")) {
    if (!seen.count("lambda1_steps")) c.lambda1_steps = TrainConfig::scaled_lambda1_steps(c.total_steps);
    if (!seen.count("lr_halving_interval")) c.lr_halving_interval = TrainConfig::scaled_halving_interval(c.total_steps);
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_train_config(std::string(bytes.begin(), bytes.end()));
}

std::string format_train_config(const TrainConfig& c) {
  const auto& m = c.model;
  std::ostringstream os;
  os << "lambda = " << format_double(c.lambda) << "\n"
     << "distortion = " << to_string(c.distortion) << "\n"
     << "total_steps = " << c.total_steps << "\n"
     << "lambda1_steps = " << c.lambda1_steps << "\n"
     << "lr_halving_interval = " << c.lr_halving_interval << "\n"
     << "lr_base = " << format_double(c.lr_base) << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "crop_min = " << c.crop_min << "\n"
     << "crop_max = " << c.crop_max << "\n"
     << "augment = " << (c.augment ? "on" : "off") << "\n"
     << "seed = " << c.seed << "\n"
     << "checkpoint_every = " << c.checkpoint_every << "\n"
     << "n_latent = " << m.n_latent << "\n"
     << "n_hyper = " << m.n_hyper << "\n"
     << "k_mixture = " << m.k_mixture << "\n"
     << "encoder_msrb_stages = " << m.encoder_msrb_stages << "\n"
     << "decoder_msrb_stages = " << m.decoder_msrb_stages << "\n"
     << "base_width = " << m.base_width << "\n"
     << "attention = " << (m.attention_enabled ? "on" : "off") << "\n"
     << "block_kind = " << to_string(m.block_kind) << "\n"
     << "branch_kernels = " << m.branch_kernels[0] << "," << m.branch_kernels[1] << "\n"
     << "crb_depth = " << m.crb_depth << "\n"
     << "importance = " << to_string(m.importance) << "\n"
     << "pqf = " << (m.pqf_enabled ? "on" : "off") << "\n";
  return os.str();
}

std::vector<NamedImage> load_image_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DatasetError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  }
  if (files.empty()) throw DatasetError("no .ppm images in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<NamedImage> out;
  for (const auto& f : files) out.push_back({f.filename().string(), read_ppm(f)});
  return out;
}

CropSampler::CropSampler(std::vector<Image> images, Index crop_min, Index crop_max, bool augment, std::uint64_t seed)
    : images_(std::move(images)), crop_min_(crop_min), crop_max_(crop_max), augment_(augment), rng_(seed) {
  if (images_.empty()) throw ConfigError("training dataset is empty");
  for (std::size_t i = 0; i < images_.size(); ++i) {
    if (std::min(images_[i].width, images_[i].height) < crop_min_) {
      throw ImageError("training image " + std::to_string(i) + " is " + std::to_string(images_[i].width) + "x" +
                       std::to_string(images_[i].height) + ", smaller than the " + std::to_string(crop_min_) +
                       " crop");
    }
  }
}

TensorF CropSampler::next(long batch) {
  std::vector<std::size_t> picks(static_cast<std::size_t>(batch));
  Index fit = crop_max_;
  for (auto& p : picks) {
    p = static_cast<std::size_t>(rng_() % images_.size());
    fit = std::min({fit, images_[p].width, images_[p].height});
  }
  const Index choices = (fit - crop_min_) / kPadMultiple + 1;
  const Index side = crop_min_ + static_cast<Index>(rng_() % static_cast<std::uint64_t>(choices)) * kPadMultiple;

  TensorF out(Shape(batch, 3, side, side));
  for (Index n = 0; n < batch; ++n) {
    const Image& img = images_[picks[static_cast<std::size_t>(n)]];
    const Index oy = static_cast<Index>(rng_() % static_cast<std::uint64_t>(img.height - side + 1));
    const Index ox = static_cast<Index>(rng_() % static_cast<std::uint64_t>(img.width - side + 1));
    const bool flip = augment_ && (rng_() & 1);
    const int turns = augment_ ? static_cast<int>(rng_() % 4) : 0;
    for (Index y = 0; y < side; ++y) {
      for (Index x = 0; x < side; ++x) {
        Index sy = y, sx = x;
        for (int t = 0; t < turns; ++t) {
          const Index ny = sx, nx = side - 1 - sy;
          sy = ny;
          sx = nx;
        }
        if (flip) sx = side - 1 - sx;
        for (int c = 0; c < 3; ++c) out(n, c, y, x) = static_cast<float>(img.at(oy + sy, ox + sx, c)) / 127.5f - 1.0f;
      }
    }
  }
  return out;
}

std::string format_log_row(const StepLog& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%g", r.step, r.loss, r.distortion, r.rate, r.l_pq,
                r.lr, r.lambda1);
  return buf;
}

Trainer::Trainer(const TrainConfig& config, std::vector<Image> dataset)
    : config_((config.validate(), config)),
      model_(std::make_unique<TrainModel>(config.model, config.seed)),
      sampler_(std::move(dataset), config.crop_min, config.crop_max, config.augment, config.seed ^ 0x9e3779b97f4a7c15ull),
      params_(model_->parameters().all()) {}

StepLog Trainer::step() {
  const TensorF batch = sampler_.next(config_.batch_size);
  const double lambda1 = config_.lambda1_at(step_);
  const double lr = config_.lr_at(step_);

  model_->parameters().zero_grad();
  const Var<float> x(batch);
  const auto r = model_->forward(x, QuantMode::Noise, config_.seed * 1000003ull + static_cast<std::uint64_t>(step_));
  const Var<float> l_pq = model_->pqf().defined() ? model_->pqf().loss(r.y_hat, r.y_tilde) : Var<float>();
  const auto terms = total_loss(x, r, l_pq, config_.lambda, lambda1, config_.distortion);
  const double loss = static_cast<double>(terms.total.value()[0]);
  if (!std::isfinite(loss)) throw TrainingError("non-finite loss at step " + std::to_string(step_));
  backward(terms.total);
  adam_step(params_, adam_, lr);

  StepLog row{step_, loss, terms.distortion, terms.rate(), terms.l_pq, lr, lambda1};
  ++step_;
  return row;
}

std::vector<StepLog> Trainer::run(const std::function<void(const StepLog&)>& on_step,
                                  const std::optional<std::filesystem::path>& checkpoint_dir) {
  std::vector<StepLog> log;
  while (step_ < config_.total_steps) {
    log.push_back(step());
    if (on_step) on_step(log.back());
    if (checkpoint_dir && config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06ld.alc", step_);
      save_model(*checkpoint_dir / name, *model_);
    }
  }
  if (checkpoint_dir) save_model(*checkpoint_dir / "final.alc", *model_);
  return log;
}

LossTerms<float> evaluate_loss(const TrainModel& model, const TensorF& x, double lambda, Distortion distortion,
                               std::uint64_t seed) {
  NoGradGuard guard;
  const Var<float> xv(x);
  const auto r = model.forward(xv, QuantMode::Noise, seed);
  const Var<float> l_pq = model.pqf().defined() ? model.pqf().loss(r.y_hat, r.y_tilde) : Var<float>();
  return total_loss(xv, r, l_pq, lambda, 0.0, distortion);
}

}  // namespace asymcodec
