#include "asymcodec/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <tuple>

#include "asymcodec/checkpoint.hpp"
#include "asymcodec/evaluation.hpp"

namespace asymcodec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<double> parse_lambdas(const std::string& value) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(trim(item), &used);
      if (used != trim(item).size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("'lambdas': expected comma-separated numbers, got '" + value + "'");
    }
  }
  if (out.empty()) throw ConfigError("'lambdas' is empty");
  return out;
}

bool has_key(const AblationVariant& v, const std::string& key) {
  for (const auto& [k, value] : v.overrides) {
    if (k == key) return true;
  }
  return false;
}

void check_combination(const AblationVariant& v) {
  const auto& m = v.config.model;
  const std::string where = "variant '" + v.name + "': ";
  if (m.encoder_msrb_stages == 0 || m.decoder_msrb_stages == 0) {
    for (const char* key : {"block_kind", "branch_kernels", "crb_depth"}) {
      if (has_key(v, key)) throw ConfigError(where + std::string(key) + " has no effect with MSRB disabled");
    }
  }
  const bool branches = m.block_kind == BlockKind::OriginalMsrb || m.block_kind == BlockKind::ImprovedMsrb;
  if (!branches && has_key(v, "branch_kernels")) {
    throw ConfigError(where + "branch_kernels requires an MSRB block kind");
  }
  if (m.block_kind != BlockKind::Crb && has_key(v, "crb_depth")) {
    throw ConfigError(where + "crb_depth requires block_kind = crb");
  }
  if (has_key(v, "lambda")) throw ConfigError(where + "lambda is set by the plan's lambdas list");
  try {
    v.config.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  }
}

}  // namespace

AblationPlan parse_ablation_plan(const std::string& text, const std::filesystem::path& base_dir) {
  AblationPlan plan;
  std::set<std::string> base_keys;
  std::set<std::string> names;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  bool in_variant = false;
  bool have_train = false, have_eval = false;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(number) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (name.empty() || name.find_first_of(", ") != std::string::npos) {
        throw ConfigError(where + "variant names must be non-empty without spaces or commas");
      }
      if (!names.insert(name).second) throw ConfigError(where + "duplicate variant '" + name + "'");
      plan.variants.push_back({name, {}, {}});
      in_variant = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (in_variant) {
      auto& current = plan.variants.back();
      if (has_key(current, key)) throw ConfigError(where + "duplicate key '" + key + "'");
      current.overrides.emplace_back(key, value);
      continue;
    }
    if (!base_keys.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      if (key == "train") {
        plan.train_dir = base_dir / value;
        have_train = true;
      } else if (key == "eval") {
        plan.eval_dir = base_dir / value;
        have_eval = true;
      } else if (key == "lambdas") {
        plan.lambdas = parse_lambdas(value);
      } else if (key == "lambda") {
        throw ConfigError("use 'lambdas' in ablation plans");
      } else if (!apply_train_key(plan.base, key, value)) {
        throw ConfigError("unknown key '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (!have_train) throw ConfigError("ablation plan needs a 'train' directory");
  if (!have_eval) plan.eval_dir = plan.train_dir;
  if (plan.lambdas.empty()) plan.lambdas.push_back(plan.base.lambda);
  if (plan.variants.empty()) throw ConfigError("ablation plan has no variants");
  if (base_keys.count("total_steps")) {
    if (!base_keys.count("lambda1_steps")) plan.base.lambda1_steps = TrainConfig::scaled_lambda1_steps(plan.base.total_steps);
    if (!base_keys.count("lr_halving_interval")) {
      plan.base.lr_halving_interval = TrainConfig::scaled_halving_interval(plan.base.total_steps);
    }
  }
  for (double l : plan.lambdas) {
    TrainConfig probe = plan.base;
    probe.lambda = l;
    probe.validate();
  }
  for (auto& v : plan.variants) {
    v.config = plan.base;
    for (const auto& [key, value] : v.overrides) {
      try {
        if (!apply_train_key(v.config, key, value)) throw ConfigError("unknown key '" + key + "'");
      } catch (const ConfigError& e) {
        throw ConfigError("variant '" + v.name + "': " + e.what());
      }
    }
    check_combination(v);
  }
  return plan;
}

AblationPlan load_ablation_plan(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_ablation_plan(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

std::vector<AblationResult> run_ablation(const AblationPlan& plan, const std::vector<Image>& train,
                                         const std::vector<Image>& eval, unsigned threads,
                                         const AblationProgress& progress,
                                         const std::optional<std::filesystem::path>& checkpoint_dir) {
  std::vector<AblationResult> rows;
  for (const auto& v : plan.variants) {
    for (double lambda : plan.lambdas) {
      TrainConfig cfg = v.config;
      cfg.lambda = lambda;
      Trainer trainer(cfg, train);
      StepLog last;
      trainer.run([&](const StepLog& r) {
        last = r;
        if (progress) progress(v.name, lambda, r);
      });
      const auto& model = trainer.model();
      const auto id = model_id(model);
      if (checkpoint_dir) {
        char name[64];
        std::snprintf(name, sizeof name, "_%g.alc", lambda);
        save_model(*checkpoint_dir / (v.name + name), model);
      }
      AblationResult r;
      r.variant = v.name;
      r.lambda = lambda;
      r.parameters = model.parameters().count();
      std::tie(r.encoder_parameters, r.decoder_parameters) = split_parameter_count(model);
      r.final_loss = last.loss;
      r.point = mean_point(evaluate_images(model, eval, id, threads));
      rows.push_back(r);
    }
  }
  return rows;
}

std::string format_ablation_csv(const std::vector<AblationResult>& rows) {
  std::string out = std::string(kAblationCsvHeader) + "\n";
  for (const auto& r : rows) {
    char buf[320];
    std::snprintf(buf, sizeof buf, "%s,%.17g,%ld,%ld,%ld,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.variant.c_str(), r.lambda,
                  static_cast<long>(r.parameters), static_cast<long>(r.encoder_parameters),
                  static_cast<long>(r.decoder_parameters), r.final_loss, r.point.bpp, r.point.psnr_db, r.point.msssim,
                  r.point.msssim_db);
    out += buf;
  }
  return out;
}

std::string format_ablation_table(const std::vector<AblationResult>& rows) {
  if (rows.empty()) return {};
  const std::string reference = rows.front().variant;
  auto reference_at = [&](double lambda) -> const AblationResult* {
    for (const auto& r : rows) {
      if (r.variant == reference && r.lambda == lambda) return &r;
    }
    return nullptr;
  };
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %8s %10s %10s %8s %9s %9s %8s\n", "variant", "lambda", "params", "dec_params",
                "bpp", "psnr_db", "d_psnr", "d_bpp");
  os << buf;
  for (const auto& r : rows) {
    const auto* ref = reference_at(r.lambda);
    const double dp = ref ? r.point.psnr_db - ref->point.psnr_db : 0.0;
    const double db = ref ? r.point.bpp - ref->point.bpp : 0.0;
    std::snprintf(buf, sizeof buf, "%-20s %8g %10ld %10ld %8.4f %9.3f %+9.3f %+8.4f\n", r.variant.c_str(), r.lambda,
                  static_cast<long>(r.parameters), static_cast<long>(r.decoder_parameters), r.point.bpp,
                  r.point.psnr_db, dp, db);
    os << buf;
  }

  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  }
  auto curve = [&](const std::string& name) {
    std::vector<RdPoint> pts;
    for (const auto& r : rows) {
      if (r.variant == name) pts.push_back(r.point);
    }
    std::sort(pts.begin(), pts.end(), [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
    return pts;
  };
  const auto anchor = curve(reference);
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto test = curve(order[i]);
    if (anchor.size() < 4 || test.size() < 4) continue;
    try {
      std::snprintf(buf, sizeof buf, "BD-rate %s vs %s: %+.2f%%\n", order[i].c_str(), reference.c_str(),
                    bd_rate(anchor, test));
    } catch (const std::invalid_argument& e) {
      std::snprintf(buf, sizeof buf, "BD-rate %s vs %s: n/a (%s)\n", order[i].c_str(), reference.c_str(), e.what());
    }
    os << buf;
  }
  return os.str();
}

}  // namespace asymcodec
