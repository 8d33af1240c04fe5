#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "cgan/cgan.hpp"

namespace cgan::cli {

enum ExitCode : int { kOk = 0, kVerification = 1, kConfig = 2, kData = 3, kNumeric = 4 };

// Stable mapping from engine errors to exit codes. Everything that is not a
// configuration or numeric failure concerns the data, files or checkpoints.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const ExhaustionError*>(&e)) return kNumeric;
  return kData;
}

inline const char* exit_kind(int code) {
  switch (code) {
    case kConfig: return "config error";
    case kData: return "data error";
    case kNumeric: return "numeric error";
    default: return "error";
  }
}

namespace detail {

// Flag values are kept as text and routed through the config-file parser, so
// a flag and the equivalent `key=value` line behave identically.
struct Override {
  const char* key;
  std::string value;
  CLI::Option* option = nullptr;
};

inline void add_overrides(CLI::App* cmd, std::vector<Override>& overrides) {
  static const std::vector<std::pair<const char*, const char*>> flags{
      {"epochs", "--epochs"},           {"batch", "--batch"},
      {"lr", "--lr"},                   {"beta1", "--beta1"},
      {"beta2", "--beta2"},             {"seed", "--seed"},
      {"latent", "--latent"},           {"base_filters", "--base-filters"},
      {"image_size", "--image-size"},   {"max_steps", "--max-steps"},
      {"sample_grid", "--sample-grid"}, {"checkpoint_every", "--checkpoint-every"},
      {"dropout", "--dropout"},         {"leaky_slope", "--leaky-slope"},
      {"fake_labels", "--fake-labels"}, {"noise", "--noise"},
      {"gen_activation", "--gen-activation"}};
  overrides.reserve(flags.size());
  for (const auto& [key, flag] : flags) {
    overrides.push_back({key, {}, nullptr});
    overrides.back().option = cmd->add_option(flag, overrides.back().value, std::string("override '") + key + "'");
  }
}

inline RunConfig build_config(const std::string& config_file, const std::vector<Override>& overrides,
                              const std::vector<std::string>& settings) {
  RunConfig rc;
  if (!config_file.empty()) apply_config_file(rc, config_file);
  for (const auto& o : overrides) {
    if (o.option->count()) apply_setting(rc, o.key, o.value);
  }
  for (const auto& kv : settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(rc, text::trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
  }
  validate(rc);
  return rc;
}

inline LabeledDataset load_nonempty(const std::string& path, std::size_t side) {
  if (!std::filesystem::exists(path)) throw IoError("dataset not found: " + path);
  LabeledDataset ds = load_dataset(path, side);
  if (ds.size() == 0) throw IoError("dataset " + path + " contains no samples");
  return ds;
}

inline std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace detail

struct TrainArgs {
  std::string data, out, config, resume;
  std::vector<std::string> settings;
  std::vector<detail::Override> overrides;
};

inline int cmd_train(TrainArgs& a, std::ostream& out) {
  const RunConfig rc = detail::build_config(a.config, a.overrides, a.settings);
  const std::string header = echo(rc);
  const LabeledDataset data = normalize(detail::load_nonempty(a.data, rc.train.arch.image_size));
  if (data.height != rc.train.arch.image_size) {
    throw DimensionError("dataset images are " + std::to_string(data.height) + "x" + std::to_string(data.width) +
                         " but image_size=" + std::to_string(rc.train.arch.image_size));
  }
  Trainer<float> trainer(rc.train);
  if (!a.resume.empty()) {
    if (!std::filesystem::exists(a.resume)) throw IoError("checkpoint not found: " + a.resume);
    trainer.load(a.resume);
    out << "resumed at epoch " << trainer.completed_epochs() << ", step " << trainer.global_step() << '\n';
  }
  out << header;
  train(trainer, data, a.out, header, !a.resume.empty(), [&](const TrainLogRecord& r) {
    out << "epoch " << r.epoch << " g_loss " << text::format_double(r.g_loss) << " d_loss "
        << text::format_double(r.d_loss) << " seconds " << std::fixed << std::setprecision(2) << r.seconds
        << std::defaultfloat << '\n';
  });
  out << "steps " << trainer.global_step() << ", checkpoints in " << a.out << '\n';
  return kOk;
}

struct GenerateArgs {
  std::string checkpoint, cls = "all", out;
  std::size_t count = 1;
  std::uint64_t seed = 0;
};

inline int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  std::vector<int> classes;
  if (a.cls == "all") {
    for (int c = 0; c < static_cast<int>(kNumClasses); ++c) classes.push_back(c);
  } else {
    const auto c = text::parse_uint("class", a.cls);
    if (c >= kNumClasses) throw ConfigError("class " + a.cls + " outside 0..6");
    classes.push_back(static_cast<int>(c));
  }
  if (a.count == 0) throw ConfigError("count must be positive");
  if (!std::filesystem::exists(a.checkpoint)) throw IoError("checkpoint not found: " + a.checkpoint);
  Generator<float> gen = load_generator<float>(a.checkpoint);
  std::error_code ec;
  std::filesystem::create_directories(a.out, ec);
  if (ec || !std::filesystem::is_directory(a.out)) throw IoError("cannot create output directory " + a.out);
  for (int c : classes) {
    // Each class has its own stream, so a class's images do not depend on
    // which other classes were requested.
    Rng rng(derive_seed(a.seed, static_cast<std::uint64_t>(c)));
    Tensor<float> z({a.count, gen.config().latent_dim});
    for (auto& v : z.data()) v = static_cast<float>(rng.normal());
    const Tensor<float> images = gen.generate(z, std::vector<int>(a.count, c), Mode::infer);
    for (std::size_t i = 0; i < a.count; ++i) {
      const auto path = std::filesystem::path(a.out) / ("class" + std::to_string(c) + "_" + std::to_string(i) + ".pgm");
      write_pgm(path.string(), to_gray_image(images, i));
    }
    out << "class " << c << " (" << kEmotionNames[static_cast<std::size_t>(c)] << "): " << a.count << " images\n";
  }
  return kOk;
}

struct AugmentArgs {
  std::string data, gen, disc, out, config, tau, policy, targets, max_draws_factor;
  std::uint64_t seed = 0;
  CLI::Option *tau_opt = nullptr, *policy_opt = nullptr, *targets_opt = nullptr, *factor_opt = nullptr;
};

inline int cmd_augment(const AugmentArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  if (!a.config.empty()) apply_config_file(rc, a.config);
  if (a.tau_opt->count()) apply_setting(rc, "tau", a.tau);
  if (a.policy_opt->count()) apply_setting(rc, "policy", a.policy);
  if (a.targets_opt->count()) apply_setting(rc, "targets", a.targets);
  if (a.factor_opt->count()) apply_setting(rc, "max_draws_factor", a.max_draws_factor);
  validate(rc);
  const auto& s = rc.augment;

  for (const auto* p : {&a.gen, &a.disc}) {
    if (!std::filesystem::exists(*p)) throw IoError("checkpoint not found: " + *p);
  }
  Generator<float> gen = load_generator<float>(a.gen);
  Discriminator<float> disc = load_discriminator<float>(a.disc);
  const std::size_t side = gen.config().image_size;
  const LabeledDataset real = detail::load_nonempty(a.data, side);
  if (real.height != side || real.width != side) {
    throw DimensionError("dataset images are " + std::to_string(real.height) + "x" + std::to_string(real.width) +
                         " but the generator produces " + std::to_string(side) + "x" + std::to_string(side));
  }
  const ClassStats before = class_distribution(real);
  const AugmentPlan plan = plan_balance(before, s.policy, s.targets, s.tau, s.max_draws_factor);

  SyntheticSet synthetic{side, side, {}};
  ExportInfo info;
  info.tau = s.tau;
  info.seed = a.seed;
  info.policy = s.policy == BalancePolicy::match_max ? "match-max" : "explicit";
  info.generator = a.gen;
  info.generator_fingerprint = io::fnv1a(io::read_file(a.gen));
  info.discriminator = a.disc;
  std::size_t shortfall = 0;
  std::string report;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (plan.deficits[c] == 0) continue;
    Rng rng(derive_seed(a.seed, 100 + c));
    FilterResult<float> r;
    try {
      r = generate_filtered(gen, disc, static_cast<int>(c), plan.deficits[c], s.tau, rng, plan.max_draws(c));
    } catch (const ExhaustionError& e) {
      throw ExhaustionError(std::string(e.what()) + "; no output written");
    }
    synthetic.pixels[c] = std::move(r.pixels);
    info.acceptance[c] = r.acceptance_rate();
    if (r.accepted < plan.deficits[c]) {
      shortfall += plan.deficits[c] - r.accepted;
      report += "class " + std::to_string(c) + ": accepted " + std::to_string(r.accepted) + " of " +
                std::to_string(plan.deficits[c]) + " needed after " + std::to_string(r.drawn) +
                " draws (acceptance rate " + text::format_double(r.acceptance_rate()) + ")\n";
    }
  }
  const LabeledDataset merged = merge_export(real, synthetic, a.out, info);
  const ClassStats after = class_distribution(merged);

  out << "Label Emotion  Before Synthetic After Acceptance\n";
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out << c << "     " << detail::pad(kEmotionNames[c], 8) << ' ' << detail::pad(std::to_string(before.counts[c]), 6)
        << ' ' << detail::pad(std::to_string(synthetic.count(c)), 9) << ' '
        << detail::pad(std::to_string(after.counts[c]), 5) << ' '
        << (plan.deficits[c] ? text::format_double(info.acceptance[c]) : "-") << '\n';
  }
  out << "total " << before.total << " -> " << after.total << '\n';
  out << "wrote " << a.out << " and " << a.out << ".manifest\n";
  if (shortfall) {
    err << report;
    throw ExhaustionError("draw budget exhausted: " + std::to_string(shortfall) +
                          " synthetic samples short of the plan (partial output written)");
  }
  return kOk;
}

inline int cmd_inspect(const std::string& data, std::size_t side, std::ostream& out) {
  const LabeledDataset ds = detail::load_nonempty(data, side);
  out << "images " << ds.size() << " of " << ds.height << 'x' << ds.width << '\n';
  out << format_class_table(class_distribution(ds));
  return kOk;
}

inline int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_gradient_suite(seed)) {
    const bool pass = r.max_error < kGradcheckTolerance;
    ok = ok && pass;
    std::ostringstream err;
    err << std::scientific << std::setprecision(2) << r.max_error;
    out << detail::pad(r.op, 22) << ' ' << err.str() << ' ' << (pass ? "ok" : "FAIL") << '\n';
  }
  out << (ok ? "all operations within " : "some operations exceed ") << text::format_double(kGradcheckTolerance)
      << '\n';
  return ok ? kOk : kVerification;
}

// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional GAN training, sampling and minority-class augmentation"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train the generator and discriminator");
  train_cmd->add_option("--data", ta.data, "CSV or CGDS dataset")->required();
  train_cmd->add_option("--out", ta.out, "run directory")->required();
  train_cmd->add_option("--config", ta.config, "key=value config file");
  train_cmd->add_option("--resume", ta.resume, "continue from a train.ckpt");
  train_cmd->add_option("--set", ta.settings, "extra key=value setting (repeatable)");
  detail::add_overrides(train_cmd, ta.overrides);

  GenerateArgs ga;
  auto* gen_cmd = app.add_subcommand("generate", "sample images from a generator checkpoint");
  gen_cmd->add_option("--checkpoint", ga.checkpoint, "generator checkpoint")->required();
  gen_cmd->add_option("--class", ga.cls, "class 0..6 or 'all'");
  gen_cmd->add_option("--count", ga.count, "images per class");
  gen_cmd->add_option("--out", ga.out, "output directory")->required();
  gen_cmd->add_option("--seed", ga.seed, "noise seed");

  AugmentArgs aa;
  auto* aug_cmd = app.add_subcommand("augment", "balance a dataset with filtered synthetic samples");
  aug_cmd->add_option("--data", aa.data, "CSV or CGDS dataset")->required();
  aug_cmd->add_option("--gen", aa.gen, "generator checkpoint")->required();
  aug_cmd->add_option("--disc", aa.disc, "discriminator checkpoint")->required();
  aug_cmd->add_option("--out", aa.out, "output CGDS archive")->required();
  aug_cmd->add_option("--config", aa.config, "key=value config file");
  aug_cmd->add_option("--seed", aa.seed, "noise seed");
  aa.tau_opt = aug_cmd->add_option("--tau", aa.tau, "confidence threshold in [0, 1)");
  aa.policy_opt = aug_cmd->add_option("--policy", aa.policy, "match-max or explicit");
  aa.targets_opt = aug_cmd->add_option("--targets", aa.targets, "seven comma-separated counts");
  aa.factor_opt = aug_cmd->add_option("--max-draws-factor", aa.max_draws_factor, "draw budget per needed sample");

  std::string inspect_data;
  std::size_t inspect_side = 64;
  auto* inspect_cmd = app.add_subcommand("inspect", "print the class distribution of a dataset");
  inspect_cmd->add_option("--data", inspect_data, "CSV or CGDS dataset")->required();
  inspect_cmd->add_option("--image-size", inspect_side, "CSV image side");

  std::uint64_t gradcheck_seed = 2024;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of every operation");
  gradcheck_cmd->add_option("--seed", gradcheck_seed, "tensor seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*train_cmd) return cmd_train(ta, out);
    if (*gen_cmd) return cmd_generate(ga, out);
    if (*aug_cmd) return cmd_augment(aa, out, err);
    if (*inspect_cmd) return cmd_inspect(inspect_data, inspect_side, out);
    if (*gradcheck_cmd) return cmd_gradcheck(gradcheck_seed, out);
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    err << exit_kind(code) << ": " << e.what() << '\n';
    return code;
  }
  return kConfig;
}

}  // namespace cgan::cli
