#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "augment.hpp"
#include "error.hpp"
#include "text.hpp"
#include "training.hpp"

namespace cgan {

struct AugmentSettings {
  double tau = 0.5;
  BalancePolicy policy = BalancePolicy::match_max;
  std::optional<std::array<std::size_t, kNumClasses>> targets;
  double max_draws_factor = 50.0;
};

// Everything a run needs, settable from a key=value file and from flags.
struct RunConfig {
  TrainConfig train;
  AugmentSettings augment;
};

namespace detail {

inline std::array<std::size_t, kNumClasses> parse_targets(std::string_view value) {
  std::array<std::size_t, kNumClasses> out{};
  std::size_t i = 0;
  while (!value.empty()) {
    const auto comma = value.find(',');
    const auto token = text::trim(value.substr(0, comma));
    if (i >= kNumClasses) throw ConfigError("'targets' expects exactly 7 comma-separated counts");
    out[i++] = text::parse_uint("targets", token);
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  if (i != kNumClasses) throw ConfigError("'targets' expects exactly 7 comma-separated counts");
  return out;
}

}  // namespace detail

// Sets one key. Unknown keys are a ConfigError naming the key.
inline void apply_setting(RunConfig& rc, std::string_view key, std::string_view value) {
  auto& t = rc.train;
  auto& a = rc.train.arch;
  auto& g = rc.augment;
  value = text::trim(value);
  if (key == "epochs") t.epochs = text::parse_uint(key, value);
  else if (key == "batch") t.batch_size = text::parse_uint(key, value);
  else if (key == "lr") t.lr = text::parse_double(key, value);
  else if (key == "beta1") t.beta1 = text::parse_double(key, value);
  else if (key == "beta2") t.beta2 = text::parse_double(key, value);
  else if (key == "adam_epsilon") t.adam_epsilon = text::parse_double(key, value);
  else if (key == "seed") t.seed = text::parse_uint(key, value);
  else if (key == "checkpoint_every") t.checkpoint_every = text::parse_uint(key, value);
  else if (key == "max_steps") t.max_steps = text::parse_uint(key, value);
  else if (key == "sample_grid") {
    const auto x = value.find('x');
    if (x == std::string_view::npos) {
      t.sample_rows = 1;
      t.sample_cols = text::parse_uint(key, value);
      if (t.sample_cols == 0) t.sample_rows = 0;
    } else {
      t.sample_rows = text::parse_uint(key, value.substr(0, x));
      t.sample_cols = text::parse_uint(key, value.substr(x + 1));
    }
  } else if (key == "fake_labels") {
    if (value == "copy") t.fake_labels = FakeLabels::copy;
    else if (value == "uniform") t.fake_labels = FakeLabels::uniform;
    else throw ConfigError("'fake_labels' must be copy or uniform");
  } else if (key == "noise") {
    if (value == "normal") t.noise = NoiseKind::normal;
    else if (value == "uniform") t.noise = NoiseKind::uniform;
    else throw ConfigError("'noise' must be normal or uniform");
  } else if (key == "latent") a.latent_dim = text::parse_uint(key, value);
  else if (key == "base_filters") a.base_filters = text::parse_uint(key, value);
  else if (key == "image_size") a.image_size = text::parse_uint(key, value);
  else if (key == "leaky_slope") a.leaky_slope = text::parse_double(key, value);
  else if (key == "dropout") a.dropout = text::parse_double(key, value);
  else if (key == "init_stddev") a.init_stddev = text::parse_double(key, value);
  else if (key == "gen_activation") {
    if (value == "leaky_relu") a.gen_activation = GenActivation::leaky_relu;
    else if (value == "relu") a.gen_activation = GenActivation::relu;
    else throw ConfigError("'gen_activation' must be leaky_relu or relu");
  } else if (key == "zero_disc_head") a.zero_disc_head = text::parse_bool(key, value);
  else if (key == "tau") g.tau = text::parse_double(key, value);
  else if (key == "policy") {
    if (value == "match-max") g.policy = BalancePolicy::match_max;
    else if (value == "explicit") g.policy = BalancePolicy::explicit_targets;
    else throw ConfigError("'policy' must be match-max or explicit");
  } else if (key == "targets") g.targets = detail::parse_targets(value);
  else if (key == "max_draws_factor") g.max_draws_factor = text::parse_double(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

// Lines of `key=value`; blank lines and `#` comments are skipped.
inline void apply_config_text(RunConfig& rc, const std::string& body) {
  std::istringstream in(body);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = text::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: '" + std::string(view) + "'");
    }
    apply_setting(rc, text::trim(view.substr(0, eq)), view.substr(eq + 1));
  }
}

inline void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream body;
  body << in.rdbuf();
  apply_config_text(rc, body.str());
}

inline void validate(const RunConfig& rc) {
  rc.train.validate();
  if (!(rc.augment.tau >= 0.0 && rc.augment.tau < 1.0)) throw ConfigError("tau must lie in [0, 1)");
  if (!(rc.augment.max_draws_factor >= 1.0)) throw ConfigError("max_draws_factor must be at least 1");
  if (rc.augment.policy == BalancePolicy::explicit_targets && !rc.augment.targets) {
    throw ConfigError("policy=explicit needs targets");
  }
}

// Every effective setting as key=value lines, parseable by apply_config_text.
inline std::string echo(const RunConfig& rc) {
  const auto& t = rc.train;
  const auto& a = rc.train.arch;
  const auto& g = rc.augment;
  std::ostringstream out;
  out << "epochs=" << t.epochs << '\n'
      << "batch=" << t.batch_size << '\n'
      << "lr=" << text::format_double(t.lr) << '\n'
      << "beta1=" << text::format_double(t.beta1) << '\n'
      << "beta2=" << text::format_double(t.beta2) << '\n'
      << "adam_epsilon=" << text::format_double(t.adam_epsilon) << '\n'
      << "seed=" << t.seed << '\n'
      << "sample_grid=" << t.sample_rows << 'x' << t.sample_cols << '\n'
      << "checkpoint_every=" << t.checkpoint_every << '\n'
      << "max_steps=" << t.max_steps << '\n'
      << "fake_labels=" << (t.fake_labels == FakeLabels::copy ? "copy" : "uniform") << '\n'
      << "noise=" << (t.noise == NoiseKind::normal ? "normal" : "uniform") << '\n'
      << "latent=" << a.latent_dim << '\n'
      << "base_filters=" << a.base_filters << '\n'
      << "image_size=" << a.image_size << '\n'
      << "leaky_slope=" << text::format_double(a.leaky_slope) << '\n'
      << "dropout=" << text::format_double(a.dropout) << '\n'
      << "init_stddev=" << text::format_double(a.init_stddev) << '\n'
      << "gen_activation=" << (a.gen_activation == GenActivation::relu ? "relu" : "leaky_relu") << '\n'
      << "zero_disc_head=" << (a.zero_disc_head ? 1 : 0) << '\n'
      << "tau=" << text::format_double(g.tau) << '\n'
      << "policy=" << (g.policy == BalancePolicy::match_max ? "match-max" : "explicit") << '\n';
  if (g.targets) {
    out << "targets=";
    for (std::size_t c = 0; c < kNumClasses; ++c) out << (c ? "," : "") << (*g.targets)[c];
    out << '\n';
  }
  out << "max_draws_factor=" << text::format_double(g.max_draws_factor) << '\n';
  return out.str();
}

}  // namespace cgan
