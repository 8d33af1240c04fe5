#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "data.hpp"
#include "error.hpp"
#include "layers.hpp"
#include "models.hpp"
#include "optim.hpp"
#include "pgm.hpp"
#include "random.hpp"
#include "tape.hpp"
#include "text.hpp"

namespace cgan {

enum class FakeLabels { copy, uniform };
enum class NoiseKind { normal, uniform };

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t sample_rows = 0;  // per-class snapshot grid; 0 disables emission
  std::size_t sample_cols = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  std::size_t max_steps = 0;         // 0 = run all epochs
  FakeLabels fake_labels = FakeLabels::copy;
  NoiseKind noise = NoiseKind::normal;
  ArchConfig arch;

  std::size_t samples_per_class() const { return sample_rows * sample_cols; }

  AdamHyper adam() const { return AdamHyper{lr, beta1, beta2, adam_epsilon}; }

  void validate() const {
    arch.validate();
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
    if ((sample_rows == 0) != (sample_cols == 0)) throw ConfigError("sample_grid needs both rows and columns");
  }
};

struct StepLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct StepRecord {
  std::uint64_t step = 0;  // 1-based, global
  std::size_t epoch = 0;   // 1-based
  StepLosses losses;
};

struct TrainLogRecord {
  std::size_t epoch = 0;  // 1-based
  double g_loss = 0.0;    // mean over the epoch's steps
  double d_loss = 0.0;
  double seconds = 0.0;
};

// Architecture stored under `key`; a malformed record is a checkpoint problem,
// not a configuration one.
inline ArchConfig stored_arch(const TensorArchive& a, const std::string& key) {
  try {
    return ArchConfig::from_text(a.get_text(key));
  } catch (const ConfigError& e) {
    throw CheckpointError(key + ": " + e.what());
  }
}

// Alternating adversarial trainer: owns both networks, their Adam states and
// the random stream, plus enough progress counters to resume mid-epoch.
template <typename T>
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)),
        gen_((cfg_.validate(), cfg_.arch), derive_seed(cfg_.seed, 1)),
        disc_(cfg_.arch, derive_seed(cfg_.seed, 2)),
        adam_gen_(AdamState<T>::make(gen_.parameters(), cfg_.adam())),
        adam_disc_(AdamState<T>::make(disc_.parameters(), cfg_.adam())),
        rng_(derive_seed(cfg_.seed, 3)) {}

  const TrainConfig& config() const { return cfg_; }
  Generator<T>& generator() { return gen_; }
  Discriminator<T>& discriminator() { return disc_; }
  AdamState<T>& generator_adam() { return adam_gen_; }
  AdamState<T>& discriminator_adam() { return adam_disc_; }
  Rng& rng() { return rng_; }

  std::size_t completed_epochs() const { return epoch_; }
  std::size_t step_in_epoch() const { return step_in_epoch_; }
  std::uint64_t global_step() const { return global_step_; }

  Tensor<T> sample_noise(std::size_t n) {
    Tensor<T> z({n, cfg_.arch.latent_dim});
    for (auto& v : z.data()) {
      v = static_cast<T>(cfg_.noise == NoiseKind::normal ? rng_.normal() : rng_.uniform(-1.0, 1.0));
    }
    return z;
  }

  std::vector<int> fake_labels_for(const std::vector<int>& real_labels) {
    if (cfg_.fake_labels == FakeLabels::copy) return real_labels;
    std::vector<int> out(real_labels.size());
    for (auto& l : out) l = static_cast<int>(rng_.below(kNumClasses));
    return out;
  }

  // Discriminator half of a step: loss on the real batch plus detached fakes,
  // then one Adam update of the discriminator. Generator state is read-only
  // apart from its batch-norm running statistics.
  double update_discriminator(const Batch<T>& real, const std::vector<int>& fake_labels) {
    const std::size_t n = real.labels.size();
    Tensor<T> fake = generate_detached(sample_noise(n), fake_labels);
    disc_.zero_grad();
    Tape<T> tape;
    Var real_p = disc_.forward(tape, tape.constant(real.images), real.labels, Mode::train, &rng_);
    Var fake_p = disc_.forward(tape, tape.constant(std::move(fake)), fake_labels, Mode::train, &rng_);
    Var loss = d_loss(tape, real_p, fake_p);
    const double value = static_cast<double>(tape.value(loss).item());
    check_finite("d_loss", value);
    tape.backward(loss);
    adam_step(disc_.parameters(), adam_disc_);
    return value;
  }

  // Generator half: fresh fakes scored by the live discriminator, gradient
  // through D into G, one Adam update of the generator.
  double update_generator(std::size_t n, const std::vector<int>& fake_labels) {
    gen_.zero_grad();
    Tape<T> tape;
    Var fake = gen_.forward(tape, tape.constant(sample_noise(n)), fake_labels, Mode::train);
    Var p = disc_.forward(tape, fake, fake_labels, Mode::train, &rng_, false);
    Var loss = g_loss(tape, p);
    const double value = static_cast<double>(tape.value(loss).item());
    check_finite("g_loss", value);
    tape.backward(loss);
    adam_step(gen_.parameters(), adam_gen_);
    return value;
  }

  // One discriminator update followed by one generator update.
  StepLosses train_step(const Batch<T>& real) {
    if (real.labels.empty()) throw ContractError("train_step: empty batch");
    disc_.update_spectral();
    const auto fake_labels = fake_labels_for(real.labels);
    StepLosses out;
    out.d_loss = update_discriminator(real, fake_labels);
    out.g_loss = update_generator(real.labels.size(), fake_labels);
    return out;
  }

  // Runs until the configured epoch count (or max_steps) is reached,
  // continuing from the current counters. Returns the epochs completed.
  std::vector<TrainLogRecord> run(const LabeledDataset& data, const std::function<void(const StepRecord&)>& on_step = {},
                                  const std::function<void(const TrainLogRecord&)>& on_epoch = {}) {
    if (!data.normalized) throw ContractError("training needs a normalized dataset");
    if (data.height != cfg_.arch.image_size || data.width != cfg_.arch.image_size) {
      throw ContractError("dataset images are " + std::to_string(data.height) + "x" + std::to_string(data.width) +
                          " but the networks expect " + std::to_string(cfg_.arch.image_size));
    }
    std::vector<TrainLogRecord> log;
    while (epoch_ < cfg_.epochs && !step_budget_spent()) {
      const auto order = batches(data, cfg_.batch_size, derive_seed(cfg_.seed, 1000 + epoch_));
      const auto started = std::chrono::steady_clock::now();
      while (step_in_epoch_ < order.size() && !step_budget_spent()) {
        const auto batch = gather<T>(data, order[step_in_epoch_]);
        StepLosses losses;
        try {
          losses = train_step(batch);
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch_ + 1) + ", step " +
                             std::to_string(step_in_epoch_ + 1));
        }
        ++step_in_epoch_;
        ++global_step_;
        sum_d_ += losses.d_loss;
        sum_g_ += losses.g_loss;
        ++sum_steps_;
        if (on_step) on_step(StepRecord{global_step_, epoch_ + 1, losses});
      }
      elapsed_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      // A step budget that runs out mid-epoch leaves the epoch open; its
      // partial sums are part of the checkpoint and it is logged once complete.
      if (step_in_epoch_ < order.size()) break;
      log.push_back(finish_epoch());
      if (on_epoch) on_epoch(log.back());
    }
    return log;
  }

  // Complete training state: both networks, Adam moments, counters, the
  // random stream and a config echo.
  TensorArchive to_archive() {
    TensorArchive a;
    write_generator(a, gen_);
    write_discriminator(a, disc_);
    write_adam(a, "gen", gen_.parameters(), adam_gen_);
    write_adam(a, "disc", disc_.parameters(), adam_disc_);
    a.put_u64("train.epoch", epoch_);
    a.put_u64("train.step_in_epoch", step_in_epoch_);
    a.put_u64("train.global_step", global_step_);
    a.put_text("train.rng", rng_.state());
    a.put("train.epoch_sums", Tensor<double>({4}, {sum_d_, sum_g_, static_cast<double>(sum_steps_), elapsed_}));
    return a;
  }

  void save(const std::string& path) { to_archive().save(path); }

  void restore(const TensorArchive& a) {
    read_generator(a, gen_);
    read_discriminator(a, disc_);
    read_adam(a, "gen", gen_.parameters(), adam_gen_);
    read_adam(a, "disc", disc_.parameters(), adam_disc_);
    check_name_set(a, "train.",
                   {"train.epoch", "train.step_in_epoch", "train.global_step", "train.rng", "train.epoch_sums"},
                   "training");
    epoch_ = a.get_u64("train.epoch");
    step_in_epoch_ = a.get_u64("train.step_in_epoch");
    global_step_ = a.get_u64("train.global_step");
    rng_.set_state(a.get_text("train.rng"));
    Tensor<double> sums({4});
    a.get("train.epoch_sums", sums);
    sum_d_ = sums[0];
    sum_g_ = sums[1];
    sum_steps_ = static_cast<std::size_t>(sums[2]);
    elapsed_ = sums[3];
  }

  void load(const std::string& path) { restore(TensorArchive::load(path)); }

  // ---- network (de)serialization, usable on their own ----

  static void write_generator(TensorArchive& a, Generator<T>& g) {
    a.put_text("gen.arch", g.config().to_text());
    for (auto* p : g.parameters()) a.put(p->name, p->value);
    for (auto& [name, t] : g.buffers()) a.put(name, *t);
  }

  static void write_discriminator(TensorArchive& a, Discriminator<T>& d) {
    a.put_text("disc.arch", d.config().to_text());
    for (auto* p : d.parameters()) a.put(p->name, p->value);
    for (auto& [name, t] : d.buffers()) a.put(name, *t);
  }

  static void read_generator(const TensorArchive& a, Generator<T>& g) {
    std::set<std::string> expected{"gen.arch"};
    for (auto* p : g.parameters()) expected.insert(p->name);
    for (auto& [name, t] : g.buffers()) expected.insert(name);
    check_name_set(a, "gen.", expected, "generator");
    if (stored_arch(a, "gen.arch").to_text() != g.config().to_text()) {
      throw CheckpointError("generator checkpoint was written for a different architecture");
    }
    for (auto* p : g.parameters()) a.get(p->name, p->value);
    for (auto& [name, t] : g.buffers()) a.get(name, *t);
  }

  static void read_discriminator(const TensorArchive& a, Discriminator<T>& d) {
    std::set<std::string> expected{"disc.arch"};
    for (auto* p : d.parameters()) expected.insert(p->name);
    for (auto& [name, t] : d.buffers()) expected.insert(name);
    check_name_set(a, "disc.", expected, "discriminator");
    if (stored_arch(a, "disc.arch").to_text() != d.config().to_text()) {
      throw CheckpointError("discriminator checkpoint was written for a different architecture");
    }
    for (auto* p : d.parameters()) a.get(p->name, p->value);
    for (auto& [name, t] : d.buffers()) a.get(name, *t);
  }

 private:
  bool step_budget_spent() const { return cfg_.max_steps != 0 && global_step_ >= cfg_.max_steps; }

  TrainLogRecord finish_epoch() {
    ++epoch_;
    TrainLogRecord r{epoch_, sum_g_ / static_cast<double>(sum_steps_), sum_d_ / static_cast<double>(sum_steps_),
                     elapsed_};
    step_in_epoch_ = 0;
    sum_d_ = sum_g_ = elapsed_ = 0.0;
    sum_steps_ = 0;
    return r;
  }

  Tensor<T> generate_detached(const Tensor<T>& z, const std::vector<int>& labels) {
    Tape<T> tape;
    Var out = gen_.forward(tape, tape.constant(z), labels, Mode::train, false);
    return tape.value(out);
  }

  static void check_finite(const char* what, double value) {
    if (!std::isfinite(value)) throw NumericError(std::string("non-finite ") + what + " = " + std::to_string(value));
  }

  static void write_adam(TensorArchive& a, const std::string& net, const std::vector<Parameter<T>*>& params,
                         const AdamState<T>& s) {
    a.put_u64("adam." + net + ".step", s.step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      a.put("adam." + params[i]->name + ".m", s.m[i]);
      a.put("adam." + params[i]->name + ".v", s.v[i]);
    }
  }

  static void read_adam(const TensorArchive& a, const std::string& net, const std::vector<Parameter<T>*>& params,
                        AdamState<T>& s) {
    std::set<std::string> expected{"adam." + net + ".step"};
    for (auto* p : params) {
      expected.insert("adam." + p->name + ".m");
      expected.insert("adam." + p->name + ".v");
    }
    check_name_set(a, "adam." + net + ".", expected, net + " optimizer");
    s.step = a.get_u64("adam." + net + ".step");
    for (std::size_t i = 0; i < params.size(); ++i) {
      a.get("adam." + params[i]->name + ".m", s.m[i]);
      a.get("adam." + params[i]->name + ".v", s.v[i]);
    }
  }

  TrainConfig cfg_;
  Generator<T> gen_;
  Discriminator<T> disc_;
  AdamState<T> adam_gen_;
  AdamState<T> adam_disc_;
  Rng rng_;
  std::size_t epoch_ = 0;
  std::size_t step_in_epoch_ = 0;
  std::uint64_t global_step_ = 0;
  double sum_d_ = 0.0, sum_g_ = 0.0, elapsed_ = 0.0;
  std::size_t sum_steps_ = 0;
};

// ---------------------------------------------------------------------------
// Standalone network checkpoints

template <typename T>
void save_generator(Generator<T>& g, const std::string& path) {
  TensorArchive a;
  Trainer<T>::write_generator(a, g);
  a.save(path);
}

template <typename T>
void save_discriminator(Discriminator<T>& d, const std::string& path) {
  TensorArchive a;
  Trainer<T>::write_discriminator(a, d);
  a.save(path);
}

// Rebuilds the generator from the architecture stored in the checkpoint.
template <typename T>
Generator<T> load_generator(const std::string& path) {
  const auto a = TensorArchive::load(path);
  if (!a.contains("gen.arch")) check_name_set(a, "gen.", {"gen.arch"}, "generator");
  Generator<T> g(stored_arch(a, "gen.arch"), 0);
  Trainer<T>::read_generator(a, g);
  return g;
}

template <typename T>
Discriminator<T> load_discriminator(const std::string& path) {
  const auto a = TensorArchive::load(path);
  if (!a.contains("disc.arch")) check_name_set(a, "disc.", {"disc.arch"}, "discriminator");
  Discriminator<T> d(stored_arch(a, "disc.arch"), 0);
  Trainer<T>::read_discriminator(a, d);
  return d;
}

// ---------------------------------------------------------------------------
// Per-epoch sample emission

// Fixed noise for epoch snapshots: per_class latent rows for each of the
// seven classes, drawn from a stream independent of training.
template <typename T>
Tensor<T> snapshot_noise(const TrainConfig& cfg) {
  const std::size_t n = kNumClasses * cfg.samples_per_class();
  if (n == 0) throw ContractError("sample grid is empty");
  Rng rng(derive_seed(cfg.seed, 4));
  Tensor<T> z({n, cfg.arch.latent_dim});
  for (auto& v : z.data()) v = static_cast<T>(rng.normal());
  return z;
}

// Writes epoch{E}_class{C}_{i}.pgm for every class c and i < per_class,
// generating in infer mode from the given snapshot noise.
template <typename T>
std::vector<std::string> emit_epoch_samples(Generator<T>& gen, std::size_t epoch, const std::string& out_dir,
                                            std::size_t per_class, const Tensor<T>& noise) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create sample directory " + out_dir);
  if (noise.dim(0) != kNumClasses * per_class) throw DimensionError("snapshot noise does not match the sample grid");
  std::vector<int> labels;
  for (std::size_t c = 0; c < kNumClasses; ++c) labels.insert(labels.end(), per_class, static_cast<int>(c));
  const Tensor<T> images = gen.generate(noise, labels, Mode::infer);
  std::vector<std::string> files;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto path = (fs::path(out_dir) / ("epoch" + std::to_string(epoch) + "_class" + std::to_string(c) + "_" +
                                              std::to_string(i) + ".pgm"))
                            .string();
      write_pgm(path, to_gray_image(images, c * per_class + i));
      files.push_back(path);
    }
  }
  return files;
}

// ---------------------------------------------------------------------------
// Run directory output

// Writes losses.csv (epoch,g_loss,d_loss,seconds), steps.csv
// (step,epoch,d_loss,g_loss), samples/ and checkpoints under one directory.
// Both CSV files start with the effective configuration as `# key=value`
// lines. Rows are flushed as they are produced.
template <typename T>
class RunWriter {
 public:
  // append=true continues existing logs (resume) instead of starting them over.
  RunWriter(std::string dir, const std::string& config_echo, bool append = false) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) throw IoError("cannot create run directory " + dir_);
    open(losses_, "losses.csv", config_echo, "epoch,g_loss,d_loss,seconds", append);
    open(steps_, "steps.csv", config_echo, "step,epoch,d_loss,g_loss", append);
  }

  void step(const StepRecord& r) {
    steps_ << r.step << ',' << r.epoch << ',' << text::format_double(r.losses.d_loss) << ','
           << text::format_double(r.losses.g_loss) << '\n';
    steps_.flush();
    if (!steps_) throw IoError("write failed for " + path("steps.csv"));
  }

  void epoch(const TrainLogRecord& r) {
    losses_ << r.epoch << ',' << text::format_double(r.g_loss) << ',' << text::format_double(r.d_loss) << ','
            << text::format_double(r.seconds) << '\n';
    losses_.flush();
    if (!losses_) throw IoError("write failed for " + path("losses.csv"));
  }

  std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

 private:
  void open(std::ofstream& f, const std::string& name, const std::string& echo, const char* header, bool append) {
    if (append && std::filesystem::exists(path(name))) {
      f.open(path(name), std::ios::app);
      if (!f) throw IoError("cannot open " + path(name));
      return;
    }
    f.open(path(name), std::ios::trunc);
    if (!f) throw IoError("cannot open " + path(name));
    std::istringstream lines(echo);
    std::string line;
    while (std::getline(lines, line)) f << "# " << line << '\n';
    f << header << '\n';
    f.flush();
  }

  std::string dir_;
  std::ofstream losses_;
  std::ofstream steps_;
};

// Full training run. When out_dir is non-empty, writes the run directory:
// CSV logs, per-epoch samples (if a grid is configured), periodic
// checkpoints (checkpoint_epoch{E}.ckpt) and final gen.ckpt / disc.ckpt /
// train.ckpt.
template <typename T>
std::vector<TrainLogRecord> train(Trainer<T>& trainer, const LabeledDataset& data, const std::string& out_dir = {},
                                  const std::string& config_echo = {}, bool append = false,
                                  const std::function<void(const TrainLogRecord&)>& progress = {}) {
  const TrainConfig& cfg = trainer.config();
  std::optional<RunWriter<T>> writer;
  std::optional<Tensor<T>> noise;
  if (!out_dir.empty()) writer.emplace(out_dir, config_echo, append);
  if (writer && cfg.samples_per_class() > 0) noise = snapshot_noise<T>(cfg);

  auto on_step = [&](const StepRecord& r) {
    if (writer) writer->step(r);
  };
  auto on_epoch = [&](const TrainLogRecord& r) {
    if (progress) progress(r);
    if (!writer) return;
    writer->epoch(r);
    if (noise) emit_epoch_samples(trainer.generator(), r.epoch, writer->path("samples"), cfg.samples_per_class(), *noise);
    if (cfg.checkpoint_every && r.epoch % cfg.checkpoint_every == 0) {
      trainer.save(writer->path("checkpoint_epoch" + std::to_string(r.epoch) + ".ckpt"));
    }
  };
  auto log = trainer.run(data, on_step, on_epoch);
  if (writer) {
    save_generator(trainer.generator(), writer->path("gen.ckpt"));
    save_discriminator(trainer.discriminator(), writer->path("disc.ckpt"));
    trainer.save(writer->path("train.ckpt"));
  }
  return log;
}

}  // namespace cgan
