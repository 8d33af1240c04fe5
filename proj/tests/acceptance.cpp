// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "commands.hpp"
#include "fixtures.hpp"
#include "shape_trace.hpp"

using namespace cgan;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// A criterion collects failed checks; an empty list means PASS.
struct Criterion {
  std::vector<std::string> failures;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

template <class T>
Tensor<T> normal_tensor(const Shape& shape, Rng& rng, double stddev = 1.0) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.normal() * stddev);
  return t;
}

// ---- 1. gradient suite ----
Criterion gradient_suite() {
  Criterion c;
  const auto t0 = Clock::now();
  const auto results = run_gradient_suite();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_error);
    c.check(r.max_error < 1e-6, r.op + " relative error " + fmt(r.max_error));
  }
  c.check(results.size() >= 18, "suite covers " + std::to_string(results.size()) + " operations");
  c.check(secs < 60.0, "runtime " + fmt(secs) + " s");
  c.detail = std::to_string(results.size()) + " ops, worst " + fmt(worst) + ", " + fmt(secs) + " s";
  return c;
}

// ---- 2. architecture fidelity ----
Criterion architecture() {
  Criterion c;
  Generator<float> g(ArchConfig{}, 1);
  Discriminator<float> d(ArchConfig{}, 2);
  Rng rng(3);
  const auto z = normal_tensor<float>({2, 150}, rng);
  const auto gt = fixtures::trace_generator(g, z, {0, 6});
  const std::vector<Shape> gen_chain{{2, 157},         {2, 32768},       {2, 8, 8, 512}, {2, 16, 16, 256},
                                     {2, 32, 32, 128}, {2, 64, 64, 64}, {2, 64, 64, 1}};
  c.check(gt.shapes == gen_chain, "generator shape chain");
  for (float v : gt.output.data()) {
    if (v < -1.0f || v > 1.0f) {
      c.check(false, "generator output outside [-1, 1]");
      break;
    }
  }
  const auto dt = fixtures::trace_discriminator(d, gt.output, {0, 6});
  const std::vector<Shape> disc_chain{{2, 64, 64, 8}, {2, 32, 32, 64}, {2, 16, 16, 128}, {2, 8, 8, 256},
                                      {2, 4, 4, 512}, {2, 8192},       {2, 1}};
  c.check(dt.shapes == disc_chain, "discriminator shape chain");
  for (float v : dt.output.data()) c.check(v > 0.0f && v < 1.0f, "discriminator output outside (0, 1)");
  const std::size_t dense = g.dense().kernel.value.size() + g.dense().bias.value.size();
  c.check(dense == 5'177'344u, "generator dense parameters " + std::to_string(dense));
  c.check(g.parameter_count() == 7'932'225u, "generator parameters " + std::to_string(g.parameter_count()));
  c.check(d.parameter_count() == 2'769'857u, "discriminator parameters " + std::to_string(d.parameter_count()));
  c.detail = "G " + std::to_string(g.parameter_count()) + " params, D " + std::to_string(d.parameter_count());
  return c;
}

// ---- 3. untrained equilibrium ----
Criterion equilibrium() {
  Criterion c;
  TrainConfig cfg;
  cfg.arch.zero_disc_head = true;
  cfg.batch_size = 8;
  Trainer<float> t(cfg);
  const auto data = normalize(fixtures::random_dataset({2, 1, 1, 1, 1, 1, 1}, 64, 4));
  const auto l = t.train_step(gather<float>(data, batches(data, 8, 1).front()));
  c.check(std::abs(l.d_loss - 2.0 * std::log(2.0)) <= 1e-3, "d_loss " + fmt(l.d_loss));
  c.check(std::abs(l.g_loss - std::log(2.0)) <= 1e-3, "g_loss " + fmt(l.g_loss));
  c.detail = "default architecture, d_loss " + fmt(l.d_loss) + ", g_loss " + fmt(l.g_loss);

  // For context: the same step on the scaled network, where the head is 64 wide.
  TrainConfig small = cfg;
  small.arch.latent_dim = 16;
  small.arch.base_filters = 8;
  small.arch.image_size = 16;
  Trainer<float> s(small);
  const auto small_data = normalize(fixtures::random_dataset({2, 1, 1, 1, 1, 1, 1}, 16, 4));
  const auto ls = s.train_step(gather<float>(small_data, batches(small_data, 8, 1).front()));
  c.detail += "; scaled architecture d_loss " + fmt(ls.d_loss) + ", g_loss " + fmt(ls.g_loss);
  return c;
}

// ---- 4. spectral norm oracle ----
double top_singular(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w.transpose() * w);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

// Matrix view of a (k, k, c_in, c_out) kernel: rows are output channels.
Eigen::MatrixXd as_matrix(const Tensor<double>& k) {
  const std::size_t out_c = k.shape().back(), cols = k.size() / out_c;
  Eigen::MatrixXd w(out_c, cols);
  for (std::size_t r = 0; r < cols; ++r)
    for (std::size_t o = 0; o < out_c; ++o) w(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(r)) = k[r * out_c + o];
  return w;
}

Criterion spectral_oracle() {
  Criterion c;
  Rng rng(44);
  double worst_sigma = 0.0, worst_unit = 0.0;
  for (int i = 0; i < 20; ++i) {
    // Kernel 0 is the largest allowed matrix, 16x64.
    const std::size_t kk = i % 2 ? 1 : 2;
    const std::size_t max_in = 64 / (kk * kk);
    const std::size_t out_c = i == 0 ? 16 : 1 + rng.below(16);
    const std::size_t in_c = i == 0 ? max_in : 1 + rng.below(max_in);
    const auto kernel = normal_tensor<double>({kk, kk, in_c, out_c}, rng);
    auto state = spectral::make_state<double>(out_c, rng);
    state.power_iterations = 20;
    const auto r = spectral_normalize(kernel, state);
    const double truth = top_singular(as_matrix(kernel));
    const double e_sigma = std::abs(r.sigma - truth);
    const double e_unit = std::abs(top_singular(as_matrix(r.kernel)) - 1.0);
    worst_sigma = std::max(worst_sigma, e_sigma);
    worst_unit = std::max(worst_unit, e_unit);
    const std::string tag = "kernel " + std::to_string(i) + " (" + std::to_string(out_c) + "x" +
                            std::to_string(kk * kk * in_c) + ")";
    c.check(e_sigma < 1e-2, tag + " sigma error " + fmt(e_sigma));
    c.check(e_unit < 1e-2, tag + " normalized top singular value off by " + fmt(e_unit));
  }
  c.detail = "20 kernels, worst sigma error " + fmt(worst_sigma) + ", worst unit error " + fmt(worst_unit);
  return c;
}

// ---- 5. desk-scale adversarial run ----
Criterion desk_run() {
  Criterion c;
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.batch_size = 64;
  cfg.epochs = 25;  // 512 / 64 = 8 steps per epoch
  cfg.max_steps = 200;
  cfg.arch.latent_dim = 16;
  cfg.arch.base_filters = 8;
  cfg.arch.image_size = 16;
  const auto data = normalize(fixtures::blob_dataset(512, 16, 11));
  const auto t0 = Clock::now();
  Trainer<float> t(cfg);
  const auto log = t.run(data);
  const double secs = seconds_since(t0);
  c.check(t.global_step() == 200, "ran " + std::to_string(t.global_step()) + " steps");
  const double final_d = log.empty() ? NAN : log.back().d_loss;
  c.check(final_d < std::log(2.0), "final-epoch d_loss " + fmt(final_d));

  const std::size_t n = 64;
  Rng rng(5);
  const auto z = normal_tensor<float>({n, cfg.arch.latent_dim}, rng);
  const auto bright = t.generator().generate(z, std::vector<int>(n, 0), Mode::infer);
  const auto dark = t.generator().generate(z, std::vector<int>(n, 1), Mode::infer);
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m0 += fixtures::center_patch_mean(bright, i) / n;
    m1 += fixtures::center_patch_mean(dark, i) / n;
  }
  c.check(std::abs(m0 - m1) > 0.2, "center-patch separation " + fmt(std::abs(m0 - m1)));
  c.check(secs < 300.0, "runtime " + fmt(secs) + " s");
  c.detail = "final d_loss " + fmt(final_d) + " (ln 2 = " + fmt(std::log(2.0)) + "), centre means " + fmt(m0) + " / " +
             fmt(m1) + ", " + fmt(secs) + " s";
  return c;
}

// ---- 6. data pipeline ----
Criterion data_pipeline() {
  Criterion c;
  const auto dir = fixtures::scratch_dir("acceptance_data");
  const auto ds = fixtures::table1_dataset(4);
  save_csv(ds, (dir / "t1.csv").string());
  const auto loaded = load_csv((dir / "t1.csv").string(), 4);
  const auto s = class_distribution(loaded);
  c.check(s.counts == fixtures::kTable1Counts, "CSV class counts");
  c.check(loaded.bytes == ds.bytes && loaded.labels == ds.labels, "CSV pixels and labels");

  save_archive(loaded, (dir / "t1.cgds").string());
  const auto back = load_archive((dir / "t1.cgds").string());
  c.check(back.bytes == loaded.bytes && back.labels == loaded.labels, "CGDS round trip");
  c.check(encode_archive(back) == encode_archive(loaded), "CGDS re-encoding");

  for (int b = 0; b < 256; ++b) {
    const float x = normalize_pixel(static_cast<std::uint8_t>(b));
    c.check(x >= -1.0f && x <= 1.0f && denormalize_pixel(x) == b, "byte " + std::to_string(b) + " round trip");
  }
  std::ostringstream counts;
  for (std::size_t i = 0; i < 7; ++i) counts << (i ? "," : "") << s.counts[i];
  c.detail = "counts (" + counts.str() + "), 256 bytes exact";
  return c;
}

// ---- 7. augmentation balance ----
Criterion augmentation() {
  Criterion c;
  const auto dir = fixtures::scratch_dir("acceptance_augment");
  const auto real = fixtures::table1_dataset(16);
  save_csv(real, (dir / "t1.csv").string());
  ArchConfig stub;
  stub.latent_dim = 4;
  stub.base_filters = 1;
  stub.image_size = 16;
  Generator<float> gen(stub, 1);
  Discriminator<float> disc(stub, 2);
  save_generator(gen, (dir / "gen.ckpt").string());
  save_discriminator(disc, (dir / "disc.ckpt").string());

  const auto out = (dir / "balanced.cgds").string();
  const std::vector<std::string> args{"cgan",   "augment", "--data",   (dir / "t1.csv").string(),
                                      "--gen",  (dir / "gen.ckpt").string(), "--disc", (dir / "disc.ckpt").string(),
                                      "--out",  out,       "--tau",    "0",
                                      "--policy", "match-max"};
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
  c.check(code == 0, "augment exit code " + std::to_string(code) + ": " + e.str());
  if (code != 0) return c;

  const auto merged = load_archive(out);
  const auto s = class_distribution(merged);
  for (std::size_t k = 0; k < 7; ++k) c.check(s.counts[k] == 6411, "class " + std::to_string(k) + " count " + std::to_string(s.counts[k]));
  c.check(merged.size() == 44'877, "total " + std::to_string(merged.size()));
  const bool identical = merged.bytes.size() >= real.bytes.size() &&
                         std::equal(real.bytes.begin(), real.bytes.end(), merged.bytes.begin()) &&
                         std::equal(real.labels.begin(), real.labels.end(), merged.labels.begin());
  c.check(identical, "real rows differ from the input");
  c.detail = "total " + std::to_string(merged.size()) + ", real rows identical";
  return c;
}

// ---- 8. determinism and resume ----
TrainConfig determinism_config() {
  TrainConfig cfg;
  cfg.seed = 21;
  cfg.batch_size = 16;
  cfg.epochs = 20;
  cfg.max_steps = 60;  // 4 steps per epoch
  cfg.sample_rows = cfg.sample_cols = 0;
  cfg.arch.latent_dim = 8;
  cfg.arch.base_filters = 2;
  cfg.arch.image_size = 16;
  return cfg;
}

// Step rows of steps.csv, without the configuration echo.
std::string step_rows(const fs::path& run) {
  const auto text = slurp(run / "steps.csv");
  const auto at = text.find("step,");
  return at == std::string::npos ? std::string{} : text.substr(at);
}

Criterion determinism() {
  Criterion c;
  const auto dir = fixtures::scratch_dir("acceptance_determinism");
  const auto data = normalize(fixtures::blob_dataset(64, 16, 8));
  for (const char* run : {"a", "b"}) {
    Trainer<float> t(determinism_config());
    train(t, data, (dir / run).string());
  }
  const auto a = step_rows(dir / "a"), b = step_rows(dir / "b");
  const auto rows = static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n')) - 1;
  c.check(rows >= 50, "only " + std::to_string(rows) + " logged steps");
  c.check(!a.empty() && a == b, "identical-seed runs differ");
  c.check(slurp(dir / "a" / "losses.csv").size() > 0, "losses.csv missing");

  TrainConfig first = determinism_config();
  first.max_steps = 26;  // stops inside epoch 7
  {
    Trainer<float> t(first);
    train(t, data, (dir / "resumed").string());
  }
  Trainer<float> t(determinism_config());
  t.load((dir / "resumed" / "train.ckpt").string());
  train(t, data, (dir / "resumed").string(), {}, true);
  c.check(step_rows(dir / "resumed") == a, "resumed run differs from the uninterrupted run");
  c.check(slurp(dir / "resumed" / "gen.ckpt") == slurp(dir / "a" / "gen.ckpt"), "resumed generator weights differ");
  c.detail = std::to_string(rows) + " steps bit-identical; restore after step 26 matches";
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Criterion()>>> criteria{
      {"1 gradient suite", gradient_suite},
      {"2 architecture fidelity", architecture},
      {"3 untrained equilibrium", equilibrium},
      {"4 spectral norm oracle", spectral_oracle},
      {"5 desk-scale adversarial run", desk_run},
      {"6 data pipeline", data_pipeline},
      {"7 augmentation balance", augmentation},
      {"8 determinism and resume", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Criterion c;
    try {
      c = run();
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("threw: ") + e.what());
    }
    const bool pass = c.failures.empty();
    failed += !pass;
    std::cout << (pass ? "PASS " : "FAIL ") << name;
    if (!c.detail.empty()) std::cout << " -- " << c.detail;
    std::cout << '\n';
    for (const auto& f : c.failures) std::cout << "     " << f << '\n';
    std::cout.flush();
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << " of " << criteria.size() << " criteria passed\n";
  return failed ? 1 : 0;
}
