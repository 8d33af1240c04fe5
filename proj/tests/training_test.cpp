#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <cgan/training.hpp>

#include "fixtures.hpp"

using namespace cgan;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny(std::uint64_t seed = 5) {
  TrainConfig c;
  c.seed = seed;
  c.epochs = 50;
  c.batch_size = 16;
  c.arch.latent_dim = 4;
  c.arch.base_filters = 2;
  c.arch.image_size = 16;
  return c;
}

const LabeledDataset& blobs() {
  static const LabeledDataset ds = normalize(fixtures::blob_dataset(56, 16, 3));  // 4 steps per epoch
  return ds;
}

std::vector<StepLosses> losses_of(TrainConfig cfg, std::size_t steps) {
  cfg.max_steps = steps;
  Trainer<float> t(cfg);
  std::vector<StepLosses> out;
  t.run(blobs(), [&](const StepRecord& r) { out.push_back(r.losses); });
  return out;
}

bool same_bits(const std::vector<StepLosses>& a, const std::vector<StepLosses>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].d_loss != b[i].d_loss || a[i].g_loss != b[i].g_loss) return false;
  }
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(TrainStep, UntrainedEquilibriumWithZeroHead) {
  TrainConfig cfg = tiny();
  cfg.arch.zero_disc_head = true;
  Trainer<float> t(cfg);
  const auto batch = gather<float>(blobs(), batches(blobs(), 16, 1).front());
  const auto l = t.train_step(batch);
  EXPECT_NEAR(l.d_loss, 2.0 * std::log(2.0), 1e-3);
  EXPECT_NEAR(l.g_loss, std::log(2.0), 1e-3);
}

TEST(TrainStep, DiscriminatorUpdateLeavesGeneratorParametersUnchanged) {
  Trainer<float> t(tiny());
  std::vector<Tensor<float>> before;
  for (auto* p : t.generator().parameters()) before.push_back(p->value);
  const auto batch = gather<float>(blobs(), batches(blobs(), 16, 1).front());
  t.discriminator().update_spectral();
  t.update_discriminator(batch, batch.labels);
  const auto params = t.generator().parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(params[i]->value, before[i]) << params[i]->name;
    for (float g : params[i]->grad.data()) ASSERT_EQ(g, 0.0f) << params[i]->name;
  }
  EXPECT_EQ(t.generator_adam().step, 0u);
  EXPECT_EQ(t.discriminator_adam().step, 1u);
}

TEST(TrainStep, OneUpdateOfEachNetworkPerStep) {
  Trainer<float> t(tiny());
  const auto batch = gather<float>(blobs(), batches(blobs(), 16, 1).front());
  t.train_step(batch);
  t.train_step(batch);
  EXPECT_EQ(t.generator_adam().step, 2u);
  EXPECT_EQ(t.discriminator_adam().step, 2u);
}

TEST(TrainStep, FakeLabelPolicies) {
  Trainer<float> copy(tiny());
  const std::vector<int> real{0, 1, 1, 6};
  EXPECT_EQ(copy.fake_labels_for(real), real);
  TrainConfig cfg = tiny();
  cfg.fake_labels = FakeLabels::uniform;
  Trainer<float> uniform(cfg);
  std::vector<int> drawn;
  for (int i = 0; i < 50; ++i) {
    for (int l : uniform.fake_labels_for(real)) drawn.push_back(l);
  }
  for (int l : drawn) ASSERT_TRUE(l >= 0 && l < 7);
  EXPECT_NE(std::set<int>(drawn.begin(), drawn.end()).size(), 1u);
}

TEST(Training, IdenticalSeedsGiveIdenticalLosses) {
  const auto a = losses_of(tiny(8), 60);
  const auto b = losses_of(tiny(8), 60);
  ASSERT_EQ(a.size(), 60u);
  EXPECT_TRUE(same_bits(a, b));
  EXPECT_FALSE(same_bits(a, losses_of(tiny(9), 60)));
}

TEST(Training, ResumeMidEpochMatchesUninterruptedRun) {
  const auto full = losses_of(tiny(), 22);

  TrainConfig first = tiny();
  first.max_steps = 10;  // stops inside epoch 3
  Trainer<float> a(first);
  std::vector<StepLosses> resumed;
  a.run(blobs(), [&](const StepRecord& r) { resumed.push_back(r.losses); });
  EXPECT_EQ(a.step_in_epoch(), 2u);
  const auto bytes = a.to_archive().encode();

  TrainConfig second = tiny();
  second.max_steps = 22;
  Trainer<float> b(second);
  b.restore(TensorArchive::decode(bytes));
  b.run(blobs(), [&](const StepRecord& r) { resumed.push_back(r.losses); });
  EXPECT_TRUE(same_bits(full, resumed));

  // Network weights agree as well.
  Trainer<float> c(second);
  c.run(blobs());
  const auto pb = b.generator().parameters(), pc = c.generator().parameters();
  for (std::size_t i = 0; i < pb.size(); ++i) EXPECT_EQ(pb[i]->value, pc[i]->value) << pb[i]->name;
}

TEST(Training, OneLogRecordPerEpoch) {
  TrainConfig cfg = tiny();
  cfg.epochs = 3;
  Trainer<float> t(cfg);
  const auto log = t.run(blobs());
  ASSERT_EQ(log.size(), 3u);
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(log[i].epoch, i + 1);
    EXPECT_TRUE(std::isfinite(log[i].d_loss) && std::isfinite(log[i].g_loss));
  }
  EXPECT_EQ(t.global_step(), 12u);
}

TEST(Training, NonFiniteLossAbortsWithPosition) {
  Trainer<float> t(tiny());
  t.generator().dense().kernel.value[0] = std::nanf("");
  const auto msg = message_of([&] { t.run(blobs()); });
  EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
  EXPECT_NE(msg.find("epoch 1, step 1"), std::string::npos) << msg;
  EXPECT_THROW(t.run(blobs()), NumericError);
}

TEST(Training, RejectsMismatchedData) {
  Trainer<float> t(tiny());
  EXPECT_THROW(t.run(fixtures::blob_dataset(8, 16, 1)), ContractError);  // not normalized
  EXPECT_THROW(t.run(normalize(fixtures::blob_dataset(8, 32, 1))), ContractError);
}

TEST(Checkpoint, DefaultGeneratorEntry) {
  Generator<float> g(ArchConfig{}, 1);
  TensorArchive a;
  Trainer<float>::write_generator(a, g);
  EXPECT_EQ(a.shape_of("gen.dense.kernel"), (Shape{157, 32768}));
  EXPECT_TRUE(a.contains("gen.bn1.running_var"));
}

TEST(Checkpoint, NetworkRoundTripAndWrongNetwork) {
  const auto dir = fixtures::scratch_dir("train_ckpt");
  TrainConfig cfg = tiny();
  cfg.epochs = 2;
  Trainer<float> t(cfg);
  t.run(blobs());
  save_generator(t.generator(), (dir / "gen.ckpt").string());
  save_discriminator(t.discriminator(), (dir / "disc.ckpt").string());

  auto g = load_generator<float>((dir / "gen.ckpt").string());
  auto d = load_discriminator<float>((dir / "disc.ckpt").string());
  const std::vector<int> labels{2, 5};
  Tensor<float> z({2, 4});
  z.fill(0.3f);
  EXPECT_EQ(g.generate(z, labels, Mode::infer), t.generator().generate(z, labels, Mode::infer));
  const auto img = g.generate(z, labels, Mode::infer);
  EXPECT_EQ(d.score(img, labels), t.discriminator().score(img, labels));

  EXPECT_THROW(load_discriminator<float>((dir / "gen.ckpt").string()), CheckpointError);
  EXPECT_THROW(load_generator<float>((dir / "disc.ckpt").string()), CheckpointError);
}

TEST(Checkpoint, NameSetMismatchListsNames) {
  Trainer<float> t(tiny());
  auto extra = t.to_archive();
  extra.put("gen.bogus", Tensor<float>({1}));
  const auto msg = message_of([&] { Trainer<float>(tiny()).restore(extra); });
  EXPECT_NE(msg.find("extra: gen.bogus"), std::string::npos) << msg;

  auto partial = t.to_archive();
  ASSERT_TRUE(partial.erase("gen.bn2.gamma"));
  const auto missing = message_of([&] { Trainer<float>(tiny()).restore(partial); });
  EXPECT_NE(missing.find("missing: gen.bn2.gamma"), std::string::npos) << missing;
  EXPECT_THROW(Trainer<float>(tiny()).restore(partial), CheckpointError);

  auto no_counters = t.to_archive();
  no_counters.erase("train.rng");
  EXPECT_THROW(Trainer<float>(tiny()).restore(no_counters), CheckpointError);
}

TEST(Checkpoint, ArchitectureMismatchIsCheckpointError) {
  Trainer<float> t(tiny());
  TrainConfig other = tiny();
  other.arch.base_filters = 4;
  Trainer<float> u(other);
  EXPECT_THROW(u.restore(t.to_archive()), CheckpointError);
}

TEST(Samples, SevenClassesTimesGrid) {
  const auto dir = fixtures::scratch_dir("train_samples");
  TrainConfig cfg = tiny();
  cfg.sample_rows = 2;
  cfg.sample_cols = 2;
  Trainer<float> t(cfg);
  const auto files = emit_epoch_samples(t.generator(), 4, dir.string(), 4, snapshot_noise<float>(cfg));
  EXPECT_EQ(files.size(), 28u);
  EXPECT_TRUE(fs::exists(dir / "epoch4_class6_3.pgm"));
  const auto body = slurp(dir / "epoch4_class0_0.pgm");
  EXPECT_EQ(body.substr(0, 13), "P5\n16 16\n255\n");
  EXPECT_EQ(body.size(), 13u + 256u);
  EXPECT_EQ(snapshot_noise<float>(cfg), snapshot_noise<float>(cfg));
}

TEST(RunDirectory, LogsSamplesAndCheckpoints) {
  const auto dir = fixtures::scratch_dir("train_rundir");
  TrainConfig cfg = tiny();
  cfg.epochs = 2;
  cfg.sample_rows = 1;
  cfg.sample_cols = 1;
  cfg.checkpoint_every = 1;
  Trainer<float> t(cfg);
  train(t, blobs(), dir.string(), "epochs=2\nbatch=16\n");
  const auto losses = slurp(dir / "losses.csv");
  EXPECT_EQ(losses.rfind("# epochs=2\n# batch=16\nepoch,g_loss,d_loss,seconds\n1,", 0), 0u) << losses;
  std::size_t rows = 0;
  for (char ch : losses) rows += ch == '\n';
  EXPECT_EQ(rows, 3u + 2u);
  const auto steps = slurp(dir / "steps.csv");
  EXPECT_NE(steps.find("step,epoch,d_loss,g_loss\n1,1,"), std::string::npos);
  EXPECT_NE(steps.find("\n8,2,"), std::string::npos);
  for (const char* f : {"gen.ckpt", "disc.ckpt", "train.ckpt", "checkpoint_epoch1.ckpt", "checkpoint_epoch2.ckpt",
                        "samples/epoch1_class0_0.pgm", "samples/epoch2_class6_0.pgm"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
}

TEST(RunDirectory, ResumeAppendsToLogs) {
  const auto whole = fixtures::scratch_dir("train_whole");
  const auto split = fixtures::scratch_dir("train_split");
  TrainConfig cfg = tiny();
  cfg.epochs = 3;
  Trainer<float> w(cfg);
  train(w, blobs(), whole.string(), "seed=5\n");

  TrainConfig part = cfg;
  part.max_steps = 6;
  Trainer<float> a(part);
  train(a, blobs(), split.string(), "seed=5\n");
  Trainer<float> b(cfg);
  b.load((split / "train.ckpt").string());
  train(b, blobs(), split.string(), "seed=5\n", true);

  EXPECT_EQ(slurp(whole / "steps.csv"), slurp(split / "steps.csv"));
  EXPECT_EQ(slurp(whole / "gen.ckpt"), slurp(split / "gen.ckpt"));
}
