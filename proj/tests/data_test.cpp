#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <cgan/data.hpp>
#include <cgan/pgm.hpp>

#include "fixtures.hpp"

using namespace cgan;

namespace {

std::string csv_row(int label, std::size_t pixels, int value = 7) {
  std::string row = std::to_string(label) + ",";
  for (std::size_t i = 0; i < pixels; ++i) row += (i ? " " : "") + std::to_string(value);
  return row + "\n";
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

TEST(Csv, ThreeRowFixture) {
  std::istringstream in("emotion,pixels,Usage\n" + csv_row(0, 4096) + csv_row(3, 4096, 255) + csv_row(3, 4096, 0));
  const auto ds = parse_csv(in);
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.height, 64u);
  EXPECT_EQ(ds.bytes.size(), 3u * 4096u);
  EXPECT_EQ(ds.bytes[4096], 255);
  const auto s = class_distribution(ds);
  EXPECT_EQ(s.counts, (std::array<std::size_t, 7>{1, 0, 0, 2, 0, 0, 0}));
  EXPECT_EQ(s.total, 3u);
}

TEST(Csv, ShortRowNamesTheRow) {
  std::istringstream in("emotion,pixels\n" + csv_row(1, 4096) + csv_row(2, 4095));
  const auto msg = message_of([&] { parse_csv(in); });
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("4095"), std::string::npos) << msg;
  std::istringstream again("emotion,pixels\n" + csv_row(2, 4095));
  EXPECT_THROW(parse_csv(again), ParseError);
}

TEST(Csv, RejectsBadLabelsTokensAndHeader) {
  std::istringstream label("emotion,pixels\n" + csv_row(7, 16));
  EXPECT_THROW(parse_csv(label, 4), ParseError);
  std::istringstream token("emotion,pixels\n3,1 2 x 4 5 6 7 8 9 10 11 12 13 14 15 16\n");
  const auto msg = message_of([&] { parse_csv(token, 4); });
  EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
  std::istringstream range("emotion,pixels\n" + csv_row(3, 16, 256));
  EXPECT_THROW(parse_csv(range, 4), ParseError);
  std::istringstream header("label,data\n" + csv_row(3, 16));
  EXPECT_THROW(parse_csv(header, 4), ParseError);
  std::istringstream empty("");
  EXPECT_THROW(parse_csv(empty, 4), ParseError);
}

TEST(Csv, Table1FixtureCounts) {
  const auto dir = fixtures::scratch_dir("data_table1");
  const auto ds = fixtures::table1_dataset(4);
  save_csv(ds, (dir / "t1.csv").string());
  const auto loaded = load_csv((dir / "t1.csv").string(), 4);
  EXPECT_EQ(loaded.labels, ds.labels);
  EXPECT_EQ(loaded.bytes, ds.bytes);
  const auto s = class_distribution(loaded);
  EXPECT_EQ(s.counts, fixtures::kTable1Counts);
  EXPECT_EQ(s.total, 24'252u);
}

TEST(Archive, RoundTripIsBitExact) {
  const auto dir = fixtures::scratch_dir("data_archive");
  const auto ds = fixtures::table1_dataset(8);
  save_archive(ds, (dir / "t1.cgds").string());
  const auto back = load_archive((dir / "t1.cgds").string());
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.bytes, ds.bytes);
  EXPECT_EQ(back.height, 8u);
  EXPECT_FALSE(back.normalized);
  EXPECT_EQ(class_distribution(back).counts, fixtures::kTable1Counts);
  EXPECT_TRUE(is_archive_file((dir / "t1.cgds").string()));
  EXPECT_EQ(load_dataset((dir / "t1.cgds").string()).bytes, ds.bytes);

  const auto norm = normalize(ds);
  const auto back_norm = decode_archive(encode_archive(norm));
  EXPECT_TRUE(back_norm.normalized);
  EXPECT_EQ(back_norm.values, norm.values);
}

TEST(Archive, LayoutMatchesFormat) {
  LabeledDataset ds;
  ds.height = ds.width = 2;
  ds.labels = {5};
  ds.bytes = {1, 2, 3, 4};
  const auto bytes = encode_archive(ds);
  const std::vector<std::uint8_t> expected{'C', 'G', 'D', 'S', 1, 0, 0, 1, 0, 0, 0, 4, 1, 0, 0, 0, 2, 0, 0, 0,
                                           2,   0,   0,   0,   1, 0, 0, 0, 5, 1, 2, 3, 4};
  EXPECT_EQ(bytes, expected);
}

TEST(Archive, CorruptionIsFormatError) {
  const auto bytes = encode_archive(fixtures::table1_dataset(2));
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_archive(truncated), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_archive(magic), FormatError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_archive(version), FormatError);
  EXPECT_THROW(decode_archive({'C', 'G'}), FormatError);
  EXPECT_THROW(decode_archive({}), FormatError);
}

TEST(Normalize, EndpointsAndMidpoints) {
  EXPECT_EQ(normalize_pixel(0), -1.0f);
  EXPECT_EQ(normalize_pixel(255), 1.0f);
  EXPECT_NEAR(normalize_pixel(127), 127.0 / 127.5 - 1.0, 1e-7);
  EXPECT_NEAR(normalize_pixel(128), 128.0 / 127.5 - 1.0, 1e-7);
  EXPECT_NEAR(normalize_pixel(127), -0.00392, 1e-5);
  EXPECT_NEAR(normalize_pixel(128), 0.00392, 1e-5);
}

TEST(Normalize, ExhaustiveRoundTrip) {
  for (int b = 0; b < 256; ++b) {
    const float x = normalize_pixel(static_cast<std::uint8_t>(b));
    ASSERT_GE(x, -1.0f);
    ASSERT_LE(x, 1.0f);
    ASSERT_EQ(denormalize_pixel(x), b) << "byte " << b;
  }
  EXPECT_EQ(denormalize_pixel(-1.0), 0);
  EXPECT_EQ(denormalize_pixel(1.0), 255);
  EXPECT_EQ(denormalize_pixel(0.0), 128);
  EXPECT_EQ(denormalize_pixel(-7.0), 0);
  EXPECT_EQ(denormalize_pixel(3.0), 255);
}

TEST(Normalize, DatasetFlagGuards) {
  const auto raw = fixtures::table1_dataset(2);
  const auto norm = normalize(raw);
  EXPECT_TRUE(norm.normalized);
  EXPECT_THROW(normalize(norm), ContractError);
  EXPECT_THROW(denormalize(raw), ContractError);
  EXPECT_EQ(denormalize(norm).bytes, raw.bytes);
}

TEST(Batches, ChunkSizes) {
  const auto b = batches(130, 64, 1);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 64u);
  EXPECT_EQ(b[1].size(), 64u);
  EXPECT_EQ(b[2].size(), 2u);
}

TEST(Batches, SeededAndPartition) {
  EXPECT_EQ(batches(517, 32, 9), batches(517, 32, 9));
  EXPECT_NE(batches(517, 32, 9), batches(517, 32, 10));
  std::multiset<std::size_t> seen;
  for (const auto& chunk : batches(517, 32, 9)) seen.insert(chunk.begin(), chunk.end());
  ASSERT_EQ(seen.size(), 517u);
  std::size_t expect = 0;
  for (auto i : seen) EXPECT_EQ(i, expect++);
}

TEST(Batches, EmptyDatasetIsContractError) {
  EXPECT_THROW(batches(0, 64, 1), ContractError);
  EXPECT_THROW(batches(10, 0, 1), ContractError);
}

TEST(Batches, GatherCopiesImagesAndLabels) {
  const auto ds = normalize(fixtures::table1_dataset(2));
  const std::vector<std::size_t> idx{5, 0};
  const auto b = gather<float>(ds, idx);
  EXPECT_EQ(b.images.shape(), (Shape{2, 2, 2, 1}));
  EXPECT_EQ(b.labels, (std::vector<int>{ds.labels[5], ds.labels[0]}));
  for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(b.images[p], ds.values[5 * 4 + p]);
}

TEST(ClassStats, Table1Ratio) {
  const auto s = class_distribution(fixtures::table1_dataset(1));
  EXPECT_NEAR(s.imbalance_ratio, 6411.0 / 436.0, 1e-12);
  EXPECT_NEAR(s.imbalance_ratio, 14.70, 5e-3);
  EXPECT_FALSE(s.has_empty_class);
  const auto table = format_class_table(s);
  EXPECT_NE(table.find("1 Disgust 436\n"), std::string::npos) << table;
  EXPECT_NE(table.find("3 Happy 6411\n"), std::string::npos) << table;
}

TEST(ClassStats, EmptyAndSingleClass) {
  const std::vector<std::uint8_t> some{0, 0, 0, 2, 2, 6};
  const auto s = class_distribution(some);
  EXPECT_TRUE(s.has_empty_class);
  EXPECT_EQ(s.counts[1], 0u);
  EXPECT_NEAR(s.imbalance_ratio, 3.0, 1e-12);
  const std::vector<std::uint8_t> single(9, 4);
  const auto t = class_distribution(single);
  EXPECT_EQ(t.imbalance_ratio, 1.0);
  std::size_t sum = 0;
  for (auto c : t.counts) sum += c;
  EXPECT_EQ(sum, t.total);
  EXPECT_THROW(class_distribution(std::vector<std::uint8_t>{7}), LabelError);
}

TEST(Pgm, HeaderAndRoundTrip) {
  const auto dir = fixtures::scratch_dir("data_pgm");
  Tensor<float> images({1, 64, 64, 1});
  for (std::size_t i = 0; i < images.size(); ++i) images[i] = static_cast<float>(i % 3) - 1.0f;
  const auto img = to_gray_image(images, 0);
  EXPECT_EQ(img.pixels[0], 0);
  EXPECT_EQ(img.pixels[1], 128);
  EXPECT_EQ(img.pixels[2], 255);
  const auto path = (dir / "x.pgm").string();
  write_pgm(path, img);
  std::ifstream in(path, std::ios::binary);
  std::string head(13, '\0');
  in.read(head.data(), 13);
  EXPECT_EQ(head, "P5\n64 64\n255\n");
  const auto back = read_pgm(path);
  EXPECT_EQ(back.width, 64u);
  EXPECT_EQ(back.height, 64u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Pgm, RejectsOtherFormats) {
  const auto dir = fixtures::scratch_dir("data_pgm_bad");
  const auto path = (dir / "x.pgm").string();
  std::ofstream(path) << "P2\n2 2\n255\n0 0 0 0\n";
  EXPECT_THROW(read_pgm(path), FormatError);
  std::ofstream(path, std::ios::trunc) << "P5\n4 4\n255\nab";
  EXPECT_THROW(read_pgm(path), FormatError);
  EXPECT_THROW(read_pgm((dir / "missing.pgm").string()), IoError);
}
