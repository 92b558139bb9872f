#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "aimdit/data.hpp"
#include "aimdit/error.hpp"
#include "aimdit/numerics/random.hpp"
#include "oracle/helpers.hpp"
#include "oracle/reference.hpp"

namespace fs = std::filesystem;
namespace nn = aimdit::nn;
using aimdit::ErrorCode;
using aimdit::FeatureDataset;
using aimdit::SyntheticSpec;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("aimdit_data_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

ErrorCode load_error(const fs::path& manifest) {
  try {
    aimdit::load_dataset(manifest);
  } catch (const aimdit::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorCode::kIo;
}

void expect_identical(const FeatureDataset& a, const FeatureDataset& b) {
  ASSERT_EQ(a.d, b.d);
  ASSERT_EQ(a.label_map, b.label_map);
  ASSERT_EQ(a.splits, b.splits);
  ASSERT_EQ(a.utterances.size(), b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    const auto& x = a.utterances[i];
    const auto& y = b.utterances[i];
    ASSERT_EQ(x.label, y.label);
    ASSERT_EQ(x.dialogue_id, y.dialogue_id);
    ASSERT_EQ(x.utterance_id, y.utterance_id);
    for (std::size_t m = 0; m < 3; ++m) {
      ASSERT_EQ(x.features.streams[m].shape(), y.features.streams[m].shape());
      for (std::size_t k = 0; k < x.features.streams[m].numel(); ++k)
        ASSERT_EQ(x.features.streams[m].data()[k], y.features.streams[m].data()[k]);
    }
  }
}

FeatureDataset small_synthetic(std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.n_train = 20;
  s.n_val = 6;
  s.n_test = 4;
  s.seed = seed;
  return aimdit::generate_synthetic(s);
}

}  // namespace

TEST(Dataset, MinimalManifestRoundTrip) {
  TempDir dir;
  nn::Rng rng(1);
  FeatureDataset ds;
  ds.d = 4;
  ds.label_map = {"neutral", "joy"};
  aimdit::Utterance u;
  u.features = testutil::random_features(4, {2, 3, 1}, rng);
  for (auto& s : u.features.streams)
    for (auto& v : s.mutable_data()) v = static_cast<float>(v);
  u.label = 1;
  u.dialogue_id = "dia0";
  u.utterance_id = "utt0";
  ds.utterances.push_back(u);
  ds.splits["train"] = {0};
  aimdit::save_dataset(ds, dir / "m.json", dir / "m.bin");
  FeatureDataset back = aimdit::load_dataset(dir / "m.json");
  ASSERT_EQ(back.utterances.size(), 1u);
  EXPECT_EQ(back.utterances[0].features.text().shape(), (nn::Shape{2, 4}));
  EXPECT_EQ(back.utterances[0].features.audio().shape(), (nn::Shape{3, 4}));
  EXPECT_EQ(back.utterances[0].features.visual().shape(), (nn::Shape{1, 4}));
  expect_identical(ds, back);
}

TEST(Dataset, HundredRandomUtterancesAreBitIdentical) {
  TempDir dir;
  SyntheticSpec s;
  s.n_train = 70;
  s.n_val = 20;
  s.n_test = 10;
  s.seed = 99;
  FeatureDataset ds = aimdit::generate_synthetic(s);
  ASSERT_EQ(ds.utterances.size(), 100u);
  aimdit::save_dataset(ds, dir / "r.json", dir / "r.bin");
  expect_identical(ds, aimdit::load_dataset(dir / "r.json", dir / "r.bin"));
  // Writing the loaded copy again reproduces the same bytes.
  aimdit::save_dataset(aimdit::load_dataset(dir / "r.json"), dir / "s.json", dir / "s.bin");
  EXPECT_EQ(bytes_of(dir / "r.bin"), bytes_of(dir / "s.bin"));
}

TEST(Dataset, TruncatedFeatureFileIsChecksumError) {
  TempDir dir;
  aimdit::save_dataset(small_synthetic(), dir / "t.json", dir / "t.bin");
  auto b = bytes_of(dir / "t.bin");
  b.resize(b.size() - 9);
  put_bytes(dir / "t.bin", b);
  EXPECT_EQ(load_error(dir / "t.json"), ErrorCode::kChecksum);
}

TEST(Dataset, FlippedByteIsChecksumError) {
  TempDir dir;
  aimdit::save_dataset(small_synthetic(), dir / "f.json", dir / "f.bin");
  auto b = bytes_of(dir / "f.bin");
  b[b.size() / 2] ^= 0x10;
  put_bytes(dir / "f.bin", b);
  EXPECT_EQ(load_error(dir / "f.json"), ErrorCode::kChecksum);
}

TEST(Dataset, BadMagicIsMagicError) {
  TempDir dir;
  aimdit::save_dataset(small_synthetic(), dir / "g.json", dir / "g.bin");
  auto b = bytes_of(dir / "g.bin");
  b[0] = 'X';
  put_bytes(dir / "g.bin", b);
  EXPECT_EQ(load_error(dir / "g.json"), ErrorCode::kMagic);
}

TEST(Dataset, ManifestInconsistenciesHaveDistinctCodes) {
  TempDir dir;
  aimdit::save_dataset(small_synthetic(), dir / "h.json", dir / "h.bin");
  const auto original = nlohmann::json::parse(std::ifstream(dir / "h.json"));
  auto rewrite = [&](const std::function<void(nlohmann::json&)>& edit) {
    nlohmann::json j = original;
    edit(j);
    std::ofstream(dir / "h.json", std::ios::trunc) << j.dump();
    return load_error(dir / "h.json");
  };
  EXPECT_EQ(rewrite([](nlohmann::json& j) { j["utterances"][0]["label"] = 9; }), ErrorCode::kLabelRange);
  EXPECT_EQ(rewrite([](nlohmann::json& j) { j["utterances"][0]["lengths"][1] = 50; }), ErrorCode::kShape);
  EXPECT_EQ(rewrite([](nlohmann::json& j) { j["version"] = 7; }), ErrorCode::kVersion);
  EXPECT_EQ(rewrite([](nlohmann::json& j) { j["splits"]["train"].push_back(10000); }), ErrorCode::kShape);
}

TEST(Dataset, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_EQ(load_error(dir / "absent.json"), ErrorCode::kIo);
}

TEST(Dataset, ValidateCatchesOverlappingSplits) {
  FeatureDataset ds = small_synthetic();
  ds.splits["val"].push_back(ds.splits["train"].front());
  EXPECT_THROW(ds.validate(), aimdit::Error);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  TempDir dir;
  aimdit::save_dataset(small_synthetic(5), dir / "a.json", dir / "a.bin");
  aimdit::save_dataset(small_synthetic(5), dir / "b.json", dir / "b.bin");
  EXPECT_EQ(bytes_of(dir / "a.bin"), bytes_of(dir / "b.bin"));
  aimdit::save_dataset(small_synthetic(6), dir / "c.json", dir / "c.bin");
  EXPECT_NE(bytes_of(dir / "a.bin"), bytes_of(dir / "c.bin"));
}

TEST(Synthetic, DatasetIsValid) {
  FeatureDataset ds = small_synthetic();
  EXPECT_NO_THROW(ds.validate());
  EXPECT_EQ(ds.split("train").size(), 20u);
  EXPECT_EQ(ds.split("val").size(), 6u);
  EXPECT_EQ(ds.split("test").size(), 4u);
  for (const auto& u : ds.utterances) {
    EXPECT_GE(u.features.length(aimdit::kText), 3u);
    EXPECT_LE(u.features.length(aimdit::kText), 8u);
    EXPECT_EQ(u.features.width(), 8u);
  }
}

TEST(Synthetic, NoiselessNearestTemplateIsPerfect) {
  SyntheticSpec s;
  s.snr = std::numeric_limits<double>::infinity();
  s.n_train = 400;
  s.n_val = 0;
  aimdit::SyntheticTemplates templates;
  FeatureDataset ds = aimdit::generate_synthetic(s, &templates);
  ASSERT_EQ(templates.size(), s.classes);
  std::size_t correct = 0;
  for (const auto& u : ds.utterances) {
    const auto x = oracle::pooled_features(u.features);
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < templates.size(); ++c) {
      double score = 0.0;
      for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t j = 0; j < s.d; ++j) score += x[m * s.d + j] * templates[c][m][j];
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(c);
      }
    }
    correct += best == u.label ? 1 : 0;
  }
  EXPECT_EQ(correct, ds.utterances.size());
}

TEST(Synthetic, PatternSpansTextAndAudio) {
  SyntheticSpec s;
  aimdit::SyntheticTemplates templates;
  aimdit::generate_synthetic(s, &templates);
  // Class pairs sharing a text template differ in audio, and vice versa.
  EXPECT_EQ(templates[0][aimdit::kText], templates[2][aimdit::kText]);
  EXPECT_NE(templates[0][aimdit::kAudio], templates[2][aimdit::kAudio]);
  EXPECT_EQ(templates[0][aimdit::kAudio], templates[1][aimdit::kAudio]);
  EXPECT_NE(templates[0][aimdit::kText], templates[1][aimdit::kText]);
  for (const auto& t : templates)
    for (double v : t[aimdit::kVisual]) EXPECT_EQ(v, 0.0);
  for (const auto& v : templates[0][aimdit::kText]) EXPECT_TRUE(std::isfinite(v));
  double power = 0.0;
  for (double v : templates[0][aimdit::kText]) power += v * v;
  EXPECT_NEAR(power / static_cast<double>(s.d), 1.0, 1e-12);
}

TEST(Synthetic, LabelsAreUniform) {
  SyntheticSpec s;
  s.classes = 7;
  s.n_train = 7000;
  s.n_val = 0;
  s.d = 2;
  s.lengths = {{{1, 1}, {1, 1}, {1, 1}}};
  FeatureDataset ds = aimdit::generate_synthetic(s);
  std::vector<double> counts(7, 0.0);
  for (const auto& u : ds.utterances) counts[static_cast<std::size_t>(u.label)] += 1;
  const double mean = 1000.0, sigma = std::sqrt(7000.0 * (1.0 / 7) * (6.0 / 7));
  for (double c : counts) EXPECT_LE(std::abs(c - mean), 3 * sigma);
  EXPECT_EQ(ds.label_map.front(), "anger");
}

TEST(Synthetic, LogisticBaselineSolvesItAtSnrFour) {
  SyntheticSpec s;
  s.snr = 4.0;
  FeatureDataset ds = aimdit::generate_synthetic(s);
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (auto i : ds.split("train")) {
    xs.push_back(oracle::pooled_features(ds.utterances[i].features));
    ys.push_back(ds.utterances[i].label);
  }
  const auto model = oracle::fit_logistic(xs, ys, s.classes, 500, 0.5);
  std::size_t correct = 0;
  for (auto i : ds.split("val"))
    correct += model.predict(oracle::pooled_features(ds.utterances[i].features)) == ds.utterances[i].label ? 1 : 0;
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(ds.split("val").size()), 0.90);
}

TEST(Synthetic, InvalidSpecsAreRejected) {
  SyntheticSpec s;
  s.snr = 0.0;
  EXPECT_THROW(aimdit::generate_synthetic(s), aimdit::Error);
  SyntheticSpec r;
  r.lengths[1] = {5, 4};
  EXPECT_THROW(aimdit::generate_synthetic(r), aimdit::Error);
  SyntheticSpec c;
  c.classes = 1;
  EXPECT_THROW(aimdit::generate_synthetic(c), aimdit::Error);
}

TEST(Batches, SizesAndCoverage) {
  SyntheticSpec s;
  s.n_train = 10;
  s.n_val = 0;
  FeatureDataset ds = aimdit::generate_synthetic(s);
  auto batches = aimdit::make_batches(ds, "train", 4, 1, false);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].indices.size(), 4u);
  EXPECT_EQ(batches[1].indices.size(), 4u);
  EXPECT_EQ(batches[2].indices.size(), 2u);
  std::size_t expect = 0;
  for (const auto& b : batches)
    for (std::size_t k = 0; k < b.indices.size(); ++k) {
      EXPECT_EQ(b.indices[k], ds.split("train")[expect++]);
      EXPECT_EQ(b.labels[k], ds.utterances[b.indices[k]].label);
      EXPECT_EQ(b.features[k], &ds.utterances[b.indices[k]].features);
    }
}

TEST(Batches, ShuffleIsSeededPermutation) {
  FeatureDataset ds = small_synthetic();
  auto a = aimdit::make_batches(ds, "train", 3, 17, true);
  auto b = aimdit::make_batches(ds, "train", 3, 17, true);
  auto c = aimdit::make_batches(ds, "train", 3, 18, true);
  std::vector<std::size_t> ia, ib, ic;
  for (const auto& x : a) ia.insert(ia.end(), x.indices.begin(), x.indices.end());
  for (const auto& x : b) ib.insert(ib.end(), x.indices.begin(), x.indices.end());
  for (const auto& x : c) ic.insert(ic.end(), x.indices.begin(), x.indices.end());
  EXPECT_EQ(ia, ib);
  EXPECT_NE(ia, ic);
  std::set<std::size_t> seen(ia.begin(), ia.end());
  EXPECT_EQ(seen.size(), ia.size());
  EXPECT_EQ(seen, std::set<std::size_t>(ds.split("train").begin(), ds.split("train").end()));
}

TEST(Batches, UnknownSplit) {
  FeatureDataset ds = small_synthetic();
  try {
    aimdit::make_batches(ds, "dev", 4, 1, false);
    FAIL();
  } catch (const aimdit::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}
