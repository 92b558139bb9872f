#include "aimdit/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "aimdit/error.hpp"
#include "aimdit/numerics/random.hpp"
#include "binary_io.hpp"

namespace aimdit {

using nn::Tensor;

namespace {

constexpr std::string_view kFeatureMagic = "AIMD";
constexpr std::size_t kHeaderBytes = 8;

const std::vector<std::string>& emotion_names() {
  static const std::vector<std::string> names{"anger", "disgust", "fear", "happy", "neutral", "sadness", "surprise"};
  return names;
}

std::size_t block_bytes(std::size_t rows, std::size_t d) { return rows * d * 4; }

std::vector<double> unit_rms(std::size_t d, nn::Rng& rng) {
  std::vector<double> v(d);
  double power = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    power += x * x;
  }
  const double norm = std::sqrt(power / static_cast<double>(d));
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

void FeatureDataset::validate() const {
  if (d == 0) fail(ErrorCode::kShape, "dataset feature width d must be positive");
  if (label_map.size() < 2) fail(ErrorCode::kShape, "dataset needs at least two classes in its label map");
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& u = utterances[i];
    if (u.label < 0 || static_cast<std::size_t>(u.label) >= classes()) {
      fail(ErrorCode::kLabelRange, "utterance " + std::to_string(i) + " has label " + std::to_string(u.label) +
                                       " outside [0," + std::to_string(classes()) + ")");
    }
    if (u.features.width() != d) {
      fail(ErrorCode::kShape, "utterance " + std::to_string(i) + " has width " +
                                  std::to_string(u.features.width()) + ", dataset d=" + std::to_string(d));
    }
  }
  std::set<std::size_t> seen;
  for (const auto& [name, idx] : splits) {
    for (std::size_t i : idx) {
      if (i >= utterances.size()) {
        fail(ErrorCode::kShape, "split '" + name + "' references utterance " + std::to_string(i) + " of " +
                                    std::to_string(utterances.size()));
      }
      if (!seen.insert(i).second) {
        fail(ErrorCode::kShape, "utterance " + std::to_string(i) + " appears in more than one split entry");
      }
    }
  }
}

const std::vector<std::size_t>& FeatureDataset::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) fail(ErrorCode::kConfig, "dataset has no split named '" + name + "'");
  return it->second;
}

void save_dataset(const FeatureDataset& ds, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& features_path) {
  ds.validate();
  io::ByteWriter w;
  w.put_bytes(kFeatureMagic);
  w.put_u32(kFeatureFormatVersion);
  nlohmann::json utts = nlohmann::json::array();
  for (const auto& u : ds.utterances) {
    nlohmann::json lengths = nlohmann::json::array();
    const std::size_t offset = w.size();
    for (const auto& s : u.features.streams) {
      lengths.push_back(s.dim(0));
      for (double v : s.data()) w.put_f32(v);
    }
    utts.push_back({{"utterance_id", u.utterance_id},
                    {"dialogue_id", u.dialogue_id},
                    {"label", u.label},
                    {"lengths", lengths},
                    {"offset", offset}});
  }
  w.seal();
  const auto& bytes = w.bytes();
  std::uint32_t crc = 0;
  for (int i = 0; i < 4; ++i) crc |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);

  nlohmann::json manifest = {{"format", "aimdit-features"},
                             {"version", kFeatureFormatVersion},
                             {"features_file", features_path.filename().string()},
                             {"features_bytes", bytes.size()},
                             {"features_crc32", crc},
                             {"d", ds.d},
                             {"label_map", ds.label_map},
                             {"splits", ds.splits},
                             {"utterances", utts}};
  io::write_file(features_path, bytes);
  io::write_text(manifest_path, manifest.dump(1) + "\n");
}

FeatureDataset load_dataset(const std::filesystem::path& manifest_path, const std::filesystem::path& features_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kShape, "manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  const std::vector<std::uint8_t> bytes = io::read_file(features_path);

  if (bytes.size() < kFeatureMagic.size() ||
      !std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin())) {
    fail(ErrorCode::kMagic, features_path.string() + " does not start with magic \"AIMD\"");
  }
  const std::size_t payload = io::verify_sealed(bytes, features_path.string());
  io::ByteReader r(bytes.data(), payload, ErrorCode::kShape);
  r.seek(kFeatureMagic.size());
  const std::uint32_t version = r.get_u32();
  if (version != kFeatureFormatVersion) {
    fail(ErrorCode::kVersion, "feature container version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kFeatureFormatVersion) + ")");
  }

  FeatureDataset ds;
  try {
    if (manifest.value("format", std::string()) != "aimdit-features") {
      fail(ErrorCode::kShape, "manifest format tag is not \"aimdit-features\"");
    }
    if (manifest.at("version").get<std::uint32_t>() != kFeatureFormatVersion) {
      fail(ErrorCode::kVersion, "manifest version " + manifest.at("version").dump() + " is not supported");
    }
    if (manifest.contains("features_bytes") && manifest.at("features_bytes").get<std::size_t>() != bytes.size()) {
      fail(ErrorCode::kShape, "manifest expects " + manifest.at("features_bytes").dump() + " feature bytes, file has " +
                                  std::to_string(bytes.size()));
    }
    ds.d = manifest.at("d").get<std::size_t>();
    ds.label_map = manifest.at("label_map").get<std::vector<std::string>>();
    ds.splits = manifest.at("splits").get<std::map<std::string, std::vector<std::size_t>>>();
    if (ds.d == 0) fail(ErrorCode::kShape, "manifest d must be positive");
    std::size_t expected_end = kHeaderBytes;
    for (const auto& ju : manifest.at("utterances")) {
      Utterance u;
      u.utterance_id = ju.value("utterance_id", std::string());
      u.dialogue_id = ju.value("dialogue_id", std::string());
      u.label = ju.at("label").get<int>();
      const auto lengths = ju.at("lengths").get<std::vector<std::size_t>>();
      const auto offset = ju.at("offset").get<std::size_t>();
      if (lengths.size() != kNumModalities) {
        fail(ErrorCode::kShape, "utterance '" + u.utterance_id + "' lists " + std::to_string(lengths.size()) +
                                    " modality lengths, expected 3");
      }
      if (offset != expected_end) {
        fail(ErrorCode::kShape, "utterance '" + u.utterance_id + "' offset " + std::to_string(offset) +
                                    " does not follow the previous block (expected " + std::to_string(expected_end) +
                                    ")");
      }
      r.seek(offset);
      for (std::size_t m = 0; m < kNumModalities; ++m) {
        if (lengths[m] == 0) fail(ErrorCode::kShape, "utterance '" + u.utterance_id + "' has an empty modality");
        if (block_bytes(lengths[m], ds.d) > r.remaining()) {
          fail(ErrorCode::kShape, "utterance '" + u.utterance_id + "' extends past the end of the feature payload");
        }
        std::vector<double> values(lengths[m] * ds.d);
        for (auto& v : values) v = r.get_f32();
        u.features.streams[m] = Tensor::from({lengths[m], ds.d}, std::move(values));
      }
      expected_end = r.pos();
      if (u.label < 0 || static_cast<std::size_t>(u.label) >= ds.label_map.size()) {
        fail(ErrorCode::kLabelRange, "utterance '" + u.utterance_id + "' has label " + std::to_string(u.label) +
                                         " outside [0," + std::to_string(ds.label_map.size()) + ")");
      }
      ds.utterances.push_back(std::move(u));
    }
    if (expected_end != payload) {
      fail(ErrorCode::kShape, "feature payload holds " + std::to_string(payload - expected_end) +
                                  " bytes not described by the manifest");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kShape, "manifest " + manifest_path.string() + " is malformed: " + e.what());
  }
  ds.validate();
  return ds;
}

FeatureDataset load_dataset(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kShape, "manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  if (!manifest.contains("features_file") || !manifest["features_file"].is_string()) {
    fail(ErrorCode::kShape, "manifest " + manifest_path.string() + " has no features_file entry");
  }
  return load_dataset(manifest_path, manifest_path.parent_path() / manifest["features_file"].get<std::string>());
}

void SyntheticSpec::validate() const {
  if (classes < 2) fail(ErrorCode::kConfig, "synthetic data needs at least 2 classes");
  if (d == 0) fail(ErrorCode::kConfig, "synthetic feature width d must be positive");
  if (n_train + n_val + n_test == 0) fail(ErrorCode::kConfig, "synthetic dataset size must be positive");
  if (!(snr > 0.0)) fail(ErrorCode::kConfig, "SNR must be positive");
  for (const auto& r : lengths) {
    if (r.min == 0 || r.max < r.min) {
      fail(ErrorCode::kConfig, "length range [" + std::to_string(r.min) + "," + std::to_string(r.max) +
                                   "] must be non-empty and start at 1 or more");
    }
  }
}

FeatureDataset generate_synthetic(const SyntheticSpec& spec, SyntheticTemplates* templates) {
  spec.validate();
  nn::Rng rng(spec.seed);
  const std::size_t c = spec.classes;
  const std::size_t d = spec.d;

  SyntheticTemplates tpl(c);
  for (auto& t : tpl)
    for (auto& m : t) m.assign(d, 0.0);
  if (spec.rule == PlantingRule::kTextAudio) {
    const std::size_t audio_ids = (c + 1) / 2;
    std::vector<std::vector<double>> text_bank;
    std::vector<std::vector<double>> audio_bank;
    for (std::size_t i = 0; i < 2; ++i) text_bank.push_back(unit_rms(d, rng));
    for (std::size_t i = 0; i < audio_ids; ++i) audio_bank.push_back(unit_rms(d, rng));
    for (std::size_t k = 0; k < c; ++k) {
      tpl[k][kText] = text_bank[k % 2];
      tpl[k][kAudio] = audio_bank[k / 2];
    }
  } else {
    for (std::size_t k = 0; k < c; ++k) tpl[k][kText] = unit_rms(d, rng);
  }

  const double noise_sd = std::isinf(spec.snr) ? 0.0 : 1.0 / std::sqrt(spec.snr);
  FeatureDataset ds;
  ds.d = d;
  if (c == emotion_names().size()) {
    ds.label_map = emotion_names();
  } else {
    for (std::size_t k = 0; k < c; ++k) ds.label_map.push_back("class" + std::to_string(k));
  }
  const std::size_t n = spec.n_train + spec.n_val + spec.n_test;
  for (std::size_t i = 0; i < n; ++i) {
    Utterance u;
    u.label = static_cast<int>(rng.index(c));
    u.utterance_id = "utt" + std::to_string(i);
    u.dialogue_id = "dlg" + std::to_string(i / 10);
    std::array<std::size_t, kNumModalities> len{};
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      const auto& r = spec.lengths[m];
      len[m] = r.min + rng.index(r.max - r.min + 1);
    }
    // Shared window inside the overlap of the planted modalities.
    const std::size_t overlap =
        spec.rule == PlantingRule::kTextAudio ? std::min(len[kText], len[kAudio]) : len[kText];
    const std::size_t min_window = (overlap + 1) / 2;
    const std::size_t window = min_window + rng.index(overlap - min_window + 1);
    const std::size_t start = rng.index(overlap - window + 1);
    const auto& pattern = tpl[static_cast<std::size_t>(u.label)];
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      std::vector<double> values(len[m] * d);
      for (std::size_t t = 0; t < len[m]; ++t) {
        const bool planted = t >= start && t < start + window;
        for (std::size_t j = 0; j < d; ++j) {
          double v = noise_sd * rng.normal();
          if (planted) v += pattern[m][j];
          values[t * d + j] = static_cast<double>(static_cast<float>(v));
        }
      }
      u.features.streams[m] = Tensor::from({len[m], d}, std::move(values));
    }
    ds.utterances.push_back(std::move(u));
  }
  auto range = [](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> v(count);
    std::iota(v.begin(), v.end(), begin);
    return v;
  };
  if (spec.n_train) ds.splits["train"] = range(0, spec.n_train);
  if (spec.n_val) ds.splits["val"] = range(spec.n_train, spec.n_val);
  if (spec.n_test) ds.splits["test"] = range(spec.n_train + spec.n_val, spec.n_test);
  if (templates) *templates = std::move(tpl);
  return ds;
}

std::vector<Batch> make_batches(const FeatureDataset& ds, const std::string& split, std::size_t batch_size,
                                std::uint64_t seed, bool shuffle) {
  if (batch_size == 0) fail(ErrorCode::kConfig, "batch size must be positive");
  std::vector<std::size_t> order = ds.split(split);
  if (shuffle) {
    nn::Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  }
  std::vector<Batch> out;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), begin + batch_size);
    for (std::size_t k = begin; k < end; ++k) {
      const auto& u = ds.utterances[order[k]];
      b.indices.push_back(order[k]);
      b.features.push_back(&u.features);
      b.labels.push_back(u.label);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace aimdit
