#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "aimdit/man.hpp"

namespace aimdit {

struct Utterance {
  ModalityFeatures features;
  int label = 0;
  std::string dialogue_id;
  std::string utterance_id;
};

struct FeatureDataset {
  std::size_t d = 0;
  std::vector<std::string> label_map;  // class index -> name
  std::vector<Utterance> utterances;
  std::map<std::string, std::vector<std::size_t>> splits;

  std::size_t classes() const { return label_map.size(); }
  // Throws on the first violated invariant.
  void validate() const;
  // Throws kConfig for an unknown split.
  const std::vector<std::size_t>& split(const std::string& name) const;
};

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

// Writes the JSON manifest and the binary container. Stored values are
// float32; doubles that are not float-representable are rounded.
void save_dataset(const FeatureDataset& ds, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& features_path);

FeatureDataset load_dataset(const std::filesystem::path& manifest_path, const std::filesystem::path& features_path);
// Resolves the container from the manifest's "features_file", relative to the
// manifest's directory.
FeatureDataset load_dataset(const std::filesystem::path& manifest_path);

enum class PlantingRule {
  // Class c adds text template (c mod 2) and audio template (c / 2) on the
  // same window of steps; neither modality alone identifies the class.
  kTextAudio,
  // Class c adds a per-class template to text only.
  kTextOnly,
};

struct LengthRange {
  std::size_t min = 1;
  std::size_t max = 1;
};

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t d = 8;
  std::size_t n_train = 800;
  std::size_t n_val = 200;
  std::size_t n_test = 0;
  std::array<LengthRange, kNumModalities> lengths{{{3, 8}, {4, 8}, {2, 6}}};
  // Template power over noise power on planted steps; infinity -> no noise.
  double snr = 6.0;
  PlantingRule rule = PlantingRule::kTextAudio;
  std::uint64_t seed = 1;

  void validate() const;
};

// Unit-RMS template added to each modality for each class (zeros where a
// modality carries nothing): templates[class][modality] has d values.
using SyntheticTemplates = std::vector<std::array<std::vector<double>, kNumModalities>>;

FeatureDataset generate_synthetic(const SyntheticSpec& spec, SyntheticTemplates* templates = nullptr);

struct Batch {
  std::vector<std::size_t> indices;  // into FeatureDataset::utterances
  std::vector<const ModalityFeatures*> features;
  std::vector<int> labels;
};

// Covers the split once; the last batch may be short. With shuffle the order
// is a seeded Fisher-Yates permutation.
std::vector<Batch> make_batches(const FeatureDataset& ds, const std::string& split, std::size_t batch_size,
                                std::uint64_t seed, bool shuffle);

}  // namespace aimdit
