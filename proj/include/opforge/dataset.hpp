#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "opforge/image.hpp"
#include "opforge/imageops.hpp"
#include "opforge/model.hpp"
#include "opforge/tensor.hpp"

namespace opforge {

/// Class 0 of every multi-class run: the unprocessed original.
inline const std::string kOriginalClass = "Orig";

/// Table-order class names: Orig plus the eleven operations.
std::vector<std::string> all_class_names();

struct SynthConfig {
  int size = 64;
  double beta = 1.5;  // spectral exponent of the 1/f^beta texture, in [1, 2]
  int contrast_low = 20;
  int contrast_high = 235;
  uint64_t seed = 1;
};

/// 1/f^beta random-phase noise plus a random low-order gradient, normalized
/// to the contrast range. Deterministic per (config.seed, index).
GrayImage synth_image(const SynthConfig& config, uint64_t index);

std::vector<GrayImage> synth_corpus(const SynthConfig& config, int count);

/// Loads every .pgm in the directory, sorted by filename. Undersized or
/// non-square images are rejected with the offending filename.
std::vector<GrayImage> load_corpus(const std::string& directory, int min_size = 32, bool require_square = true);

GrayImage center_crop(const GrayImage& img, int c);

struct LabeledItem {
  GrayImage image;
  int label = 0;
  std::optional<OperationSpec> op;  // nullopt for originals
  uint64_t original_id = 0;
  uint64_t seed = 0;
};

struct LabeledSet {
  std::vector<std::string> class_names;
  std::vector<LabeledItem> items;
};

struct DatasetSplits {
  LabeledSet train;
  LabeledSet validation;
  LabeledSet test;
};

struct SplitRatios {
  double train = 0.65;
  double validation = 0.10;
  // test takes the remainder
};

/// One labeled item per (original, class): operations applied at full size,
/// then center-cropped to c. Splits are assigned by original-image identity
/// so a source image never leaks across train/validation/test. Infeasible
/// crops (down-scaling below c) re-sample the operation parameters.
DatasetSplits build_dataset(const std::vector<GrayImage>& originals, const std::vector<std::string>& classes,
                            int crop, uint64_t seed, const SplitRatios& ratios = {});

/// JSON-lines manifest of every item: image_id, split, class, params, crop, seed.
std::string manifest_jsonl(const DatasetSplits& splits, int crop);

uint64_t fnv1a64(const std::string& text);

struct Batch {
  Tensor input;  // [N, 1, c, c]
  std::vector<int> labels;
};

/// Deterministic shuffled batching: a fresh permutation per epoch seed,
/// final short batch kept, pixels scaled per the model's input convention.
class BatchStream {
 public:
  BatchStream(const LabeledSet& set, Index batch_size, uint64_t epoch_seed, InputScale scale);

  Index batch_count() const;
  Batch get(Index batch_index) const;

 private:
  const LabeledSet& set_;
  Index batch_size_;
  InputScale scale_;
  std::vector<Index> order_;
};

}  // namespace opforge
