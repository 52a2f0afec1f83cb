#pragma once

#include <optional>
#include <string>
#include <vector>

#include "streamad/image.hpp"

namespace streamad {

enum class Label { normal, anomalous };
enum class Split { train, test };

struct Sample {
  ImageU8 image;
  std::optional<MaskU8> mask;  // present iff anomalous (with >=1 nonzero pixel)
  Label label = Label::normal;
  int task_id = 0;
  Split split = Split::train;

  bool operator==(const Sample&) const = default;
};

struct Task {
  std::string name;
  int index = 0;
  std::vector<Sample> train;  // all-normal
  std::vector<Sample> test;   // mixed, at least one of each class

  bool operator==(const Task&) const = default;
};

struct TaskStream {
  std::vector<Task> tasks;
  int image_h = 0;
  int image_w = 0;

  bool operator==(const TaskStream&) const = default;
};

// Validates the invariants above; throws std::invalid_argument on violation.
void validate_stream(const TaskStream& stream);

// MVTec-style directory layout: <root>/<category>/{train/good, test/<defect>,
// ground_truth/<defect>}. One task per category, in the given order. Images are
// resized bilinearly; masks nearest-neighbor then re-binarized.
TaskStream load_mvtec_stream(const std::string& root,
                             const std::vector<std::string>& categories,
                             int image_h, int image_w);

// Deterministic desk-scale fixture: per-task base hue plus a fixed-frequency
// sinusoidal texture; anomalous test samples carry a rectangular defect patch
// of contrasting intensity with an exact ground-truth mask.
// stamp_defects=false renders the same stream (identical rng draws) with the
// defect pixels left clean; masks and labels are kept, giving every anomalous
// sample a pixel-exact clean counterpart for oracle tests.
TaskStream make_synthetic_stream(int n_tasks, int n_train, int n_test,
                                 int image_h, int image_w, std::uint64_t seed,
                                 bool stamp_defects = true);

// Writes a stream to disk in the MVTec layout (round-trippable via
// load_mvtec_stream).
void save_stream_mvtec_layout(const TaskStream& stream, const std::string& root);

// Seeded epoch iteration: a permutation of the split partitioned into batches,
// final partial batch included.
std::vector<std::vector<Sample>> iter_batches(const Task& task, Split split,
                                              int batch_size, std::uint64_t seed);

inline const std::vector<std::string>& mvtec_object_categories() {
  static const std::vector<std::string> cats = {
      "bottle", "cable",     "capsule", "hazelnut", "transistor",
      "metal_nut", "pill",   "screw",   "zipper",   "toothbrush"};
  return cats;
}

}  // namespace streamad
