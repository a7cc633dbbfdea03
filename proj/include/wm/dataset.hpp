#pragma once

#include "wm/common.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace wm {

constexpr int kAbsentLabel = -1;

struct ImageShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  int size() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
  std::string str() const;
  static ImageShape parse(const std::string& s);  // "1x28x28"
};

enum class DatasetRole { kOwnerTrain, kAttackerPool, kTest, kTriggerTest };

std::string role_name(DatasetRole role);
DatasetRole role_from_name(const std::string& name);

// Images with ground-truth labels. Pixels live in one dense matrix, one
// column per sample (CHW flattened), values in [0,1]. Labels are class
// indices, kAbsentLabel for unlabeled samples. Immutable after construction;
// safe for concurrent readers.
class Dataset {
 public:
  Dataset() = default;
  Dataset(MatrixXf pixels, VectorXi labels, ImageShape shape, int num_classes, std::string name,
          DatasetRole role);

  int count() const { return static_cast<int>(pixels_.cols()); }
  int num_classes() const { return num_classes_; }
  const ImageShape& shape() const { return shape_; }
  const std::string& name() const { return name_; }
  DatasetRole role() const { return role_; }

  const MatrixXf& pixels() const { return pixels_; }
  const VectorXi& labels() const { return labels_; }
  Eigen::Ref<const VectorXf> sample(int i) const { return pixels_.col(i); }
  int label(int i) const { return labels_[i]; }

  bool fully_labeled() const;
  bool fully_unlabeled() const;

  // Column subset, preserving order of `indices`.
  Dataset select(const std::vector<int>& indices, DatasetRole role, const std::string& name) const;

  Dataset with_role(DatasetRole role) const;

  std::uint64_t pixel_digest() const;

 private:
  MatrixXf pixels_;
  VectorXi labels_;
  ImageShape shape_;
  int num_classes_ = 0;
  std::string name_;
  DatasetRole role_ = DatasetRole::kOwnerTrain;
};

struct SplitPlan {
  double owner_fraction = 0.5;
  std::uint64_t seed = 0;
  bool allow_overlap = false;
};

// Index sets behind split_owner_attacker, exposed for exhaustive checks.
// Owner gets floor(fraction*N) indices. Without overlap the two sets are
// disjoint and cover 0..N-1; with overlap the attacker redraws from the full
// range.
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, const SplitPlan& plan);

// The attacker half comes back with every label ABSENT: the black-box attack
// must never see ground truth, so the labels are gone before it can.
std::pair<Dataset, Dataset> split_owner_attacker(const Dataset& data, const SplitPlan& plan);

Dataset strip_labels(const Dataset& data);

// One-epoch batch stream over a seeded permutation. Every sample appears
// exactly once; the last batch may be short. Holds private cursor state, not
// meant to be shared across threads.
class BatchStream {
 public:
  BatchStream(int count, int batch_size, std::uint64_t shuffle_seed);

  // Indices of the next batch, or nullopt at end of epoch.
  std::optional<std::vector<int>> next();

  int batch_count() const;

 private:
  std::vector<int> order_;
  int batch_size_;
  int cursor_ = 0;
};

BatchStream batch_iter(const Dataset& data, int batch_size, std::uint64_t shuffle_seed);

// Gathers the given columns into a contiguous batch matrix.
MatrixXf gather(const MatrixXf& pixels, const std::vector<int>& indices);
VectorXi gather(const VectorXi& labels, const std::vector<int>& indices);

// Concatenates samples of b after a. Shapes and class counts must agree.
Dataset concat(const Dataset& a, const Dataset& b, DatasetRole role, const std::string& name);

// Linear byte->unit normalization; maps 0 to 0.0 and 255 to exactly 1.0.
inline float normalize_byte(unsigned char v) { return static_cast<float>(v) / 255.0f; }

// Loads a dataset from a directory container (manifest + tensor files) or a
// builtin generator spec "synth:<family>:<split>:<count>:<seed>".
Dataset load_dataset(const std::string& source);

void save_dataset(const Dataset& data, const std::string& dir);

}  // namespace wm
