#include "wm/dataset.hpp"

#include "wm/io.hpp"
#include "wm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace wm {

std::string ImageShape::str() const {
  std::ostringstream os;
  os << channels << "x" << height << "x" << width;
  return os.str();
}

ImageShape ImageShape::parse(const std::string& s) {
  ImageShape shape;
  char sep1 = 0, sep2 = 0;
  std::istringstream is(s);
  if (!(is >> shape.channels >> sep1 >> shape.height >> sep2 >> shape.width) || sep1 != 'x' ||
      sep2 != 'x' || shape.size() <= 0) {
    throw DecodeError("bad shape string: " + s);
  }
  return shape;
}

std::string role_name(DatasetRole role) {
  switch (role) {
    case DatasetRole::kOwnerTrain:
      return "OWNER_TRAIN";
    case DatasetRole::kAttackerPool:
      return "ATTACKER_POOL";
    case DatasetRole::kTest:
      return "TEST";
    case DatasetRole::kTriggerTest:
      return "TRIGGER_TEST";
  }
  return "OWNER_TRAIN";
}

DatasetRole role_from_name(const std::string& name) {
  if (name == "OWNER_TRAIN") return DatasetRole::kOwnerTrain;
  if (name == "ATTACKER_POOL") return DatasetRole::kAttackerPool;
  if (name == "TEST") return DatasetRole::kTest;
  if (name == "TRIGGER_TEST") return DatasetRole::kTriggerTest;
  throw DecodeError("unknown dataset role: " + name);
}

Dataset::Dataset(MatrixXf pixels, VectorXi labels, ImageShape shape, int num_classes,
                 std::string name, DatasetRole role)
    : pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      shape_(shape),
      num_classes_(num_classes),
      name_(std::move(name)),
      role_(role) {
  if (pixels_.rows() != shape_.size()) {
    throw ShapeError("pixel rows " + std::to_string(pixels_.rows()) + " do not match shape " +
                     shape_.str());
  }
  if (labels_.size() != pixels_.cols()) {
    throw ShapeError("label count does not match sample count");
  }
  if (num_classes_ <= 0) throw DataError("num_classes must be positive");
  for (Eigen::Index i = 0; i < labels_.size(); ++i) {
    int y = labels_[i];
    if (y != kAbsentLabel && (y < 0 || y >= num_classes_)) {
      throw ClassError("label " + std::to_string(y) + " out of range for " +
                      std::to_string(num_classes_) + " classes");
    }
  }
}

bool Dataset::fully_labeled() const {
  for (Eigen::Index i = 0; i < labels_.size(); ++i)
    if (labels_[i] == kAbsentLabel) return false;
  return true;
}

bool Dataset::fully_unlabeled() const {
  for (Eigen::Index i = 0; i < labels_.size(); ++i)
    if (labels_[i] != kAbsentLabel) return false;
  return true;
}

Dataset Dataset::select(const std::vector<int>& indices, DatasetRole role,
                        const std::string& name) const {
  MatrixXf px(pixels_.rows(), static_cast<Eigen::Index>(indices.size()));
  VectorXi lb(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    int i = indices[k];
    if (i < 0 || i >= count()) throw SizeError("select index out of range");
    px.col(static_cast<Eigen::Index>(k)) = pixels_.col(i);
    lb[static_cast<Eigen::Index>(k)] = labels_[i];
  }
  return Dataset(std::move(px), std::move(lb), shape_, num_classes_, name, role);
}

Dataset Dataset::with_role(DatasetRole role) const {
  Dataset d = *this;
  d.role_ = role;
  return d;
}

std::uint64_t Dataset::pixel_digest() const {
  return fnv1a64(pixels_.data(), sizeof(Scalar) * static_cast<std::size_t>(pixels_.size()));
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, const SplitPlan& plan) {
  if (n <= 0) throw SizeError("cannot split an empty dataset");
  if (!(plan.owner_fraction > 0.0 && plan.owner_fraction < 1.0)) {
    throw ConfigError("owner_fraction must lie in (0,1)");
  }
  int owner_n = static_cast<int>(std::floor(plan.owner_fraction * n));
  Rng rng(plan.seed, "split");
  std::vector<int> perm = rng.permutation(n);
  std::vector<int> owner(perm.begin(), perm.begin() + owner_n);
  std::vector<int> attacker;
  if (plan.allow_overlap) {
    // Attacker redraws its own subset of the full range; overlap is expected.
    std::vector<int> perm2 = rng.permutation(n);
    attacker.assign(perm2.begin(), perm2.begin() + (n - owner_n));
  } else {
    attacker.assign(perm.begin() + owner_n, perm.end());
  }
  std::sort(owner.begin(), owner.end());
  std::sort(attacker.begin(), attacker.end());
  return {std::move(owner), std::move(attacker)};
}

std::pair<Dataset, Dataset> split_owner_attacker(const Dataset& data, const SplitPlan& plan) {
  auto [owner_idx, attacker_idx] = split_indices(data.count(), plan);
  Dataset owner = data.select(owner_idx, DatasetRole::kOwnerTrain, data.name() + ":owner");
  Dataset attacker = strip_labels(
      data.select(attacker_idx, DatasetRole::kAttackerPool, data.name() + ":attacker"));
  return {std::move(owner), std::move(attacker)};
}

Dataset strip_labels(const Dataset& data) {
  VectorXi absent = VectorXi::Constant(data.count(), kAbsentLabel);
  return Dataset(data.pixels(), std::move(absent), data.shape(), data.num_classes(), data.name(),
                 data.role());
}

BatchStream::BatchStream(int count, int batch_size, std::uint64_t shuffle_seed)
    : batch_size_(batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  Rng rng(shuffle_seed, "batch");
  order_ = rng.permutation(count);
}

std::optional<std::vector<int>> BatchStream::next() {
  if (cursor_ >= static_cast<int>(order_.size())) return std::nullopt;
  int end = std::min(cursor_ + batch_size_, static_cast<int>(order_.size()));
  std::vector<int> batch(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end;
  return batch;
}

int BatchStream::batch_count() const {
  return (static_cast<int>(order_.size()) + batch_size_ - 1) / batch_size_;
}

BatchStream batch_iter(const Dataset& data, int batch_size, std::uint64_t shuffle_seed) {
  return BatchStream(data.count(), batch_size, shuffle_seed);
}

MatrixXf gather(const MatrixXf& pixels, const std::vector<int>& indices) {
  MatrixXf out(pixels.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = pixels.col(indices[k]);
  return out;
}

VectorXi gather(const VectorXi& labels, const std::vector<int>& indices) {
  VectorXi out(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k)
    out[static_cast<Eigen::Index>(k)] = labels[indices[k]];
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b, DatasetRole role, const std::string& name) {
  if (!(a.shape() == b.shape())) throw ShapeError("concat: shape mismatch");
  if (a.num_classes() != b.num_classes()) throw DataError("concat: class count mismatch");
  MatrixXf px(a.pixels().rows(), a.count() + b.count());
  px.leftCols(a.count()) = a.pixels();
  px.rightCols(b.count()) = b.pixels();
  VectorXi lb(a.count() + b.count());
  lb.head(a.count()) = a.labels();
  lb.tail(b.count()) = b.labels();
  return Dataset(std::move(px), std::move(lb), a.shape(), a.num_classes(), name, role);
}

namespace {

Dataset load_synth_spec(const std::string& source) {
  // synth:<family>:<split>:<count>:<seed>
  std::vector<std::string> parts;
  std::stringstream ss(source);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() != 5) {
    throw ConfigError("builtin dataset spec must be synth:<family>:<split>:<count>:<seed>, got " +
                      source);
  }
  SynthParams p;
  p.family = parts[1];
  const std::string& split = parts[2];
  p.count = std::stoi(parts[3]);
  p.seed = static_cast<std::uint64_t>(std::stoull(parts[4]));
  if (split == "train") {
    p.role = DatasetRole::kOwnerTrain;
    p.seed = stream_seed(p.seed, "synth-train");
  } else if (split == "test") {
    p.role = DatasetRole::kTest;
    p.seed = stream_seed(p.seed, "synth-test");
  } else {
    throw ConfigError("builtin dataset split must be train or test, got " + split);
  }
  p.name = source;
  return make_synth_corpus(p);
}

}  // namespace

Dataset load_dataset(const std::string& source) {
  if (source.rfind("synth:", 0) == 0) return load_synth_spec(source);
  namespace fs = std::filesystem;
  fs::path dir(source);
  if (!fs::exists(dir)) throw IoError("dataset source does not exist: " + source);
  KeyValueFile manifest = KeyValueFile::load((dir / "manifest.txt").string());
  int count = manifest.get_int("count");
  int num_classes = manifest.get_int("num_classes");
  ImageShape shape = ImageShape::parse(manifest.get("shape"));
  DatasetRole role = role_from_name(manifest.get("role"));
  std::string name = manifest.get("name");

  std::vector<Scalar> px = read_binary<Scalar>((dir / "pixels.f32").string());
  std::vector<std::int32_t> lb = read_binary<std::int32_t>((dir / "labels.i32").string());
  if (static_cast<int>(lb.size()) != count ||
      px.size() != static_cast<std::size_t>(count) * static_cast<std::size_t>(shape.size())) {
    throw DecodeError("dataset tensor sizes disagree with manifest in " + source);
  }
  MatrixXf pixels(shape.size(), count);
  std::copy(px.begin(), px.end(), pixels.data());
  for (Eigen::Index i = 0; i < pixels.size(); ++i) {
    float v = pixels.data()[i];
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError("pixel value outside [0,1] in " + source);
  }
  VectorXi labels(count);
  std::copy(lb.begin(), lb.end(), labels.data());
  return Dataset(std::move(pixels), std::move(labels), shape, num_classes, name, role);
}

void save_dataset(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  KeyValueFile manifest;
  manifest.set("format", "wmdata");
  manifest.set("version", "1");
  manifest.set("name", data.name());
  manifest.set_int("num_classes", data.num_classes());
  manifest.set_int("count", data.count());
  manifest.set("shape", data.shape().str());
  manifest.set("role", role_name(data.role()));
  manifest.save((fs::path(dir) / "manifest.txt").string());

  write_binary((fs::path(dir) / "pixels.f32").string(), data.pixels().data(),
               static_cast<std::size_t>(data.pixels().size()));
  std::vector<std::int32_t> lb(data.labels().data(), data.labels().data() + data.labels().size());
  write_binary((fs::path(dir) / "labels.i32").string(), lb.data(), lb.size());
}

}  // namespace wm
