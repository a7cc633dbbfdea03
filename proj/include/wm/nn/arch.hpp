#pragma once

#include "wm/common.hpp"
#include "wm/dataset.hpp"

#include <string>
#include <vector>

namespace wm {

enum class LayerKind { kConv, kMaxPool, kDense };

struct LayerDesc {
  LayerKind kind = LayerKind::kDense;
  std::string name;
  int filters = 0;  // conv
  int kernel = 0;   // conv (square, valid padding, stride 1)
  int pool = 0;     // maxpool window == stride
  int units = 0;    // dense
  bool relu = false;
};

// Serializable description of a sequential CNN: conv blocks, pooling, dense
// head. The tap names the convolution layer whose post-activation maps feed
// feature extraction.
struct ArchitectureSpec {
  ImageShape input;
  int num_classes = 0;
  std::vector<LayerDesc> layers;
  std::string last_conv_tap;

  void validate() const;
  int layer_index(const std::string& name) const;  // -1 when missing

  std::string serialize() const;
  static ArchitectureSpec parse(const std::string& text);
  std::uint64_t digest() const { return fnv1a64(serialize()); }
};

/// The default desk architecture: two conv blocks (16 and 32 filters, 3x3,
// each followed by 2x2 max-pool) and a two-layer dense head.
ArchitectureSpec desk_arch(int num_classes = 10, ImageShape input = ImageShape{1, 28, 28});

enum class ModelRole { kClean, kMarked, kAttack, kDetector };

std::string model_role_name(ModelRole role);
ModelRole model_role_from_name(const std::string& name);

struct Provenance {
  ModelRole role = ModelRole::kClean;
  std::string config_digest;
  int epochs = 0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  bool not_converged = false;
};

}  // namespace wm
