#pragma once

#include "wm/dataset.hpp"

#include <string>
#include <vector>

namespace wm {

// Procedural 10-class glyph corpora at 28x28, the desk-scale stand-in for a
// digit benchmark. Each class is a fixed set of strokes; every sample gets a
// random affine jitter (shift, rotation, scale, shear), stroke thickness and
// intensity jitter, and additive pixel noise. Two families with disjoint
// glyph shapes exist so detector experiments can train on one task and test
// on another.
struct SynthParams {
  std::string family = "digits";  // "digits" or "letters"
  int count = 0;
  std::uint64_t seed = 0;
  ImageShape shape{1, 28, 28};
  double noise_sigma = 0.18;
  double max_rotation = 0.55;  // radians
  double max_shift = 4.0;      // pixels
  std::string name;            // dataset name; defaults to family:count:seed
  DatasetRole role = DatasetRole::kOwnerTrain;
};

Dataset make_synth_corpus(const SynthParams& params);

// Renders one glyph sample into `out` (size shape.size()). Exposed for the
// generator's own tests.
void render_glyph(const ImageShape& shape, const std::string& family, int cls, Rng& rng,
                  double noise_sigma, double max_rotation, double max_shift,
                  Eigen::Ref<VectorXf> out);

std::vector<std::string> synth_families();

}  // namespace wm
