#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "wm/common.hpp"
#include "wm/dataset.hpp"

namespace wm {

// How trigger inputs are constructed.  All three schemes produce a labeled
// trigger set: inputs the owner can present to a model together with the
// labels a marked model is expected to emit for them.
enum class TriggerScheme {
  kContentEmbedded,  // source images overstamped with a fixed glyph
  kGaussianNoise,    // source images shifted by one fixed noise pattern
  kAbstractImages,   // procedural out-of-distribution images
};

const char* trigger_scheme_name(TriggerScheme scheme);
TriggerScheme trigger_scheme_from_name(std::string_view name);

// Placement of the stamped glyph: a size x size square set back `margin`
// pixels from the bottom-right image corner.
struct MarkerSpec {
  int size = 6;
  int margin = 1;
};

struct TriggerConfig {
  TriggerScheme scheme = TriggerScheme::kContentEmbedded;
  // Number of trigger samples mixed into training and number of held-out
  // samples used for verification.  The abstract scheme verifies on the
  // embedded samples themselves, so holdout_count is ignored there.
  int embed_count = 0;
  int holdout_count = 0;
  int target_class = 0;
  float noise_sigma = 0.3f;
  MarkerSpec marker;
  std::uint64_t seed = 1;
};

// A trigger set plus everything needed to verify it later.  The holdout
// split is the verification key: verification classifies holdout pixels and
// compares against holdout labels.
struct TriggerSet {
  TriggerScheme scheme = TriggerScheme::kContentEmbedded;
  Dataset embed;
  Dataset holdout;
  // Common expected class for content/noise schemes; -1 for the abstract
  // scheme, whose samples carry individual labels.
  int target_class = -1;
  // The single additive pattern of the noise scheme (empty otherwise).
  VectorXf noise_pattern;
  std::uint64_t seed = 0;

  // Digest of the verification key (scheme + holdout pixels + labels).
  std::uint64_t key_digest() const;
};

// Overwrites the glyph region of every image column with a high-contrast
// nested-square pattern of exact 0/1 values, identical in all channels.
void apply_marker(MatrixXf& pixels, const ImageShape& shape, const MarkerSpec& spec);

// One additive pattern with i.i.d. N(0, sigma^2) entries, one per pixel.
VectorXf draw_noise_pattern(const ImageShape& shape, float sigma, Rng& rng);

// Adds the pattern to every column and clips the result back into [0, 1].
void add_noise_pattern(MatrixXf& pixels, const VectorXf& pattern);

// Scheme constructors.  Content and noise triggers draw their embed and
// holdout samples from disjoint subsets of `source`, skipping samples whose
// true class equals the target so every trigger label is genuinely wrong.
TriggerSet make_content_trigger(const Dataset& source, const TriggerConfig& cfg);
TriggerSet make_noise_trigger(const Dataset& source, const TriggerConfig& cfg);
// Abstract triggers are synthesized from scratch; labels cycle through all
// classes and the holdout split aliases the embed split.
TriggerSet make_abstract_trigger(const ImageShape& shape, int num_classes,
                                 const TriggerConfig& cfg);

// Dispatch on cfg.scheme.  `source` supplies images for content/noise and
// only shape/class-count metadata for the abstract scheme.
TriggerSet make_trigger(const Dataset& source, const TriggerConfig& cfg);

void save_trigger(const TriggerSet& trigger, const std::filesystem::path& dir);
TriggerSet load_trigger(const std::filesystem::path& dir);

}  // namespace wm
