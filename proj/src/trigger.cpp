#include "wm/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "wm/io.hpp"

namespace wm {

namespace fs = std::filesystem;

const char* trigger_scheme_name(TriggerScheme scheme) {
  switch (scheme) {
    case TriggerScheme::kContentEmbedded: return "content";
    case TriggerScheme::kGaussianNoise: return "noise";
    case TriggerScheme::kAbstractImages: return "abstract";
  }
  throw ConfigError("unknown trigger scheme value");
}

TriggerScheme trigger_scheme_from_name(std::string_view name) {
  if (name == "content") return TriggerScheme::kContentEmbedded;
  if (name == "noise") return TriggerScheme::kGaussianNoise;
  if (name == "abstract") return TriggerScheme::kAbstractImages;
  throw ConfigError("unknown trigger scheme: " + std::string(name));
}

std::uint64_t TriggerSet::key_digest() const {
  std::uint64_t h = fnv1a64(trigger_scheme_name(scheme));
  const std::uint64_t pd = holdout.count() > 0 ? holdout.pixel_digest() : 0;
  h = fnv1a64(&pd, sizeof(pd), h);
  if (holdout.count() > 0) {
    h = fnv1a64(holdout.labels().data(),
                static_cast<std::size_t>(holdout.count()) * sizeof(int), h);
  }
  h = fnv1a64(&target_class, sizeof(target_class), h);
  return h;
}

void apply_marker(MatrixXf& pixels, const ImageShape& shape, const MarkerSpec& spec) {
  if (spec.size < 1 || spec.margin < 0) {
    throw GeometryError("marker size must be >= 1 and margin >= 0");
  }
  const int row0 = shape.height - spec.margin - spec.size;
  const int col0 = shape.width - spec.margin - spec.size;
  if (row0 < 0 || col0 < 0) {
    throw GeometryError("marker " + std::to_string(spec.size) + "px with margin " +
                        std::to_string(spec.margin) + " does not fit in " + shape.str());
  }
  if (pixels.rows() != shape.size()) {
    throw ShapeError("pixel rows do not match image shape " + shape.str());
  }
  const int hw = shape.height * shape.width;
  for (int n = 0; n < pixels.cols(); ++n) {
    for (int c = 0; c < shape.channels; ++c) {
      const int base = c * hw;
      for (int i = 0; i < spec.size; ++i) {
        for (int j = 0; j < spec.size; ++j) {
          // Nested square rings, outermost ring bright: ring parity decides.
          const int ring = std::min({i, j, spec.size - 1 - i, spec.size - 1 - j});
          const float v = (ring % 2 == 0) ? 1.0f : 0.0f;
          pixels(base + (row0 + i) * shape.width + (col0 + j), n) = v;
        }
      }
    }
  }
}

VectorXf draw_noise_pattern(const ImageShape& shape, float sigma, Rng& rng) {
  VectorXf pattern(shape.size());
  for (int i = 0; i < pattern.size(); ++i) {
    pattern[i] = sigma * static_cast<float>(rng.normal());
  }
  return pattern;
}

void add_noise_pattern(MatrixXf& pixels, const VectorXf& pattern) {
  if (pixels.rows() != pattern.size()) {
    throw ShapeError("noise pattern length does not match pixel rows");
  }
  pixels.colwise() += pattern;
  pixels = pixels.cwiseMax(0.0f).cwiseMin(1.0f);
}

namespace {

// Labeled samples whose true class differs from the target, in seeded random
// order. Trigger labels must be wrong for their content, or a clean model
// would pass verification by classifying correctly.
std::vector<int> pick_sources(const Dataset& source, int target, int need, Rng& rng) {
  std::vector<int> eligible;
  eligible.reserve(source.count());
  for (int i = 0; i < source.count(); ++i) {
    if (source.label(i) != kAbsentLabel && source.label(i) != target) eligible.push_back(i);
  }
  if (static_cast<int>(eligible.size()) < need) {
    throw SizeError("trigger needs " + std::to_string(need) + " eligible source samples, only " +
                    std::to_string(eligible.size()) + " available");
  }
  rng.shuffle(eligible);
  eligible.resize(need);
  return eligible;
}

void check_counts(const Dataset& source, const TriggerConfig& cfg) {
  if (cfg.embed_count < 0 || cfg.holdout_count < 0) {
    throw ConfigError("trigger sample counts must be non-negative");
  }
  if (cfg.target_class < 0 || cfg.target_class >= source.num_classes()) {
    throw ClassError("trigger target class " + std::to_string(cfg.target_class) +
                     " outside 0.." + std::to_string(source.num_classes() - 1));
  }
}

}  // namespace

TriggerSet make_content_trigger(const Dataset& source, const TriggerConfig& cfg) {
  check_counts(source, cfg);
  Rng rng(cfg.seed, "trigger-pick");
  std::vector<int> idx =
      pick_sources(source, cfg.target_class, cfg.embed_count + cfg.holdout_count, rng);
  const std::vector<int> embed_idx(idx.begin(), idx.begin() + cfg.embed_count);
  const std::vector<int> hold_idx(idx.begin() + cfg.embed_count, idx.end());

  auto build = [&](const std::vector<int>& which, const std::string& nm) {
    Dataset sub = source.select(which, DatasetRole::kTriggerTest, nm);
    MatrixXf px = sub.pixels();
    apply_marker(px, source.shape(), cfg.marker);
    VectorXi lab = VectorXi::Constant(static_cast<int>(which.size()), cfg.target_class);
    return Dataset(std::move(px), std::move(lab), source.shape(), source.num_classes(), nm,
                   DatasetRole::kTriggerTest);
  };

  TriggerSet trigger;
  trigger.scheme = TriggerScheme::kContentEmbedded;
  trigger.seed = cfg.seed;
  trigger.target_class = cfg.target_class;
  trigger.embed = build(embed_idx, "trigger-content-embed");
  trigger.holdout = build(hold_idx, "trigger-content-holdout");
  return trigger;
}

TriggerSet make_noise_trigger(const Dataset& source, const TriggerConfig& cfg) {
  check_counts(source, cfg);
  Rng pattern_rng(cfg.seed, "noise-pattern");
  VectorXf pattern = draw_noise_pattern(source.shape(), cfg.noise_sigma, pattern_rng);

  Rng rng(cfg.seed, "trigger-pick");
  std::vector<int> idx =
      pick_sources(source, cfg.target_class, cfg.embed_count + cfg.holdout_count, rng);
  const std::vector<int> embed_idx(idx.begin(), idx.begin() + cfg.embed_count);
  const std::vector<int> hold_idx(idx.begin() + cfg.embed_count, idx.end());

  auto build = [&](const std::vector<int>& which, const std::string& nm) {
    Dataset sub = source.select(which, DatasetRole::kTriggerTest, nm);
    MatrixXf px = sub.pixels();
    add_noise_pattern(px, pattern);
    VectorXi lab = VectorXi::Constant(static_cast<int>(which.size()), cfg.target_class);
    return Dataset(std::move(px), std::move(lab), source.shape(), source.num_classes(), nm,
                   DatasetRole::kTriggerTest);
  };

  TriggerSet trigger;
  trigger.scheme = TriggerScheme::kGaussianNoise;
  trigger.seed = cfg.seed;
  trigger.target_class = cfg.target_class;
  trigger.embed = build(embed_idx, "trigger-noise-embed");
  trigger.holdout = build(hold_idx, "trigger-noise-holdout");
  trigger.noise_pattern = std::move(pattern);
  return trigger;
}

TriggerSet make_abstract_trigger(const ImageShape& shape, int num_classes,
                                 const TriggerConfig& cfg) {
  if (cfg.embed_count < 0) throw ConfigError("trigger sample counts must be non-negative");
  if (num_classes <= 0) throw ClassError("abstract trigger needs a positive class count");
  const int n = cfg.embed_count;
  Rng rng(cfg.seed, "abstract");

  // Smooth random cosine fields: clearly image-like yet far from any glyph
  // distribution, so these inputs are out-of-distribution for the task.
  MatrixXf px(shape.size(), n);
  const int hw = shape.height * shape.width;
  constexpr int kComponents = 6;
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < shape.channels; ++c) {
      double amp[kComponents], freq[kComponents], cosd[kComponents], sind[kComponents],
          phase[kComponents];
      for (int k = 0; k < kComponents; ++k) {
        amp[k] = rng.uniform(0.3, 1.0);
        freq[k] = rng.uniform(0.5, 3.0) * 2.0 * std::numbers::pi;
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        cosd[k] = std::cos(theta);
        sind[k] = std::sin(theta);
        phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      }
      for (int i = 0; i < shape.height; ++i) {
        const double u = shape.height > 1 ? static_cast<double>(i) / (shape.height - 1) : 0.0;
        for (int j = 0; j < shape.width; ++j) {
          const double v = shape.width > 1 ? static_cast<double>(j) / (shape.width - 1) : 0.0;
          double val = 0.0;
          for (int k = 0; k < kComponents; ++k) {
            val += amp[k] * std::cos(freq[k] * (u * cosd[k] + v * sind[k]) + phase[k]);
          }
          px(c * hw + i * shape.width + j, s) = static_cast<float>(val);
        }
      }
    }
    const float lo = px.col(s).minCoeff();
    const float hi = px.col(s).maxCoeff();
    if (hi > lo) {
      px.col(s) = (px.col(s).array() - lo) / (hi - lo);
    } else {
      px.col(s).setConstant(0.5f);
    }
  }

  // Cycle labels through every class, then shuffle the assignment.
  std::vector<int> lab(n);
  for (int i = 0; i < n; ++i) lab[i] = i % num_classes;
  rng.shuffle(lab);
  VectorXi labels(n);
  for (int i = 0; i < n; ++i) labels[i] = lab[i];

  TriggerSet trigger;
  trigger.scheme = TriggerScheme::kAbstractImages;
  trigger.seed = cfg.seed;
  trigger.target_class = -1;
  trigger.embed = Dataset(std::move(px), std::move(labels), shape, num_classes, "trigger-abstract",
                          DatasetRole::kTriggerTest);
  trigger.holdout = trigger.embed;
  return trigger;
}

TriggerSet make_trigger(const Dataset& source, const TriggerConfig& cfg) {
  switch (cfg.scheme) {
    case TriggerScheme::kContentEmbedded: return make_content_trigger(source, cfg);
    case TriggerScheme::kGaussianNoise: return make_noise_trigger(source, cfg);
    case TriggerScheme::kAbstractImages:
      return make_abstract_trigger(source.shape(), source.num_classes(), cfg);
  }
  throw ConfigError("unknown trigger scheme value");
}

void save_trigger(const TriggerSet& trigger, const fs::path& dir) {
  KeyValueFile meta;
  meta.set("format", "wmtrigger");
  meta.set_int("version", 1);
  meta.set("scheme", trigger_scheme_name(trigger.scheme));
  meta.set_int("target_class", trigger.target_class);
  meta.set_u64("seed", trigger.seed);
  meta.set_int("has_pattern", trigger.noise_pattern.size() > 0 ? 1 : 0);
  meta.set_u64("key_digest", trigger.key_digest());
  meta.save((dir / "meta.txt").string());
  save_dataset(trigger.embed, (dir / "embed").string());
  save_dataset(trigger.holdout, (dir / "holdout").string());
  if (trigger.noise_pattern.size() > 0) {
    write_binary((dir / "pattern.f32").string(), trigger.noise_pattern.data(),
                 static_cast<std::size_t>(trigger.noise_pattern.size()));
  }
}

TriggerSet load_trigger(const fs::path& dir) {
  KeyValueFile meta = KeyValueFile::load((dir / "meta.txt").string());
  if (meta.get_or("format", "") != "wmtrigger") {
    throw DecodeError("not a trigger directory: " + dir.string());
  }
  if (meta.get_int("version") != 1) {
    throw DecodeError("unsupported trigger version in " + dir.string());
  }
  TriggerSet trigger;
  trigger.scheme = trigger_scheme_from_name(meta.get("scheme"));
  trigger.target_class = meta.get_int("target_class");
  trigger.seed = meta.get_u64("seed");
  trigger.embed = load_dataset((dir / "embed").string());
  trigger.holdout = load_dataset((dir / "holdout").string());
  if (meta.get_int("has_pattern") != 0) {
    std::vector<float> raw = read_binary<float>((dir / "pattern.f32").string());
    trigger.noise_pattern = Eigen::Map<const VectorXf>(raw.data(), raw.size());
  }
  const std::uint64_t expect = meta.get_u64("key_digest");
  if (trigger.key_digest() != expect) {
    throw DecodeError("trigger key digest mismatch in " + dir.string());
  }
  return trigger;
}

}  // namespace wm
