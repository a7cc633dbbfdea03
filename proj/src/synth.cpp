#include "wm/synth.hpp"

#include <algorithm>
#include <cmath>

namespace wm {

namespace {

struct Pt {
  double x, y;
};
using Stroke = std::vector<Pt>;
using Glyph = std::vector<Stroke>;

Stroke circle(double cx, double cy, double r, int n = 12, double a0 = 0.0, double a1 = 6.2831853) {
  Stroke s;
  for (int i = 0; i <= n; ++i) {
    double a = a0 + (a1 - a0) * i / n;
    s.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return s;
}

// Strokes in [0,1]^2 glyph space, y pointing down.
std::vector<Glyph> digit_glyphs() {
  std::vector<Glyph> g(10);
  g[0] = {circle(0.5, 0.5, 0.38, 14)};
  g[1] = {{{0.3, 0.28}, {0.55, 0.05}, {0.55, 0.95}}, {{0.35, 0.95}, {0.75, 0.95}}};
  g[2] = {{{0.15, 0.28}, {0.22, 0.08}, {0.5, 0.02}, {0.78, 0.1}, {0.82, 0.3}, {0.5, 0.55}, {0.15, 0.95}, {0.85, 0.95}}};
  g[3] = {{{0.18, 0.1}, {0.5, 0.02}, {0.78, 0.12}, {0.78, 0.32}, {0.48, 0.47}},
          {{0.48, 0.47}, {0.82, 0.58}, {0.82, 0.83}, {0.5, 0.97}, {0.16, 0.87}}};
  g[4] = {{{0.68, 0.95}, {0.68, 0.05}, {0.12, 0.68}, {0.9, 0.68}}};
  g[5] = {{{0.82, 0.05}, {0.22, 0.05}, {0.17, 0.45}, {0.55, 0.4}, {0.83, 0.55}, {0.83, 0.8}, {0.52, 0.97}, {0.15, 0.87}}};
  g[6] = {{{0.75, 0.06}, {0.45, 0.02}, {0.22, 0.3}, {0.16, 0.68}}, circle(0.47, 0.72, 0.26, 12)};
  g[7] = {{{0.12, 0.05}, {0.88, 0.05}, {0.4, 0.95}}};
  g[8] = {circle(0.5, 0.28, 0.24, 12), circle(0.5, 0.73, 0.26, 12)};
  g[9] = {circle(0.52, 0.3, 0.26, 12), {{0.78, 0.36}, {0.72, 0.95}}};
  return g;
}

std::vector<Glyph> letter_glyphs() {
  std::vector<Glyph> g(10);
  // A B C E F H K L T U
  g[0] = {{{0.1, 0.95}, {0.5, 0.05}, {0.9, 0.95}}, {{0.27, 0.62}, {0.73, 0.62}}};
  g[1] = {{{0.2, 0.95}, {0.2, 0.05}, {0.68, 0.08}, {0.74, 0.26}, {0.64, 0.45}, {0.2, 0.48}},
          {{0.2, 0.48}, {0.74, 0.55}, {0.79, 0.74}, {0.68, 0.95}, {0.2, 0.95}}};
  g[2] = {circle(0.52, 0.5, 0.4, 12, 0.8, 5.48)};
  g[3] = {{{0.8, 0.05}, {0.2, 0.05}, {0.2, 0.95}, {0.8, 0.95}}, {{0.2, 0.5}, {0.65, 0.5}}};
  g[4] = {{{0.8, 0.05}, {0.2, 0.05}, {0.2, 0.95}}, {{0.2, 0.5}, {0.65, 0.5}}};
  g[5] = {{{0.2, 0.05}, {0.2, 0.95}}, {{0.8, 0.05}, {0.8, 0.95}}, {{0.2, 0.5}, {0.8, 0.5}}};
  g[6] = {{{0.2, 0.05}, {0.2, 0.95}}, {{0.8, 0.05}, {0.2, 0.52}, {0.8, 0.95}}};
  g[7] = {{{0.22, 0.05}, {0.22, 0.95}, {0.82, 0.95}}};
  g[8] = {{{0.1, 0.05}, {0.9, 0.05}}, {{0.5, 0.05}, {0.5, 0.95}}};
  g[9] = {{{0.2, 0.05}, {0.2, 0.72}, {0.35, 0.95}, {0.65, 0.95}, {0.8, 0.72}, {0.8, 0.05}}};
  return g;
}

const std::vector<Glyph>& glyph_table(const std::string& family) {
  static const std::vector<Glyph> digits = digit_glyphs();
  static const std::vector<Glyph> letters = letter_glyphs();
  if (family == "digits") return digits;
  if (family == "letters") return letters;
  throw ConfigError("unknown glyph family: " + family);
}

double point_segment_dist(double px, double py, double ax, double ay, double bx, double by) {
  double dx = bx - ax, dy = by - ay;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  double cx = ax + t * dx, cy = ay + t * dy;
  return std::hypot(px - cx, py - cy);
}

void draw_segment(Eigen::Ref<MatrixX<float>> plane, double ax, double ay, double bx, double by,
                  double thickness, double intensity) {
  const int h = static_cast<int>(plane.rows());
  const int w = static_cast<int>(plane.cols());
  double half = thickness * 0.5;
  int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half - 1)));
  int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half + 1)));
  int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half - 1)));
  int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(ay, by) + half + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double d = point_segment_dist(x, y, ax, ay, bx, by);
      double a = std::clamp(half + 0.6 - d, 0.0, 1.0) * intensity;
      if (a > plane(y, x)) plane(y, x) = static_cast<float>(a);
    }
  }
}

}  // namespace

void render_glyph(const ImageShape& shape, const std::string& family, int cls, Rng& rng,
                  double noise_sigma, double max_rotation, double max_shift,
                  Eigen::Ref<VectorXf> out) {
  const auto& table = glyph_table(family);
  if (cls < 0 || cls >= static_cast<int>(table.size())) throw DataError("glyph class out of range");
  const Glyph& glyph = table[static_cast<std::size_t>(cls)];

  const int h = shape.height, w = shape.width;
  MatrixX<float> plane = MatrixX<float>::Zero(h, w);

  double theta = rng.uniform(-max_rotation, max_rotation);
  double scale = rng.uniform(0.62, 1.18) * 0.68 * std::min(h, w);
  double shear = rng.uniform(-0.30, 0.30);
  double dx = rng.uniform(-max_shift, max_shift) + w * 0.5;
  double dy = rng.uniform(-max_shift, max_shift) + h * 0.5;
  double thickness = rng.uniform(0.85, 1.9);
  double intensity = rng.uniform(0.55, 1.0);
  double ct = std::cos(theta), st = std::sin(theta);

  auto map = [&](const Pt& p) {
    double u = p.x - 0.5, v = p.y - 0.5;
    u += shear * v;
    u *= scale;
    v *= scale;
    return Pt{ct * u - st * v + dx, st * u + ct * v + dy};
  };

  for (const Stroke& stroke : glyph) {
    for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
      Pt a = map(stroke[i]), b = map(stroke[i + 1]);
      draw_segment(plane, a.x, a.y, b.x, b.y, thickness, intensity);
    }
  }

  for (int c = 0; c < shape.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = plane(y, x) + rng.normal(0.0, noise_sigma);
        out[c * h * w + y * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

Dataset make_synth_corpus(const SynthParams& params) {
  if (params.count <= 0) throw SizeError("synth corpus count must be positive");
  const int num_classes = 10;
  Rng rng(params.seed, "glyphs");

  // Balanced class assignment, shuffled.
  std::vector<int> classes(static_cast<std::size_t>(params.count));
  for (int i = 0; i < params.count; ++i) classes[static_cast<std::size_t>(i)] = i % num_classes;
  rng.shuffle(classes);

  MatrixXf pixels(params.shape.size(), params.count);
  VectorXi labels(params.count);
  for (int i = 0; i < params.count; ++i) {
    labels[i] = classes[static_cast<std::size_t>(i)];
    render_glyph(params.shape, params.family, labels[i], rng, params.noise_sigma,
                 params.max_rotation, params.max_shift, pixels.col(i));
  }
  std::string name = params.name.empty() ? ("synth:" + params.family + ":" +
                                            std::to_string(params.count) + ":" +
                                            std::to_string(params.seed))
                                         : params.name;
  return Dataset(std::move(pixels), std::move(labels), params.shape, num_classes, name,
                 params.role);
}

std::vector<std::string> synth_families() { return {"digits", "letters"}; }

}  // namespace wm
