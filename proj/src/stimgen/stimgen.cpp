#include "stimgen/stimgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <utility>

#include "diffcore/errors.hpp"
#include "diffcore/rng.hpp"

namespace stimgen {

using diffcore::ContractError;
using diffcore::Rng;

const std::array<Rgb, kNumColors>& palette() {
  static const std::array<Rgb, kNumColors> kPalette = {{
      {230, 40, 40},    // red
      {40, 200, 60},    // green
      {50, 80, 230},    // blue
      {240, 220, 50},   // yellow
      {225, 60, 220},   // magenta
      {60, 215, 220},   // cyan
      {245, 140, 30},   // orange
      {140, 60, 210},   // purple
  }};
  return kPalette;
}

namespace {

struct Vec2 {
  double x, y;
};

// Prototype outlines live in a [-1,1]^2 canvas, y growing downward.
// Strokes are wide enough to survive 2x2 pooling at 32x32.
const std::vector<Vec2>& polygon(int shape_id) {
  static const std::vector<std::vector<Vec2>> kPolys = {
      // 0 triangle
      {{-0.78, 0.66}, {0.78, 0.66}, {0.0, -0.82}},
      // 1 square
      {{-0.62, -0.62}, {0.62, -0.62}, {0.62, 0.62}, {-0.62, 0.62}},
      // 2 cross
      {{-0.25, -0.85}, {0.25, -0.85}, {0.25, -0.25}, {0.85, -0.25}, {0.85, 0.25}, {0.25, 0.25},
       {0.25, 0.85}, {-0.25, 0.85}, {-0.25, 0.25}, {-0.85, 0.25}, {-0.85, -0.25}, {-0.25, -0.25}},
      // 3 letter T
      {{-0.80, -0.85}, {0.80, -0.85}, {0.80, -0.40}, {0.22, -0.40}, {0.22, 0.85}, {-0.22, 0.85},
       {-0.22, -0.40}, {-0.80, -0.40}},
      // 4 letter L
      {{-0.75, -0.85}, {-0.31, -0.85}, {-0.31, 0.41}, {0.75, 0.41}, {0.75, 0.85}, {-0.75, 0.85}},
      // 5 letter H
      {{-0.80, -0.85}, {-0.38, -0.85}, {-0.38, -0.20}, {0.38, -0.20}, {0.38, -0.85}, {0.80, -0.85},
       {0.80, 0.85}, {0.38, 0.85}, {0.38, 0.20}, {-0.38, 0.20}, {-0.38, 0.85}, {-0.80, 0.85}},
      // 6 disc, 7 ring: analytic, placeholders
      {},
      {},
      // 8 five-pointed star, filled below
      {},
      // 9 arrow pointing right
      {{-0.85, -0.18}, {0.15, -0.18}, {0.15, -0.52}, {0.85, 0.0}, {0.15, 0.52}, {0.15, 0.18},
       {-0.85, 0.18}},
      // 10 letter U
      {{-0.78, -0.85}, {-0.34, -0.85}, {-0.34, 0.41}, {0.34, 0.41}, {0.34, -0.85}, {0.78, -0.85},
       {0.78, 0.85}, {-0.78, 0.85}},
      // 11 letter Z
      {{-0.75, -0.85}, {0.75, -0.85}, {0.75, -0.43}, {-0.23, 0.43}, {0.75, 0.43}, {0.75, 0.85},
       {-0.75, 0.85}, {-0.75, 0.43}, {0.23, -0.43}, {-0.75, -0.43}},
  };
  static const std::vector<Vec2> kStar = [] {
    std::vector<Vec2> v;
    for (int k = 0; k < 10; ++k) {
      const double r = (k % 2 == 0) ? 0.88 : 0.38;
      const double a = -std::numbers::pi / 2.0 + k * std::numbers::pi / 5.0;
      v.push_back({r * std::cos(a), r * std::sin(a)});
    }
    return v;
  }();
  if (shape_id == 8) return kStar;
  return kPolys[static_cast<std::size_t>(shape_id)];
}

bool in_polygon(const std::vector<Vec2>& poly, double x, double y) {
  bool in = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((poly[i].y > y) != (poly[j].y > y)) {
      const double t = (y - poly[i].y) / (poly[j].y - poly[i].y);
      if (x < poly[i].x + t * (poly[j].x - poly[i].x)) in = !in;
    }
  }
  return in;
}

bool shape_contains(int shape_id, double x, double y) {
  switch (shape_id) {
    case 6:  // disc
      return x * x + y * y <= 0.70 * 0.70;
    case 7: {  // ring
      const double d2 = x * x + y * y;
      return d2 >= 0.46 * 0.46 && d2 <= 0.78 * 0.78;
    }
    default:
      return in_polygon(polygon(shape_id), x, y);
  }
}

struct Jitter {
  double cos_t, sin_t;  // rotation
  double scale;
  double tx, ty;
};

Jitter sample_jitter(std::uint64_t jitter_seed) {
  Rng rng = Rng(jitter_seed).fork("jitter");
  Jitter j;
  const double theta = rng.uniform(-0.3, 0.3);
  j.cos_t = std::cos(theta);
  j.sin_t = std::sin(theta);
  j.scale = rng.uniform(0.72, 0.98);
  j.tx = rng.uniform(-0.1, 0.1);
  j.ty = rng.uniform(-0.1, 0.1);
  return j;
}

// Canvas point -> prototype coordinates (undo translation, rotation, scale).
bool hit(int shape_id, const Jitter& j, double cx, double cy) {
  const double px = cx - j.tx;
  const double py = cy - j.ty;
  const double rx = (j.cos_t * px + j.sin_t * py) / j.scale;
  const double ry = (-j.sin_t * px + j.cos_t * py) / j.scale;
  return shape_contains(shape_id, rx, ry);
}

void check_spec(const StimulusSpec& spec) {
  if (spec.shape_id < 0 || spec.shape_id >= kNumShapes) {
    throw ContractError("render_stimulus: shape_id " + std::to_string(spec.shape_id) +
                        " out of range");
  }
  if (spec.color_id < 0 || spec.color_id >= kNumColors) {
    throw ContractError("render_stimulus: color_id " + std::to_string(spec.color_id) +
                        " out of range");
  }
  if (spec.background_id < 0 || spec.background_id >= kNumBackgrounds) {
    throw ContractError("render_stimulus: background_id " + std::to_string(spec.background_id) +
                        " out of range");
  }
}

// Background pixel color. Backgrounds stay achromatic so hue carries no
// information about the class factors.
Rgb background_pixel(int background_id, int px, int py, int size, Rng& noise) {
  switch (background_id) {
    case 0:
      return {180, 180, 180};
    case 1:
      return {120, 120, 120};
    case 2: {  // left-to-right gradient
      const double t = size > 1 ? static_cast<double>(px) / (size - 1) : 0.0;
      const auto v = static_cast<std::uint8_t>(std::lround(130.0 + t * 85.0));
      return {v, v, v};
    }
    case 3: {  // top-to-bottom gradient, bright to dark
      const double t = size > 1 ? static_cast<double>(py) / (size - 1) : 0.0;
      const auto v = static_cast<std::uint8_t>(std::lround(205.0 - t * 80.0));
      return {v, v, v};
    }
    default: {  // seeded noise field
      const auto v = static_cast<std::uint8_t>(110 + noise.uniform_int(81));
      return {v, v, v};
    }
  }
}

// Foreground coverage of one output pixel from a 2x2 subsample grid.
double pixel_coverage(const StimulusSpec& spec, const Jitter& j, int px, int py, int size) {
  int hits = 0;
  for (int sy = 0; sy < 2; ++sy) {
    for (int sx = 0; sx < 2; ++sx) {
      const double u = (px * 2 + sx + 0.5) / (2.0 * size);
      const double v = (py * 2 + sy + 0.5) / (2.0 * size);
      if (hit(spec.shape_id, j, 2.0 * u - 1.0, 2.0 * v - 1.0)) ++hits;
    }
  }
  return hits / 4.0;
}

}  // namespace

const char* shape_name(int shape_id) {
  static const char* kNames[kNumShapes] = {"triangle", "square", "cross", "tee",
                                           "ell",      "aitch",  "disc",  "ring",
                                           "star",     "arrow",  "you",   "zee"};
  if (shape_id < 0 || shape_id >= kNumShapes) throw ContractError("shape_name: id out of range");
  return kNames[shape_id];
}

const char* mode_name(DatasetMode mode) {
  switch (mode) {
    case DatasetMode::BY_SHAPE: return "by_shape";
    case DatasetMode::BY_COLOR: return "by_color";
    case DatasetMode::CONJUNCTION: return "conjunction";
  }
  throw ContractError("mode_name: bad mode");
}

Stimulus render_stimulus(const StimulusSpec& spec, int size) {
  check_spec(spec);
  if (size < 16) throw ContractError("render_stimulus: size must be at least 16");

  const Jitter j = sample_jitter(spec.jitter_seed);
  // Noise backdrop gets its own stream so it cannot alias the jitter draws.
  Rng noise = Rng(spec.jitter_seed).fork("backdrop");
  const Rgb fg = palette()[static_cast<std::size_t>(spec.color_id)];

  Stimulus s;
  s.spec = spec;
  s.width = size;
  s.height = size;
  s.image.resize(static_cast<std::size_t>(size) * size * 3);

  std::size_t at = 0;
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      const double c = pixel_coverage(spec, j, px, py, size);
      const Rgb bg = background_pixel(spec.background_id, px, py, size, noise);
      s.image[at++] = static_cast<std::uint8_t>(std::lround(c * fg.r + (1.0 - c) * bg.r));
      s.image[at++] = static_cast<std::uint8_t>(std::lround(c * fg.g + (1.0 - c) * bg.g));
      s.image[at++] = static_cast<std::uint8_t>(std::lround(c * fg.b + (1.0 - c) * bg.b));
    }
  }
  return s;
}

double foreground_fraction(const StimulusSpec& spec, int size) {
  check_spec(spec);
  if (size < 16) throw ContractError("foreground_fraction: size must be at least 16");
  const Jitter j = sample_jitter(spec.jitter_seed);
  int covered = 0;
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      if (pixel_coverage(spec, j, px, py, size) >= 0.5) ++covered;
    }
  }
  return static_cast<double>(covered) / (static_cast<double>(size) * size);
}

std::vector<ProbeTriple> make_probe_triples(int n, std::uint64_t seed, int size) {
  if (n < 1) throw ContractError("make_probe_triples: n must be at least 1");
  static_assert(kNumShapes >= 2 && kNumColors >= 2);

  Rng rng = Rng(seed).fork("triples");
  const int n_identities = (n + kNumBackgrounds - 1) / kNumBackgrounds;
  if (n_identities > kNumShapes * kNumColors) {
    throw ContractError("make_probe_triples: not enough distinct probe identities for n=" +
                        std::to_string(n));
  }

  // Distinct probe identities, then per identity: a contrasting color for
  // the shape match, a contrasting shape for the color match, and one
  // jitter per role. Only the background changes between repeats.
  std::set<std::pair<int, int>> used;
  std::vector<ProbeTriple> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int ident = 0; ident < n_identities; ++ident) {
    int shape = 0, color = 0;
    do {
      shape = rng.uniform_int(kNumShapes);
      color = rng.uniform_int(kNumColors);
    } while (!used.emplace(shape, color).second);

    int other_color = rng.uniform_int(kNumColors - 1);
    if (other_color >= color) ++other_color;
    int other_shape = rng.uniform_int(kNumShapes - 1);
    if (other_shape >= shape) ++other_shape;

    const std::uint64_t probe_jit = rng.next();
    const std::uint64_t shape_jit = rng.next();
    const std::uint64_t color_jit = rng.next();

    for (int bg = 0; bg < kNumBackgrounds && static_cast<int>(out.size()) < n; ++bg) {
      ProbeTriple t;
      t.triple_id = static_cast<int>(out.size());
      t.background_id = bg;
      t.probe = render_stimulus({shape, color, bg, probe_jit}, size);
      t.shape_match = render_stimulus({shape, other_color, bg, shape_jit}, size);
      t.color_match = render_stimulus({other_shape, color, bg, color_jit}, size);
      out.push_back(std::move(t));
    }
  }
  return out;
}

LabeledDataset generate_dataset(DatasetMode mode, int n_classes, int n_per_class,
                                std::uint64_t seed, int size) {
  if (n_classes < 1 || n_per_class < 1) {
    throw ContractError("generate_dataset: counts must be positive");
  }
  switch (mode) {
    case DatasetMode::BY_SHAPE:
      if (n_classes > kNumShapes) {
        throw ContractError("generate_dataset: BY_SHAPE supports at most " +
                            std::to_string(kNumShapes) + " classes");
      }
      break;
    case DatasetMode::BY_COLOR:
      if (n_classes > kNumColors) {
        throw ContractError("generate_dataset: BY_COLOR supports at most " +
                            std::to_string(kNumColors) + " classes");
      }
      break;
    case DatasetMode::CONJUNCTION:
      if (n_classes > kNumShapes * kNumColors) {
        throw ContractError("generate_dataset: CONJUNCTION supports at most " +
                            std::to_string(kNumShapes * kNumColors) + " classes");
      }
      break;
  }

  Rng rng = Rng(seed).fork("dataset");
  LabeledDataset ds;
  ds.mode = mode;
  ds.n_classes = n_classes;
  ds.items.reserve(static_cast<std::size_t>(n_classes) * n_per_class);

  // The last fifth of every class is the held-out evaluation slice.
  const int heldout_from = n_per_class - n_per_class / 5;
  for (int label = 0; label < n_classes; ++label) {
    for (int k = 0; k < n_per_class; ++k) {
      StimulusSpec spec;
      switch (mode) {
        case DatasetMode::BY_SHAPE:
          spec.shape_id = label;
          spec.color_id = rng.uniform_int(kNumColors);
          break;
        case DatasetMode::BY_COLOR:
          spec.shape_id = rng.uniform_int(kNumShapes);
          spec.color_id = label;
          break;
        case DatasetMode::CONJUNCTION:
          spec.shape_id = label / kNumColors;
          spec.color_id = label % kNumColors;
          break;
      }
      spec.background_id = rng.uniform_int(kNumBackgrounds);
      spec.jitter_seed = rng.next();
      LabeledItem item;
      item.stim = render_stimulus(spec, size);
      item.label = label;
      item.heldout = k >= heldout_from;
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

namespace {

LabeledDataset filter_split(const LabeledDataset& ds, bool want_heldout) {
  LabeledDataset out;
  out.mode = ds.mode;
  out.n_classes = ds.n_classes;
  for (const auto& item : ds.items) {
    if (item.heldout == want_heldout) out.items.push_back(item);
  }
  return out;
}

}  // namespace

LabeledDataset train_split(const LabeledDataset& ds) { return filter_split(ds, false); }

LabeledDataset heldout_split(const LabeledDataset& ds) { return filter_split(ds, true); }

LabeledDataset class_subset(const LabeledDataset& ds, int first_class, int n_classes) {
  if (n_classes < 1 || first_class < 0 || first_class + n_classes > ds.n_classes) {
    throw ContractError("class_subset: range [" + std::to_string(first_class) + ", " +
                        std::to_string(first_class + n_classes) + ") outside 0.." +
                        std::to_string(ds.n_classes));
  }
  LabeledDataset out;
  out.mode = ds.mode;
  out.n_classes = n_classes;
  for (const auto& item : ds.items) {
    if (item.label >= first_class && item.label < first_class + n_classes) {
      out.items.push_back(item);
      out.items.back().label = item.label - first_class;
    }
  }
  return out;
}

}  // namespace stimgen
