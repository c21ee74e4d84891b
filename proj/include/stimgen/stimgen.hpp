#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace stimgen {

inline constexpr int kNumShapes = 12;
inline constexpr int kNumColors = 8;
inline constexpr int kNumBackgrounds = 5;

struct Rgb {
  std::uint8_t r, g, b;
};

// Saturated foreground palette; index = color_id.
const std::array<Rgb, kNumColors>& palette();
const char* shape_name(int shape_id);

// Everything the renderer needs; rendering is a pure function of this.
// Negative ids mark externally loaded images that have no known factors.
struct StimulusSpec {
  int shape_id = -1;
  int color_id = -1;
  int background_id = -1;
  std::uint64_t jitter_seed = 0;
};

struct Stimulus {
  StimulusSpec spec;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> image;  // row-major RGB, 8-bit channels
};

// Draws one stimulus: a jittered shape prototype in a palette color over
// one of five backgrounds, anti-aliased by 2x supersampling + box filter.
Stimulus render_stimulus(const StimulusSpec& spec, int size);

// Fraction of pixels with majority foreground coverage; used to keep the
// figure-to-canvas ratio inside sane bounds across all jitters.
double foreground_fraction(const StimulusSpec& spec, int size);

struct ProbeTriple {
  Stimulus probe;
  Stimulus shape_match;  // probe's shape, different color
  Stimulus color_match;  // probe's color, different shape
  int triple_id = 0;
  int background_id = 0;
};

// n triples from ceil(n/5) distinct (shape,color) probe identities, each
// identity repeated across the five backgrounds (only the backdrop varies
// between repeats).
std::vector<ProbeTriple> make_probe_triples(int n, std::uint64_t seed, int size = 32);

enum class DatasetMode { BY_SHAPE, BY_COLOR, CONJUNCTION };

const char* mode_name(DatasetMode mode);

struct LabeledItem {
  Stimulus stim;
  int label = 0;
  bool heldout = false;  // deterministic last-20%-of-class evaluation split
};

struct LabeledDataset {
  std::vector<LabeledItem> items;
  DatasetMode mode = DatasetMode::BY_SHAPE;
  int n_classes = 0;
};

// Classes keyed by shape, by color, or by the (shape,color) pair; the
// uncontrolled factors are sampled uniformly per item.
LabeledDataset generate_dataset(DatasetMode mode, int n_classes, int n_per_class,
                                std::uint64_t seed, int size = 32);

// Views of the two split halves, keeping the full label space.
LabeledDataset train_split(const LabeledDataset& ds);
LabeledDataset heldout_split(const LabeledDataset& ds);

// The contiguous class range [first_class, first_class + n_classes), with
// labels remapped to 0..n_classes-1. Used to reserve classes for one-shot
// evaluation.
LabeledDataset class_subset(const LabeledDataset& ds, int first_class, int n_classes);

}  // namespace stimgen
