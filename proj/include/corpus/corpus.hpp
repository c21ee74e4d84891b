#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stimgen/stimgen.hpp"

namespace corpus {

// Raised when on-disk data is malformed (as opposed to API misuse).
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary PPM (P6, maxval 255). read(write(x)) == x exactly.
std::vector<std::uint8_t> ppm_write(const stimgen::Stimulus& image);
stimgen::Stimulus ppm_read(const std::vector<std::uint8_t>& bytes);

void ppm_save(const std::string& path, const stimgen::Stimulus& image);
stimgen::Stimulus ppm_load(const std::string& path);

// Probe-triple manifest: CSV with header
//   triple_id,probe,shape_match,color_match,background_id
// Image paths are resolved relative to the manifest's directory. Loaded
// stimuli carry sentinel spec ids (-1): the generating factors of external
// images are unknown.
void save_manifest(const std::string& path, const std::vector<stimgen::ProbeTriple>& triples);
std::vector<stimgen::ProbeTriple> load_manifest(const std::string& path);

enum class ModelKind { IB, MN };

const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

// One sweep measurement: a model at a training step scored on a dataset.
struct BiasRecord {
  ModelKind model_kind = ModelKind::IB;
  long seed = 0;
  long step = 0;
  std::string dataset;
  double bias = 0.0;      // in [0,1]
  double accuracy = 0.0;  // in [0,1]
};

// CSV with header model_kind,seed,step,dataset,bias,accuracy; floats are
// written with shortest round-trip precision. Reading enforces the value
// ranges and rejects duplicate (model_kind,seed,step,dataset) keys.
void records_write(const std::string& path, const std::vector<BiasRecord>& records);
std::vector<BiasRecord> records_read(const std::string& path);

}  // namespace corpus
