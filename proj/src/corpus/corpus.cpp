#include "corpus/corpus.hpp"

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include "diffcore/errors.hpp"

namespace corpus {

namespace fs = std::filesystem;
using diffcore::ContractError;

// ---------------------------------------------------------------------------
// PPM codec
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> ppm_write(const stimgen::Stimulus& image) {
  if (image.width < 1 || image.height < 1 ||
      image.image.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw ContractError("ppm_write: image dimensions do not match pixel count");
  }
  std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                       "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.image.begin(), image.image.end());
  return out;
}

namespace {

// Reads one whitespace-delimited token from the PPM header region.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
  if (tok.empty()) throw DecodeError("ppm: truncated header");
  return tok;
}

int parse_dim(const std::string& tok, const char* what) {
  int v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || v < 1) {
    throw DecodeError(std::string("ppm: bad ") + what + " '" + tok + "'");
  }
  return v;
}

}  // namespace

stimgen::Stimulus ppm_read(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw DecodeError("ppm: not a P6 file");
  const int w = parse_dim(next_token(bytes, pos), "width");
  const int h = parse_dim(next_token(bytes, pos), "height");
  const std::string maxval = next_token(bytes, pos);
  if (maxval != "255") throw DecodeError("ppm: unsupported maxval '" + maxval + "'");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DecodeError("ppm: missing header terminator");
  ++pos;  // single whitespace byte after maxval

  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < need) throw DecodeError("ppm: truncated pixel payload");
  stimgen::Stimulus s;
  s.width = w;
  s.height = h;
  s.image.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                 bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return s;
}

void ppm_save(const std::string& path, const stimgen::Stimulus& image) {
  const auto bytes = ppm_write(image);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("ppm_save: cannot open '" + path + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ContractError("ppm_save: write failed for '" + path + "'");
}

stimgen::Stimulus ppm_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DecodeError("ppm: cannot open '" + path + "'");
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw DecodeError("ppm: read failed for '" + path + "'");
  return ppm_read(bytes);
}

// ---------------------------------------------------------------------------
// triple manifests
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kManifestHeader = "triple_id,probe,shape_match,color_match,background_id";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

long parse_long(const std::string& tok, const std::string& context) {
  long v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    throw DecodeError(context + ": bad integer '" + tok + "'");
  }
  return v;
}

double parse_double(const std::string& tok, const std::string& context) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    throw DecodeError(context + ": bad number '" + tok + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ContractError("format_double: value not representable");
  return std::string(buf, p);
}

}  // namespace

void save_manifest(const std::string& path, const std::vector<stimgen::ProbeTriple>& triples) {
  const fs::path manifest(path);
  const fs::path dir = manifest.parent_path().empty() ? "." : manifest.parent_path();
  std::error_code ec;
  fs::create_directories(dir, ec);

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ContractError("save_manifest: cannot open '" + path + "'");
  f << kManifestHeader << "\n";
  for (const auto& t : triples) {
    const std::string stem = "triple_" + std::to_string(t.triple_id);
    const std::string probe = stem + "_probe.ppm";
    const std::string shape = stem + "_shape.ppm";
    const std::string color = stem + "_color.ppm";
    ppm_save((dir / probe).string(), t.probe);
    ppm_save((dir / shape).string(), t.shape_match);
    ppm_save((dir / color).string(), t.color_match);
    f << t.triple_id << "," << probe << "," << shape << "," << color << "," << t.background_id
      << "\n";
  }
  if (!f) throw ContractError("save_manifest: write failed for '" + path + "'");
}

std::vector<stimgen::ProbeTriple> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DecodeError("load_manifest: cannot open '" + path + "'");
  const fs::path dir = fs::path(path).parent_path().empty() ? "." : fs::path(path).parent_path();

  std::string line;
  if (!std::getline(f, line)) throw DecodeError("load_manifest: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw DecodeError("load_manifest: header must be exactly '" + std::string(kManifestHeader) +
                      "'");
  }

  std::vector<stimgen::ProbeTriple> out;
  std::set<long> seen_ids;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv(line);
    if (fields.size() != 5) {
      throw DecodeError("load_manifest: row " + std::to_string(out.size() + 1) +
                        " has " + std::to_string(fields.size()) + " fields, expected 5");
    }
    const long id = parse_long(fields[0], "load_manifest: triple_id");
    if (!seen_ids.insert(id).second) {
      throw DecodeError("load_manifest: duplicate triple_id " + std::to_string(id));
    }
    stimgen::ProbeTriple t;
    t.triple_id = static_cast<int>(id);
    t.background_id = static_cast<int>(parse_long(fields[4], "load_manifest: background_id"));
    auto load_image = [&](const std::string& rel) {
      try {
        return ppm_load((dir / rel).string());
      } catch (const DecodeError& e) {
        throw DecodeError("load_manifest: triple " + std::to_string(id) + ": " + e.what());
      }
    };
    t.probe = load_image(fields[1]);
    t.shape_match = load_image(fields[2]);
    t.color_match = load_image(fields[3]);
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// bias records
// ---------------------------------------------------------------------------

const char* model_kind_name(ModelKind kind) { return kind == ModelKind::IB ? "IB" : "MN"; }

ModelKind parse_model_kind(const std::string& text) {
  if (text == "IB") return ModelKind::IB;
  if (text == "MN") return ModelKind::MN;
  throw DecodeError("records: unknown model_kind '" + text + "'");
}

namespace {
constexpr const char* kRecordsHeader = "model_kind,seed,step,dataset,bias,accuracy";
}

void records_write(const std::string& path, const std::vector<BiasRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ContractError("records_write: cannot open '" + path + "'");
  f << kRecordsHeader << "\n";
  for (const auto& r : records) {
    if (r.bias < 0.0 || r.bias > 1.0 || r.accuracy < 0.0 || r.accuracy > 1.0) {
      throw ContractError("records_write: bias/accuracy out of [0,1]");
    }
    if (r.dataset.find(',') != std::string::npos || r.dataset.find('\n') != std::string::npos) {
      throw ContractError("records_write: dataset name contains a delimiter");
    }
    f << model_kind_name(r.model_kind) << "," << r.seed << "," << r.step << "," << r.dataset << ","
      << format_double(r.bias) << "," << format_double(r.accuracy) << "\n";
  }
  if (!f) throw ContractError("records_write: write failed for '" + path + "'");
}

std::vector<BiasRecord> records_read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DecodeError("records_read: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw DecodeError("records_read: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordsHeader) {
    throw DecodeError("records_read: header must be exactly '" + std::string(kRecordsHeader) + "'");
  }

  std::vector<BiasRecord> out;
  std::set<std::string> keys;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv(line);
    if (fields.size() != 6) {
      throw DecodeError("records_read: row " + std::to_string(out.size() + 1) + " has " +
                        std::to_string(fields.size()) + " fields, expected 6");
    }
    BiasRecord r;
    r.model_kind = parse_model_kind(fields[0]);
    r.seed = parse_long(fields[1], "records_read: seed");
    r.step = parse_long(fields[2], "records_read: step");
    r.dataset = fields[3];
    r.bias = parse_double(fields[4], "records_read: bias");
    r.accuracy = parse_double(fields[5], "records_read: accuracy");
    if (r.bias < 0.0 || r.bias > 1.0) {
      throw DecodeError("records_read: bias " + fields[4] + " outside [0,1]");
    }
    if (r.accuracy < 0.0 || r.accuracy > 1.0) {
      throw DecodeError("records_read: accuracy " + fields[5] + " outside [0,1]");
    }
    const std::string key =
        fields[0] + "|" + fields[1] + "|" + fields[2] + "|" + fields[3];
    if (!keys.insert(key).second) {
      throw DecodeError("records_read: duplicate record key " + key);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace corpus
