#include "cli/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "diffcore/errors.hpp"

namespace cli {
namespace {

using diffcore::ContractError;

struct RawValue {
  std::string token;  // unquoted content for strings, raw text otherwise
  bool quoted = false;
  int line = 0;
};

using ValueMap = std::map<std::string, RawValue>;

std::string strip(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail_line(int line, const std::string& msg) {
  throw ContractError("config: line " + std::to_string(line) + ": " + msg);
}

[[noreturn]] void fail_key(const ValueMap& values, const std::string& key,
                           const std::string& msg) {
  const auto it = values.find(key);
  const std::string at = it == values.end() ? "" : " (line " + std::to_string(it->second.line) + ")";
  throw ContractError("config: key '" + key + "'" + at + ": " + msg);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

ValueMap scan(const std::string& text) {
  ValueMap values;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // A comment starts at the first '#' outside quotes.
    bool in_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') {
        in_quote = !in_quote;
      } else if (line[i] == '#' && !in_quote) {
        line.resize(i);
        break;
      }
    }
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail_line(lineno, "unterminated section header");
      section = strip(line.substr(1, line.size() - 2));
      if (!valid_name(section)) fail_line(lineno, "bad section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail_line(lineno, "expected 'key = value'");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (!valid_name(key)) fail_line(lineno, "bad key '" + key + "'");
    if (value.empty()) fail_line(lineno, "missing value for '" + key + "'");
    RawValue raw;
    raw.line = lineno;
    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') fail_line(lineno, "unterminated string");
      raw.token = value.substr(1, value.size() - 2);
      if (raw.token.find('"') != std::string::npos)
        fail_line(lineno, "embedded quotes are not supported");
      raw.quoted = true;
    } else {
      raw.token = value;
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (!values.emplace(full, raw).second) fail_line(lineno, "duplicate key '" + full + "'");
  }
  return values;
}

// Typed getters. Each looks up `key`, validates, writes through `out`, and
// erases the entry; whatever survives the walk is an unknown key.

const RawValue* take(ValueMap& values, const std::string& key) {
  const auto it = values.find(key);
  return it == values.end() ? nullptr : &it->second;
}

template <typename Int>
void get_integer(ValueMap& values, const std::string& key, Int& out, Int lo, Int hi) {
  const RawValue* raw = take(values, key);
  if (!raw) return;
  if (raw->quoted) fail_key(values, key, "expected an integer, got a string");
  Int v{};
  const char* first = raw->token.data();
  const char* last = first + raw->token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    fail_key(values, key, "expected an integer, got '" + raw->token + "'");
  if (v < lo || v > hi)
    fail_key(values, key, "value " + raw->token + " outside [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
  out = v;
  values.erase(key);
}

void get_double(ValueMap& values, const std::string& key, double& out, double lo, double hi,
                bool lo_exclusive) {
  const RawValue* raw = take(values, key);
  if (!raw) return;
  if (raw->quoted) fail_key(values, key, "expected a number, got a string");
  double v = 0.0;
  const char* first = raw->token.data();
  const char* last = first + raw->token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    fail_key(values, key, "expected a number, got '" + raw->token + "'");
  const bool below = lo_exclusive ? !(v > lo) : v < lo;
  if (below || v > hi)
    fail_key(values, key, "value " + raw->token + " outside " + (lo_exclusive ? "(" : "[") +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
  out = v;
  values.erase(key);
}

void get_string(ValueMap& values, const std::string& key, std::string& out) {
  const RawValue* raw = take(values, key);
  if (!raw) return;
  if (!raw->quoted) fail_key(values, key, "expected a quoted string");
  if (raw->token.empty()) fail_key(values, key, "string must be non-empty");
  out = raw->token;
  values.erase(key);
}

template <typename Enum>
void get_choice(ValueMap& values, const std::string& key, Enum& out,
                const std::vector<std::pair<std::string, Enum>>& choices) {
  const RawValue* raw = take(values, key);
  if (!raw) return;
  const int line = raw->line;
  std::string text;
  get_string(values, key, text);  // consumes the entry
  for (const auto& [name, value] : choices) {
    if (text == name) {
      out = value;
      return;
    }
  }
  std::string allowed;
  for (const auto& [name, value] : choices) allowed += (allowed.empty() ? "" : " | ") + name;
  throw ContractError("config: key '" + key + "' (line " + std::to_string(line) + "): '" + text +
                      "' is not one of " + allowed);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  ValueMap values = scan(text);
  RunConfig cfg;

  get_choice<stimgen::DatasetMode>(values, "world.mode", cfg.world_mode,
                                   {{"by_shape", stimgen::DatasetMode::BY_SHAPE},
                                    {"by_color", stimgen::DatasetMode::BY_COLOR},
                                    {"conjunction", stimgen::DatasetMode::CONJUNCTION}});
  get_integer(values, "world.classes", cfg.world_classes, 2, 96);
  get_integer(values, "world.per_class", cfg.world_per_class, 2, 100000);
  get_integer(values, "world.image_size", cfg.image_size, 8, 256);
  get_integer<std::uint64_t>(values, "world.seed", cfg.world_seed, 0,
                             std::numeric_limits<std::uint64_t>::max());

  get_string(values, "probe.source", cfg.probe_source);
  get_integer(values, "probe.triples", cfg.probe_triples, 1, 100000);
  get_integer(values, "probe.datasets", cfg.probe_datasets, 1, 32);
  get_integer<std::uint64_t>(values, "probe.seed", cfg.probe_seed, 0,
                             std::numeric_limits<std::uint64_t>::max());

  get_integer(values, "embedder.feature_dim", cfg.embedder.feature_dim, 1, 4096);
  get_integer(values, "embedder.conv1_channels", cfg.embedder.conv1_channels, 1, 512);
  get_integer(values, "embedder.conv2_channels", cfg.embedder.conv2_channels, 1, 512);
  get_integer(values, "embedder.steps", cfg.embedder.steps, 1, 10000000);
  get_integer(values, "embedder.batch_size", cfg.embedder.batch_size, 1, 8192);
  get_choice<embedder::OptimizerKind>(values, "embedder.optimizer", cfg.embedder.optimizer,
                                      {{"sgd", embedder::OptimizerKind::SGD},
                                       {"rmsprop", embedder::OptimizerKind::RMSProp}});
  get_double(values, "embedder.learning_rate", cfg.embedder.learning_rate, 0.0, 1e6, true);
  get_double(values, "embedder.rms_decay", cfg.embedder.rms_decay, 0.0, 0.999999, true);
  get_double(values, "embedder.rms_eps", cfg.embedder.rms_eps, 0.0, 1.0, true);
  get_integer(values, "embedder.checkpoint_interval", cfg.embedder.checkpoint_interval, 1,
              10000000);
  get_integer<std::uint64_t>(values, "embedder.seed", cfg.embedder.seed, 0,
                             std::numeric_limits<std::uint64_t>::max());

  get_integer(values, "matchnet.read_steps", cfg.mn.read_steps, 0, 64);
  get_integer(values, "matchnet.way", cfg.mn.way, 2, 64);
  get_double(values, "matchnet.learning_rate", cfg.mn.learning_rate, 0.0, 1e6, true);
  get_integer<long>(values, "matchnet.episodes", cfg.mn.episodes, 1, 1000000000);
  get_integer<long>(values, "matchnet.checkpoint_interval", cfg.mn.checkpoint_interval, 1,
                    1000000000);
  get_integer<std::uint64_t>(values, "matchnet.seed", cfg.mn.seed, 0,
                             std::numeric_limits<std::uint64_t>::max());

  get_integer(values, "sweep.embedder_seeds", cfg.sweep_embedder_seeds, 1, 1000);
  get_integer(values, "sweep.mn_seeds", cfg.sweep_mn_seeds, 1, 99);
  get_integer(values, "sweep.holdout_classes", cfg.sweep_holdout_classes, 1, 96);
  get_integer(values, "sweep.eval_episodes", cfg.sweep_eval_episodes, 1, 1000000);
  get_choice<oneshot::DistanceKind>(values, "sweep.distance", cfg.sweep_distance,
                                    {{"euclidean", oneshot::DistanceKind::EUCLIDEAN},
                                     {"cosine", oneshot::DistanceKind::COSINE_DISTANCE}});
  get_integer(values, "sweep.jobs", cfg.sweep_jobs, 1, 256);

  get_string(values, "output.dir", cfg.out_dir);

  if (!values.empty()) {
    std::string unknown;
    for (const auto& [key, raw] : values)
      unknown += (unknown.empty() ? "" : ", ") + ("'" + key + "' (line " +
                                                  std::to_string(raw.line) + ")");
    throw ContractError("config: unknown key(s): " + unknown);
  }

  // Cross-field constraints that would otherwise surface deep inside a run.
  if (cfg.embedder.steps % cfg.embedder.checkpoint_interval != 0)
    throw ContractError("config: embedder.checkpoint_interval must divide embedder.steps");
  if (cfg.mn.episodes % cfg.mn.checkpoint_interval != 0)
    throw ContractError("config: matchnet.checkpoint_interval must divide matchnet.episodes");
  if (cfg.sweep_holdout_classes >= cfg.world_classes)
    throw ContractError("config: sweep.holdout_classes must leave at least one training class");

  cfg.embedder.image_size = cfg.image_size;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractError("config: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << f.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace cli
