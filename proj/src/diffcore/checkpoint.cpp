#include "diffcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "diffcore/errors.hpp"

namespace diffcore {

namespace {

constexpr char kMagic[] = {'S', 'P', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

std::uint32_t take_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw ContractError("checkpoint: truncated header field");
  std::uint32_t v;
  std::memcpy(&v, in.data() + pos, 4);
  pos += 4;
  return v;
}

}  // namespace

std::vector<std::uint8_t> checkpoint_encode(const ParamMap& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data.data());
    out.insert(out.end(), p, p + t.data.size() * sizeof(double));
  }
  return out;
}

ParamMap checkpoint_decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ContractError("checkpoint: bad magic");
  }
  ParamMap params;
  std::size_t pos = sizeof(kMagic);
  while (pos < bytes.size()) {
    const std::uint32_t name_len = take_u32(bytes, pos);
    if (pos + name_len > bytes.size()) throw ContractError("checkpoint: truncated name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    const std::uint32_t rank = take_u32(bytes, pos);
    if (rank > 8) throw ContractError("checkpoint: implausible rank for '" + name + "'");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(take_u32(bytes, pos));
    const std::int64_t count = shape_numel(shape);
    const std::size_t payload = static_cast<std::size_t>(count) * sizeof(double);
    if (pos + payload > bytes.size()) throw ContractError("checkpoint: truncated data for '" + name + "'");
    Tensor t = Tensor::zeros(shape);
    std::memcpy(t.data.data(), bytes.data() + pos, payload);
    pos += payload;
    if (!params.emplace(std::move(name), std::move(t)).second) {
      throw ContractError("checkpoint: duplicate parameter name");
    }
  }
  return params;
}

void checkpoint_save(const std::string& path, const ParamMap& params) {
  const auto bytes = checkpoint_encode(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("checkpoint: cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ContractError("checkpoint: write failed for '" + path + "'");
}

ParamMap checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw ContractError("checkpoint: cannot open '" + path + "'");
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw ContractError("checkpoint: read failed for '" + path + "'");
  return checkpoint_decode(bytes);
}

}  // namespace diffcore
