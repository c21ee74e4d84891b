#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffcore/tensor.hpp"

namespace diffcore {

// Flat binary snapshot of named parameters. Layout: the 5-byte magic
// "SPCK1", then per parameter: u32 name length, name bytes, u32 rank,
// u32 dims, IEEE-754 doubles — all little-endian — until end of file.
std::vector<std::uint8_t> checkpoint_encode(const ParamMap& params);
ParamMap checkpoint_decode(const std::vector<std::uint8_t>& bytes);

// File-level wrappers; throw ContractError on IO failure or bad format.
void checkpoint_save(const std::string& path, const ParamMap& params);
ParamMap checkpoint_load(const std::string& path);

}  // namespace diffcore
