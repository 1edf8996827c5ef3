#pragma once

#include "skrl/params.hpp"

#include <string>

namespace skrl {

// file failed its CRC or is structurally broken
struct corruption_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// file was written by an incompatible format version
struct version_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr uint32_t CHECKPOINT_VERSION = 1;

// binary layout: magic "SKRL", version u32, tensor count u32, then per tensor
// name length u16 + name bytes, module label u8, rank u8, dims u32 each,
// raw f32 little-endian data; trailing CRC32 of all preceding bytes.
// written to <path>.tmp and renamed so an interrupted save never clobbers
// the previous checkpoint.
void save_checkpoint(const ParamStore & ps, const std::string & path);

ParamStore load_checkpoint(const std::string & path);

// load into an existing store: every stored tensor must already exist with
// the same shape, otherwise a shape error naming the tensor is thrown
void load_checkpoint_into(ParamStore & ps, const std::string & path);

// one line per tensor: name, module label, shape, element count
std::string checkpoint_summary(const ParamStore & ps);

} // namespace skrl
