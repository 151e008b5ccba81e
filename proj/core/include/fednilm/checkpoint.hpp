#pragma once

// Checkpoint file format, bit-exact:
//   8-byte magic "FNLMPRM1"
//   8-byte spec hash, little-endian
//   8-byte unsigned count, little-endian
//   count little-endian 32-bit floats
// The bytes after the magic are exactly the parameter payload carried by
// GLOBAL/UPDATE wire messages, so one serialization covers both.
// The architecture is stored alongside as canonical JSON.

#include <cstdint>
#include <string>
#include <vector>

#include "fednilm/model.hpp"
#include "fednilm/optim.hpp"

namespace fednilm {

// spec_hash + count + floats, little-endian: the checkpoint body and the
// wire encoding of a parameter vector.
std::vector<std::uint8_t> encode_params(const ParameterVector& params);
ParameterVector decode_params(std::span<const std::uint8_t> bytes);

// FNV-1a digest of encode_params(); the per-round global digest.
std::uint64_t params_digest(const ParameterVector& params);

void save_checkpoint(const ParameterVector& params, const std::string& path);
ParameterVector load_checkpoint(const std::string& path);

// Writes <path>.fnlmprm plus <path>.arch.json next to it.
void save_model(const ArchitectureSpec& spec, const ParameterVector& params,
                const std::string& path_stem);
std::pair<ArchitectureSpec, ParameterVector> load_model(const std::string& path_stem);

// Optimizer state: kind byte, step count, then the moment arrays in the
// same little-endian float framing as parameter vectors.
std::vector<std::uint8_t> encode_optimizer_state(const OptimizerState& state);
OptimizerState decode_optimizer_state(std::span<const std::uint8_t> bytes);

}  // namespace fednilm
