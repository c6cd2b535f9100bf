#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "marlab/tape.hpp"

namespace marlab {

struct Checkpoint {
  std::string model_tag;         // e.g. "policy/auto_regressive" or "mixer/qmix"
  std::uint64_t fingerprint = 0; // config fingerprint of the producing run
  std::vector<std::pair<std::string, Tensor>> tensors;
};

// Text format with hexfloat values: loading reproduces the saved doubles
// bit-exactly.
void save_checkpoint(const std::string& path, const std::string& model_tag, std::uint64_t fingerprint,
                     const ParamStore& params);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into an existing store. Refuses tag mismatches
// and (when expected_fingerprint is nonzero) fingerprint mismatches.
void load_into(ParamStore& params, const Checkpoint& ckpt, const std::string& expected_tag,
               std::uint64_t expected_fingerprint = 0);

}  // namespace marlab
