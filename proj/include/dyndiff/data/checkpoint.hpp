#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dyndiff/data/frame.hpp"

// Container layout:
//
//   DYNDIFF-CKPT <format_version>\n
//   <manifest byte length>\n
//   <manifest: JSON object, keys sorted>\n
//   <raw little-endian float32 buffers, in manifest order>
//
// Each manifest entry records name, shape, dtype ("f32"), byte offset
// (relative to the start of the buffer section) and byte length.

namespace dyndiff::data {

inline constexpr int kCheckpointVersion = 1;

struct NamedBuffer {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

struct Checkpoint {
  int format_version = kCheckpointVersion;
  std::vector<NamedBuffer> parameters;           // kept sorted by name
  std::map<std::string, std::string> config;     // flat "section.key" -> value
  std::vector<std::string> variables;            // all input columns, in order
  std::vector<std::string> targets;              // target columns, in order
  std::vector<VariableStats> stats;              // one per input column
  std::string rng_state;

  const NamedBuffer& parameter(const std::string& name) const;
};

/// Byte-exact serialization; save(load(save(x))) == save(x).
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
/// Throws std::runtime_error on a version mismatch, a malformed manifest,
/// or an entry whose buffer is truncated or has the wrong length (the
/// message names the entry).
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dyndiff::data
