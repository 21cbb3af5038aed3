#include "dyndiff/data/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dyndiff::data {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "DYNDIFF-CKPT";

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

const NamedBuffer& Checkpoint::parameter(const std::string& name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw std::out_of_range("checkpoint has no parameter '" + name + "'");
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  auto params = ckpt.parameters;
  std::sort(params.begin(), params.end(), [](const auto& a, const auto& b) { return a.name < b.name; });

  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& p : params) {
    if (numel(p.shape) != p.values.size())
      throw std::invalid_argument("checkpoint entry '" + p.name + "': shape does not match value count");
    const std::size_t bytes = p.values.size() * sizeof(float);
    entries.push_back({{"name", p.name}, {"shape", p.shape}, {"dtype", "f32"}, {"offset", offset}, {"length", bytes}});
    offset += bytes;
  }
  json stats = json::array();
  for (const auto& s : ckpt.stats) stats.push_back({{"mean", s.mean}, {"std", s.std}});

  json manifest = {{"format_version", ckpt.format_version},
                   {"entries", entries},
                   {"config", ckpt.config},
                   {"variables", ckpt.variables},
                   {"targets", ckpt.targets},
                   {"stats", stats},
                   {"rng_state", ckpt.rng_state}};
  const std::string text = manifest.dump(1);

  std::string out = std::string(kMagic) + " " + std::to_string(ckpt.format_version) + "\n" +
                    std::to_string(text.size()) + "\n" + text + "\n";
  out.reserve(out.size() + offset);
  for (const auto& p : params) {
    for (float v : p.values) {
      const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(v));
      char raw[4];
      std::memcpy(raw, &bits, 4);
      out.append(raw, 4);
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  auto fail = [&source](const std::string& what) { return std::runtime_error(source + ": " + what); };

  const auto first_nl = bytes.find('\n');
  if (first_nl == std::string::npos || bytes.compare(0, std::strlen(kMagic), kMagic) != 0)
    throw fail("not a checkpoint file (bad magic line)");
  const std::string version_text = bytes.substr(std::strlen(kMagic), first_nl - std::strlen(kMagic));
  int version = 0;
  try {
    version = std::stoi(version_text);
  } catch (const std::exception&) {
    throw fail("unreadable format version '" + version_text + "'");
  }
  if (version != kCheckpointVersion) {
    throw fail("format version " + std::to_string(version) + " is not supported (expected " +
               std::to_string(kCheckpointVersion) + ")");
  }
  const auto second_nl = bytes.find('\n', first_nl + 1);
  if (second_nl == std::string::npos) throw fail("missing manifest length");
  std::size_t manifest_len = 0;
  try {
    manifest_len = std::stoull(bytes.substr(first_nl + 1, second_nl - first_nl - 1));
  } catch (const std::exception&) {
    throw fail("unreadable manifest length");
  }
  const std::size_t manifest_start = second_nl + 1;
  if (manifest_start + manifest_len + 1 > bytes.size() || bytes[manifest_start + manifest_len] != '\n')
    throw fail("manifest is truncated or its length is wrong");

  json manifest;
  try {
    manifest = json::parse(bytes.substr(manifest_start, manifest_len));
  } catch (const json::exception& e) {
    throw fail(std::string("malformed manifest: ") + e.what());
  }

  Checkpoint ckpt;
  const std::size_t data_start = manifest_start + manifest_len + 1;
  const std::size_t data_size = bytes.size() - data_start;
  try {
    if (manifest.at("format_version").get<int>() != version) throw fail("manifest version disagrees with header");
    ckpt.format_version = version;
    ckpt.config = manifest.at("config").get<std::map<std::string, std::string>>();
    ckpt.variables = manifest.at("variables").get<std::vector<std::string>>();
    ckpt.targets = manifest.at("targets").get<std::vector<std::string>>();
    for (const auto& s : manifest.at("stats")) ckpt.stats.push_back({s.at("mean").get<double>(), s.at("std").get<double>()});
    ckpt.rng_state = manifest.at("rng_state").get<std::string>();

    std::size_t expected_offset = 0;
    for (const auto& e : manifest.at("entries")) {
      NamedBuffer p;
      p.name = e.at("name").get<std::string>();
      p.shape = e.at("shape").get<std::vector<std::size_t>>();
      if (e.at("dtype").get<std::string>() != "f32") throw fail("entry '" + p.name + "': unsupported dtype");
      const auto offset = e.at("offset").get<std::size_t>();
      const auto length = e.at("length").get<std::size_t>();
      if (length != numel(p.shape) * sizeof(float)) {
        throw fail("entry '" + p.name + "': byte length " + std::to_string(length) + " does not match shape (" +
                   std::to_string(numel(p.shape) * sizeof(float)) + " bytes)");
      }
      if (offset != expected_offset) throw fail("entry '" + p.name + "': unexpected byte offset");
      if (offset + length > data_size) throw fail("entry '" + p.name + "': buffer is truncated");
      p.values.resize(numel(p.shape));
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + data_start + offset + 4 * i, 4);
        p.values[i] = std::bit_cast<float>(to_little(bits));
      }
      expected_offset += length;
      ckpt.parameters.push_back(std::move(p));
    }
    if (expected_offset != data_size) throw fail("trailing bytes after the last buffer");
  } catch (const json::exception& e) {
    throw fail(std::string("malformed manifest: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path);
}

}  // namespace dyndiff::data
