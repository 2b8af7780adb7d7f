#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depx/errors.hpp"
#include "depx/numerics/layers.hpp"
#include "depx/numerics/random.hpp"

namespace depx::harness {

// Layout: "DEPXCKPT" | u32 version | u64 manifest bytes | manifest JSON |
// raw little-endian f64 data of every tensor, in manifest order.
inline constexpr char kCheckpointMagic[8] = {'D', 'E', 'P', 'X', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t json_hash(const nlohmann::json& j) { return fnv1a64(j.dump()); }

// `manifest` carries whatever the caller needs to rebuild the model; the
// tensor table and hashes are added here.
inline void save_checkpoint(const std::string& path, nlohmann::json manifest, const ParameterSet& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : params) tensors.push_back({{"name", name}, {"shape", t.shape()}});
  manifest["tensors"] = tensors;
  manifest["parameter_hash"] = params.hash();
  if (manifest.contains("model_config")) manifest["config_hash"] = json_hash(manifest["model_config"]);
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  const std::uint64_t len = text.size();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(len));
  for (const auto& [name, t] : params) {
    const auto v = t.data();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed while writing checkpoint " + path);
}

struct LoadedCheckpoint {
  nlohmann::json manifest;
  std::vector<std::pair<std::string, std::vector<double>>> tensors;
};

inline LoadedCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw ValidationError(path + " is not a checkpoint file");
  }
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kCheckpointVersion) {
    throw ValidationError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (std::uint64_t{1} << 32)) throw ValidationError(path + ": corrupt manifest length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ValidationError(path + ": truncated manifest");
  LoadedCheckpoint ck;
  try {
    ck.manifest = nlohmann::json::parse(text);
    for (const auto& t : ck.manifest.at("tensors")) {
      std::size_t n = 1;
      for (std::size_t d : t.at("shape").get<std::vector<std::size_t>>()) n *= d;
      std::vector<double> v(n);
      in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
      if (!in) throw ValidationError(path + ": truncated tensor data for " + t.at("name").get<std::string>());
      ck.tensors.emplace_back(t.at("name").get<std::string>(), std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": bad manifest: " + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError(path + ": trailing bytes after tensor data");
  return ck;
}

// Copies stored values into `params`; names and shapes must match exactly.
inline void restore_parameters(const LoadedCheckpoint& ck, const ParameterSet& params) {
  if (ck.tensors.size() != params.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  std::size_t i = 0;
  for (const auto& [name, t] : params) {
    const auto& [cname, values] = ck.tensors[i++];
    if (cname != name || values.size() != t.size()) throw ValidationError("checkpoint tensor mismatch at " + name);
    Tensor handle = t;
    std::copy(values.begin(), values.end(), handle.mutable_data().begin());
  }
  if (ck.manifest.contains("parameter_hash") && ck.manifest["parameter_hash"].get<std::uint64_t>() != params.hash()) {
    throw ValidationError("checkpoint parameter hash does not match its data");
  }
}

}  // namespace depx::harness
