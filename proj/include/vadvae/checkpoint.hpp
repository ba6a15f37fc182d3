#pragma once

#include "vadvae/nn.hpp"

#include <json.hpp>

#include <filesystem>

namespace vadvae {

// Binary container: 8-byte magic "VADVAECK", u64 header length, JSON header,
// then each parameter's f64 values (little-endian, row-major) in header order.
// The header always carries "params": [{"name", "shape"}]; callers add the rest
// (seed, config hash, vocabulary, ...).
void save_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                     const ParameterList& params);

struct CheckpointData {
  nlohmann::json header;
  std::vector<std::pair<std::string, Matrix>> arrays;
};

CheckpointData read_checkpoint(const std::filesystem::path& path);

// Copies stored arrays into params by name; names and shapes must match exactly.
void load_parameters(const CheckpointData& data, const ParameterList& params);

}  // namespace vadvae
