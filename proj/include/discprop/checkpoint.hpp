#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "discprop/nn.hpp"

namespace discprop {

// Binary layout, little-endian:
//   "DPCK" | u32 version | u64 meta_len | meta (JSON text)
//   | u64 count | count x (u32 name_len | name | u64 rows | u64 cols | rows*cols f64, column-major)
struct Checkpoint {
  nlohmann::json meta;
  std::string tensors;  // serialized tensor section, exactly as on disk
};

std::string serialize_parameters(const nn::ParameterStore& store);

// Copies tensors into `store`; names and shapes must match. With
// require_all = false the file may cover only part of the store.
void load_parameters(nn::ParameterStore& store, const std::string& tensors,
                     bool require_all = true);

// Hex SHA-256 of the serialized parameters.
std::string parameter_hash(const nn::ParameterStore& store);
std::string sha256_hex(const std::string& bytes);

// Writes to a temporary sibling, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_bytes(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const nn::ParameterStore& store);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace discprop
