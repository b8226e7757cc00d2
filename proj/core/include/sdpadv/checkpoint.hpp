#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdpadv/params.hpp"
#include "sdpadv/tensor.hpp"

SDPADV_NAMESPACE_BEGIN

// Checkpoint container layout (all integers 64-bit little-endian):
//   "SDPADV01"
//   repeated until EOF:
//     name length, name bytes, rank, dims[rank], float32 LE values

inline constexpr std::string_view kCheckpointMagic = "SDPADV01";

struct NamedTensor {
  std::string name;
  Tensor tensor;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

std::string encode_tensors(std::span<const NamedTensor> records);
std::vector<NamedTensor> decode_tensors(std::string_view bytes);

void write_tensors(const std::filesystem::path& path, std::span<const NamedTensor> records);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

void save_params(const std::filesystem::path& path, const ParamSet& params);
/// Loads values into an already-constructed set. Every parameter of `params`
/// must be present with an identical shape, and no extra records may exist.
void load_params(const std::filesystem::path& path, ParamSet& params);

std::vector<NamedTensor> to_records(const ParamSet& params, std::string_view prefix = {});
void assign_records(ParamSet& params, std::span<const NamedTensor> records,
                    std::string_view prefix = {});

/// Training metadata stored next to a checkpoint as `<path>.meta`
/// (one key=value per line).
using Meta = std::map<std::string, std::string>;
std::filesystem::path meta_path(const std::filesystem::path& checkpoint);
void write_meta(const std::filesystem::path& checkpoint, const Meta& meta);
/// Empty when the sidecar does not exist.
Meta read_meta(const std::filesystem::path& checkpoint);

SDPADV_NAMESPACE_END
