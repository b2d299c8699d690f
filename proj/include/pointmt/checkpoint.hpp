#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "pointmt/layers.hpp"

namespace pointmt {

inline constexpr const char* kCheckpointVersion = "pmt-ckpt-1";

// A checkpoint is a JSON manifest plus a blob of little-endian float32 values.
// The manifest lists every parameter's name, shape and byte offset into the
// blob in store order; the blob has the same stem with a ".bin" extension.

template <typename T>
void save_checkpoint(const ParameterStore<T>& params, const std::filesystem::path& manifest,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Loads values into a store of identical names and shapes. Returns the
/// manifest's metadata object.
template <typename T>
nlohmann::json load_checkpoint(ParameterStore<T>& params, const std::filesystem::path& manifest);

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& manifest);

void append_f32_le(std::vector<std::uint8_t>& out, float v);
float read_f32_le(std::span<const std::uint8_t> bytes, std::size_t offset);
void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v);
std::uint32_t read_u32_le(std::span<const std::uint8_t> bytes, std::size_t offset);

}  // namespace pointmt
