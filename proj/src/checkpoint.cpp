#include "pointmt/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <string>

#include "pointmt/errors.hpp"

namespace pointmt {

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t read_u32_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset > bytes.size() || bytes.size() - offset < 4) {
    throw ParseError("unexpected end of data reading u32", offset);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

void append_f32_le(std::vector<std::uint8_t>& out, float v) {
  append_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

float read_f32_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return std::bit_cast<float>(read_u32_le(bytes, offset));
}

namespace {

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

template <typename T>
void save_checkpoint(const ParameterStore<T>& params, const std::filesystem::path& manifest,
                     const nlohmann::json& metadata) {
  nlohmann::json doc;
  doc["version"] = kCheckpointVersion;
  doc["blob"] = blob_path(manifest).filename().string();
  doc["dtype"] = "f32le";
  doc["metadata"] = metadata;
  std::vector<std::uint8_t> blob;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& p : params.all()) {
    entries.push_back({{"name", p.name},
                       {"shape", p.value.shape()},
                       {"offset", blob.size()},
                       {"count", p.value.size()}});
    for (T v : p.value.data()) append_f32_le(blob, static_cast<float>(v));
  }
  doc["parameters"] = std::move(entries);
  doc["total_bytes"] = blob.size();

  if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
  std::ofstream bin(blob_path(manifest), std::ios::binary);
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!bin) throw std::runtime_error("cannot write " + blob_path(manifest).string());
  std::ofstream json(manifest);
  json << doc.dump(2) << '\n';
  if (!json) throw std::runtime_error("cannot write " + manifest.string());
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open checkpoint manifest " + manifest.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint manifest " + manifest.string() + ": " + e.what(), 0);
  }
  if (!doc.is_object() || doc.value("version", "") != kCheckpointVersion) {
    throw ParseError("checkpoint manifest " + manifest.string() + ": expected version " +
                         kCheckpointVersion,
                     0);
  }
  return doc;
}

template <typename T>
nlohmann::json load_checkpoint(ParameterStore<T>& params, const std::filesystem::path& manifest) {
  const nlohmann::json doc = read_checkpoint_manifest(manifest);
  const auto blob_file = manifest.parent_path() / doc.at("blob").get<std::string>();
  std::ifstream bin(blob_file, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open checkpoint blob " + blob_file.string());
  const std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(bin)),
                                       std::istreambuf_iterator<char>());
  const auto& entries = doc.at("parameters");
  if (entries.size() != params.size()) {
    throw ParseError("checkpoint has " + std::to_string(entries.size()) + " parameters, model has " +
                         std::to_string(params.size()),
                     0);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    auto& p = params[i];
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    if (name != p.name || shape != p.value.shape()) {
      throw ParseError("checkpoint entry " + name + " " + shape_string(shape) +
                           " does not match model parameter " + p.name + " " +
                           shape_string(p.value.shape()),
                       0);
    }
    const std::size_t offset = e.at("offset").get<std::size_t>();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      p.value[j] = static_cast<T>(read_f32_le(blob, offset + 4 * j));
    }
  }
  return doc.value("metadata", nlohmann::json::object());
}

template void save_checkpoint<float>(const ParameterStore<float>&, const std::filesystem::path&,
                                     const nlohmann::json&);
template void save_checkpoint<double>(const ParameterStore<double>&, const std::filesystem::path&,
                                      const nlohmann::json&);
template nlohmann::json load_checkpoint<float>(ParameterStore<float>&, const std::filesystem::path&);
template nlohmann::json load_checkpoint<double>(ParameterStore<double>&,
                                                const std::filesystem::path&);

}  // namespace pointmt
