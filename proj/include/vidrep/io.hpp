#pragma once

// Binary and CSV file formats shared by every pipeline stage. Byte layouts are
// documented in docs/file_formats.md; all integers and floats little-endian.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidrep/descriptor_set.hpp"

namespace vidrep::io {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint64_t kDefaultPayloadCap = 16ull << 30;  // 16 GiB

struct ReadOptions {
  /// Declared payload sizes above this are rejected before allocating.
  std::uint64_t max_payload_bytes = kDefaultPayloadCap;
};

DescriptorSet read_descriptors(const std::filesystem::path& path, const ReadOptions& options = {});
void write_descriptors(const std::filesystem::path& path, const DescriptorSet& set);

Pool5Tensor read_pool5(const std::filesystem::path& path, const ReadOptions& options = {});
void write_pool5(const std::filesystem::path& path, const Pool5Tensor& tensor);

/// One named float array inside a model file.
struct ModelBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;

  friend bool operator==(const ModelBlock&, const ModelBlock&) = default;
};

/// Self-describing model container: JSON header (kind, params, block shapes)
/// followed by raw f32 blocks in declared order.
struct ModelFile {
  std::string kind;
  nlohmann::json params = nlohmann::json::object();
  std::vector<ModelBlock> blocks;

  const ModelBlock& block(std::string_view name) const;

  friend bool operator==(const ModelFile&, const ModelFile&) = default;
};

/// Checks kind, required params, and block shape/length consistency.
void validate_model(const ModelFile& model);

void write_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile read_model(const std::filesystem::path& path, const ReadOptions& options = {});

/// Peeks at the header only.
std::string read_model_kind(const std::filesystem::path& path);

struct LabelRow {
  std::string video_id;
  int label = 0;  // 0 or 1

  friend bool operator==(const LabelRow&, const LabelRow&) = default;
};

struct ScoreRow {
  std::string video_id;
  float score = 0.0f;

  friend bool operator==(const ScoreRow&, const ScoreRow&) = default;
};

std::vector<LabelRow> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<LabelRow>& rows);

std::vector<ScoreRow> read_scores(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// crash never leaves a truncated destination.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// Little-endian encoding helpers, exposed for the code-file format in pq.
void put_u32(std::string& out, std::uint32_t value);
void put_f32(std::string& out, float value);
std::uint32_t get_u32(std::string_view bytes, std::size_t offset);
float get_f32(std::string_view bytes, std::size_t offset);

}  // namespace vidrep::io
