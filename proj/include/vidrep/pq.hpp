#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vidrep/descriptor_set.hpp"
#include "vidrep/io.hpp"

namespace vidrep {

/// Product quantizer: the dim-vector is cut into dim/sub_len slices, each
/// quantized against its own 2^bits-center codebook.
struct PqModel {
  std::size_t dim = 0;
  std::size_t sub_len = 0;
  unsigned bits = 0;
  std::vector<float> centers;  // subspaces x codewords x sub_len

  std::size_t subspaces() const noexcept { return sub_len ? dim / sub_len : 0; }
  std::size_t codewords() const noexcept { return std::size_t{1} << bits; }
  std::span<const float> center(std::size_t s, std::size_t j) const {
    return {centers.data() + (s * codewords() + j) * sub_len, sub_len};
  }

  friend bool operator==(const PqModel&, const PqModel&) = default;
};

using PqCode = std::vector<std::uint16_t>;

/// Storage ratio of f32 vectors to codes: sub_len * 32 / bits.
double compression_ratio(std::size_t sub_len, unsigned bits);
/// Bytes one packed code occupies: ceil(subspaces * bits / 8).
std::size_t packed_code_bytes(std::size_t subspaces, unsigned bits);

struct PqFitOptions {
  std::size_t sub_len = 4;
  unsigned bits = 8;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
};

/// Runs k-means with 2^bits centers independently on every slice.
PqModel fit_pq(const DescriptorSet& train, const PqFitOptions& options);

PqCode pq_encode(const PqModel& model, std::span<const float> x);
std::vector<float> pq_decode(const PqModel& model, std::span<const std::uint16_t> code);

/// Per-slice dot products of every center with the matching slice of w.
struct ScoreLut {
  std::size_t subspaces = 0;
  std::size_t codewords = 0;
  std::vector<double> table;  // subspaces x codewords
  double bias = 0.0;
};

ScoreLut build_lut(const PqModel& model, std::span<const float> w, double bias);
double score_compressed(const ScoreLut& lut, std::span<const std::uint16_t> code);

/// Codes of many videos plus their ids, in video order.
struct PqCodeSet {
  std::size_t subspaces = 0;
  unsigned bits = 0;
  std::vector<std::string> ids;
  std::vector<std::uint16_t> indices;  // n x subspaces

  std::size_t size() const noexcept { return ids.size(); }
  std::span<const std::uint16_t> code(std::size_t i) const { return {indices.data() + i * subspaces, subspaces}; }
  void append(std::string id, std::span<const std::uint16_t> code);
};

/// LSB-first bit packing, one video per byte-aligned record.
std::string pack_code(std::span<const std::uint16_t> code, unsigned bits);
PqCode unpack_code(std::string_view bytes, std::size_t subspaces, unsigned bits);

void write_pq_codes(const std::filesystem::path& path, const PqCodeSet& codes);
PqCodeSet read_pq_codes(const std::filesystem::path& path, const io::ReadOptions& options = {});

/// Instrumentation hook for batch scoring.
struct LookupCounter {
  std::uint64_t lookups = 0;
};

/// Codes re-laid out for batch scoring: videos are grouped into tiles, and
/// inside a tile the codes of one sub-space are contiguous over the tile's
/// videos, so a sweep keeps a single LUT row hot while it streams the tile.
class BatchCodes {
 public:
  static constexpr std::size_t kTile = 4096;
  static constexpr std::size_t kGroup = 16;

  BatchCodes(std::size_t n_videos, std::size_t subspaces, unsigned bits);
  explicit BatchCodes(const PqCodeSet& codes);

  void set(std::size_t video, std::size_t subspace, std::uint16_t index);
  void set_video(std::size_t video, std::span<const std::uint16_t> code);

  std::size_t size() const noexcept { return n_; }
  std::size_t subspaces() const noexcept { return subspaces_; }
  unsigned bits() const noexcept { return bits_; }
  std::size_t storage_bytes() const noexcept { return narrow_.size() + 2 * wide_.size(); }

 private:
  friend void score_compressed_batch(const ScoreLut&, const BatchCodes&, std::span<double>, LookupCounter*);

  std::size_t slot(std::size_t video, std::size_t subspace) const;

  std::size_t n_ = 0;
  std::size_t subspaces_ = 0;
  unsigned bits_ = 0;
  std::vector<std::uint8_t> narrow_;  // bits <= 8
  std::vector<std::uint16_t> wide_;   // bits > 8
};

/// out[i] = score of video i; performs exactly n * subspaces table lookups.
/// Table entries are read in single precision and summed over runs of kGroup
/// consecutive sub-spaces; run sums accumulate in double. Results do not
/// depend on whether the vectorized path is taken.
void score_compressed_batch(const ScoreLut& lut, const BatchCodes& codes, std::span<double> out,
                            LookupCounter* counter = nullptr);

io::ModelFile to_model_file(const PqModel& model);
PqModel pq_from_model(const io::ModelFile& file);

}  // namespace vidrep
