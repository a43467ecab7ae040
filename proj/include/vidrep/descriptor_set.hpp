#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vidrep {

/// Dense row-major n_items x dim block of float descriptors. One row is one
/// frame, one latent concept location, or one encoded video.
struct DescriptorSet {
  std::size_t n_items = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  DescriptorSet() = default;
  DescriptorSet(std::size_t n, std::size_t d) : n_items(n), dim(d), data(n * d, 0.0f) {}
  DescriptorSet(std::size_t n, std::size_t d, std::vector<float> values);

  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }

  void append_row(std::span<const float> values);
  bool empty() const noexcept { return n_items == 0; }

  friend bool operator==(const DescriptorSet&, const DescriptorSet&) = default;
};

/// a x a x M activations per frame, stored (frame, row, col, channel).
struct Pool5Tensor {
  std::size_t n_frames = 0;
  std::size_t side = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  Pool5Tensor() = default;
  Pool5Tensor(std::size_t frames, std::size_t a, std::size_t m)
      : n_frames(frames), side(a), channels(m), data(frames * a * a * m, 0.0f) {}

  std::size_t frame_size() const noexcept { return side * side * channels; }
  std::size_t offset(std::size_t frame, std::size_t r, std::size_t c, std::size_t m) const noexcept {
    return ((frame * side + r) * side + c) * channels + m;
  }
  float at(std::size_t frame, std::size_t r, std::size_t c, std::size_t m) const {
    return data[offset(frame, r, c, m)];
  }
  std::span<const float> frame(std::size_t f) const { return {data.data() + f * frame_size(), frame_size()}; }
  std::span<float> frame(std::size_t f) { return {data.data() + f * frame_size(), frame_size()}; }

  friend bool operator==(const Pool5Tensor&, const Pool5Tensor&) = default;
};

}  // namespace vidrep
