#include "vidrep/pq.hpp"

#include <algorithm>
#include <type_traits>
#include <cmath>
#include <limits>

#if defined(__x86_64__) && defined(__GNUC__)
#include <immintrin.h>
#define VIDREP_X86_DISPATCH 1
#endif

#include "vidrep/codebook.hpp"
#include "vidrep/error.hpp"

namespace vidrep {

double compression_ratio(std::size_t sub_len, unsigned bits) {
  require(bits >= 1, ErrorKind::Parameter, "compression_ratio: bits must be >= 1");
  return static_cast<double>(sub_len) * 32.0 / bits;
}

std::size_t packed_code_bytes(std::size_t subspaces, unsigned bits) { return (subspaces * bits + 7) / 8; }

namespace {

void check_bits(unsigned bits) {
  require(bits >= 1 && bits <= 16, ErrorKind::Parameter, "pq: bits must be in [1, 16], got " + std::to_string(bits));
}

void check_code(std::span<const std::uint16_t> code, std::size_t subspaces, std::size_t codewords) {
  require(code.size() == subspaces, ErrorKind::Shape,
          "pq: code length " + std::to_string(code.size()) + " != " + std::to_string(subspaces));
  for (std::size_t s = 0; s < code.size(); ++s) {
    if (code[s] >= codewords) {
      fail(ErrorKind::Corruption, "pq: index " + std::to_string(code[s]) + " at sub-space " + std::to_string(s) +
                                      " exceeds " + std::to_string(codewords - 1));
    }
  }
}

}  // namespace

PqModel fit_pq(const DescriptorSet& train, const PqFitOptions& options) {
  check_bits(options.bits);
  require(options.sub_len >= 1, ErrorKind::Parameter, "fit_pq: sub-vector length must be >= 1");
  require(train.dim % options.sub_len == 0, ErrorKind::Parameter,
          "fit_pq: dim " + std::to_string(train.dim) + " is not divisible by sub-vector length " +
              std::to_string(options.sub_len));
  PqModel model;
  model.dim = train.dim;
  model.sub_len = options.sub_len;
  model.bits = options.bits;
  const std::size_t k = model.codewords();
  require(train.n_items >= k, ErrorKind::InsufficientData,
          "fit_pq: " + std::to_string(train.n_items) + " rows for " + std::to_string(k) + " centers");

  const std::size_t subspaces = model.subspaces();
  model.centers.reserve(subspaces * k * model.sub_len);
  DescriptorSet slice(train.n_items, model.sub_len);
  for (std::size_t s = 0; s < subspaces; ++s) {
    for (std::size_t i = 0; i < train.n_items; ++i) {
      const auto row = train.row(i).subspan(s * model.sub_len, model.sub_len);
      std::copy(row.begin(), row.end(), slice.row(i).begin());
    }
    KMeansOptions km;
    km.k = k;
    km.seed = options.seed + s;
    km.max_iter = options.max_iter;
    const Codebook cb = fit_kmeans(slice, km);
    model.centers.insert(model.centers.end(), cb.centers.begin(), cb.centers.end());
  }
  return model;
}

PqCode pq_encode(const PqModel& model, std::span<const float> x) {
  require(x.size() == model.dim, ErrorKind::Shape,
          "pq_encode: length " + std::to_string(x.size()) + " != " + std::to_string(model.dim));
  for (float v : x) require(std::isfinite(v), ErrorKind::Data, "pq_encode: non-finite input");
  const std::size_t subspaces = model.subspaces();
  const std::size_t k = model.codewords();
  PqCode code(subspaces);
  for (std::size_t s = 0; s < subspaces; ++s) {
    const auto slice = x.subspan(s * model.sub_len, model.sub_len);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      const double d = squared_distance(slice, model.center(s, j));
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    code[s] = static_cast<std::uint16_t>(best);
  }
  return code;
}

std::vector<float> pq_decode(const PqModel& model, std::span<const std::uint16_t> code) {
  check_code(code, model.subspaces(), model.codewords());
  std::vector<float> out;
  out.reserve(model.dim);
  for (std::size_t s = 0; s < code.size(); ++s) {
    const auto c = model.center(s, code[s]);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

ScoreLut build_lut(const PqModel& model, std::span<const float> w, double bias) {
  require(w.size() == model.dim, ErrorKind::Shape,
          "build_lut: weight length " + std::to_string(w.size()) + " != " + std::to_string(model.dim));
  for (float v : w) require(std::isfinite(v), ErrorKind::Data, "build_lut: non-finite weight");
  ScoreLut lut;
  lut.subspaces = model.subspaces();
  lut.codewords = model.codewords();
  lut.bias = bias;
  lut.table.resize(lut.subspaces * lut.codewords);
  for (std::size_t s = 0; s < lut.subspaces; ++s) {
    const auto ws = w.subspan(s * model.sub_len, model.sub_len);
    for (std::size_t j = 0; j < lut.codewords; ++j) {
      const auto c = model.center(s, j);
      double dot = 0.0;
      for (std::size_t d = 0; d < model.sub_len; ++d) dot += static_cast<double>(c[d]) * ws[d];
      lut.table[s * lut.codewords + j] = dot;
    }
  }
  return lut;
}

double score_compressed(const ScoreLut& lut, std::span<const std::uint16_t> code) {
  check_code(code, lut.subspaces, lut.codewords);
  double score = lut.bias;
  for (std::size_t s = 0; s < code.size(); ++s) score += lut.table[s * lut.codewords + code[s]];
  return score;
}

// ---- code sets -------------------------------------------------------------

void PqCodeSet::append(std::string id, std::span<const std::uint16_t> code) {
  require(code.size() == subspaces, ErrorKind::Shape, "PqCodeSet: code length mismatch");
  ids.push_back(std::move(id));
  indices.insert(indices.end(), code.begin(), code.end());
}

std::string pack_code(std::span<const std::uint16_t> code, unsigned bits) {
  check_bits(bits);
  std::string out(packed_code_bytes(code.size(), bits), '\0');
  std::size_t bit = 0;
  for (std::uint16_t index : code) {
    require(index < (1u << bits), ErrorKind::Data, "pack_code: index does not fit in the bit width");
    for (unsigned b = 0; b < bits; ++b, ++bit) {
      if ((index >> b) & 1u) out[bit / 8] = static_cast<char>(out[bit / 8] | (1u << (bit % 8)));
    }
  }
  return out;
}

PqCode unpack_code(std::string_view bytes, std::size_t subspaces, unsigned bits) {
  check_bits(bits);
  require(bytes.size() == packed_code_bytes(subspaces, bits), ErrorKind::Corruption, "unpack_code: wrong record size");
  PqCode code(subspaces, 0);
  std::size_t bit = 0;
  for (std::size_t s = 0; s < subspaces; ++s) {
    unsigned value = 0;
    for (unsigned b = 0; b < bits; ++b, ++bit) {
      if ((static_cast<unsigned char>(bytes[bit / 8]) >> (bit % 8)) & 1u) value |= 1u << b;
    }
    code[s] = static_cast<std::uint16_t>(value);
  }
  return code;
}

void write_pq_codes(const std::filesystem::path& path, const PqCodeSet& codes) {
  check_bits(codes.bits);
  require(codes.indices.size() == codes.size() * codes.subspaces, ErrorKind::Shape, "write_pq_codes: length mismatch");
  std::string out = "VPQC";
  io::put_u32(out, io::kFormatVersion);
  io::put_u32(out, static_cast<std::uint32_t>(codes.size()));
  io::put_u32(out, static_cast<std::uint32_t>(codes.subspaces));
  io::put_u32(out, codes.bits);
  for (std::size_t i = 0; i < codes.size(); ++i) out += pack_code(codes.code(i), codes.bits);
  for (const auto& id : codes.ids) {
    io::put_u32(out, static_cast<std::uint32_t>(id.size()));
    out += id;
  }
  io::write_file_atomic(path, out);
}

PqCodeSet read_pq_codes(const std::filesystem::path& path, const io::ReadOptions& options) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() < 4 || bytes.compare(0, 4, "VPQC") != 0) {
    fail(ErrorKind::Format, path.string() + ": bad magic (expected VPQC)");
  }
  if (bytes.size() < 20) fail(ErrorKind::Corruption, path.string() + ": truncated header");
  if (io::get_u32(bytes, 4) != io::kFormatVersion) fail(ErrorKind::Format, path.string() + ": unsupported version");
  PqCodeSet codes;
  const std::size_t n = io::get_u32(bytes, 8);
  codes.subspaces = io::get_u32(bytes, 12);
  const std::uint32_t bits = io::get_u32(bytes, 16);
  if (bits < 1 || bits > 16) fail(ErrorKind::Format, path.string() + ": bits out of range");
  codes.bits = bits;
  const std::size_t record = packed_code_bytes(codes.subspaces, codes.bits);
  const std::uint64_t payload = static_cast<std::uint64_t>(n) * record;
  if (payload > options.max_payload_bytes) fail(ErrorKind::Format, path.string() + ": declared payload exceeds cap");
  if (20 + payload > bytes.size()) fail(ErrorKind::Corruption, path.string() + ": truncated code payload");

  codes.indices.reserve(n * codes.subspaces);
  std::size_t offset = 20;
  for (std::size_t i = 0; i < n; ++i, offset += record) {
    const auto code = unpack_code(std::string_view(bytes).substr(offset, record), codes.subspaces, codes.bits);
    codes.indices.insert(codes.indices.end(), code.begin(), code.end());
  }
  codes.ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (offset + 4 > bytes.size()) fail(ErrorKind::Corruption, path.string() + ": truncated id table");
    const std::size_t len = io::get_u32(bytes, offset);
    offset += 4;
    if (offset + len > bytes.size()) fail(ErrorKind::Corruption, path.string() + ": truncated id table");
    codes.ids.emplace_back(bytes.substr(offset, len));
    offset += len;
  }
  if (offset != bytes.size()) fail(ErrorKind::Corruption, path.string() + ": trailing bytes after id table");
  return codes;
}

// ---- batch scoring ---------------------------------------------------------

BatchCodes::BatchCodes(std::size_t n_videos, std::size_t subspaces, unsigned bits)
    : n_(n_videos), subspaces_(subspaces), bits_(bits) {
  check_bits(bits);
  if (bits <= 8) {
    narrow_.assign(n_videos * subspaces, 0);
  } else {
    wide_.assign(n_videos * subspaces, 0);
  }
}

BatchCodes::BatchCodes(const PqCodeSet& codes) : BatchCodes(codes.size(), codes.subspaces, codes.bits) {
  for (std::size_t i = 0; i < codes.size(); ++i) set_video(i, codes.code(i));
}

std::size_t BatchCodes::slot(std::size_t video, std::size_t subspace) const {
  const std::size_t tile_start = video / kTile * kTile;
  const std::size_t tile_len = std::min(kTile, n_ - tile_start);
  return tile_start * subspaces_ + subspace * tile_len + (video - tile_start);
}

void BatchCodes::set_video(std::size_t video, std::span<const std::uint16_t> code) {
  require(video < n_ && code.size() == subspaces_, ErrorKind::Shape, "BatchCodes::set_video: out of range");
  const std::uint16_t limit = static_cast<std::uint16_t>((1u << bits_) - 1);
  for (auto index : code) require(index <= limit, ErrorKind::Data, "BatchCodes::set_video: index does not fit in the bit width");
  const std::size_t tile_start = video / kTile * kTile;
  const std::size_t tile_len = std::min(kTile, n_ - tile_start);
  const std::size_t first = tile_start * subspaces_ + (video - tile_start);
  for (std::size_t s = 0; s < subspaces_; ++s) {
    if (bits_ <= 8) {
      narrow_[first + s * tile_len] = static_cast<std::uint8_t>(code[s]);
    } else {
      wide_[first + s * tile_len] = code[s];
    }
  }
}

void BatchCodes::set(std::size_t video, std::size_t subspace, std::uint16_t index) {
  require(video < n_ && subspace < subspaces_, ErrorKind::Shape, "BatchCodes::set: out of range");
  require(index < (1u << bits_), ErrorKind::Data, "BatchCodes::set: index does not fit in the bit width");
  if (bits_ <= 8) {
    narrow_[slot(video, subspace)] = static_cast<std::uint8_t>(index);
  } else {
    wide_[slot(video, subspace)] = index;
  }
}

namespace {

// Adds one sub-space's table entries to the per-video partial sums of a
// tile; `first` starts a new run instead of adding.
template <typename Index>
void sweep_scalar(const float* row, const Index* c, std::size_t len, float* partial, bool first) {
  if (first) {
    for (std::size_t v = 0; v < len; ++v) partial[v] = row[c[v]];
  } else {
    for (std::size_t v = 0; v < len; ++v) partial[v] += row[c[v]];
  }
}

using NarrowSweep = void (*)(const float*, const std::uint8_t*, std::size_t, float*, bool);

#ifdef VIDREP_X86_DISPATCH
// The 256-entry row lives in 16 registers; each lane picks its entry with
// 32-way permutes and a 3-level blend on index bits 5..7.
__attribute__((target("avx512f"))) void sweep_avx512(const float* row, const std::uint8_t* c, std::size_t len,
                                                      float* partial, bool first) {
  __m512 t[16];
  for (int i = 0; i < 16; ++i) t[i] = _mm512_loadu_ps(row + 16 * i);
  const __m512i bit5 = _mm512_set1_epi32(32), bit6 = _mm512_set1_epi32(64), bit7 = _mm512_set1_epi32(128);
  std::size_t v = 0;
  for (; v + 16 <= len; v += 16) {
    const __m512i idx = _mm512_cvtepu8_epi32(_mm_loadu_si128(reinterpret_cast<const __m128i*>(c + v)));
    __m512 q0 = _mm512_permutex2var_ps(t[0], idx, t[1]);
    __m512 q1 = _mm512_permutex2var_ps(t[2], idx, t[3]);
    __m512 q2 = _mm512_permutex2var_ps(t[4], idx, t[5]);
    __m512 q3 = _mm512_permutex2var_ps(t[6], idx, t[7]);
    __m512 q4 = _mm512_permutex2var_ps(t[8], idx, t[9]);
    __m512 q5 = _mm512_permutex2var_ps(t[10], idx, t[11]);
    __m512 q6 = _mm512_permutex2var_ps(t[12], idx, t[13]);
    __m512 q7 = _mm512_permutex2var_ps(t[14], idx, t[15]);
    const __mmask16 m5 = _mm512_test_epi32_mask(idx, bit5);
    const __mmask16 m6 = _mm512_test_epi32_mask(idx, bit6);
    const __mmask16 m7 = _mm512_test_epi32_mask(idx, bit7);
    q0 = _mm512_mask_blend_ps(m5, q0, q1);
    q2 = _mm512_mask_blend_ps(m5, q2, q3);
    q4 = _mm512_mask_blend_ps(m5, q4, q5);
    q6 = _mm512_mask_blend_ps(m5, q6, q7);
    q0 = _mm512_mask_blend_ps(m6, q0, q2);
    q4 = _mm512_mask_blend_ps(m6, q4, q6);
    q0 = _mm512_mask_blend_ps(m7, q0, q4);
    if (!first) q0 = _mm512_add_ps(_mm512_loadu_ps(partial + v), q0);
    _mm512_storeu_ps(partial + v, q0);
  }
  sweep_scalar(row, c + v, len - v, partial + v, first);
}
#endif

NarrowSweep narrow_sweep() {
#ifdef VIDREP_X86_DISPATCH
  if (__builtin_cpu_supports("avx512f")) return sweep_avx512;
#endif
  return sweep_scalar<std::uint8_t>;
}

template <typename Index>
void score_tiles(const ScoreLut& lut, const Index* codes, std::size_t n, std::size_t subspaces, std::span<double> out) {
  constexpr std::size_t G = BatchCodes::kGroup;
  constexpr bool narrow = std::is_same_v<Index, std::uint8_t>;
  const std::size_t stride = narrow ? 256 : lut.codewords;
  std::vector<float> table(subspaces * stride, 0.0f);
  for (std::size_t s = 0; s < subspaces; ++s) {
    for (std::size_t j = 0; j < lut.codewords; ++j) {
      table[s * stride + j] = static_cast<float>(lut.table[s * lut.codewords + j]);
    }
  }
  NarrowSweep fast = nullptr;
  if constexpr (narrow) fast = narrow_sweep();
  std::vector<float> partial(std::min(n, BatchCodes::kTile));
  for (std::size_t start = 0; start < n; start += BatchCodes::kTile) {
    const std::size_t len = std::min(BatchCodes::kTile, n - start);
    double* acc = out.data() + start;
    std::fill(acc, acc + len, lut.bias);
    const Index* tile = codes + start * subspaces;
    for (std::size_t s0 = 0; s0 < subspaces; s0 += G) {
      const std::size_t s1 = std::min(subspaces, s0 + G);
      for (std::size_t s = s0; s < s1; ++s) {
        const float* row = table.data() + s * stride;
        const Index* c = tile + s * len;
        if constexpr (narrow) {
          fast(row, c, len, partial.data(), s == s0);
        } else {
          sweep_scalar(row, c, len, partial.data(), s == s0);
        }
      }
      for (std::size_t v = 0; v < len; ++v) acc[v] += static_cast<double>(partial[v]);
    }
  }
}

}  // namespace

void score_compressed_batch(const ScoreLut& lut, const BatchCodes& codes, std::span<double> out,
                            LookupCounter* counter) {
  require(out.size() == codes.size(), ErrorKind::Shape, "score_compressed_batch: output size mismatch");
  require(lut.subspaces == codes.subspaces() && lut.codewords == (std::size_t{1} << codes.bits()), ErrorKind::Shape,
          "score_compressed_batch: LUT and codes disagree on layout");
  if (codes.bits() <= 8) {
    score_tiles(lut, codes.narrow_.data(), codes.size(), codes.subspaces(), out);
  } else {
    score_tiles(lut, codes.wide_.data(), codes.size(), codes.subspaces(), out);
  }
  if (counter) counter->lookups += static_cast<std::uint64_t>(codes.size()) * codes.subspaces();
}

// ---- persistence -----------------------------------------------------------

io::ModelFile to_model_file(const PqModel& model) {
  io::ModelFile file;
  file.kind = "pq";
  file.params = {{"dim", model.dim}, {"sub_len", model.sub_len}, {"bits", model.bits}};
  file.blocks.push_back({"centers", {model.subspaces(), model.codewords(), model.sub_len}, model.centers});
  return file;
}

PqModel pq_from_model(const io::ModelFile& file) {
  require(file.kind == "pq", ErrorKind::Format, "expected a pq model, got '" + file.kind + "'");
  io::validate_model(file);
  PqModel model;
  try {
    model.dim = file.params.at("dim").get<std::size_t>();
    model.sub_len = file.params.at("sub_len").get<std::size_t>();
    model.bits = file.params.at("bits").get<unsigned>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("pq model params: ") + e.what());
  }
  require(model.bits >= 1 && model.bits <= 16 && model.sub_len >= 1 && model.dim % model.sub_len == 0,
          ErrorKind::Format, "pq model params out of range");
  require(file.block("centers").shape ==
              std::vector<std::size_t>{model.subspaces(), model.codewords(), model.sub_len},
          ErrorKind::Format, "pq centers shape disagrees with params");
  model.centers = file.block("centers").data;
  return model;
}

}  // namespace vidrep
