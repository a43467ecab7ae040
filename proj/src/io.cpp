#include "vidrep/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include "vidrep/error.hpp"

namespace vidrep {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::Data: return "data";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::EmptyInput: return "empty_input";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

DescriptorSet::DescriptorSet(std::size_t n, std::size_t d, std::vector<float> values)
    : n_items(n), dim(d), data(std::move(values)) {
  require(data.size() == n * d, ErrorKind::Shape,
          "descriptor data length " + std::to_string(data.size()) + " != " + std::to_string(n) + "x" +
              std::to_string(d));
}

void DescriptorSet::append_row(std::span<const float> values) {
  if (n_items == 0 && dim == 0) dim = values.size();
  require(values.size() == dim, ErrorKind::Shape,
          "row length " + std::to_string(values.size()) + " != dim " + std::to_string(dim));
  data.insert(data.end(), values.begin(), values.end());
  ++n_items;
}

}  // namespace vidrep

namespace vidrep::io {

namespace {

constexpr bool kHostLittle = std::endian::native == std::endian::little;

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

void append_floats(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  if constexpr (kHostLittle) {
    if (!values.empty()) std::memcpy(out.data() + start, values.data(), values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = byteswap32(std::bit_cast<std::uint32_t>(values[i]));
      std::memcpy(out.data() + start + 4 * i, &bits, 4);
    }
  }
}

void decode_floats(const char* src, std::size_t count, float* dst) {
  if (count == 0) return;
  std::memcpy(dst, src, count * 4);
  if constexpr (!kHostLittle) {
    for (std::size_t i = 0; i < count; ++i) {
      dst[i] = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(dst[i])));
    }
  }
}

void check_finite(std::span<const float> values, const std::string& what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorKind::Data, what + ": non-finite value at index " + std::to_string(i));
    }
  }
}

std::uintmax_t file_size_or_throw(const std::filesystem::path& path) {
  std::error_code ec;
  auto size = std::filesystem::file_size(path, ec);
  if (ec) fail(ErrorKind::Io, "cannot stat " + path.string() + ": " + ec.message());
  return size;
}

// Reads a fixed-size header of u32 fields after a 4-byte magic, then streams
// the float payload once its declared size has been validated.
struct RawFloatFile {
  std::vector<std::uint32_t> header;
  std::vector<float> payload;
};

RawFloatFile read_float_file(const std::filesystem::path& path, std::string_view magic, std::size_t n_fields,
                             const ReadOptions& options,
                             std::uint64_t (*payload_count)(const std::vector<std::uint32_t>&)) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  const std::uintmax_t actual = file_size_or_throw(path);

  const std::size_t header_bytes = 4 + 4 * n_fields;
  std::string head(header_bytes, '\0');
  in.read(head.data(), static_cast<std::streamsize>(header_bytes));
  if (static_cast<std::size_t>(in.gcount()) < 4 || head.compare(0, 4, magic) != 0) {
    fail(ErrorKind::Format, path.string() + ": bad magic (expected " + std::string(magic) + ")");
  }
  if (static_cast<std::size_t>(in.gcount()) != header_bytes) {
    fail(ErrorKind::Corruption, path.string() + ": truncated header");
  }
  RawFloatFile file;
  for (std::size_t i = 0; i < n_fields; ++i) file.header.push_back(get_u32(head, 4 + 4 * i));
  if (file.header[0] != kFormatVersion) {
    fail(ErrorKind::Format, path.string() + ": unsupported version " + std::to_string(file.header[0]));
  }
  const std::uint64_t count = payload_count(file.header);
  if (count > options.max_payload_bytes / 4) {
    fail(ErrorKind::Format, path.string() + ": declared payload of " + std::to_string(count) +
                                " floats exceeds the reader cap");
  }
  const std::uint64_t expected = header_bytes + 4 * count;
  if (actual != expected) {
    fail(ErrorKind::Corruption, path.string() + ": payload holds " + std::to_string(actual - header_bytes) +
                                    " bytes, header declares " + std::to_string(4 * count));
  }
  std::string raw(4 * count, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::uint64_t>(in.gcount()) != 4 * count) {
    fail(ErrorKind::Corruption, path.string() + ": short read");
  }
  file.payload.resize(count);
  decode_floats(raw.data(), count, file.payload.data());
  check_finite(file.payload, path.string());
  return file;
}

std::uint32_t checked_u32(std::size_t value, const char* what) {
  require(value <= 0xffffffffu, ErrorKind::Parameter, std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(value);
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

// Parses "id,value" CSV rows under the given header; calls sink(id, value, line).
template <typename Sink>
void parse_csv(const std::filesystem::path& path, std::string_view expected_header, Sink sink) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != expected_header) {
    fail(ErrorKind::Format, path.string() + ": expected header '" + std::string(expected_header) + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    if (comma == std::string::npos || row.find(',', comma + 1) != std::string::npos) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": expected two fields");
    }
    std::string id = trim(std::string_view(row).substr(0, comma));
    std::string value = trim(std::string_view(row).substr(comma + 1));
    if (id.empty()) fail(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": empty video_id");
    sink(std::move(id), value, line_no);
  }
}

void check_id_for_csv(const std::string& id) {
  require(!id.empty() && id.find_first_of(",\n\r") == std::string::npos, ErrorKind::Data,
          "video_id '" + id + "' is empty or contains a separator");
}

const std::map<std::string, std::vector<std::string>>& required_params() {
  static const std::map<std::string, std::vector<std::string>> table{
      {"pca", {"input_dim", "output_dim", "whiten", "eps"}},
      {"kmeans", {"K", "dim"}},
      {"gmm", {"K", "dim"}},
      {"pq", {"dim", "sub_len", "bits"}},
      {"linsvm", {"dim", "bias", "C"}},
      {"ksvm", {"kernel", "sigma", "A", "C", "bias", "dim"}},
  };
  return table;
}

const std::map<std::string, std::vector<std::string>>& required_blocks() {
  static const std::map<std::string, std::vector<std::string>> table{
      {"pca", {"mean", "projection", "eigenvalues"}},
      {"kmeans", {"centers"}},
      {"gmm", {"means", "variances", "priors"}},
      {"pq", {"centers"}},
      {"linsvm", {"w"}},
      {"ksvm", {"support_vectors", "dual_coefs"}},
  };
  return table;
}

std::uint64_t shape_product(const std::vector<std::size_t>& shape) {
  std::uint64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

}  // namespace

void put_u32(std::string& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, float value) { put_u32(out, std::bit_cast<std::uint32_t>(value)); }

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

float get_f32(std::string_view bytes, std::size_t offset) { return std::bit_cast<float>(get_u32(bytes, offset)); }

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      fail(ErrorKind::Io, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::Io, "cannot rename onto " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

// ---- descriptors -----------------------------------------------------------

DescriptorSet read_descriptors(const std::filesystem::path& path, const ReadOptions& options) {
  auto file = read_float_file(path, "VDSC", 3, options, [](const std::vector<std::uint32_t>& h) {
    if (h[2] == 0) fail(ErrorKind::Format, "descriptor dim must be >= 1");
    return static_cast<std::uint64_t>(h[1]) * h[2];
  });
  return DescriptorSet(file.header[1], file.header[2], std::move(file.payload));
}

void write_descriptors(const std::filesystem::path& path, const DescriptorSet& set) {
  require(set.dim >= 1, ErrorKind::Shape, "descriptor dim must be >= 1");
  require(set.data.size() == set.n_items * set.dim, ErrorKind::Shape, "descriptor data length mismatch");
  check_finite(set.data, "descriptor set");
  std::string out = "VDSC";
  out.reserve(16 + set.data.size() * 4);
  put_u32(out, kFormatVersion);
  put_u32(out, checked_u32(set.n_items, "n_items"));
  put_u32(out, checked_u32(set.dim, "dim"));
  append_floats(out, set.data);
  write_file_atomic(path, out);
}

// ---- pool5 tensors ---------------------------------------------------------

Pool5Tensor read_pool5(const std::filesystem::path& path, const ReadOptions& options) {
  auto file = read_float_file(path, "VP5T", 4, options, [](const std::vector<std::uint32_t>& h) {
    if (h[2] == 0 || h[3] == 0) fail(ErrorKind::Format, "pool5 side and channel count must be >= 1");
    return static_cast<std::uint64_t>(h[1]) * h[2] * h[2] * h[3];
  });
  Pool5Tensor t;
  t.n_frames = file.header[1];
  t.side = file.header[2];
  t.channels = file.header[3];
  t.data = std::move(file.payload);
  return t;
}

void write_pool5(const std::filesystem::path& path, const Pool5Tensor& tensor) {
  require(tensor.side >= 1 && tensor.channels >= 1, ErrorKind::Shape, "pool5 side and channels must be >= 1");
  require(tensor.data.size() == tensor.n_frames * tensor.frame_size(), ErrorKind::Shape,
          "pool5 data length mismatch");
  check_finite(tensor.data, "pool5 tensor");
  std::string out = "VP5T";
  put_u32(out, kFormatVersion);
  put_u32(out, checked_u32(tensor.n_frames, "n_frames"));
  put_u32(out, checked_u32(tensor.side, "side"));
  put_u32(out, checked_u32(tensor.channels, "channels"));
  append_floats(out, tensor.data);
  write_file_atomic(path, out);
}

// ---- models ----------------------------------------------------------------

const ModelBlock& ModelFile::block(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  fail(ErrorKind::Format, "model '" + kind + "' has no block '" + std::string(name) + "'");
}

void validate_model(const ModelFile& model) {
  const auto& params = required_params();
  auto it = params.find(model.kind);
  if (it == params.end()) fail(ErrorKind::Format, "unknown model kind '" + model.kind + "'");
  if (!model.params.is_object()) fail(ErrorKind::Format, "model params must be a JSON object");
  for (const auto& key : it->second) {
    if (!model.params.contains(key)) {
      fail(ErrorKind::Format, "model kind '" + model.kind + "' missing required field '" + key + "'");
    }
  }
  std::set<std::string> names;
  for (const auto& b : model.blocks) {
    if (!names.insert(b.name).second) fail(ErrorKind::Format, "duplicate block '" + b.name + "'");
    if (shape_product(b.shape) != b.data.size()) {
      fail(ErrorKind::Format, "block '" + b.name + "' declares " + std::to_string(shape_product(b.shape)) +
                                  " values but holds " + std::to_string(b.data.size()));
    }
  }
  for (const auto& name : required_blocks().at(model.kind)) {
    if (!names.count(name)) fail(ErrorKind::Format, "model kind '" + model.kind + "' missing block '" + name + "'");
  }
}

namespace {

nlohmann::json model_header(const ModelFile& model) {
  nlohmann::json header;
  header["kind"] = model.kind;
  header["params"] = model.params;
  header["blocks"] = nlohmann::json::array();
  for (const auto& b : model.blocks) header["blocks"].push_back({{"name", b.name}, {"shape", b.shape}});
  return header;
}

}  // namespace

void write_model(const std::filesystem::path& path, const ModelFile& model) {
  validate_model(model);
  for (const auto& b : model.blocks) check_finite(b.data, "model block '" + b.name + "'");
  const std::string header = model_header(model).dump();
  std::string out = "VMDL";
  put_u32(out, kFormatVersion);
  put_u32(out, checked_u32(header.size(), "header length"));
  out += header;
  for (const auto& b : model.blocks) append_floats(out, b.data);
  write_file_atomic(path, out);
}

namespace {

nlohmann::json parse_model_header(const std::string& bytes, const std::filesystem::path& path,
                                  std::size_t& payload_offset) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "VMDL") != 0) {
    fail(ErrorKind::Format, path.string() + ": bad magic (expected VMDL)");
  }
  if (bytes.size() < 12) fail(ErrorKind::Corruption, path.string() + ": truncated header");
  if (get_u32(bytes, 4) != kFormatVersion) fail(ErrorKind::Format, path.string() + ": unsupported version");
  const std::uint64_t header_len = get_u32(bytes, 8);
  if (12 + header_len > bytes.size()) fail(ErrorKind::Corruption, path.string() + ": truncated JSON header");
  payload_offset = 12 + header_len;
  try {
    return nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + static_cast<std::ptrdiff_t>(payload_offset));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": malformed JSON header: " + e.what());
  }
}

}  // namespace

ModelFile read_model(const std::filesystem::path& path, const ReadOptions& options) {
  if (file_size_or_throw(path) > options.max_payload_bytes) {
    fail(ErrorKind::Format, path.string() + ": file exceeds the reader cap");
  }
  const std::string bytes = read_file(path);
  std::size_t offset = 0;
  const nlohmann::json header = parse_model_header(bytes, path, offset);

  ModelFile model;
  try {
    model.kind = header.at("kind").get<std::string>();
    model.params = header.at("params");
    std::uint64_t total = 0;
    for (const auto& jb : header.at("blocks")) {
      ModelBlock b;
      b.name = jb.at("name").get<std::string>();
      b.shape = jb.at("shape").get<std::vector<std::size_t>>();
      total += shape_product(b.shape);
      if (total > options.max_payload_bytes / 4) fail(ErrorKind::Format, path.string() + ": declared blocks exceed cap");
      model.blocks.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": bad model header: " + e.what());
  }

  std::uint64_t needed = 0;
  for (const auto& b : model.blocks) needed += 4 * shape_product(b.shape);
  if (bytes.size() - offset != needed) {
    fail(ErrorKind::Corruption, path.string() + ": payload holds " + std::to_string(bytes.size() - offset) +
                                    " bytes, header declares " + std::to_string(needed));
  }
  for (auto& b : model.blocks) {
    const std::size_t count = shape_product(b.shape);
    b.data.resize(count);
    decode_floats(bytes.data() + offset, count, b.data.data());
    check_finite(b.data, path.string() + " block '" + b.name + "'");
    offset += 4 * count;
  }
  validate_model(model);
  return model;
}

std::string read_model_kind(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t offset = 0;
  const nlohmann::json header = parse_model_header(bytes, path, offset);
  if (!header.contains("kind") || !header["kind"].is_string()) fail(ErrorKind::Format, path.string() + ": no kind");
  return header["kind"].get<std::string>();
}

// ---- CSV -------------------------------------------------------------------

std::vector<LabelRow> read_labels(const std::filesystem::path& path) {
  std::vector<LabelRow> rows;
  std::set<std::string> seen;
  parse_csv(path, "video_id,label", [&](std::string id, const std::string& value, std::size_t line) {
    if (value != "0" && value != "1") {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(line) + ": label must be 0 or 1");
    }
    if (!seen.insert(id).second) fail(ErrorKind::Data, path.string() + ": duplicate video_id '" + id + "'");
    rows.push_back({std::move(id), value == "1" ? 1 : 0});
  });
  return rows;
}

void write_labels(const std::filesystem::path& path, const std::vector<LabelRow>& rows) {
  std::string out = "video_id,label\n";
  std::set<std::string> seen;
  for (const auto& r : rows) {
    check_id_for_csv(r.video_id);
    require(r.label == 0 || r.label == 1, ErrorKind::Data, "label must be 0 or 1");
    require(seen.insert(r.video_id).second, ErrorKind::Data, "duplicate video_id '" + r.video_id + "'");
    out += r.video_id;
    out += r.label ? ",1\n" : ",0\n";
  }
  write_file_atomic(path, out);
}

std::vector<ScoreRow> read_scores(const std::filesystem::path& path) {
  std::vector<ScoreRow> rows;
  std::set<std::string> seen;
  parse_csv(path, "video_id,score", [&](std::string id, const std::string& value, std::size_t line) {
    float score = 0.0f;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), score);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(line) + ": bad score '" + value + "'");
    }
    if (!std::isfinite(score)) fail(ErrorKind::Data, path.string() + ":" + std::to_string(line) + ": non-finite score");
    if (!seen.insert(id).second) fail(ErrorKind::Data, path.string() + ": duplicate video_id '" + id + "'");
    rows.push_back({std::move(id), score});
  });
  return rows;
}

void write_scores(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  std::string out = "video_id,score\n";
  std::set<std::string> seen;
  char buf[64];
  for (const auto& r : rows) {
    check_id_for_csv(r.video_id);
    require(std::isfinite(r.score), ErrorKind::Data, "non-finite score for '" + r.video_id + "'");
    require(seen.insert(r.video_id).second, ErrorKind::Data, "duplicate video_id '" + r.video_id + "'");
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), r.score);
    out += r.video_id;
    out += ',';
    out.append(buf, ptr);
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace vidrep::io
