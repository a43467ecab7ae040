#include <cstring>
#include <fstream>
#include <limits>

#include "test_util.hpp"
#include "vidrep/io.hpp"

using namespace vidrep;
using testutil::error_kind;

namespace {

std::string header(const char* magic, std::initializer_list<std::uint32_t> fields) {
  std::string out(magic, 4);
  for (auto f : fields) io::put_u32(out, f);
  return out;
}

void write_raw(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("descriptor header decodes") {
    testutil::TempDir dir;
    std::string bytes = header("VDSC", {1, 2, 3});
    for (int i = 0; i < 6; ++i) io::put_f32(bytes, static_cast<float>(i) * 0.5f);
    write_raw(dir / "a.vdsc", bytes);
    const auto set = io::read_descriptors(dir / "a.vdsc");
    CHECK(set.n_items == 2);
    CHECK(set.dim == 3);
    CHECK(set.row(1)[2] == 2.5f);
    io::write_descriptors(dir / "b.vdsc", set);
    CHECK(io::read_file(dir / "b.vdsc") == bytes);
  }

  TEST_CASE("descriptor round trip is bit exact") {
    testutil::TempDir dir;
    Rng rng(3);
    for (std::size_t n : {0u, 1u, 17u}) {
      auto set = testutil::gaussian_set(rng, n, 5, 1e3);
      if (n > 0) set.data[0] = -0.0f;
      io::write_descriptors(dir / "x.vdsc", set);
      const auto back = io::read_descriptors(dir / "x.vdsc");
      REQUIRE(back.data.size() == set.data.size());
      CHECK(std::memcmp(back.data.data(), set.data.data(), set.data.size() * sizeof(float)) == 0);
      CHECK(back.n_items == n);
    }
  }

  TEST_CASE("little endian layout") {
    std::string out;
    io::put_u32(out, 0x01020304u);
    CHECK(static_cast<unsigned char>(out[0]) == 0x04);
    CHECK(static_cast<unsigned char>(out[3]) == 0x01);
    io::put_f32(out, 1.0f);
    CHECK(io::get_f32(out, 4) == 1.0f);
    CHECK(static_cast<unsigned char>(out[7]) == 0x3f);
    CHECK(io::get_u32(out, 0) == 0x01020304u);
  }

  TEST_CASE("descriptor read errors") {
    testutil::TempDir dir;
    write_raw(dir / "magic", header("VDSX", {1, 1, 1}) + std::string(4, '\0'));
    CHECK(error_kind([&] { io::read_descriptors(dir / "magic"); }) == ErrorKind::Format);
    write_raw(dir / "version", header("VDSC", {2, 1, 1}) + std::string(4, '\0'));
    CHECK(error_kind([&] { io::read_descriptors(dir / "version"); }) == ErrorKind::Format);
    write_raw(dir / "short", header("VDSC", {1, 2, 2}) + std::string(12, '\0'));
    CHECK(error_kind([&] { io::read_descriptors(dir / "short"); }) == ErrorKind::Corruption);
    write_raw(dir / "header", std::string("VDSC\1\0", 6));
    CHECK(error_kind([&] { io::read_descriptors(dir / "header"); }) == ErrorKind::Corruption);
    CHECK(error_kind([&] { io::read_descriptors(dir / "missing"); }) == ErrorKind::Io);

    std::string nan = header("VDSC", {1, 1, 3});
    io::put_f32(nan, 1.0f);
    io::put_f32(nan, std::numeric_limits<float>::quiet_NaN());
    io::put_f32(nan, 1.0f);
    write_raw(dir / "nan", nan);
    try {
      io::read_descriptors(dir / "nan");
      FAIL("expected data error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Data);
      CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
  }

  TEST_CASE("declared payload above the cap is rejected before reading") {
    testutil::TempDir dir;
    write_raw(dir / "big", header("VDSC", {1, 0xffffffffu, 0xffffffffu}));
    CHECK(error_kind([&] { io::read_descriptors(dir / "big"); }) == ErrorKind::Format);
    write_raw(dir / "small", header("VDSC", {1, 4, 4}) + std::string(64, '\0'));
    io::ReadOptions tight;
    tight.max_payload_bytes = 32;
    CHECK(error_kind([&] { io::read_descriptors(dir / "small", tight); }) == ErrorKind::Format);
    CHECK(io::read_descriptors(dir / "small").n_items == 4);
  }

  TEST_CASE("pool5 addressing and round trip") {
    testutil::TempDir dir;
    std::string bytes = header("VP5T", {1, 1, 2, 3});
    for (int i = 0; i < 12; ++i) io::put_f32(bytes, static_cast<float>(i));
    write_raw(dir / "p.vp5t", bytes);
    const auto t = io::read_pool5(dir / "p.vp5t");
    CHECK(t.n_frames == 1);
    CHECK(t.side == 2);
    CHECK(t.channels == 3);
    CHECK(t.offset(0, 1, 0, 2) == 8);
    CHECK(t.at(0, 1, 0, 2) == 8.0f);
    io::write_pool5(dir / "q.vp5t", t);
    CHECK(io::read_file(dir / "q.vp5t") == bytes);

    Pool5Tensor ref(2, 7, 512);
    Rng rng(1);
    for (auto& v : ref.data) v = static_cast<float>(rng.uniform());
    CHECK(ref.frame_size() == 25088);
    io::write_pool5(dir / "r.vp5t", ref);
    CHECK(io::read_pool5(dir / "r.vp5t") == ref);
  }

  TEST_CASE("model file layout and round trip") {
    testutil::TempDir dir;
    io::ModelFile m;
    m.kind = "pca";
    m.params = {{"input_dim", 4}, {"output_dim", 2}, {"whiten", false}, {"eps", 1e-8}};
    m.blocks.push_back({"mean", {4}, {1, 2, 3, 4}});
    m.blocks.push_back({"projection", {4, 2}, {1, 0, 0, 1, 0, 0, 0, 0}});
    m.blocks.push_back({"eigenvalues", {2}, {2, 1}});
    io::write_model(dir / "m.vmdl", m);
    const std::string bytes = io::read_file(dir / "m.vmdl");
    CHECK(bytes.substr(0, 4) == "VMDL");
    CHECK(io::get_u32(bytes, 4) == 1);
    const std::uint32_t header_len = io::get_u32(bytes, 8);
    CHECK(bytes.size() == 12 + header_len + 14 * 4);
    const auto json = nlohmann::json::parse(bytes.substr(12, header_len));
    CHECK(json["kind"] == "pca");
    CHECK(io::read_model(dir / "m.vmdl") == m);
    CHECK(io::read_model_kind(dir / "m.vmdl") == "pca");
    io::write_model(dir / "n.vmdl", io::read_model(dir / "m.vmdl"));
    CHECK(io::read_file(dir / "n.vmdl") == bytes);
  }

  TEST_CASE("model schema errors") {
    io::ModelFile gmm;
    gmm.kind = "gmm";
    gmm.params = {{"dim", 1}};
    gmm.blocks = {{"means", {1, 1}, {0}}, {"variances", {1, 1}, {1}}, {"priors", {1}, {1}}};
    CHECK(error_kind([&] { io::validate_model(gmm); }) == ErrorKind::Format);
    gmm.params["K"] = 1;
    CHECK_NOTHROW(io::validate_model(gmm));
    gmm.blocks[0].shape = {2, 1};
    CHECK(error_kind([&] { io::validate_model(gmm); }) == ErrorKind::Format);
    io::ModelFile odd;
    odd.kind = "svm";
    CHECK(error_kind([&] { io::validate_model(odd); }) == ErrorKind::Format);
  }

  TEST_CASE("labels and scores csv") {
    testutil::TempDir dir;
    std::vector<io::LabelRow> labels{{"a", 1}, {"b", 0}};
    io::write_labels(dir / "l.csv", labels);
    CHECK(io::read_file(dir / "l.csv") == "video_id,label\na,1\nb,0\n");
    CHECK(io::read_labels(dir / "l.csv") == labels);
    std::vector<io::ScoreRow> scores{{"a", 0.25f}, {"b", -1.5e-7f}};
    io::write_scores(dir / "s.csv", scores);
    CHECK(io::read_scores(dir / "s.csv") == scores);

    write_raw(dir / "dup.csv", "video_id,label\na,1\na,0\n");
    CHECK(error_kind([&] { io::read_labels(dir / "dup.csv"); }) == ErrorKind::Data);
    write_raw(dir / "bad.csv", "video_id,label\na,2\n");
    CHECK(error_kind([&] { io::read_labels(dir / "bad.csv"); }) == ErrorKind::Format);
    write_raw(dir / "inf.csv", "video_id,score\na,inf\n");
    CHECK(error_kind([&] { io::read_scores(dir / "inf.csv"); }) == ErrorKind::Data);
    write_raw(dir / "hdr.csv", "id,score\na,1\n");
    CHECK(error_kind([&] { io::read_scores(dir / "hdr.csv"); }) == ErrorKind::Format);
  }

  TEST_CASE("atomic write leaves no temp files") {
    testutil::TempDir dir;
    io::write_file_atomic(dir / "f", "one");
    io::write_file_atomic(dir / "f", "two");
    CHECK(io::read_file(dir / "f") == "two");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
    CHECK(entries == 1);
  }
}
