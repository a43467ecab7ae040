#include "oracles.hpp"
#include "test_util.hpp"
#include "vidrep/lcd.hpp"

using namespace vidrep;
using testutil::error_kind;

namespace {

std::vector<float> random_frame(Rng& rng, std::size_t a, std::size_t m) {
  std::vector<float> f(a * a * m);
  for (auto& v : f) v = static_cast<float>(rng.uniform(-1, 1));
  return f;
}

}  // namespace

TEST_SUITE("lcd") {
  TEST_CASE("extract slices locations") {
    std::vector<float> f(12);
    std::iota(f.begin(), f.end(), 0.0f);
    const auto x = extract_lcd(f, 2, 3);
    CHECK(x.n_items == 4);
    CHECK(x.dim == 3);
    CHECK(std::vector<float>(x.row(0).begin(), x.row(0).end()) == std::vector<float>{0, 1, 2});
    CHECK(x.row(3)[2] == 11.0f);
    std::vector<float> c(7 * 7 * 512, 0.5f);
    const auto big = extract_lcd(c, 7, 512);
    CHECK(big.n_items == 49);
    CHECK(big.dim == 512);
    for (float v : big.data) CHECK(v == 0.5f);
  }

  TEST_CASE("default pyramid on 7x7") {
    SppConfig cfg;
    CHECK(cfg.locations() == 50);
    CHECK_NOTHROW(cfg.validate(7));
    for (std::size_t n : cfg.levels) CHECK(SppConfig::stride(7, n) * (n - 1) + SppConfig::window(7, n) <= 7);
    Rng rng(31);
    const auto f = random_frame(rng, 7, 4);
    const auto rows = spp_lcd(f, 7, 4, cfg);
    CHECK(rows.n_items == 50);
    const auto ref = oracle::spp(f, 7, 4, cfg.levels);
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t m = 0; m < 4; ++m) CHECK(rows.row(i)[m] == ref[i][m]);
  }

  TEST_CASE("global level is the channelwise max") {
    Rng rng(32);
    for (std::size_t a : {1u, 3u, 5u}) {
      const auto f = random_frame(rng, a, 6);
      const auto plain = extract_lcd(f, a, 6);
      const auto top = spp_lcd(f, a, 6, SppConfig{{1}});
      REQUIRE(top.n_items == 1);
      for (std::size_t m = 0; m < 6; ++m) {
        float best = plain.row(0)[m];
        for (std::size_t i = 1; i < plain.n_items; ++i) best = std::max(best, plain.row(i)[m]);
        CHECK(top.row(0)[m] == best);
      }
    }
  }

  TEST_CASE("invalid levels") {
    CHECK(error_kind([] { SppConfig{{8}}.validate(7); }) == ErrorKind::Parameter);
    CHECK(error_kind([] { SppConfig{{0}}.validate(7); }) == ErrorKind::Parameter);
    std::vector<float> f(4 * 4 * 2, 1.0f);
    CHECK(error_kind([&] { spp_lcd(f, 4, 2, SppConfig{}); }) == ErrorKind::Parameter);
  }

  TEST_CASE("monotone and channel independent") {
    Rng rng(33);
    const SppConfig cfg;
    for (int t = 0; t < 20; ++t) {
      auto f = random_frame(rng, 7, 3);
      const auto before = spp_lcd(f, 7, 3, cfg);
      f[rng.index(f.size())] += static_cast<float>(rng.uniform(0.0, 2.0));
      const auto after = spp_lcd(f, 7, 3, cfg);
      for (std::size_t i = 0; i < before.data.size(); ++i) CHECK(after.data[i] >= before.data[i]);

      std::vector<float> swapped(f.size());
      const std::size_t perm[3] = {2, 0, 1};
      for (std::size_t loc = 0; loc < 49; ++loc)
        for (std::size_t m = 0; m < 3; ++m) swapped[loc * 3 + m] = f[loc * 3 + perm[m]];
      const auto base = spp_lcd(f, 7, 3, cfg), moved = spp_lcd(swapped, 7, 3, cfg);
      for (std::size_t i = 0; i < base.n_items; ++i)
        for (std::size_t m = 0; m < 3; ++m) CHECK(moved.row(i)[m] == base.row(i)[perm[m]]);
    }
  }

  TEST_CASE("video concatenates frames") {
    Rng rng(34);
    Pool5Tensor t(3, 7, 2);
    for (auto& v : t.data) v = static_cast<float>(rng.uniform());
    CHECK(lcd_video(t, std::nullopt).n_items == 147);
    const auto spp = lcd_video(t, SppConfig{});
    CHECK(spp.n_items == 150);
    const auto second = spp_lcd(t.frame(1), 7, 2, SppConfig{});
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t m = 0; m < 2; ++m) CHECK(spp.row(50 + i)[m] == second.row(i)[m]);
    Pool5Tensor one(1, 7, 2);
    one.data = std::vector<float>(t.data.begin(), t.data.begin() + 98);
    CHECK(lcd_video(one, SppConfig{}) == spp_lcd(one.frame(0), 7, 2, SppConfig{}));
    CHECK(error_kind([] { lcd_video(Pool5Tensor(0, 7, 2), std::nullopt); }) == ErrorKind::EmptyInput);
  }
}
