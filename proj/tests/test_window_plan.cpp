#include <vector>

#include "doctest.h"
#include "testutil.hpp"
#include "window_plan.hpp"

using namespace mswa;
using testutil::contains;
using testutil::error_code;
using testutil::error_message;

TEST_CASE("strategy names round-trip and parse leniently") {
  for (Strategy s : {Strategy::Uniform, Strategy::MswaH, Strategy::MswaL,
                     Strategy::Mswa, Strategy::MswaReversedLayers,
                     Strategy::MswaArithmetic}) {
    auto back = strategy_from_name(strategy_name(s));
    REQUIRE(back.has_value());
    CHECK(*back == s);
  }
  CHECK(strategy_from_name("MSWA_Reversed_Layers") ==
        Strategy::MswaReversedLayers);
  CHECK(strategy_from_name("Uniform") == Strategy::Uniform);
  CHECK(strategy_from_name("MSWA-H") == Strategy::MswaH);
  CHECK_FALSE(strategy_from_name("mwsa").has_value());
  CHECK_FALSE(strategy_from_name("").has_value());
}

TEST_CASE("the geometric both-axes plan reproduces the reference matrix") {
  WindowPlan p = build_plan(Strategy::Mswa, 4, 4, 16);
  const std::vector<std::vector<int64_t>> want = {
      {1, 2, 4, 8}, {2, 4, 8, 16}, {4, 8, 16, 32}, {8, 16, 32, 64}};
  for (int i = 0; i < 4; ++i) CHECK(p.row(i) == want[i]);

  Budget b = total_budget(p);
  CHECK(b.total_windows == 225);
  CHECK(b.ratio_to_uniform == Rational::of(225, 256));

  // Symbolic form w * 2^(a+b-4) for larger grouped shapes.
  for (int64_t layers : {4, 8}) {
    for (int64_t heads : {4, 12}) {
      for (int64_t w : {16, 64, 1024}) {
        WindowPlan q = build_plan(Strategy::Mswa, layers, heads, w);
        for (int64_t i = 0; i < layers; ++i) {
          for (int64_t j = 0; j < heads; ++j) {
            const int64_t a = i / (layers / 4);
            const int64_t b2 = j / (heads / 4);
            const int64_t shift = a + b2;  // of 0..6
            const int64_t want_w =
                shift >= 4 ? w << (shift - 4) : w >> (4 - shift);
            CHECK(q.window(i, j) == want_w);
          }
        }
      }
    }
  }
}

TEST_CASE("head-only and layer-only ladders") {
  WindowPlan ph = build_plan(Strategy::MswaH, 4, 4, 16);
  for (int i = 0; i < 4; ++i)
    CHECK(ph.row(i) == std::vector<int64_t>{4, 8, 16, 32});
  Budget bh = total_budget(ph);
  CHECK(bh.total_windows == 240);
  CHECK(bh.ratio_to_uniform == Rational::of(15, 16));

  WindowPlan pl = build_plan(Strategy::MswaL, 4, 4, 16);
  const int64_t col[4] = {4, 8, 16, 32};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(pl.window(i, j) == col[i]);
  CHECK(total_budget(pl).ratio_to_uniform == Rational::of(15, 16));

  // layers flat for mswa-h: any layer count works, heads must group
  WindowPlan ph2 = build_plan(Strategy::MswaH, 3, 8, 16);
  CHECK(ph2.row(2) == std::vector<int64_t>{4, 4, 8, 8, 16, 16, 32, 32});
  WindowPlan pl2 = build_plan(Strategy::MswaL, 8, 3, 16);
  CHECK(pl2.window(0, 2) == 4);
  CHECK(pl2.window(7, 0) == 32);
}

TEST_CASE("reversed-layer and arithmetic ladders") {
  WindowPlan pr = build_plan(Strategy::MswaReversedLayers, 4, 4, 16);
  CHECK(pr.row(0) == std::vector<int64_t>{8, 16, 32, 64});
  CHECK(pr.row(3) == std::vector<int64_t>{1, 2, 4, 8});
  CHECK(total_budget(pr).total_windows == 225);  // reordering keeps the sum

  WindowPlan pa = build_plan(Strategy::MswaArithmetic, 4, 4, 128);
  CHECK(pa.row(0) == std::vector<int64_t>{32, 48, 64, 80});
  CHECK(pa.row(3) == std::vector<int64_t>{80, 120, 160, 200});
  CHECK(total_budget(pa).ratio_to_uniform == Rational::of(49, 64));
}

TEST_CASE("uniform plans have no divisibility demands") {
  WindowPlan p = build_plan(Strategy::Uniform, 3, 5, 7);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 5; ++j) CHECK(p.window(i, j) == 7);
  Budget b = total_budget(p);
  CHECK(b.total_windows == 105);
  CHECK(b.ratio_to_uniform == Rational::of(1, 1));
}

TEST_CASE("plan validation failures name the offending parameter") {
  auto msg = error_message([] { build_plan(Strategy::Mswa, 4, 4, 10); });
  CHECK(contains(msg, "base_window"));
  CHECK(contains(msg, "16"));
  CHECK(error_code([] { build_plan(Strategy::Mswa, 4, 4, 10); }) ==
        static_cast<int>(ErrorCode::Plan));

  CHECK(contains(error_message([] { build_plan(Strategy::Mswa, 6, 4, 16); }),
                 "layers"));
  CHECK(contains(error_message([] { build_plan(Strategy::MswaH, 4, 6, 16); }),
                 "heads"));
  // mswa-h subdivides only across heads: base_window modulus is 4
  CHECK(build_plan(Strategy::MswaH, 4, 4, 12).window(0, 0) == 3);
  CHECK(contains(error_message([] { build_plan(Strategy::MswaH, 4, 4, 2); }),
                 "4"));
  CHECK(error_code([] { build_plan(Strategy::Uniform, 0, 4, 16); }) ==
        static_cast<int>(ErrorCode::Plan));
  CHECK(error_code([] { build_plan(Strategy::Uniform, 4, 4, 0); }) ==
        static_cast<int>(ErrorCode::Plan));
}

TEST_CASE("relative cost is the exact budget ratio") {
  WindowPlan uniform512 = build_plan(Strategy::Uniform, 4, 4, 512);
  WindowPlan mswa128 = build_plan(Strategy::Mswa, 4, 4, 128);
  CHECK(relative_cost(uniform512, mswa128) ==
        doctest::Approx(8192.0 / 1800.0).epsilon(1e-12));
  CHECK(relative_cost(mswa128, mswa128) == doctest::Approx(1.0));

  WindowPlan other = build_plan(Strategy::Uniform, 8, 4, 512);
  CHECK(error_code([&] { relative_cost(other, mswa128); }) ==
        static_cast<int>(ErrorCode::InvalidArgument));
}

TEST_CASE("plan text format round-trips and rejects tampering") {
  WindowPlan p = build_plan(Strategy::MswaArithmetic, 8, 4, 64);
  std::string text = format_plan(p);
  CHECK(contains(text, "8 4 64 mswa-arithmetic"));
  WindowPlan q = parse_plan(text);
  CHECK(q.sizes == p.sizes);
  CHECK(q.strategy == p.strategy);
  CHECK(format_plan(q) == text);

  // Any edited window no longer matches the strategy's matrix.
  std::string bad = text;
  const auto pos = bad.rfind("40");
  if (pos != std::string::npos) bad.replace(pos, 2, "41");
  CHECK(error_code([&] { parse_plan(bad); }) ==
        static_cast<int>(ErrorCode::Plan));

  CHECK(error_code([] { parse_plan("definitely not a plan"); }) ==
        static_cast<int>(ErrorCode::Plan));
  CHECK(error_code([&] { parse_plan(text + "trailing"); }) ==
        static_cast<int>(ErrorCode::Plan));
}

TEST_CASE("budgets are exact for random valid shapes") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t layers = 4 * (1 + rng.uniform_below(4));
    const int64_t heads = 4 * (1 + rng.uniform_below(4));
    const int64_t w = 16 * (1 + rng.uniform_below(64));
    CHECK(total_budget(build_plan(Strategy::Mswa, layers, heads, w))
              .ratio_to_uniform == Rational::of(225, 256));
    CHECK(total_budget(build_plan(Strategy::MswaH, layers, heads, w))
              .ratio_to_uniform == Rational::of(15, 16));
    CHECK(total_budget(build_plan(Strategy::MswaL, layers, heads, w))
              .ratio_to_uniform == Rational::of(15, 16));
    CHECK(total_budget(build_plan(Strategy::MswaReversedLayers, layers, heads, w))
              .ratio_to_uniform == Rational::of(225, 256));
    CHECK(total_budget(build_plan(Strategy::MswaArithmetic, layers, heads, w))
              .ratio_to_uniform == Rational::of(49, 64));
  }
}

TEST_CASE("every window in a valid plan is at least one") {
  for (Strategy s : {Strategy::MswaH, Strategy::MswaL, Strategy::Mswa,
                     Strategy::MswaReversedLayers, Strategy::MswaArithmetic}) {
    WindowPlan p = build_plan(s, 8, 8, 16);
    for (int64_t w : p.sizes) CHECK(w >= 1);
  }
}
