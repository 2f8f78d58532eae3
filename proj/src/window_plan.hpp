#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rational.hpp"

namespace mswa {

// How window sizes vary across layers and heads. All multi-scale strategies
// partition the layers and/or heads into four equal groups and assign one
// multiplier per group.
enum class Strategy {
  Uniform,             // every head of every layer uses the base window
  MswaH,               // heads vary x{1/4, 1/2, 1, 2}, layers flat
  MswaL,               // layers vary x{1/4, 1/2, 1, 2}, heads flat
  Mswa,                // both vary; w(i,j) = w * 2^(a+b-4)
  MswaReversedLayers,  // layer ladder descends {2, 1, 1/2, 1/4}, heads ascend
  MswaArithmetic,      // both vary over {1/2, 3/4, 1, 5/4}
};

const char* strategy_name(Strategy s);
// Accepts canonical names case-insensitively, with '_' treated as '-'.
std::optional<Strategy> strategy_from_name(std::string_view name);

struct WindowPlan {
  Strategy strategy = Strategy::Uniform;
  int64_t layers = 0;
  int64_t heads = 0;
  int64_t base_window = 0;
  std::vector<int64_t> sizes;  // layers x heads, row-major, all >= 1

  int64_t window(int64_t layer, int64_t head) const {
    return sizes[layer * heads + head];
  }
  std::vector<int64_t> row(int64_t layer) const {
    return std::vector<int64_t>(sizes.begin() + layer * heads,
                                sizes.begin() + (layer + 1) * heads);
  }
};

struct Budget {
  long long total_windows = 0;  // sum of all per-head windows
  Rational ratio_to_uniform;    // total / (layers * heads * base_window)
};

// Builds the per-layer, per-head window matrix for a strategy. Fails with a
// plan error when the strategy's divisibility requirements are not met
// (layers/heads multiples of 4 where groups are formed; base_window a
// multiple of 4 or 16 depending on how finely multipliers subdivide it).
WindowPlan build_plan(Strategy strategy, int64_t layers, int64_t heads,
                      int64_t base_window);

Budget total_budget(const WindowPlan& plan);

// Ratio of total window budgets, plan / reference. Both plans must agree on
// layer and head counts, otherwise the comparison is meaningless.
double relative_cost(const WindowPlan& plan, const WindowPlan& reference);

// Text form: one header line "layers heads base_window strategy" followed by
// one line of per-head windows per layer. parse_plan is the strict inverse
// and re-validates the matrix against the named strategy.
std::string format_plan(const WindowPlan& plan);
WindowPlan parse_plan(const std::string& text);

}  // namespace mswa
