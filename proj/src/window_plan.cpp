#include "window_plan.hpp"

#include <array>
#include <cctype>
#include <sstream>

#include "error.hpp"

namespace mswa {

namespace {

// Multiplier ladders expressed in quarters, so every per-head window is
// base_window * layer_q * head_q / 16 and integrality can be checked exactly.
constexpr std::array<int, 4> kFlat = {4, 4, 4, 4};
constexpr std::array<int, 4> kGeometric = {1, 2, 4, 8};
constexpr std::array<int, 4> kReversed = {8, 4, 2, 1};
constexpr std::array<int, 4> kArithmetic = {2, 3, 4, 5};

struct StrategySpec {
  std::array<int, 4> layer_q;
  std::array<int, 4> head_q;
  bool layers_grouped;  // layer count must split into 4 equal groups
  bool heads_grouped;
  int window_modulus;   // base_window divisibility needed for integral sizes
};

StrategySpec spec_for(Strategy s) {
  switch (s) {
    case Strategy::Uniform:
      return {kFlat, kFlat, false, false, 1};
    case Strategy::MswaH:
      return {kFlat, kGeometric, false, true, 4};
    case Strategy::MswaL:
      return {kGeometric, kFlat, true, false, 4};
    case Strategy::Mswa:
      return {kGeometric, kGeometric, true, true, 16};
    case Strategy::MswaReversedLayers:
      return {kReversed, kGeometric, true, true, 16};
    case Strategy::MswaArithmetic:
      return {kArithmetic, kArithmetic, true, true, 16};
  }
  fail(ErrorCode::Plan, "build_plan: unknown strategy");
}

std::string lower_dashed(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  for (char c : in) {
    if (c == '_') c = '-';
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Uniform: return "uniform";
    case Strategy::MswaH: return "mswa-h";
    case Strategy::MswaL: return "mswa-l";
    case Strategy::Mswa: return "mswa";
    case Strategy::MswaReversedLayers: return "mswa-reversed-layers";
    case Strategy::MswaArithmetic: return "mswa-arithmetic";
  }
  return "?";
}

std::optional<Strategy> strategy_from_name(std::string_view name) {
  const std::string n = lower_dashed(name);
  if (n == "uniform") return Strategy::Uniform;
  if (n == "mswa-h") return Strategy::MswaH;
  if (n == "mswa-l") return Strategy::MswaL;
  if (n == "mswa") return Strategy::Mswa;
  if (n == "mswa-reversed-layers") return Strategy::MswaReversedLayers;
  if (n == "mswa-arithmetic") return Strategy::MswaArithmetic;
  return std::nullopt;
}

WindowPlan build_plan(Strategy strategy, int64_t layers, int64_t heads,
                      int64_t base_window) {
  if (layers < 1) {
    fail(ErrorCode::Plan, "build_plan: layers must be >= 1 (got " +
                              std::to_string(layers) + ")");
  }
  if (heads < 1) {
    fail(ErrorCode::Plan,
         "build_plan: heads must be >= 1 (got " + std::to_string(heads) + ")");
  }
  if (base_window < 1) {
    fail(ErrorCode::Plan, "build_plan: base_window must be >= 1 (got " +
                              std::to_string(base_window) + ")");
  }
  const StrategySpec sp = spec_for(strategy);
  const std::string sname = strategy_name(strategy);
  if (sp.layers_grouped && layers % 4 != 0) {
    fail(ErrorCode::Plan, "build_plan: layers must be a multiple of 4 for strategy " +
                              sname + " (got " + std::to_string(layers) + ")");
  }
  if (sp.heads_grouped && heads % 4 != 0) {
    fail(ErrorCode::Plan, "build_plan: heads must be a multiple of 4 for strategy " +
                              sname + " (got " + std::to_string(heads) + ")");
  }
  if (base_window % sp.window_modulus != 0) {
    fail(ErrorCode::Plan, "build_plan: base_window must be a multiple of " +
                              std::to_string(sp.window_modulus) + " for strategy " +
                              sname + " (got " + std::to_string(base_window) + ")");
  }

  WindowPlan plan;
  plan.strategy = strategy;
  plan.layers = layers;
  plan.heads = heads;
  plan.base_window = base_window;
  plan.sizes.resize(layers * heads);

  const int64_t layer_group = sp.layers_grouped ? layers / 4 : layers;
  const int64_t head_group = sp.heads_grouped ? heads / 4 : heads;
  for (int64_t i = 0; i < layers; ++i) {
    const int a = static_cast<int>(i / layer_group);
    for (int64_t j = 0; j < heads; ++j) {
      const int b = static_cast<int>(j / head_group);
      const int64_t scaled = base_window * sp.layer_q[a] * sp.head_q[b];
      if (scaled % 16 != 0) {
        fail(ErrorCode::Plan, "build_plan: window for layer " + std::to_string(i) +
                                  " head " + std::to_string(j) +
                                  " is not an integer");
      }
      plan.sizes[i * heads + j] = scaled / 16;
    }
  }
  return plan;
}

Budget total_budget(const WindowPlan& plan) {
  long long total = 0;
  for (int64_t w : plan.sizes) total += w;
  Budget b;
  b.total_windows = total;
  b.ratio_to_uniform = Rational::of(
      total, static_cast<long long>(plan.layers) * plan.heads * plan.base_window);
  return b;
}

double relative_cost(const WindowPlan& plan, const WindowPlan& reference) {
  if (plan.layers != reference.layers || plan.heads != reference.heads) {
    fail(ErrorCode::InvalidArgument,
         "relative_cost: plans are not comparable: " + std::to_string(plan.layers) +
             "x" + std::to_string(plan.heads) + " heads vs " +
             std::to_string(reference.layers) + "x" + std::to_string(reference.heads));
  }
  const Budget a = total_budget(plan);
  const Budget b = total_budget(reference);
  return static_cast<double>(a.total_windows) / static_cast<double>(b.total_windows);
}

std::string format_plan(const WindowPlan& plan) {
  std::ostringstream out;
  out << plan.layers << ' ' << plan.heads << ' ' << plan.base_window << ' '
      << strategy_name(plan.strategy) << '\n';
  for (int64_t i = 0; i < plan.layers; ++i) {
    for (int64_t j = 0; j < plan.heads; ++j) {
      if (j) out << ' ';
      out << plan.window(i, j);
    }
    out << '\n';
  }
  return out.str();
}

WindowPlan parse_plan(const std::string& text) {
  std::istringstream in(text);
  int64_t layers = 0, heads = 0, base_window = 0;
  std::string name;
  if (!(in >> layers >> heads >> base_window >> name)) {
    fail(ErrorCode::Plan, "parse_plan: malformed header, expected 'layers heads base_window strategy'");
  }
  const auto strategy = strategy_from_name(name);
  if (!strategy) {
    fail(ErrorCode::Plan, "parse_plan: unknown strategy '" + name + "'");
  }
  WindowPlan plan = build_plan(*strategy, layers, heads, base_window);
  for (int64_t i = 0; i < layers * heads; ++i) {
    int64_t w = 0;
    if (!(in >> w)) {
      fail(ErrorCode::Plan, "parse_plan: expected " + std::to_string(layers * heads) +
                                " window entries, got " + std::to_string(i));
    }
    if (w != plan.sizes[i]) {
      fail(ErrorCode::Plan, "parse_plan: entry " + std::to_string(i) + " is " +
                                std::to_string(w) + " but strategy " + name +
                                " requires " + std::to_string(plan.sizes[i]));
    }
  }
  std::string extra;
  if (in >> extra) {
    fail(ErrorCode::Plan, "parse_plan: trailing data after window matrix");
  }
  return plan;
}

}  // namespace mswa
