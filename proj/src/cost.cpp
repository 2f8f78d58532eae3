#include "cost.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "error.hpp"

namespace mswa {

long long attended_pairs(int64_t n, int64_t window) {
  const long long w = window < 0 ? n - 1 : std::min<int64_t>(window, n - 1);
  // Rows 0..w attend to every predecessor and themselves; later rows see a
  // fixed w+1 keys.
  return (w + 1) * (w + 2) / 2 + (n - 1 - w) * (w + 1);
}

CostReport cost_report(const ModelConfig& config, int64_t seq_len) {
  config.validate();
  if (seq_len < 1) {
    fail(ErrorCode::InvalidArgument,
         "cost_report: seq_len must be >= 1 (got " + std::to_string(seq_len) + ")");
  }
  const auto pattern = config.resolved_pattern();
  const int64_t n_local =
      std::count(pattern.begin(), pattern.end(), LayerKind::Local);
  WindowPlan plan;
  if (n_local > 0) {
    plan = build_plan(config.strategy, n_local, config.heads, config.base_window);
  }

  const int64_t n = seq_len;
  const int64_t d = config.head_dim;
  const int64_t r = config.feature_dim;
  const long long f = 1 + r + r * r;

  CostReport rep;
  rep.config = config;
  rep.seq_len = seq_len;

  int64_t local_idx = 0;
  for (int64_t i = 0; i < config.layers; ++i) {
    LayerCostRow row;
    row.layer = i;
    row.kind = pattern[i];
    if (row.kind == LayerKind::Linear) {
      const long long per_token_feat = 4 * d * r + 2 * (r + 2 * r * r);
      const long long per_token_lin = 4 * f * d + 3 * f + d;
      row.feature_flops = config.heads * n * per_token_feat;
      row.linear_flops = config.heads * n * per_token_lin;
      row.state_scalars = config.heads * f * (d + 1);
    } else {
      row.windows.reserve(config.heads);
      for (int64_t j = 0; j < config.heads; ++j) {
        const int64_t w = row.kind == LayerKind::Full
                              ? n - 1
                              : plan.window(local_idx, j);
        row.windows.push_back(w);
        const long long pairs = attended_pairs(n, w);
        row.attended_pairs += pairs;
        row.attention_flops += 4 * d * pairs;
        row.softmax_flops += 4 * pairs;
        row.cache_rows += std::min<int64_t>(n, w);
      }
      if (row.kind == LayerKind::Local) ++local_idx;
    }
    rep.total_attended_pairs += row.attended_pairs;
    rep.total_attention_flops += row.attention_flops;
    rep.total_softmax_flops += row.softmax_flops;
    rep.total_feature_flops += row.feature_flops;
    rep.total_linear_flops += row.linear_flops;
    rep.total_cache_rows += row.cache_rows;
    rep.total_state_scalars += row.state_scalars;
    for (int64_t w : row.windows) rep.window_budget += w;
    rep.layers.push_back(std::move(row));
  }
  return rep;
}

double relative_cost(const CostReport& report, const CostReport& reference) {
  if (report.config.layers != reference.config.layers ||
      report.config.heads != reference.config.heads) {
    fail(ErrorCode::InvalidArgument,
         "relative_cost: reports are not comparable: " +
             std::to_string(report.config.layers) + " layers x " +
             std::to_string(report.config.heads) + " heads vs " +
             std::to_string(reference.config.layers) + " x " +
             std::to_string(reference.config.heads));
  }
  if (reference.window_budget <= 0) {
    fail(ErrorCode::InvalidArgument,
         "relative_cost: reference has no windowed attention budget");
  }
  return static_cast<double>(report.window_budget) /
         static_cast<double>(reference.window_budget);
}

namespace {

std::string windows_str(const std::vector<int64_t>& ws) {
  if (ws.empty()) return "-";
  std::string s;
  for (size_t i = 0; i < ws.size(); ++i) {
    if (i) s += ";";
    s += std::to_string(ws[i]);
  }
  return s;
}

}  // namespace

std::string format_cost_text(const CostReport& rep) {
  std::ostringstream out;
  out << "cost report: layers=" << rep.config.layers << " heads=" << rep.config.heads
      << " head_dim=" << rep.config.head_dim << " seq_len=" << rep.seq_len
      << " strategy=" << strategy_name(rep.config.strategy)
      << " base_window=" << rep.config.base_window << "\n";
  out << std::left << std::setw(6) << "layer" << std::setw(8) << "kind"
      << std::setw(28) << "windows" << std::right << std::setw(14) << "pairs"
      << std::setw(16) << "flops" << std::setw(12) << "cache_rows"
      << std::setw(14) << "state" << "\n";
  for (const auto& row : rep.layers) {
    const long long flops = row.attention_flops + row.softmax_flops +
                            row.feature_flops + row.linear_flops;
    out << std::left << std::setw(6) << row.layer << std::setw(8)
        << layer_kind_name(row.kind) << std::setw(28) << windows_str(row.windows)
        << std::right << std::setw(14) << row.attended_pairs << std::setw(16)
        << flops << std::setw(12) << row.cache_rows << std::setw(14)
        << row.state_scalars << "\n";
  }
  out << "totals: pairs=" << rep.total_attended_pairs
      << " attention_flops=" << rep.total_attention_flops
      << " softmax_flops=" << rep.total_softmax_flops
      << " feature_flops=" << rep.total_feature_flops
      << " linear_flops=" << rep.total_linear_flops
      << " flops=" << rep.total_flops() << "\n";
  out << "memory: cache_rows=" << rep.total_cache_rows
      << " state_scalars=" << rep.total_state_scalars
      << " cache_bytes_fp32=" << rep.cache_bytes(4)
      << " cache_bytes_fp64=" << rep.cache_bytes(8) << "\n";
  out << "window_budget=" << rep.window_budget << "\n";
  return out.str();
}

std::string format_cost_csv(const CostReport& rep) {
  std::ostringstream out;
  out << "layer,kind,windows,attended_pairs,attention_flops,softmax_flops,"
         "feature_flops,linear_flops,cache_rows,state_scalars\n";
  for (const auto& row : rep.layers) {
    out << row.layer << ',' << layer_kind_name(row.kind) << ','
        << windows_str(row.windows) << ',' << row.attended_pairs << ','
        << row.attention_flops << ',' << row.softmax_flops << ','
        << row.feature_flops << ',' << row.linear_flops << ',' << row.cache_rows
        << ',' << row.state_scalars << "\n";
  }
  out << "total,," << ',' << rep.total_attended_pairs << ','
      << rep.total_attention_flops << ',' << rep.total_softmax_flops << ','
      << rep.total_feature_flops << ',' << rep.total_linear_flops << ','
      << rep.total_cache_rows << ',' << rep.total_state_scalars << "\n";
  return out.str();
}

}  // namespace mswa
