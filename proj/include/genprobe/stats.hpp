#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genprobe/error.hpp"

namespace genprobe::stats {

struct RankVector {
  std::vector<double> ranks;  // 1-based, ties averaged
  std::size_t n = 0;
};

// Ascending ranks; a run of tied values shares the mean of the ranks it spans.
inline RankVector rank_average_ties(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "cannot rank non-finite value");
  }
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  RankVector out{std::vector<double>(n), n};
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    // ranks i+1 .. j, mean (i + 1 + j) / 2
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) out.ranks[order[k]] = rank;
    i = j;
  }
  return out;
}

// Spearman's rho as the Pearson correlation of tie-averaged ranks. Ranks are
// multiples of 1/2, so the moment sums below are exact in double for any
// realistic n, which makes the result independent of input order.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "spearman inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw Error(ErrorCode::InvalidArgument, "spearman needs at least 3 samples");
  const auto rx = rank_average_ties(x);
  const auto ry = rank_average_ties(y);

  const double nd = static_cast<double>(n);
  const double mean_sq_total = nd * (nd + 1.0) * (nd + 1.0) / 4.0;  // n * mean_rank^2
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += rx.ranks[i] * ry.ranks[i];
    sxx += rx.ranks[i] * rx.ranks[i];
    syy += ry.ranks[i] * ry.ranks[i];
  }
  const double cov = sxy - mean_sq_total;
  const double var_x = sxx - mean_sq_total;
  const double var_y = syy - mean_sq_total;
  if (var_x <= 0.0 || var_y <= 0.0) throw Error(ErrorCode::ConstantInput, "correlation undefined for constant input");
  return std::clamp(cov / std::sqrt(var_x * var_y), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Grouped correlation engine.

enum class Target { TestAccuracy, GeneralizationGap };

inline std::string_view target_name(Target t) noexcept {
  return t == Target::TestAccuracy ? "test_accuracy" : "generalization_gap";
}

inline Target parse_target(std::string_view text) {
  if (text == "test_accuracy") return Target::TestAccuracy;
  if (text == "generalization_gap") return Target::GeneralizationGap;
  throw Error(ErrorCode::InvalidArgument, "unknown target '" + std::string(text) + "'");
}

// One (model, epoch) observation as seen by the correlation engine.
struct Observation {
  std::map<std::string, std::string> keys;  // candidate grouping fields
  std::map<std::string, double> metrics;    // metric_id -> model-level value
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;

  double target(Target t) const {
    return t == Target::TestAccuracy ? test_accuracy : train_accuracy - test_accuracy;
  }
};

using GroupKey = std::vector<std::pair<std::string, std::string>>;

struct CorrelationCell {
  GroupKey group_key;  // in group_by order
  std::string metric_id;
  Target target = Target::TestAccuracy;
  double rho = 0.0;
  std::size_t n = 0;
};

struct SkipWarning {
  GroupKey group_key;
  std::string metric_id;
  Target target = Target::TestAccuracy;
  std::string reason;
};

struct GroupedResult {
  std::vector<CorrelationCell> cells;
  std::vector<SkipWarning> warnings;
};

inline constexpr std::size_t kMinGroupSize = 3;

// Orders group values numerically when both parse as numbers (so epoch 2
// precedes epoch 10), otherwise by plain string comparison.
inline bool key_value_less(std::string_view a, std::string_view b) {
  double da = 0.0, db = 0.0;
  const auto ra = std::from_chars(a.data(), a.data() + a.size(), da);
  const auto rb = std::from_chars(b.data(), b.data() + b.size(), db);
  const bool na = ra.ec == std::errc() && ra.ptr == a.data() + a.size() && !a.empty();
  const bool nb = rb.ec == std::errc() && rb.ptr == b.data() + b.size() && !b.empty();
  if (na && nb && da != db) return da < db;
  return a < b;
}

struct GroupKeyLess {
  bool operator()(const GroupKey& a, const GroupKey& b) const {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (key_value_less(a[i].second, b[i].second)) return true;
      if (key_value_less(b[i].second, a[i].second)) return false;
    }
    return a.size() < b.size();
  }
};

inline std::string describe(const GroupKey& key) {
  if (key.empty()) return "(all)";
  std::string out;
  for (const auto& [k, v] : key) {
    if (!out.empty()) out += ",";
    out += k + "=" + v;
  }
  return out;
}

// Spearman correlation of each metric with each target inside each group.
// Groups with fewer than three records or constant columns are reported as
// warnings instead of cells. Output is ordered by group key, then metric id,
// then target name.
inline GroupedResult grouped_correlations(std::span<const Observation> records,
                                          std::span<const std::string> group_by,
                                          std::span<const std::string> metric_ids,
                                          std::span<const Target> targets) {
  std::map<GroupKey, std::vector<const Observation*>, GroupKeyLess> groups;
  for (const auto& r : records) {
    GroupKey key;
    for (const auto& field : group_by) {
      auto it = r.keys.find(field);
      if (it == r.keys.end()) throw Error(ErrorCode::InvalidArgument, "record lacks group key '" + field + "'");
      key.emplace_back(field, it->second);
    }
    groups[std::move(key)].push_back(&r);
  }

  std::vector<std::string> sorted_metrics(metric_ids.begin(), metric_ids.end());
  std::sort(sorted_metrics.begin(), sorted_metrics.end());
  sorted_metrics.erase(std::unique(sorted_metrics.begin(), sorted_metrics.end()), sorted_metrics.end());
  std::vector<Target> sorted_targets(targets.begin(), targets.end());
  std::sort(sorted_targets.begin(), sorted_targets.end(),
            [](Target a, Target b) { return target_name(a) < target_name(b); });
  sorted_targets.erase(std::unique(sorted_targets.begin(), sorted_targets.end()), sorted_targets.end());

  GroupedResult out;
  for (const auto& [key, members] : groups) {
    for (const auto& metric : sorted_metrics) {
      std::vector<double> xs;
      xs.reserve(members.size());
      for (const auto* r : members) {
        auto it = r->metrics.find(metric);
        if (it == r->metrics.end()) throw Error(ErrorCode::InvalidArgument, "record lacks metric '" + metric + "'");
        xs.push_back(it->second);
      }
      for (Target target : sorted_targets) {
        if (members.size() < kMinGroupSize) {
          out.warnings.push_back({key, metric, target, "fewer than 3 records"});
          continue;
        }
        std::vector<double> ys;
        ys.reserve(members.size());
        for (const auto* r : members) ys.push_back(r->target(target));
        try {
          out.cells.push_back({key, metric, target, spearman(xs, ys), members.size()});
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ConstantInput) throw;
          out.warnings.push_back({key, metric, target, "constant column"});
        }
      }
    }
  }
  return out;
}

}  // namespace genprobe::stats
