#pragma once

// Ranking metrics, label-frequency bins and per-category reports.

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmxc/scorer.hpp"

namespace mmxc {

struct Ranked {
  std::uint32_t label = 0;
  double score = 0.0;

  friend bool operator==(const Ranked&, const Ranked&) = default;
};

/// Best first; labels unique.
using Ranking = std::vector<Ranked>;

inline Ranking to_ranking(std::span<const ScoreTriple> scored) {
  Ranking r;
  r.reserve(scored.size());
  for (const auto& t : scored) r.push_back({t.label, t.s});
  return r;
}

/// Sorted positive label ids of each evaluated point.
using PositiveSets = std::vector<std::vector<std::uint32_t>>;

namespace detail {

inline void require_k(std::size_t k) {
  if (k == 0) throw std::invalid_argument("metrics: k must be >= 1");
}

inline void require_aligned(std::size_t preds, std::size_t gt) {
  if (preds != gt) throw std::invalid_argument("metrics: prediction and ground-truth counts differ");
}

inline bool contains(const std::vector<std::uint32_t>& sorted, std::uint32_t l) {
  return std::binary_search(sorted.begin(), sorted.end(), l);
}

inline std::size_t hits_at(const Ranking& r, const std::vector<std::uint32_t>& pos, std::size_t k) {
  std::size_t h = 0;
  for (std::size_t i = 0; i < r.size() && i < k; ++i) h += contains(pos, r[i].label) ? 1 : 0;
  return h;
}

}  // namespace detail

/// Mean of |top-k ∩ positives| / k. Short lists count as padded with misses.
inline double precision_at_k(std::span<const Ranking> preds, const PositiveSets& pos, std::size_t k) {
  detail::require_k(k);
  detail::require_aligned(preds.size(), pos.size());
  if (preds.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    sum += static_cast<double>(detail::hits_at(preds[i], pos[i], k)) / static_cast<double>(k);
  return sum / static_cast<double>(preds.size());
}

/// Binary-relevance nDCG@k averaged over points with at least one positive.
inline double ndcg_at_k(std::span<const Ranking> preds, const PositiveSets& pos, std::size_t k) {
  detail::require_k(k);
  detail::require_aligned(preds.size(), pos.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (pos[i].empty()) continue;
    double dcg = 0.0;
    for (std::size_t r = 0; r < preds[i].size() && r < k; ++r)
      if (detail::contains(pos[i], preds[i][r].label)) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    double ideal = 0.0;
    for (std::size_t r = 0; r < std::min(k, pos[i].size()); ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    sum += dcg / ideal;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Mean of |top-k ∩ positives| / |positives| over points with a positive.
inline double recall_at_k(std::span<const Ranking> preds, const PositiveSets& pos, std::size_t k) {
  detail::require_k(k);
  detail::require_aligned(preds.size(), pos.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (pos[i].empty()) continue;
    sum += static_cast<double>(detail::hits_at(preds[i], pos[i], k)) / static_cast<double>(pos[i].size());
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Pairwise ranking AUC over all `num_labels` labels, averaged over points.
/// Unranked labels score -inf; ties count one half. Points without both a
/// positive and a negative are skipped.
inline double auc(std::span<const Ranking> preds, const PositiveSets& pos, std::size_t num_labels) {
  detail::require_aligned(preds.size(), pos.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::size_t np = pos[i].size();
    if (np == 0 || np >= num_labels) continue;
    const std::size_t nn = num_labels - np;
    std::vector<double> ranked_neg;
    std::vector<double> ranked_pos;
    for (const auto& e : preds[i]) (detail::contains(pos[i], e.label) ? ranked_pos : ranked_neg).push_back(e.score);
    std::sort(ranked_neg.begin(), ranked_neg.end());
    const std::size_t unranked_neg = nn - ranked_neg.size();
    const std::size_t unranked_pos = np - ranked_pos.size();
    double wins = 0.0;
    for (double s : ranked_pos) {
      const auto lo = std::lower_bound(ranked_neg.begin(), ranked_neg.end(), s);
      const auto hi = std::upper_bound(ranked_neg.begin(), ranked_neg.end(), s);
      wins += static_cast<double>(unranked_neg) + static_cast<double>(lo - ranked_neg.begin()) +
              0.5 * static_cast<double>(hi - lo);
    }
    wins += 0.5 * static_cast<double>(unranked_pos) * static_cast<double>(unranked_neg);
    sum += wins / (static_cast<double>(np) * static_cast<double>(nn));
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// frequency bins

/// Labels split into bins of increasing training frequency with near-equal
/// positive-pair mass.
struct BinPartition {
  std::vector<std::size_t> bin_of_label;
  std::vector<double> mass;  // positive pairs per bin

  std::size_t bins() const noexcept { return mass.size(); }
};

/// Labels sorted by ascending frequency (ties by id) go to the bin holding the
/// midpoint of their slice of the cumulative mass.
inline BinPartition equal_mass_bins(std::span<const std::size_t> label_frequency, std::size_t bins = 5) {
  if (bins == 0) throw std::invalid_argument("equal_mass_bins: need at least one bin");
  const std::size_t L = label_frequency.size();
  std::vector<std::uint32_t> order(L);
  for (std::size_t l = 0; l < L; ++l) order[l] = static_cast<std::uint32_t>(l);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return label_frequency[a] < label_frequency[b]; });
  double total = 0.0;
  for (auto f : label_frequency) total += static_cast<double>(f);
  BinPartition p{std::vector<std::size_t>(L, 0), std::vector<double>(bins, 0.0)};
  double cum = 0.0;
  for (auto l : order) {
    const double m = static_cast<double>(label_frequency[l]);
    const double mid = total > 0.0 ? (cum + 0.5 * m) / total : 0.0;
    const std::size_t b = std::min(bins - 1, static_cast<std::size_t>(mid * static_cast<double>(bins)));
    p.bin_of_label[l] = b;
    p.mass[b] += m;
    cum += m;
  }
  return p;
}

/// Training positives per label.
inline std::vector<std::size_t> label_frequency(const PositiveSets& train_pos, std::size_t num_labels) {
  std::vector<std::size_t> f(num_labels, 0);
  for (const auto& p : train_pos)
    for (auto l : p) ++f.at(l);
  return f;
}

/// Share of R@k earned by positives in each bin. Each point's hits are
/// weighted by 1/|positives| so the shares add up to recall_at_k.
inline std::vector<double> bin_decomposition(std::span<const Ranking> preds, const PositiveSets& pos,
                                             const BinPartition& bins, std::size_t k) {
  detail::require_k(k);
  detail::require_aligned(preds.size(), pos.size());
  std::vector<double> out(bins.bins(), 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (pos[i].empty()) continue;
    ++n;
    const double w = 1.0 / static_cast<double>(pos[i].size());
    for (std::size_t r = 0; r < preds[i].size() && r < k; ++r) {
      const auto l = preds[i][r].label;
      if (detail::contains(pos[i], l)) out[bins.bin_of_label.at(l)] += w;
    }
  }
  if (n > 0)
    for (double& v : out) v /= static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// categories

struct CategoryRow {
  std::string category;
  std::size_t points = 0;  // points with a positive in the category
  double precision = 0.0;
};

/// P@k counting only positives of each category, averaged over the points
/// that have such a positive. Labels without a category count as "other";
/// categories no point touches are omitted.
inline std::vector<CategoryRow> category_report(std::span<const Ranking> preds, const PositiveSets& pos,
                                                const std::vector<std::string>& label_category, std::size_t k) {
  detail::require_k(k);
  detail::require_aligned(preds.size(), pos.size());
  auto cat = [&](std::uint32_t l) -> std::string {
    if (l >= label_category.size() || label_category[l].empty()) return "other";
    return label_category[l];
  };
  std::map<std::string, std::pair<std::size_t, double>> acc;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::map<std::string, std::size_t> hits;
    for (auto l : pos[i]) hits.try_emplace(cat(l), 0);
    for (std::size_t r = 0; r < preds[i].size() && r < k; ++r) {
      const auto l = preds[i][r].label;
      if (detail::contains(pos[i], l)) ++hits[cat(l)];
    }
    for (const auto& [c, h] : hits) {
      auto& a = acc[c];
      ++a.first;
      a.second += static_cast<double>(h) / static_cast<double>(k);
    }
  }
  std::vector<CategoryRow> rows;
  for (const auto& [c, a] : acc) rows.push_back({c, a.first, a.second / static_cast<double>(a.first)});
  return rows;
}

// ---------------------------------------------------------------------------
// reports

/// The standard metric set for one run.
struct MetricSummary {
  std::vector<std::pair<std::string, double>> values;

  double get(const std::string& name) const {
    for (const auto& [n, v] : values)
      if (n == name) return v;
    throw std::out_of_range("MetricSummary: no metric '" + name + "'");
  }
};

inline MetricSummary evaluate(std::span<const Ranking> preds, const PositiveSets& pos, std::size_t num_labels) {
  MetricSummary s;
  for (std::size_t k : {1, 3, 5}) s.values.emplace_back("P@" + std::to_string(k), precision_at_k(preds, pos, k));
  for (std::size_t k : {1, 3, 5}) s.values.emplace_back("N@" + std::to_string(k), ndcg_at_k(preds, pos, k));
  for (std::size_t k : {10, 100}) s.values.emplace_back("R@" + std::to_string(k), recall_at_k(preds, pos, k));
  s.values.emplace_back("AUC", auc(preds, pos, num_labels));
  return s;
}

/// Header line plus one tab-separated row per named summary.
inline void write_metric_table(std::ostream& os, const std::vector<std::pair<std::string, MetricSummary>>& rows) {
  if (rows.empty()) return;
  os << "run";
  for (const auto& [n, v] : rows.front().second.values) os << '\t' << n;
  os << '\n';
  for (const auto& [name, s] : rows) {
    os << name;
    for (const auto& [n, v] : s.values) os << '\t' << std::fixed << std::setprecision(4) << v;
    os << '\n';
  }
  os.unsetf(std::ios::floatfield);
}

/// `name: value` lines.
inline void write_summary(std::ostream& os, const MetricSummary& s) {
  for (const auto& [n, v] : s.values) os << n << ": " << std::fixed << std::setprecision(6) << v << '\n';
  os.unsetf(std::ios::floatfield);
}

/// Columnar series: bin, label count, pair mass, contribution.
inline void write_bin_series(std::ostream& os, const BinPartition& bins, std::span<const double> contribution) {
  std::vector<std::size_t> labels(bins.bins(), 0);
  for (auto b : bins.bin_of_label) ++labels[b];
  os << "bin\tlabels\tpair_mass\trecall_share\n";
  for (std::size_t b = 0; b < bins.bins(); ++b)
    os << b + 1 << '\t' << labels[b] << '\t' << bins.mass[b] << '\t' << contribution[b] << '\n';
}

inline void write_category_series(std::ostream& os, const std::vector<CategoryRow>& rows, std::size_t k) {
  os << "category\tpoints\tP@" << k << '\n';
  for (const auto& r : rows) os << r.category << '\t' << r.points << '\t' << r.precision << '\n';
}

}  // namespace mmxc
