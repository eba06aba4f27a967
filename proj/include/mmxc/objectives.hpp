#pragma once

// Hard positive / negative mining and the two training losses.

#include <numeric>
#include <unordered_set>

#include "mmxc/scorer.hpp"

namespace mmxc {

/// Sparse +1 relevance; every absent (point, label) pair is -1.
struct GroundTruth {
  std::size_t num_points = 0;
  std::size_t num_labels = 0;
  std::vector<std::vector<std::uint32_t>> positives;  // per point, sorted and unique

  GroundTruth() = default;
  GroundTruth(std::size_t points, std::size_t labels) : num_points(points), num_labels(labels), positives(points) {}

  bool is_positive(std::size_t point, std::uint32_t label) const {
    const auto& p = positives[point];
    return std::binary_search(p.begin(), p.end(), label);
  }

  /// Adds a pair; keeps the per-point list sorted.
  void add(std::size_t point, std::uint32_t label) {
    if (point >= num_points || label >= num_labels) throw std::out_of_range("GroundTruth::add: index out of range");
    auto& p = positives[point];
    auto it = std::lower_bound(p.begin(), p.end(), label);
    if (it == p.end() || *it != label) p.insert(it, label);
  }

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& p : positives) n += p.size();
    return n;
  }

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// For every label, the points (restricted to `include`) that are positive for it.
inline std::vector<std::vector<std::uint32_t>> label_positives(const GroundTruth& gt,
                                                               const std::vector<bool>& include) {
  std::vector<std::vector<std::uint32_t>> out(gt.num_labels);
  for (std::size_t i = 0; i < gt.num_points; ++i) {
    if (!include.empty() && !include[i]) continue;
    for (auto l : gt.positives[i]) out[l].push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

struct MiningConfig {
  double pos_threshold = 0.9;
  std::size_t p_size = 2;
  std::size_t n_size = 3;
  double margin1 = 0.2;
  std::size_t s_size = 2;
  std::size_t t_size = 12;
  double margin4 = 0.5;
  bool no_hard_pos = false;
  bool no_hard_neg = false;

  void validate() const {
    if (p_size == 0 || n_size == 0 || s_size == 0 || t_size == 0)
      throw std::invalid_argument("MiningConfig: set sizes must be >= 1");
    if (!(pos_threshold > 0.0 && pos_threshold <= 1.0))
      throw std::invalid_argument("MiningConfig: pos_threshold must be in (0, 1]");
    if (!(margin1 > 0.0 && margin4 > 0.0)) throw std::invalid_argument("MiningConfig: margins must be > 0");
  }
};

/// Uniform sample of min(k, |items|) items without replacement, in draw order.
template <class U>
std::vector<U> sample_without_replacement(std::vector<U> items, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, items.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(k);
  return items;
}

/// Picks P_l among a label's positives. `similarity[j]` is <z_l, x_j> for
/// `positives[j]` taken from the refreshed embedding cache.
inline std::vector<std::uint32_t> mine_hard_positives(std::span<const std::uint32_t> positives,
                                                      std::span<const double> similarity, const MiningConfig& cfg,
                                                      std::mt19937_64& rng) {
  if (positives.size() != similarity.size()) throw DimensionError("mine_hard_positives: length mismatch");
  if (positives.empty()) return {};
  std::vector<std::uint32_t> eligible;
  if (cfg.no_hard_pos) {
    eligible.assign(positives.begin(), positives.end());
  } else {
    for (std::size_t j = 0; j < positives.size(); ++j)
      if (similarity[j] <= cfg.pos_threshold) eligible.push_back(positives[j]);
    if (eligible.empty()) eligible.assign(positives.begin(), positives.end());
  }
  return sample_without_replacement(std::move(eligible), cfg.p_size, rng);
}

struct NegativeCandidate {
  std::uint32_t point = 0;
  double similarity = 0.0;  // <z_l, x_point>
};

/// Picks N_l for `label` among positives of the other batch labels.
inline std::vector<std::uint32_t> mine_inbatch_negatives(std::uint32_t label,
                                                         std::span<const NegativeCandidate> candidates,
                                                         const GroundTruth& gt, const MiningConfig& cfg,
                                                         std::mt19937_64& rng) {
  std::vector<NegativeCandidate> pool;
  std::unordered_set<std::uint32_t> seen;
  for (const auto& c : candidates) {
    if (gt.is_positive(c.point, label)) continue;
    if (seen.insert(c.point).second) pool.push_back(c);
  }
  std::vector<std::uint32_t> out;
  if (cfg.no_hard_neg) {
    std::vector<std::uint32_t> ids;
    for (const auto& c : pool) ids.push_back(c.point);
    return sample_without_replacement(std::move(ids), cfg.n_size, rng);
  }
  std::sort(pool.begin(), pool.end(), [](const NegativeCandidate& a, const NegativeCandidate& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.point < b.point;
  });
  for (std::size_t k = 0; k < pool.size() && k < cfg.n_size; ++k) out.push_back(pool[k].point);
  return out;
}

/// Mined sets for one label, as slots into the caller's embedding arrays.
struct LabelTriples {
  std::size_t label_slot = 0;
  std::vector<std::size_t> pos_slots;
  std::vector<std::size_t> neg_slots;
};

/// sum_l sum_{i in P_l} sum_{j in N_l} [<z_l, x_j> - <z_l, x_i> + margin]_+
///
/// `terms`, when given, is incremented by the number of hinge terms evaluated.
template <class T>
T contrastive_loss(std::span<const T> label_vecs, std::span<const T> point_vecs, std::span<const LabelTriples> sets,
                   double margin, std::size_t* terms = nullptr) {
  std::vector<T> hinges;
  for (const auto& s : sets) {
    const T& z = label_vecs[s.label_slot];
    std::vector<T> neg_sim;
    neg_sim.reserve(s.neg_slots.size());
    for (auto j : s.neg_slots) neg_sim.push_back(inner(z, point_vecs[j]));
    for (auto i : s.pos_slots) {
      T pos_sim = inner(z, point_vecs[i]);
      for (const T& sn : neg_sim) hinges.push_back(relu(add_scalar(sub(sn, pos_sim), margin)));
    }
  }
  if (terms) *terms += hinges.size();
  if (hinges.empty()) {
    const T& like = label_vecs.empty() ? point_vecs.front() : label_vecs.front();
    return constant_like(like, Matrix(1, 1, 0.0));
  }
  return sum_scalars(std::span<const T>(hinges));
}

/// A classifier score <x^{2,l}, w_l> (1x1) tagged as positive or shortlist negative.
template <class T>
struct ScoredPair {
  T score;
  bool positive = false;
};

/// sum (1 - score) over positives + sum [score - margin]_+ over negatives.
template <class T>
T cosine_embedding_loss(std::span<const ScoredPair<T>> pairs, double margin) {
  if (pairs.empty()) throw std::invalid_argument("cosine_embedding_loss: no pairs");
  std::vector<T> terms;
  terms.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.positive) {
      terms.push_back(add_scalar(scale(p.score, -1.0), 1.0));
    } else {
      terms.push_back(relu(add_scalar(p.score, -margin)));
    }
  }
  return sum_scalars(std::span<const T>(terms));
}

/// S_i and T_i for one datapoint.
struct Module4Sample {
  std::vector<std::uint32_t> positives;
  std::vector<std::uint32_t> negatives;
};

/// S_i: uniform random positives from the ground truth. T_i: uniform random
/// shortlist labels that are negative for the point.
inline Module4Sample sample_module4(std::size_t point, std::span<const std::uint32_t> shortlist_labels,
                                    const GroundTruth& gt, const MiningConfig& cfg, std::mt19937_64& rng) {
  Module4Sample out;
  out.positives = sample_without_replacement(gt.positives[point], cfg.s_size, rng);
  std::vector<std::uint32_t> negs;
  for (auto l : shortlist_labels)
    if (!gt.is_positive(point, l)) negs.push_back(l);
  out.negatives = sample_without_replacement(std::move(negs), cfg.t_size, rng);
  return out;
}

/// Work tallies for one training epoch.
struct EpochCounters {
  std::size_t module1_terms = 0;        // hinge terms in the contrastive loss
  std::size_t module4_adaptations = 0;  // label-adapted embeddings computed
  std::size_t steps = 0;

  /// Upper bound L * |P| * |N| on Module I terms.
  static std::size_t module1_bound(std::size_t labels, const MiningConfig& c) { return labels * c.p_size * c.n_size; }
  /// Upper bound N * (|S| + |T|) on Module IV adaptations.
  static std::size_t module4_bound(std::size_t points, const MiningConfig& c) {
    return points * (c.s_size + c.t_size);
  }
};

}  // namespace mmxc
