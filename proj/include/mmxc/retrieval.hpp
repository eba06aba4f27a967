#pragma once

// Label centroids, the label-tagged augmented index and shortlist queries.

#include <atomic>
#include <iostream>
#include <optional>

#include "mmxc/hnsw.hpp"
#include "mmxc/objectives.hpp"

namespace mmxc {

struct ShortlistEntry {
  std::uint32_t label = 0;
  double a = 0.0;  // max inner product over the label's retrieved entries

  friend bool operator==(const ShortlistEntry&, const ShortlistEntry&) = default;
};

/// Unique labels sorted by a descending (ties by label id).
using Shortlist = std::vector<ShortlistEntry>;

inline constexpr std::size_t kDefaultShortlistCap = 100;

/// Normalized mean of the given point vectors; absent when there are none or
/// the mean degenerates.
inline std::optional<Matrix> centroid(std::span<const std::uint32_t> points, std::span<const Matrix> point_vecs) {
  if (points.empty()) return std::nullopt;
  Matrix mean(1, point_vecs[points.front()].cols());
  for (auto i : points) {
    const auto& v = point_vecs[i];
    for (std::size_t c = 0; c < v.cols(); ++c) mean[c] += v[c];
  }
  for (double& v : mean.values()) v /= static_cast<double>(points.size());
  if (!(norm2(mean.values()) > kNormEpsilon)) {
    std::clog << "warning: degenerate centroid omitted\n";
    return std::nullopt;
  }
  return l2_normalize(mean);
}

enum class IndexMode : std::uint8_t { exact = 0, hnsw = 1 };

struct IndexParams {
  IndexMode mode = IndexMode::exact;
  HnswParams hnsw;
};

struct EmptyIndexError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Unit vectors, each tagged with the label it represents.
class AugmentedIndex {
 public:
  static constexpr std::string_view kMagic = "MMXCIDX1";
  static constexpr std::uint32_t kVersion = 1;

  AugmentedIndex() = default;
  AugmentedIndex(Matrix entries, std::vector<std::uint32_t> tags, std::size_t num_labels, IndexParams params)
      : entries_(std::move(entries)), tags_(std::move(tags)), num_labels_(num_labels), params_(params) {
    if (tags_.empty()) throw EmptyIndexError("AugmentedIndex: no entries");
    if (tags_.size() != entries_.rows()) throw DimensionError("AugmentedIndex: tag count mismatch");
    if (params_.mode == IndexMode::hnsw) graph_ = HnswGraph::build(entries_, params_.hnsw);
  }

  AugmentedIndex(AugmentedIndex&& o) noexcept
      : entries_(std::move(o.entries_)),
        tags_(std::move(o.tags_)),
        num_labels_(o.num_labels_),
        params_(o.params_),
        graph_(std::move(o.graph_)),
        queries_(o.queries_.load()) {}
  AugmentedIndex& operator=(AugmentedIndex&& o) noexcept {
    entries_ = std::move(o.entries_);
    tags_ = std::move(o.tags_);
    num_labels_ = o.num_labels_;
    params_ = o.params_;
    graph_ = std::move(o.graph_);
    queries_ = o.queries_.load();
    return *this;
  }

  std::size_t size() const noexcept { return tags_.size(); }
  std::size_t dim() const noexcept { return entries_.cols(); }
  std::size_t num_labels() const noexcept { return num_labels_; }
  IndexMode mode() const noexcept { return params_.mode; }
  const Matrix& entries() const noexcept { return entries_; }
  const std::vector<std::uint32_t>& tags() const noexcept { return tags_; }

  /// Number of query() calls served so far.
  std::size_t query_count() const noexcept { return queries_.load(); }

  /// Best `k` raw entries for `q`, best first (ties by entry id).
  std::vector<Neighbor> search_entries(std::span<const double> q, std::size_t k) const {
    if (q.size() != dim()) throw DimensionError("AugmentedIndex: query width mismatch");
    k = std::min(k, size());
    if (params_.mode == IndexMode::hnsw) {
      return graph_->search(entries_, q, k, std::max(params_.hnsw.ef_search, k));
    }
    std::vector<Neighbor> all(size());
    for (std::size_t e = 0; e < size(); ++e) all[e] = {dot(entries_.row(e), q), static_cast<std::uint32_t>(e)};
    auto better = [](const Neighbor& a, const Neighbor& b) {
      return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
    all.resize(k);
    return all;
  }

  /// One logical index query: up to `cap` unique labels with their best
  /// similarity among retrieved entries. The raw-entry beam starts at
  /// 2*cap and doubles until enough labels are found or entries run out.
  Shortlist query(std::span<const double> q, std::size_t cap = kDefaultShortlistCap) const {
    ++queries_;
    if (cap == 0) return {};
    std::size_t fetch = std::min(2 * cap, size());
    Shortlist out;
    for (;;) {
      auto hits = search_entries(q, fetch);
      out = dedupe(hits);
      if (out.size() >= cap || fetch >= size()) break;
      fetch = std::min(2 * fetch, size());
    }
    if (out.size() > cap) out.resize(cap);
    return out;
  }

  void write(std::ostream& os) const {
    BinaryWriter w(os);
    w.header(kMagic, kVersion);
    w.u64(dim());
    w.u64(size());
    w.u64(num_labels_);
    for (std::size_t e = 0; e < size(); ++e) {
      w.u32(tags_[e]);
      for (double v : entries_.row(e)) w.f64(v);
    }
    w.u8(static_cast<std::uint8_t>(params_.mode));
    if (params_.mode == IndexMode::hnsw) graph_->write(w);
    w.check();
  }

  static AugmentedIndex read(std::istream& is) {
    BinaryReader r(is);
    if (r.header(kMagic) != kVersion) throw FormatError("index: unsupported version");
    AugmentedIndex idx;
    const std::uint64_t d = r.u64();
    const std::uint64_t n = r.u64();
    idx.num_labels_ = r.u64();
    if (d == 0 || d > (1u << 20) || n > (1ull << 32)) throw FormatError("index: bad dimensions");
    idx.entries_ = Matrix(n, d);
    idx.tags_.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
      idx.tags_[e] = r.u32();
      if (idx.tags_[e] >= idx.num_labels_) throw FormatError("index: label tag out of range");
      for (double& v : idx.entries_.row(e)) v = r.f64();
    }
    const std::uint8_t mode = r.u8();
    if (mode > 1) throw FormatError("index: unknown mode");
    idx.params_.mode = static_cast<IndexMode>(mode);
    if (idx.params_.mode == IndexMode::hnsw) {
      idx.graph_ = HnswGraph::read(r, n);
      idx.params_.hnsw = idx.graph_->params();
    }
    return idx;
  }

  friend bool operator==(const AugmentedIndex& a, const AugmentedIndex& b) {
    return a.entries_ == b.entries_ && a.tags_ == b.tags_ && a.num_labels_ == b.num_labels_ &&
           a.params_.mode == b.params_.mode && a.graph_ == b.graph_;
  }

 private:
  Shortlist dedupe(const std::vector<Neighbor>& hits) const {
    Shortlist out;
    std::vector<char> seen(num_labels_, 0);
    for (const auto& h : hits) {
      const auto l = tags_[h.id];
      if (seen[l]) continue;  // hits are best-first, so the first sighting is the max
      seen[l] = 1;
      out.push_back({l, h.similarity});
    }
    std::stable_sort(out.begin(), out.end(), [](const ShortlistEntry& a, const ShortlistEntry& b) {
      return a.a != b.a ? a.a > b.a : a.label < b.label;
    });
    return out;
  }

  Matrix entries_;
  std::vector<std::uint32_t> tags_;
  std::size_t num_labels_ = 0;
  IndexParams params_;
  std::optional<HnswGraph> graph_;
  mutable std::atomic<std::size_t> queries_{0};
};

/// Index over every (row-normalized) label bag row plus each defined centroid.
/// Rows that normalize to nothing are skipped with a warning.
inline AugmentedIndex build_index(std::span<const Matrix> label_bags, std::span<const std::optional<Matrix>> centroids,
                                  const IndexParams& params) {
  if (label_bags.empty()) throw EmptyIndexError("build_index: empty label set");
  if (!centroids.empty() && centroids.size() != label_bags.size())
    throw DimensionError("build_index: centroid count mismatch");
  const std::size_t d = label_bags.front().cols();
  std::vector<double> data;
  std::vector<std::uint32_t> tags;
  for (std::size_t l = 0; l < label_bags.size(); ++l) {
    const Matrix& bag = label_bags[l];
    if (bag.cols() != d) throw DimensionError("build_index: label bag width mismatch");
    for (std::size_t r = 0; r < bag.rows(); ++r) {
      auto row = bag.row(r);
      const double n = norm2(row);
      if (!(n > kNormEpsilon)) {
        std::clog << "warning: degenerate descriptor embedding skipped for label " << l << "\n";
        continue;
      }
      for (double v : row) data.push_back(v / n);
      tags.push_back(static_cast<std::uint32_t>(l));
    }
    if (!centroids.empty() && centroids[l]) {
      data.insert(data.end(), centroids[l]->values().begin(), centroids[l]->values().end());
      tags.push_back(static_cast<std::uint32_t>(l));
    }
  }
  const std::size_t n = tags.size();
  return AugmentedIndex(Matrix(n, d, std::move(data)), std::move(tags), label_bags.size(), params);
}

/// One entry per label: its vector embedding.
inline AugmentedIndex build_vec_only_index(std::span<const Matrix> label_vecs, const IndexParams& params) {
  if (label_vecs.empty()) throw EmptyIndexError("build_vec_only_index: empty label set");
  std::vector<Matrix> rows(label_vecs.begin(), label_vecs.end());
  Matrix entries = vstack(rows);
  std::vector<std::uint32_t> tags(label_vecs.size());
  std::iota(tags.begin(), tags.end(), 0u);
  return AugmentedIndex(std::move(entries), std::move(tags), label_vecs.size(), params);
}

}  // namespace mmxc
