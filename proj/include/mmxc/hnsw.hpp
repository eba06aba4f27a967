#pragma once

// Hierarchical navigable small-world graph over the rows of a matrix,
// searched by maximum inner product (cosine on unit rows).
//
// The graph stores adjacency only; the vectors are passed in on every call
// so the owner decides where they live.

#include <cmath>
#include <queue>
#include <random>

#include "mmxc/binary_io.hpp"

namespace mmxc {

struct HnswParams {
  std::size_t m = 16;                 // max links per node above layer 0 (2m at layer 0)
  std::size_t ef_construction = 200;  // beam width while inserting
  std::size_t ef_search = 200;        // default beam width while querying
  std::uint64_t seed = 42;
};

struct Neighbor {
  double similarity = 0.0;
  std::uint32_t id = 0;
};

class HnswGraph {
 public:
  HnswGraph() = default;

  static HnswGraph build(const Matrix& vectors, const HnswParams& params) {
    HnswGraph g;
    g.params_ = params;
    if (params.m < 2) throw std::invalid_argument("HnswGraph: m must be >= 2");
    g.links_.resize(vectors.rows());
    g.levels_.resize(vectors.rows());
    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double ml = 1.0 / std::log(static_cast<double>(params.m));
    std::vector<std::uint32_t> visited(vectors.rows(), 0);
    std::uint32_t epoch = 0;
    for (std::size_t i = 0; i < vectors.rows(); ++i) {
      const int level = static_cast<int>(std::floor(-std::log(1.0 - u(rng)) * ml));
      g.insert(vectors, static_cast<std::uint32_t>(i), level, visited, epoch);
    }
    return g;
  }

  std::size_t size() const noexcept { return levels_.size(); }
  int max_level() const noexcept { return max_level_; }
  const HnswParams& params() const noexcept { return params_; }

  /// Up to k best rows for `query`, best first. Beam width is max(ef, k).
  std::vector<Neighbor> search(const Matrix& vectors, std::span<const double> query, std::size_t k,
                               std::size_t ef) const {
    if (levels_.empty() || k == 0) return {};
    std::vector<std::uint32_t> visited(vectors.rows(), 0);
    std::uint32_t epoch = 0;
    std::uint32_t cur = entry_;
    for (int layer = max_level_; layer > 0; --layer) cur = greedy(vectors, query, cur, layer);
    auto found = search_layer(vectors, query, {cur}, std::max(ef, k), 0, visited, epoch);
    if (found.size() > k) found.resize(k);
    return found;
  }

  void write(BinaryWriter& w) const {
    w.u64(params_.m);
    w.u64(params_.ef_construction);
    w.u64(params_.ef_search);
    w.u64(params_.seed);
    w.u32(entry_);
    w.u32(static_cast<std::uint32_t>(max_level_ + 1));
    w.u64(levels_.size());
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      w.u32(static_cast<std::uint32_t>(levels_[i]));
      for (const auto& layer : links_[i]) {
        w.u32(static_cast<std::uint32_t>(layer.size()));
        for (auto n : layer) w.u32(n);
      }
    }
  }

  static HnswGraph read(BinaryReader& r, std::size_t expected_nodes) {
    HnswGraph g;
    g.params_.m = r.u64();
    g.params_.ef_construction = r.u64();
    g.params_.ef_search = r.u64();
    g.params_.seed = r.u64();
    g.entry_ = r.u32();
    g.max_level_ = static_cast<int>(r.u32()) - 1;
    const std::uint64_t n = r.u64();
    if (n != expected_nodes) throw FormatError("hnsw: node count mismatch");
    g.levels_.resize(n);
    g.links_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      g.levels_[i] = static_cast<int>(r.u32());
      if (g.levels_[i] > g.max_level_) throw FormatError("hnsw: node level above max level");
      g.links_[i].resize(static_cast<std::size_t>(g.levels_[i]) + 1);
      for (auto& layer : g.links_[i]) {
        const std::uint32_t c = r.u32();
        if (c > 4 * g.params_.m + 1) throw FormatError("hnsw: link list too long");
        layer.resize(c);
        for (auto& v : layer) {
          v = r.u32();
          if (v >= n) throw FormatError("hnsw: link out of range");
        }
      }
    }
    if (n > 0 && g.entry_ >= n) throw FormatError("hnsw: entry point out of range");
    return g;
  }

  friend bool operator==(const HnswGraph& a, const HnswGraph& b) {
    return a.entry_ == b.entry_ && a.max_level_ == b.max_level_ && a.levels_ == b.levels_ && a.links_ == b.links_;
  }

 private:
  static double sim(const Matrix& v, std::span<const double> q, std::uint32_t id) {
    const double* r = v.row(id).data();
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += r[i] * q[i];
    return acc;
  }

  std::size_t max_links(int layer) const { return layer == 0 ? 2 * params_.m : params_.m; }

  std::uint32_t greedy(const Matrix& v, std::span<const double> q, std::uint32_t cur, int layer) const {
    double best = sim(v, q, cur);
    for (bool moved = true; moved;) {
      moved = false;
      for (auto n : links_[cur][static_cast<std::size_t>(layer)]) {
        const double s = sim(v, q, n);
        if (s > best) {
          best = s;
          cur = n;
          moved = true;
        }
      }
    }
    return cur;
  }

  struct ByBest {
    bool operator()(const Neighbor& a, const Neighbor& b) const {
      return a.similarity != b.similarity ? a.similarity < b.similarity : a.id > b.id;
    }
  };
  struct ByWorst {
    bool operator()(const Neighbor& a, const Neighbor& b) const {
      return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
    }
  };

  std::vector<Neighbor> search_layer(const Matrix& v, std::span<const double> q,
                                     const std::vector<std::uint32_t>& entries, std::size_t ef, int layer,
                                     std::vector<std::uint32_t>& visited, std::uint32_t& epoch) const {
    ++epoch;
    std::priority_queue<Neighbor, std::vector<Neighbor>, ByBest> frontier;  // best on top
    std::priority_queue<Neighbor, std::vector<Neighbor>, ByWorst> result;   // worst on top
    for (auto e : entries) {
      if (visited[e] == epoch) continue;
      visited[e] = epoch;
      Neighbor nb{sim(v, q, e), e};
      frontier.push(nb);
      result.push(nb);
    }
    while (!frontier.empty()) {
      const Neighbor c = frontier.top();
      frontier.pop();
      if (result.size() >= ef && c.similarity < result.top().similarity) break;
      for (auto n : links_[c.id][static_cast<std::size_t>(layer)]) {
        if (visited[n] == epoch) continue;
        visited[n] = epoch;
        const double s = sim(v, q, n);
        if (result.size() < ef || s > result.top().similarity) {
          frontier.push({s, n});
          result.push({s, n});
          if (result.size() > ef) result.pop();
        }
      }
    }
    std::vector<Neighbor> out(result.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = result.top();
      result.pop();
    }
    return out;
  }

  /// Keeps a candidate only if it is closer to the base than to every kept neighbor.
  std::vector<std::uint32_t> select_neighbors(const Matrix& v, const std::vector<Neighbor>& sorted_candidates,
                                              std::size_t limit) const {
    std::vector<std::uint32_t> kept;
    for (const auto& c : sorted_candidates) {
      if (kept.size() >= limit) break;
      bool good = true;
      for (auto k : kept) {
        if (sim(v, v.row(c.id), k) > c.similarity) {
          good = false;
          break;
        }
      }
      if (good) kept.push_back(c.id);
    }
    return kept;
  }

  void insert(const Matrix& v, std::uint32_t id, int level, std::vector<std::uint32_t>& visited,
              std::uint32_t& epoch) {
    levels_[id] = level;
    links_[id].assign(static_cast<std::size_t>(level) + 1, {});
    if (id == 0) {
      entry_ = 0;
      max_level_ = level;
      return;
    }
    auto q = v.row(id);
    std::uint32_t cur = entry_;
    for (int layer = max_level_; layer > level; --layer) cur = greedy(v, q, cur, layer);
    std::vector<std::uint32_t> entries{cur};
    for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
      auto found = search_layer(v, q, entries, params_.ef_construction, layer, visited, epoch);
      auto chosen = select_neighbors(v, found, max_links(layer));
      const auto ul = static_cast<std::size_t>(layer);
      links_[id][ul] = chosen;
      for (auto n : chosen) {
        auto& back = links_[n][ul];
        back.push_back(id);
        if (back.size() > max_links(layer)) {
          std::vector<Neighbor> cands;
          cands.reserve(back.size());
          for (auto b : back) cands.push_back({sim(v, v.row(n), b), b});
          std::sort(cands.begin(), cands.end(), [](const Neighbor& a, const Neighbor& b) {
            return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
          });
          back = select_neighbors(v, cands, max_links(layer));
        }
      }
      entries.clear();
      for (const auto& f : found) entries.push_back(f.id);
    }
    if (level > max_level_) {
      max_level_ = level;
      entry_ = id;
    }
  }

  HnswParams params_;
  std::vector<int> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][layer]
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
};

}  // namespace mmxc
