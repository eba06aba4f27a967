#pragma once

// Planted-cluster multi-modal datasets for desk-scale experiments.

#include <cstdio>

#include "mmxc/dataset.hpp"

namespace mmxc {

/// Clusters are grouped so that clusters in one group share part of their
/// visual prototype and their group tokens, which makes them confusable.
struct SyntheticSpec {
  std::size_t clusters = 200;        // K
  std::size_t labels = 2000;         // L
  std::size_t points = 10000;        // N
  std::size_t native_dim = 256;      // raw visual feature width
  std::size_t cluster_groups = 20;
  double group_share = 0.6;          // weight of the group prototype in a cluster prototype
  std::size_t min_images = 1;
  std::size_t max_images = 3;
  double modality_dropout = 0.1;     // chance of dropping the text or all images
  double visual_noise = 1.0;         // stddev of per-image Gaussian noise
  double token_noise = 0.3;          // chance of replacing each title token
  std::size_t cluster_tokens = 3;    // distinctive tokens per cluster title
  std::size_t group_tokens = 2;
  std::size_t filler_tokens = 2;
  std::size_t filler_vocab = 500;
  double target_positives = 5.0;     // mean positives per datapoint
  double popularity_skew = 0.5;      // label k of a cluster has weight (k+1)^-skew
  double test_ratio = 0.2;
  std::uint64_t seed = 7;

  void validate() const {
    if (clusters == 0 || labels < clusters) throw std::invalid_argument("SyntheticSpec: need 0 < K <= L");
    if (points == 0 || native_dim == 0) throw std::invalid_argument("SyntheticSpec: empty dataset");
    if (cluster_groups == 0 || cluster_groups > clusters)
      throw std::invalid_argument("SyntheticSpec: need 0 < groups <= K");
    if (min_images == 0 || max_images < min_images) throw std::invalid_argument("SyntheticSpec: bad image range");
    for (double p : {group_share, modality_dropout, token_noise, test_ratio})
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("SyntheticSpec: probabilities must be in [0, 1]");
    if (!(visual_noise >= 0.0) || !(popularity_skew >= 0.0)) throw std::invalid_argument("SyntheticSpec: bad noise");
    if (cluster_tokens + group_tokens + filler_tokens == 0) throw std::invalid_argument("SyntheticSpec: empty titles");
    if (!(target_positives > 0.0)) throw std::invalid_argument("SyntheticSpec: target_positives must be > 0");
  }

  std::size_t vocab_size() const { return clusters * cluster_tokens + cluster_groups * group_tokens + filler_vocab; }
};

namespace detail {

inline std::string numbered(char prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

}  // namespace detail

/// Cluster c owns labels {l : l mod K = c}. Inside a cluster the labels get
/// popularity weights (k+1)^-skew in a random order, scaled so that the
/// expected number of positives per point is `target_positives` (capped at 1).
/// A point is positive for a same-cluster label with that probability and for
/// nothing else; a point left without positives gets its cluster's most
/// popular label.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t K = spec.clusters;
  const std::size_t W = spec.native_dim;

  auto random_vec = [&] {
    std::vector<double> v(W);
    for (double& x : v) x = gauss(rng);
    return v;
  };
  std::vector<std::vector<double>> group_proto(spec.cluster_groups);
  for (auto& g : group_proto) g = random_vec();
  const double gs = std::sqrt(spec.group_share);
  const double os = std::sqrt(1.0 - spec.group_share);
  std::vector<std::vector<double>> visual_proto(K);
  std::vector<std::vector<std::uint32_t>> title_proto(K);
  const std::size_t group_base = K * spec.cluster_tokens;
  const std::size_t filler_base = group_base + spec.cluster_groups * spec.group_tokens;
  const std::size_t V = spec.vocab_size();
  std::uniform_int_distribution<std::size_t> any_token(0, V - 1);
  std::uniform_int_distribution<std::size_t> any_filler(0, spec.filler_vocab == 0 ? 0 : spec.filler_vocab - 1);
  for (std::size_t c = 0; c < K; ++c) {
    const std::size_t g = c % spec.cluster_groups;
    auto own = random_vec();
    visual_proto[c].resize(W);
    for (std::size_t d = 0; d < W; ++d) visual_proto[c][d] = gs * group_proto[g][d] + os * own[d];
    auto& t = title_proto[c];
    for (std::size_t k = 0; k < spec.cluster_tokens; ++k) t.push_back(static_cast<std::uint32_t>(c * spec.cluster_tokens + k));
    for (std::size_t k = 0; k < spec.group_tokens; ++k)
      t.push_back(static_cast<std::uint32_t>(group_base + g * spec.group_tokens + k));
    for (std::size_t k = 0; k < spec.filler_tokens && spec.filler_vocab > 0; ++k)
      t.push_back(static_cast<std::uint32_t>(filler_base + any_filler(rng)));
  }

  std::uniform_int_distribution<std::size_t> n_images(spec.min_images, spec.max_images);
  auto make_entity = [&](std::string id, std::size_t c) {
    Entity e{std::move(id), {}};
    bool drop_text = false, drop_images = false;
    if (unit(rng) < spec.modality_dropout) (unit(rng) < 0.5 ? drop_text : drop_images) = true;
    std::vector<std::uint32_t> title = title_proto[c];
    for (auto& tok : title)
      if (unit(rng) < spec.token_noise) tok = static_cast<std::uint32_t>(any_token(rng));
    if (!drop_text) e.descriptors.push_back(Descriptor::text(std::move(title)));
    const std::size_t m = n_images(rng);
    for (std::size_t k = 0; k < m; ++k) {
      std::vector<double> f(W);
      for (std::size_t d = 0; d < W; ++d) f[d] = visual_proto[c][d] + spec.visual_noise * gauss(rng);
      if (!drop_images) e.descriptors.push_back(Descriptor::visual(std::move(f)));
    }
    return e;
  };

  Dataset d;
  d.dims.vocab_size = V;
  d.dims.visual_width = W;
  d.vocab.reserve(V);
  for (std::size_t c = 0; c < K; ++c)
    for (std::size_t k = 0; k < spec.cluster_tokens; ++k)
      d.vocab.push_back("c" + std::to_string(c) + "x" + std::to_string(k));
  for (std::size_t g = 0; g < spec.cluster_groups; ++g)
    for (std::size_t k = 0; k < spec.group_tokens; ++k)
      d.vocab.push_back("g" + std::to_string(g) + "x" + std::to_string(k));
  for (std::size_t f = 0; f < spec.filler_vocab; ++f) d.vocab.push_back("w" + std::to_string(f));

  // labels and their inclusion probabilities
  std::vector<std::vector<std::uint32_t>> cluster_labels(K);
  for (std::size_t l = 0; l < spec.labels; ++l) {
    const std::size_t c = l % K;
    cluster_labels[c].push_back(static_cast<std::uint32_t>(l));
    d.labels.push_back(make_entity(detail::numbered('l', l, 6), c));
    d.label_category.push_back("cluster" + std::to_string(c));
  }
  std::vector<double> inclusion(spec.labels, 0.0);
  std::vector<std::uint32_t> most_popular(K);
  for (std::size_t c = 0; c < K; ++c) {
    auto members = cluster_labels[c];
    std::shuffle(members.begin(), members.end(), rng);
    most_popular[c] = members.front();
    double wsum = 0.0;
    for (std::size_t k = 0; k < members.size(); ++k) wsum += std::pow(static_cast<double>(k + 1), -spec.popularity_skew);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const double w = std::pow(static_cast<double>(k + 1), -spec.popularity_skew);
      inclusion[members[k]] = std::min(1.0, spec.target_positives * w / wsum);
    }
  }

  d.gt = GroundTruth(spec.points, spec.labels);
  std::uniform_int_distribution<std::size_t> any_cluster(0, K - 1);
  for (std::size_t i = 0; i < spec.points; ++i) {
    const std::size_t c = any_cluster(rng);
    d.points.push_back(make_entity(detail::numbered('p', i, 7), c));
    for (auto l : cluster_labels[c])
      if (unit(rng) < inclusion[l]) d.gt.add(i, l);
    if (d.gt.positives[i].empty()) d.gt.add(i, most_popular[c]);
  }
  d.is_test.resize(spec.points);
  for (std::size_t i = 0; i < spec.points; ++i) d.is_test[i] = is_test_id(d.points[i].id, spec.test_ratio);
  return d;
}

}  // namespace mmxc
