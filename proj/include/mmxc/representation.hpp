#pragma once

// Entities, per-modality encoders and bag/vector embeddings.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mmxc/attention.hpp"

namespace mmxc {

enum class Modality : std::uint8_t { text = 0, visual = 1 };

/// One textual (token ids) or visual (pre-computed feature vector) descriptor.
struct Descriptor {
  Modality modality = Modality::text;
  std::vector<std::uint32_t> tokens;
  std::vector<double> features;

  static Descriptor text(std::vector<std::uint32_t> ids) { return {Modality::text, std::move(ids), {}}; }
  static Descriptor visual(std::vector<double> f) { return {Modality::visual, {}, std::move(f)}; }

  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

/// A datapoint or label: an identity plus a bag of descriptors.
struct Entity {
  std::string id;
  std::vector<Descriptor> descriptors;

  friend bool operator==(const Entity&, const Entity&) = default;
};

struct InvalidEntityError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EncoderDims {
  std::size_t vocab_size = 1;     // OOV row is appended after these
  std::size_t visual_width = 256;  // width of raw visual feature vectors
  std::size_t native_dim = 256;    // encoder output before pooling
  std::size_t dim = 64;            // embedding width D after pooling

  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

/// Trainable encoder weights shared by datapoints and labels.
struct EncoderParams {
  EncoderDims dims;
  Matrix token_table;  // (vocab_size + 1) x native_dim
  Matrix visual_w;     // visual_width x native_dim
  Matrix visual_b;     // 1 x native_dim

  std::size_t oov_row() const noexcept { return dims.vocab_size; }
};

inline EncoderParams init_encoder(const EncoderDims& dims, std::uint64_t seed) {
  if (dims.dim == 0 || dims.dim > dims.native_dim) {
    throw DimensionError("init_encoder: need 0 < D <= D_native");
  }
  std::mt19937_64 rng(seed);
  EncoderParams p{dims, Matrix(dims.vocab_size + 1, dims.native_dim), Matrix(dims.visual_width, dims.native_dim),
                  Matrix(1, dims.native_dim)};
  std::normal_distribution<double> table_init(0.0, 1.0);
  for (double& v : p.token_table.values()) v = table_init(rng);
  std::normal_distribution<double> w_init(0.0, 1.0 / std::sqrt(static_cast<double>(dims.visual_width)));
  for (double& v : p.visual_w.values()) v = w_init(rng);
  return p;
}

template <class T>
struct EncoderView {
  ParamRef<T> token_table;
  ParamRef<T> visual_w;
  ParamRef<T> visual_b;
  EncoderDims dims;
};

inline EncoderView<Matrix> view(const EncoderParams& p) {
  return {p.token_table, p.visual_w, p.visual_b, p.dims};
}

inline EncoderView<Var> lift(Tape& tape, const EncoderParams& p) {
  return {tape.leaf(p.token_table), tape.leaf(p.visual_w), tape.leaf(p.visual_b), p.dims};
}

inline void validate(const Descriptor& d, const EncoderDims& dims) {
  if (d.modality == Modality::text) {
    if (d.tokens.empty()) throw InvalidEntityError("text descriptor with no tokens");
  } else if (d.features.size() != dims.visual_width) {
    throw DimensionError("visual descriptor width " + std::to_string(d.features.size()) + ", expected " +
                         std::to_string(dims.visual_width));
  }
}

inline void validate(const Entity& e, const EncoderDims& dims) {
  if (e.descriptors.empty()) throw InvalidEntityError("entity '" + e.id + "' has no descriptors");
  for (const auto& d : e.descriptors) validate(d, dims);
}

/// Token ids with anything outside the vocabulary mapped to the OOV row.
inline std::vector<std::size_t> token_rows(const Descriptor& d, const EncoderDims& dims) {
  std::vector<std::size_t> rows;
  rows.reserve(d.tokens.size());
  for (auto t : d.tokens) rows.push_back(t < dims.vocab_size ? t : dims.vocab_size);
  return rows;
}

/// Encoder output before the shared max-pool projection (1 x D_native).
template <class T>
T encode_native(const Descriptor& d, const EncoderView<T>& enc) {
  validate(d, enc.dims);
  if (d.modality == Modality::text) {
    auto rows = token_rows(d, enc.dims);
    return gather_mean(enc.token_table, std::span<const std::size_t>(rows));
  }
  T f = constant_like(enc.visual_w, Matrix::row_vector(d.features));
  return add_row_bias(matmul(f, enc.visual_w), enc.visual_b);
}

/// Descriptor pre-embedding in R^D.
template <class T>
T encode_descriptor(const Descriptor& d, const EncoderView<T>& enc) {
  return adaptive_max_pool(encode_native(d, enc), enc.dims.dim);
}

/// Bag of pre-embeddings, passed through the self-attention block unless bypassed.
template <class T>
T embed_bag(const Entity& e, const EncoderView<T>& enc, const AttentionView<T>& self_attn,
            bool use_self_attention = true) {
  validate(e, enc.dims);
  std::vector<T> rows;
  rows.reserve(e.descriptors.size());
  for (const auto& d : e.descriptors) rows.push_back(encode_descriptor(d, enc));
  T pre = vstack(std::span<const T>(rows));
  if (!use_self_attention) return pre;
  return attend(pre, pre, self_attn);
}

/// Normalized row-sum of a bag.
template <class T>
T embed_vector(const T& bag) {
  return l2_normalize(row_sum(bag));
}

}  // namespace mmxc
