#pragma once

#include "mmxc/config.hpp"

namespace mmxc {

/// Every trainable parameter plus the phase marker.
struct ModelState {
  static constexpr std::string_view kMagic = "MMXCCKPT";
  static constexpr std::uint32_t kVersion = 1;

  PipelineConfig config;
  Phase phase = Phase::initialized;
  EncoderParams encoder;
  AttentionParams self_attn;
  AttentionParams cross_attn;
  ClassifierBank bank;
  ConcatParams concat;

  std::size_t num_labels() const noexcept { return bank.labels(); }
  std::size_t dim() const noexcept { return encoder.dims.dim; }

  AdaptMode adapt_mode() const noexcept { return config.adapt; }

  void write(std::ostream& os) const {
    BinaryWriter w(os);
    w.header(kMagic, kVersion);
    w.u8(static_cast<std::uint8_t>(phase));
    w.str(to_config_text(config));
    w.u64(encoder.dims.vocab_size);
    w.u64(encoder.dims.visual_width);
    w.u64(encoder.dims.native_dim);
    w.u64(encoder.dims.dim);
    for (const Matrix* m : matrices()) w.matrix(*m);
    w.check();
  }

  static ModelState read(std::istream& is) {
    BinaryReader r(is);
    if (r.header(kMagic) != kVersion) throw FormatError("checkpoint: unsupported version");
    ModelState s;
    const std::uint8_t phase = r.u8();
    if (phase > static_cast<std::uint8_t>(Phase::frozen)) throw FormatError("checkpoint: bad phase");
    s.phase = static_cast<Phase>(phase);
    s.config = parse_config(r.str());
    s.encoder.dims.vocab_size = r.u64();
    s.encoder.dims.visual_width = r.u64();
    s.encoder.dims.native_dim = r.u64();
    s.encoder.dims.dim = r.u64();
    for (Matrix* m : s.matrices()) *m = r.matrix();
    const auto& d = s.encoder.dims;
    auto expect = [](const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
      if (m.rows() != rows || m.cols() != cols) throw FormatError(std::string("checkpoint: bad shape for ") + what);
    };
    expect(s.encoder.token_table, d.vocab_size + 1, d.native_dim, "token table");
    expect(s.encoder.visual_w, d.visual_width, d.native_dim, "visual weights");
    expect(s.self_attn.q, d.dim, d.dim, "self-attention");
    expect(s.cross_attn.q, d.dim, d.dim, "cross-attention");
    if (s.bank.eta.rows() != s.bank.alpha.rows()) throw FormatError("checkpoint: classifier bank mismatch");
    return s;
  }

  friend bool operator==(const ModelState& a, const ModelState& b) {
    if (a.phase != b.phase || to_config_text(a.config) != to_config_text(b.config)) return false;
    auto ma = a.matrices();
    auto mb = b.matrices();
    for (std::size_t i = 0; i < ma.size(); ++i)
      if (!(*ma[i] == *mb[i])) return false;
    return true;
  }

 private:
  std::vector<const Matrix*> matrices() const {
    return {&encoder.token_table, &encoder.visual_w, &encoder.visual_b, &self_attn.q,  &self_attn.k,
            &self_attn.v,         &self_attn.o,      &cross_attn.q,     &cross_attn.k, &cross_attn.v,
            &cross_attn.o,        &bank.eta,         &bank.alpha,       &concat.w1,    &concat.b1,
            &concat.w2,           &concat.b2};
  }
  std::vector<Matrix*> matrices() {
    auto c = std::as_const(*this).matrices();
    std::vector<Matrix*> out;
    for (const Matrix* m : c) out.push_back(const_cast<Matrix*>(m));
    return out;
  }
};

/// Fresh state: seeded encoders, identity attention blocks, alpha = 0 and
/// zero free vectors (the classifier bank is filled in by Module III).
inline ModelState init_model(const EncoderDims& data_dims, std::size_t num_labels, const PipelineConfig& cfg) {
  cfg.validate();
  ModelState s;
  s.config = cfg;
  EncoderDims dims = data_dims;
  dims.native_dim = cfg.native_dim;
  dims.dim = cfg.dim;
  s.encoder = init_encoder(dims, cfg.seed);
  s.self_attn = init_identity(cfg.dim);
  s.cross_attn = init_identity(cfg.dim);
  s.bank = ClassifierBank{Matrix(num_labels, cfg.dim), Matrix(num_labels, 1, 0.0)};
  s.concat = ConcatParams{Matrix(2 * cfg.dim, 2 * cfg.dim), Matrix(1, 2 * cfg.dim), Matrix(2 * cfg.dim, cfg.dim),
                          Matrix(1, cfg.dim)};
  return s;
}

struct PhaseError : std::logic_error {
  using std::logic_error::logic_error;
};

inline void require_phase(const ModelState& s, Phase expected, const char* op) {
  if (s.phase != expected) {
    throw PhaseError(std::string(op) + ": requires phase '" + phase_name(expected) + "', model is in '" +
                     phase_name(s.phase) + "'");
  }
}

inline Matrix entity_bag(const ModelState& s, const Entity& e) {
  return embed_bag<Matrix>(e, view(s.encoder), view(s.self_attn), s.config.self_attention);
}

inline AdaptView<Matrix> adapt_view(const ModelState& s) {
  AdaptView<Matrix> v;
  v.mode = s.config.adapt;
  if (v.mode == AdaptMode::cross_attention) v.cross.emplace(view(s.cross_attn));
  if (v.mode == AdaptMode::concat) v.concat.emplace(view(s.concat));
  return v;
}

inline void save_checkpoint(const ModelState& s, const std::string& path) {
  auto os = open_out(path);
  s.write(os);
}

inline ModelState load_checkpoint(const std::string& path) {
  auto is = open_in(path);
  return ModelState::read(is);
}

}  // namespace mmxc
