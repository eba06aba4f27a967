#pragma once

// The four training modules, prediction and the pipeline driver.

#include <cmath>
#include <iomanip>
#include <iostream>

#include "mmxc/dataset.hpp"
#include "mmxc/optim.hpp"
#include "mmxc/retrieval.hpp"

namespace mmxc {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-step losses and per-epoch work counters.
struct TrainLog {
  std::vector<double> module1_loss;
  std::vector<double> module4_loss;
  std::vector<EpochCounters> module1_epochs;
  std::vector<EpochCounters> module4_epochs;
  std::ostream* progress = nullptr;  // epoch summaries, when set
};

namespace detail {

inline void check_finite_loss(double loss, const char* module, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << module << ": non-finite loss " << loss << " at epoch " << epoch << ", step " << step
       << "; aborting (try a smaller learning rate)";
    throw TrainingError(os.str());
  }
}

inline double mean_of(const std::vector<double>& v, std::size_t from) {
  if (from >= v.size()) return 0.0;
  double s = 0.0;
  for (std::size_t i = from; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(v.size() - from);
}

template <class U>
std::vector<std::vector<U>> chunk(const std::vector<U>& items, std::size_t size) {
  std::vector<std::vector<U>> out;
  for (std::size_t i = 0; i < items.size(); i += size)
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                     items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + size)));
  return out;
}

/// Registers parameters with an optimizer and pulls their gradients off a tape
/// in the same order.
struct ParamGroup {
  std::vector<Matrix*> params;
  std::vector<bool> decay;

  void add(Matrix& m, bool d = true) {
    params.push_back(&m);
    decay.push_back(d);
  }
  AdamW make_optimizer(const PipelineConfig& cfg) const {
    AdamW opt({cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay});
    for (std::size_t i = 0; i < params.size(); ++i) opt.add(params[i], decay[i]);
    return opt;
  }
};

}  // namespace detail

/// Vector embeddings x^1 for the given points under the current state.
inline std::vector<Matrix> embed_points(const ModelState& s, const std::vector<Entity>& entities,
                                        std::span<const std::uint32_t> which) {
  std::vector<Matrix> out(entities.size());
  for (auto i : which) out[i] = embed_vector(entity_bag(s, entities[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Module I

/// One label with its mined positives and in-batch negatives, as slots.
struct MinedBatch {
  std::vector<std::uint32_t> labels;  // slot -> label id
  std::vector<std::uint32_t> points;  // slot -> point id
  std::vector<LabelTriples> sets;
};

/// Siamese training of the encoders and the self-attention block with a
/// triplet hinge over label-wise batches.
class Module1Trainer {
 public:
  Module1Trainer(ModelState& state, const Dataset& data)
      : state_(state), data_(data), rng_(state.config.seed ^ 0x6d6f64756c6531ull) {
    label_pos_ = label_positives(data.gt, data.train_mask());
    for (std::size_t l = 0; l < label_pos_.size(); ++l)
      if (!label_pos_[l].empty()) trainable_labels_.push_back(static_cast<std::uint32_t>(l));
    train_points_ = data.split_indices(false);
    group_.add(state_.encoder.token_table);
    group_.add(state_.encoder.visual_w);
    group_.add(state_.encoder.visual_b, false);
    if (state_.config.self_attention) {
      group_.add(state_.self_attn.q);
      group_.add(state_.self_attn.k);
      group_.add(state_.self_attn.v);
      group_.add(state_.self_attn.o);
    }
    opt_ = group_.make_optimizer(state_.config);
  }

  const std::vector<std::uint32_t>& trainable_labels() const noexcept { return trainable_labels_; }
  std::mt19937_64& rng() noexcept { return rng_; }

  std::size_t steps_per_epoch() const {
    const std::size_t b = state_.config.module1.batch;
    return (trainable_labels_.size() + b - 1) / b;
  }

  /// Recomputes the datapoint vector cache used for mining.
  void refresh_cache() { cache_ = embed_points(state_, data_.points, train_points_); }

  MinedBatch mine(std::span<const std::uint32_t> batch) {
    if (cache_.empty()) refresh_cache();
    const auto& mcfg = state_.config.mining;
    std::vector<Matrix> z(batch.size());
    std::vector<std::vector<std::uint32_t>> pos(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto l = batch[b];
      z[b] = embed_vector(entity_bag(state_, data_.labels[l]));
      const auto& p = label_pos_[l];
      std::vector<double> sim(p.size());
      for (std::size_t j = 0; j < p.size(); ++j) sim[j] = dot(z[b], cache_[p[j]]);
      pos[b] = mine_hard_positives(p, sim, mcfg, rng_);
    }
    MinedBatch out;
    out.labels.assign(batch.begin(), batch.end());
    std::map<std::uint32_t, std::size_t> slot;
    auto slot_of = [&](std::uint32_t point) {
      auto [it, inserted] = slot.try_emplace(point, out.points.size());
      if (inserted) out.points.push_back(point);
      return it->second;
    };
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::vector<NegativeCandidate> cands;
      for (std::size_t o = 0; o < batch.size(); ++o) {
        if (o == b) continue;
        for (auto j : pos[o]) cands.push_back({j, dot(z[b], cache_[j])});
      }
      auto negs = mine_inbatch_negatives(batch[b], cands, data_.gt, mcfg, rng_);
      LabelTriples t;
      t.label_slot = b;
      for (auto i : pos[b]) t.pos_slots.push_back(slot_of(i));
      for (auto j : negs) t.neg_slots.push_back(slot_of(j));
      out.sets.push_back(std::move(t));
    }
    return out;
  }

  /// Loss of a mined batch under the current parameters.
  double loss(const MinedBatch& m) const {
    std::vector<Matrix> zs, xs;
    for (auto l : m.labels) zs.push_back(embed_vector(entity_bag(state_, data_.labels[l])));
    for (auto i : m.points) xs.push_back(embed_vector(entity_bag(state_, data_.points[i])));
    return contrastive_loss<Matrix>(zs, xs, m.sets, state_.config.mining.margin1).values()[0];
  }

  /// One optimizer step; returns the loss before the update.
  double step(const MinedBatch& m, double lr, std::size_t* terms = nullptr) {
    Tape tape;
    auto enc = lift(tape, state_.encoder);
    auto sa = lift(tape, state_.self_attn);
    const bool use_sa = state_.config.self_attention;
    std::vector<Var> zs, xs;
    for (auto l : m.labels) zs.push_back(embed_vector(embed_bag<Var>(data_.labels[l], enc, sa, use_sa)));
    for (auto i : m.points) xs.push_back(embed_vector(embed_bag<Var>(data_.points[i], enc, sa, use_sa)));
    Var loss = contrastive_loss<Var>(zs, xs, m.sets, state_.config.mining.margin1, terms);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) return value;
    tape.backward(loss);
    std::vector<Matrix> grads = {tape.grad(enc.token_table), tape.grad(enc.visual_w), tape.grad(enc.visual_b)};
    if (use_sa) {
      for (Var v : {sa.q, sa.k, sa.v, sa.o}) grads.push_back(tape.grad(v));
    }
    opt_.step(grads, lr);
    return value;
  }

  void run(TrainLog* log) {
    const auto& sched = state_.config.module1;
    const std::size_t total = sched.epochs * steps_per_epoch();
    const auto lr = OneCycleCosine::with_capped_warmup(sched.lr, total, state_.config.warmup_steps);
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
      if (epoch % state_.config.cache_refresh_epochs == 0) refresh_cache();
      auto order = trainable_labels_;
      std::shuffle(order.begin(), order.end(), rng_);
      EpochCounters counters;
      const std::size_t first = log ? log->module1_loss.size() : 0;
      for (const auto& batch : detail::chunk(order, sched.batch)) {
        MinedBatch m = mine(batch);
        const double value = step(m, lr(t), &counters.module1_terms);
        detail::check_finite_loss(value, "module1", epoch, t);
        ++t;
        ++counters.steps;
        if (log) log->module1_loss.push_back(value);
      }
      if (log) {
        log->module1_epochs.push_back(counters);
        if (log->progress)
          *log->progress << "module1 epoch " << epoch + 1 << "/" << sched.epochs
                         << " loss " << detail::mean_of(log->module1_loss, first) << "\n";
      }
    }
  }

 private:
  ModelState& state_;
  const Dataset& data_;
  std::mt19937_64 rng_;
  std::vector<std::vector<std::uint32_t>> label_pos_;
  std::vector<std::uint32_t> trainable_labels_;
  std::vector<std::uint32_t> train_points_;
  std::vector<Matrix> cache_;
  detail::ParamGroup group_;
  AdamW opt_;
};

/// Module I on a fresh state. Zero epochs leaves the parameters untouched.
inline ModelState run_module1(ModelState state, const Dataset& data, TrainLog* log = nullptr) {
  require_phase(state, Phase::initialized, "run_module1");
  {
    Module1Trainer trainer(state, data);
    trainer.run(log);
  }
  state.phase = Phase::module1;
  return state;
}

// ---------------------------------------------------------------------------
// Module II

/// Index over the labels of `data` under the current state: bag rows plus
/// centroids of training positives, or one vector per label.
inline AugmentedIndex build_label_index(const ModelState& s, const Dataset& data) {
  const auto params = s.config.index_params(data.labels.size());
  if (s.config.retrieval == RetrievalKind::vec) {
    std::vector<Matrix> vecs;
    vecs.reserve(data.labels.size());
    for (const auto& e : data.labels) vecs.push_back(embed_vector(entity_bag(s, e)));
    return build_vec_only_index(vecs, params);
  }
  std::vector<Matrix> bags;
  bags.reserve(data.labels.size());
  for (const auto& e : data.labels) bags.push_back(entity_bag(s, e));
  const auto train = data.split_indices(false);
  const auto point_vecs = embed_points(s, data.points, train);
  const auto pos = label_positives(data.gt, data.train_mask());
  std::vector<std::optional<Matrix>> cents(data.labels.size());
  for (std::size_t l = 0; l < pos.size(); ++l) cents[l] = centroid(pos[l], point_vecs);
  return build_index(bags, cents, params);
}

struct Module2Output {
  std::vector<Shortlist> shortlists;  // per point; empty for test points
  AugmentedIndex index;
};

inline Module2Output run_module2(ModelState& state, const Dataset& data) {
  require_phase(state, Phase::module1, "run_module2");
  Module2Output out{std::vector<Shortlist>(data.points.size()), build_label_index(state, data)};
  for (auto i : data.split_indices(false)) {
    Matrix x = embed_vector(entity_bag(state, data.points[i]));
    out.shortlists[i] = out.index.query(x.values(), state.config.shortlist_cap);
  }
  state.phase = Phase::module2;
  return out;
}

inline constexpr std::string_view kShortlistMagic = "MMXCSHRT";

inline void write_shortlists(std::ostream& os, const std::vector<Shortlist>& lists) {
  BinaryWriter w(os);
  w.header(kShortlistMagic, 1);
  w.u64(lists.size());
  for (const auto& l : lists) {
    w.u32(static_cast<std::uint32_t>(l.size()));
    for (const auto& e : l) {
      w.u32(e.label);
      w.f64(e.a);
    }
  }
  w.check();
}

inline std::vector<Shortlist> read_shortlists(std::istream& is) {
  BinaryReader r(is);
  if (r.header(kShortlistMagic) != 1) throw FormatError("shortlists: unsupported version");
  const std::uint64_t n = r.u64();
  if (n > (1ull << 32)) throw FormatError("shortlists: bad count");
  std::vector<Shortlist> lists(n);
  for (auto& l : lists) {
    const std::uint32_t m = r.u32();
    if (m > (1u << 24)) throw FormatError("shortlists: list too long");
    l.resize(m);
    for (auto& e : l) {
      e.label = r.u32();
      e.a = r.f64();
    }
  }
  return lists;
}

// ---------------------------------------------------------------------------
// Module III

/// Fresh cross-attention, free vectors and blend weights; encoders and the
/// self-attention block carry over unchanged.
inline ModelState run_module3(ModelState state) {
  require_phase(state, Phase::module2, "run_module3");
  const auto& cfg = state.config;
  std::mt19937_64 rng(cfg.seed ^ 0x6d6f64756c6533ull);
  state.cross_attn = init_identity(cfg.dim);
  state.bank = init_bank(state.bank.labels(), cfg.dim, cfg.alpha_one ? 1.0 : 0.5, rng);
  if (cfg.adapt == AdaptMode::concat) state.concat = init_concat(cfg.dim, rng);
  state.phase = Phase::module3;
  return state;
}

// ---------------------------------------------------------------------------
// Module IV

/// Datapoint-wise fine-tuning of everything against the cosine embedding loss
/// over sampled positives and shortlist negatives.
class Module4Trainer {
 public:
  Module4Trainer(ModelState& state, const Dataset& data, const std::vector<Shortlist>& shortlists)
      : state_(state), data_(data), shortlists_(shortlists), rng_(state.config.seed ^ 0x6d6f64756c6534ull) {
    if (shortlists.size() != data.points.size()) throw DimensionError("Module4Trainer: shortlist count mismatch");
    for (auto i : data.split_indices(false))
      if (!data.gt.positives[i].empty()) points_.push_back(i);
    const auto& cfg = state_.config;
    group_.add(state_.encoder.token_table);
    group_.add(state_.encoder.visual_w);
    group_.add(state_.encoder.visual_b, false);
    if (cfg.self_attention) {
      for (Matrix* m : {&state_.self_attn.q, &state_.self_attn.k, &state_.self_attn.v, &state_.self_attn.o})
        group_.add(*m);
    }
    if (cfg.adapt == AdaptMode::cross_attention) {
      for (Matrix* m : {&state_.cross_attn.q, &state_.cross_attn.k, &state_.cross_attn.v, &state_.cross_attn.o})
        group_.add(*m);
    } else if (cfg.adapt == AdaptMode::concat) {
      group_.add(state_.concat.w1);
      group_.add(state_.concat.b1, false);
      group_.add(state_.concat.w2);
      group_.add(state_.concat.b2, false);
    }
    if (!cfg.alpha_one) {
      group_.add(state_.bank.eta);
      group_.add(state_.bank.alpha, false);
    }
    opt_ = group_.make_optimizer(cfg);
  }

  const std::vector<std::uint32_t>& trainable_points() const noexcept { return points_; }
  std::mt19937_64& rng() noexcept { return rng_; }

  std::size_t steps_per_epoch() const {
    const std::size_t b = state_.config.module4.batch;
    return (points_.size() + b - 1) / b;
  }

  struct Batch {
    std::vector<std::uint32_t> points;
    std::vector<Module4Sample> samples;
  };

  Batch sample(std::span<const std::uint32_t> points) {
    Batch b;
    for (auto i : points) {
      std::vector<std::uint32_t> sl;
      for (const auto& e : shortlists_[i]) sl.push_back(e.label);
      b.points.push_back(i);
      b.samples.push_back(sample_module4(i, sl, data_.gt, state_.config.mining, rng_));
    }
    return b;
  }

  double loss(const Batch& b) const {
    Tape tape;
    return forward(tape, b, nullptr).value()[0];
  }

  double step(const Batch& b, double lr, std::size_t* adaptations = nullptr) {
    Tape tape;
    Leaves leaves;
    Var loss = forward(tape, b, &leaves, adaptations);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) return value;
    tape.backward(loss);
    std::vector<Matrix> grads;
    for (Var v : leaves.ordered) grads.push_back(tape.grad(v));
    opt_.step(grads, lr);
    state_.bank.clamp_alpha();
    return value;
  }

  void run(TrainLog* log) {
    const auto& sched = state_.config.module4;
    const std::size_t total = sched.epochs * steps_per_epoch();
    const auto lr = OneCycleCosine::with_capped_warmup(sched.lr, total, state_.config.warmup_steps);
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
      auto order = points_;
      std::shuffle(order.begin(), order.end(), rng_);
      EpochCounters counters;
      const std::size_t first = log ? log->module4_loss.size() : 0;
      for (const auto& chunk : detail::chunk(order, sched.batch)) {
        Batch b = sample(chunk);
        const double value = step(b, lr(t), &counters.module4_adaptations);
        detail::check_finite_loss(value, "module4", epoch, t);
        ++t;
        ++counters.steps;
        if (log) log->module4_loss.push_back(value);
      }
      if (log) {
        log->module4_epochs.push_back(counters);
        if (log->progress)
          *log->progress << "module4 epoch " << epoch + 1 << "/" << sched.epochs
                         << " loss " << detail::mean_of(log->module4_loss, first) << "\n";
      }
    }
  }

 private:
  struct Leaves {
    std::vector<Var> ordered;  // matches the optimizer registration order
  };

  // Builds the batch loss. Lifted parameters are recorded in `leaves` (in
  // optimizer order) when given; otherwise the tape only serves evaluation.
  Var forward(Tape& tape, const Batch& b, Leaves* leaves, std::size_t* adaptations = nullptr) const {
    const auto& cfg = state_.config;
    auto enc = lift(tape, state_.encoder);
    auto sa = lift(tape, state_.self_attn);
    AdaptView<Var> av;
    av.mode = cfg.adapt;
    if (av.mode == AdaptMode::cross_attention) av.cross.emplace(lift(tape, state_.cross_attn));
    if (av.mode == AdaptMode::concat) av.concat.emplace(lift(tape, state_.concat));
    Var eta = tape.leaf(state_.bank.eta);
    Var alpha = tape.leaf(state_.bank.alpha);
    if (leaves) {
      leaves->ordered = {enc.token_table, enc.visual_w, enc.visual_b};
      if (cfg.self_attention) leaves->ordered.insert(leaves->ordered.end(), {sa.q, sa.k, sa.v, sa.o});
      if (av.cross) leaves->ordered.insert(leaves->ordered.end(), {av.cross->q, av.cross->k, av.cross->v, av.cross->o});
      if (av.concat)
        leaves->ordered.insert(leaves->ordered.end(), {av.concat->w1, av.concat->b1, av.concat->w2, av.concat->b2});
      if (!cfg.alpha_one) leaves->ordered.insert(leaves->ordered.end(), {eta, alpha});
    }

    // Label bags and classifiers are shared by every point in the batch.
    std::map<std::uint32_t, std::pair<PreparedLabel<Var>, Var>> label_memo;  // label -> (prepared, w)
    auto label_terms = [&](std::uint32_t l) -> const std::pair<PreparedLabel<Var>, Var>& {
      auto it = label_memo.find(l);
      if (it != label_memo.end()) return it->second;
      auto z = prepare_label(embed_bag<Var>(data_.labels[l], enc, sa, cfg.self_attention), av);
      Var w = cfg.alpha_one ? z.vec : classifier<Var>(z.vec, select_row(eta, l), select_row(alpha, l));
      return label_memo.emplace(l, std::pair{std::move(z), w}).first->second;
    };

    std::vector<ScoredPair<Var>> pairs;
    for (std::size_t k = 0; k < b.points.size(); ++k) {
      auto x = prepare_point(embed_bag<Var>(data_.points[b.points[k]], enc, sa, cfg.self_attention), av);
      auto score = [&](std::uint32_t l, bool positive) {
        const auto& [z, w] = label_terms(l);
        pairs.push_back({inner(w, adapt<Var>(x, z, av)), positive});
        if (adaptations) ++*adaptations;
      };
      for (auto l : b.samples[k].positives) score(l, true);
      for (auto l : b.samples[k].negatives) score(l, false);
    }
    return cosine_embedding_loss<Var>(pairs, cfg.mining.margin4);
  }

  ModelState& state_;
  const Dataset& data_;
  const std::vector<Shortlist>& shortlists_;
  std::mt19937_64 rng_;
  std::vector<std::uint32_t> points_;
  detail::ParamGroup group_;
  AdamW opt_;
};

inline ModelState run_module4(ModelState state, const Dataset& data, const std::vector<Shortlist>& shortlists,
                              TrainLog* log = nullptr) {
  require_phase(state, Phase::module3, "run_module4");
  {
    Module4Trainer trainer(state, data, shortlists);
    trainer.run(log);
  }
  if (state.config.alpha_one) state.bank.alpha.fill(1.0);
  state.phase = Phase::frozen;
  return state;
}

// ---------------------------------------------------------------------------
// prediction

struct PredictCounters {
  std::size_t index_queries = 0;
  std::size_t classifier_evals = 0;
};

/// Scores test entities against a frozen state and a built index. In
/// retrieval-only mode the shortlist similarity is the score.
class Predictor {
 public:
  enum class Mode { full, retrieval_only };

  Predictor(const ModelState& state, const AugmentedIndex& index, const std::vector<Entity>& labels,
            Mode mode = Mode::full)
      : state_(state), index_(index), mode_(mode), adapt_(adapt_view(state)) {
    if (mode == Mode::full) {
      require_phase(state, Phase::frozen, "Predictor");
      labels_.reserve(labels.size());
      w_.reserve(labels.size());
      for (std::size_t l = 0; l < labels.size(); ++l) {
        labels_.push_back(prepare_label(entity_bag(state, labels[l]), adapt_));
        w_.push_back(classifier(labels_.back().vec, state.bank, l, state.config.alpha_one));
      }
    } else if (state.phase == Phase::initialized) {
      throw PhaseError("Predictor: retrieval needs at least a Module I state");
    }
  }

  std::vector<ScoreTriple> predict(const Entity& e, std::size_t k, PredictCounters* counters = nullptr) const {
    if (k == 0) return {};
    Matrix x_bag = entity_bag(state_, e);
    std::optional<PreparedPoint<Matrix>> px;
    if (mode_ == Mode::full) px.emplace(prepare_point(x_bag, adapt_));
    Matrix x = px ? px->vec : embed_vector(x_bag);
    Shortlist sl = index_.query(x.values(), state_.config.shortlist_cap);
    if (counters) ++counters->index_queries;
    std::vector<ScoreTriple> out;
    out.reserve(sl.size());
    for (const auto& entry : sl) {
      if (mode_ == Mode::retrieval_only) {
        out.push_back({entry.label, entry.a, 0.0, entry.a});
        continue;
      }
      const double c = dot(w_[entry.label], adapt(*px, labels_[entry.label], adapt_));
      if (counters) ++counters->classifier_evals;
      out.push_back({entry.label, entry.a, c, fuse(c, entry.a, state_.config.beta)});
    }
    std::sort(out.begin(), out.end(), [](const ScoreTriple& a, const ScoreTriple& b) {
      return a.s != b.s ? a.s > b.s : a.label < b.label;
    });
    if (out.size() > k) out.resize(k);
    return out;
  }

 private:
  const ModelState& state_;
  const AugmentedIndex& index_;
  Mode mode_;
  AdaptView<Matrix> adapt_;
  std::vector<PreparedLabel<Matrix>> labels_;
  std::vector<Matrix> w_;
};

// ---------------------------------------------------------------------------
// driver

enum class StopAfter { module1, module2, module3, module4 };

inline StopAfter parse_stop_after(const std::string& s) {
  if (s == "module1") return StopAfter::module1;
  if (s == "module2") return StopAfter::module2;
  if (s == "module3") return StopAfter::module3;
  if (s == "module4" || s.empty()) return StopAfter::module4;
  throw ConfigError("unknown module '" + s + "' (expected module1..module4)");
}

struct PipelineResult {
  ModelState state;
  std::vector<Shortlist> shortlists;     // from Module II
  std::optional<AugmentedIndex> index;   // for prediction with the final state
};

/// Runs Modules I to IV (or fewer). The returned index is built from the
/// final state: after Module IV the label side is re-embedded with the
/// fine-tuned encoders.
inline PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& cfg,
                                   StopAfter stop = StopAfter::module4, TrainLog* log = nullptr) {
  data.validate();
  PipelineResult r;
  r.state = init_model(data.dims, data.labels.size(), cfg);
  r.state = run_module1(std::move(r.state), data, log);
  if (stop == StopAfter::module1) return r;
  Module2Output m2 = run_module2(r.state, data);
  r.shortlists = std::move(m2.shortlists);
  r.index.emplace(std::move(m2.index));
  if (stop == StopAfter::module2) return r;
  r.state = run_module3(std::move(r.state));
  if (stop == StopAfter::module3) return r;
  r.state = run_module4(std::move(r.state), data, r.shortlists, log);
  r.index.emplace(build_label_index(r.state, data));
  return r;
}

/// One ranked list per requested point.
inline std::vector<std::vector<ScoreTriple>> predict_points(const Predictor& p, const std::vector<Entity>& points,
                                                            std::span<const std::uint32_t> which, std::size_t k,
                                                            PredictCounters* counters = nullptr) {
  std::vector<std::vector<ScoreTriple>> out;
  out.reserve(which.size());
  for (auto i : which) out.push_back(p.predict(points[i], k, counters));
  return out;
}

}  // namespace mmxc
