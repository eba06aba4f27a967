#include <gtest/gtest.h>

#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace mmxc;

namespace {

struct Fixture {
  Dataset data = generate_synthetic(test::tiny_spec());
  PipelineConfig cfg = test::tiny_config();

  ModelState fresh() const { return init_model(data.dims, data.labels.size(), cfg); }
};

bool same_encoders(const ModelState& a, const ModelState& b) {
  return a.encoder.token_table == b.encoder.token_table && a.encoder.visual_w == b.encoder.visual_w &&
         a.encoder.visual_b == b.encoder.visual_b && a.self_attn.q == b.self_attn.q && a.self_attn.k == b.self_attn.k &&
         a.self_attn.v == b.self_attn.v && a.self_attn.o == b.self_attn.o;
}

}  // namespace

TEST(Module1, ZeroEpochsLeavesParametersUntouched) {
  Fixture f;
  f.cfg.module1.epochs = 0;
  ModelState s0 = f.fresh();
  ModelState s1 = run_module1(s0, f.data);
  EXPECT_EQ(s1.phase, Phase::module1);
  s1.phase = s0.phase;
  EXPECT_TRUE(s1 == s0);
}

TEST(Module1, OneStepLowersTheBatchLoss) {
  Fixture f;
  ModelState s = f.fresh();
  Module1Trainer tr(s, f.data);
  std::vector<std::uint32_t> batch(tr.trainable_labels().begin(), tr.trainable_labels().begin() + 2);
  MinedBatch m = tr.mine(batch);
  const double before = tr.loss(m);
  ASSERT_GT(before, 0.0);
  std::size_t terms = 0;
  EXPECT_DOUBLE_EQ(tr.step(m, 1e-3, &terms), before);
  EXPECT_LT(tr.loss(m), before);
  EXPECT_GT(terms, 0u);
}

TEST(Module1, LeavesClassifierStateAlone) {
  Fixture f;
  ModelState s = run_module1(f.fresh(), f.data);
  for (double a : s.bank.alpha.values()) EXPECT_EQ(a, 0.0);
  EXPECT_EQ(s.cross_attn.q, Matrix::identity(f.cfg.dim));
  EXPECT_EQ(s.cross_attn.o, Matrix::identity(f.cfg.dim));
  EXPECT_FALSE(same_encoders(s, f.fresh()));
}

TEST(Module1, NonFiniteParametersAbortTraining) {
  Fixture f;
  ModelState s = f.fresh();
  s.encoder.token_table.fill(std::numeric_limits<double>::quiet_NaN());
  s.encoder.visual_w.fill(std::numeric_limits<double>::quiet_NaN());
  // normalization of a NaN embedding or the loss check, whichever comes first
  EXPECT_THROW(run_module1(s, f.data), std::exception);
}

TEST(Phases, OutOfOrderCallsAreRejected) {
  Fixture f;
  ModelState s = f.fresh();
  EXPECT_THROW(run_module2(s, f.data), PhaseError);
  EXPECT_THROW(run_module3(s), PhaseError);
  EXPECT_THROW(run_module4(s, f.data, {}), PhaseError);
  s = run_module1(std::move(s), f.data);
  EXPECT_THROW(run_module1(s, f.data), PhaseError);
  auto m2 = run_module2(s, f.data);
  EXPECT_EQ(s.phase, Phase::module2);
  EXPECT_THROW(Predictor(s, m2.index, f.data.labels), PhaseError);
  EXPECT_NO_THROW(Predictor(s, m2.index, f.data.labels, Predictor::Mode::retrieval_only));
  EXPECT_THROW(Predictor(f.fresh(), m2.index, f.data.labels, Predictor::Mode::retrieval_only), PhaseError);
}

TEST(Module3, InitializesClassifiersWithoutTouchingEncoders) {
  Fixture f;
  ModelState s = run_module1(f.fresh(), f.data);
  run_module2(s, f.data);
  ModelState s3 = run_module3(s);
  EXPECT_EQ(s3.phase, Phase::module3);
  EXPECT_TRUE(same_encoders(s, s3));
  EXPECT_EQ(s3.cross_attn.k, Matrix::identity(f.cfg.dim));
  for (double a : s3.bank.alpha.values()) EXPECT_EQ(a, 0.5);
  const double bound = std::sqrt(6.0 / (2.0 * static_cast<double>(f.cfg.dim)));
  for (double v : s3.bank.eta.values()) EXPECT_LE(std::abs(v), bound);
  EXPECT_EQ(s3.bank.eta.rows(), f.data.labels.size());
}

TEST(Module4, OneStepLowersTheBatchLoss) {
  Fixture f;
  ModelState s = run_module1(f.fresh(), f.data);
  auto m2 = run_module2(s, f.data);
  s = run_module3(std::move(s));
  Module4Trainer tr(s, f.data, m2.shortlists);
  std::vector<std::uint32_t> pts(tr.trainable_points().begin(), tr.trainable_points().begin() + 4);
  auto b = tr.sample(pts);
  const double before = tr.loss(b);
  ASSERT_GT(before, 0.0);
  std::size_t adaptations = 0;
  EXPECT_DOUBLE_EQ(tr.step(b, 1e-3, &adaptations), before);
  EXPECT_LT(tr.loss(b), before);
  EXPECT_GT(adaptations, 0u);
}

TEST(Module4, AlphaOneKeepsFreeVectorsUnused) {
  Fixture f;
  f.cfg.alpha_one = true;
  auto r = run_pipeline(f.data, f.cfg, StopAfter::module3);
  const Matrix eta = r.state.bank.eta;
  ModelState s = run_module4(r.state, f.data, r.shortlists);
  for (double a : s.bank.alpha.values()) EXPECT_EQ(a, 1.0);
  EXPECT_EQ(s.bank.eta, eta);
}

TEST(Module4, AlphaStaysInUnitInterval) {
  Fixture f;
  f.cfg.module4.lr = 0.5;
  auto r = run_pipeline(f.data, f.cfg);
  for (double a : r.state.bank.alpha.values()) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Prediction, MatchesBruteForceScoringOfTheShortlist) {
  Fixture f;
  auto r = run_pipeline(f.data, f.cfg);
  const ModelState& s = r.state;
  Predictor p(s, *r.index, f.data.labels);
  const auto av = adapt_view(s);
  for (auto i : f.data.split_indices(true)) {
    Matrix x_bag = entity_bag(s, f.data.points[i]);
    Matrix x = embed_vector(x_bag);
    auto sl = oracle::max_over_representatives(r.index->entries(), r.index->tags(), x.values(), f.cfg.shortlist_cap);
    std::vector<ScoreTriple> want;
    for (const auto& e : sl) {
      Matrix z_bag = entity_bag(s, f.data.labels[e.label]);
      Matrix w = classifier(embed_vector(z_bag), s.bank, e.label);
      const double c = oracle::scalar_dot(w, adapt(x_bag, z_bag, av));
      want.push_back({e.label, e.a, c, s.config.beta * c + (1.0 - s.config.beta) * e.a});
    }
    std::sort(want.begin(), want.end(), [](const ScoreTriple& a, const ScoreTriple& b) {
      return a.s != b.s ? a.s > b.s : a.label < b.label;
    });
    want.resize(std::min<std::size_t>(want.size(), 5));
    auto got = p.predict(f.data.points[i], 5);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_EQ(got[k].label, want[k].label);
      EXPECT_NEAR(got[k].s, want[k].s, 1e-12);
      EXPECT_NEAR(got[k].c, want[k].c, 1e-12);
      EXPECT_EQ(got[k].a, want[k].a);
    }
  }
}

TEST(Prediction, BetaZeroFollowsSimilarityOrder) {
  Fixture f;
  auto r = run_pipeline(f.data, f.cfg);
  r.state.config.beta = 0.0;
  Predictor p(r.state, *r.index, f.data.labels);
  for (auto i : f.data.split_indices(true)) {
    Matrix x = embed_vector(entity_bag(r.state, f.data.points[i]));
    Shortlist sl = r.index->query(x.values(), f.cfg.shortlist_cap);
    auto got = p.predict(f.data.points[i], 100);
    ASSERT_EQ(got.size(), sl.size());
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_EQ(got[k].label, sl[k].label);
  }
}

TEST(Prediction, CostCounters) {
  Fixture f;
  TrainLog log;
  auto r = run_pipeline(f.data, f.cfg, StopAfter::module4, &log);
  const auto test = f.data.split_indices(true);
  PredictCounters c;
  auto preds = predict_points(Predictor(r.state, *r.index, f.data.labels), f.data.points, test, 5, &c);
  EXPECT_EQ(c.index_queries, test.size());
  EXPECT_LE(c.classifier_evals, f.cfg.shortlist_cap * test.size());
  EXPECT_GT(c.classifier_evals, 0u);

  const auto& m = f.cfg.mining;
  for (const auto& e : log.module1_epochs)
    EXPECT_LE(e.module1_terms, EpochCounters::module1_bound(f.data.labels.size(), m));
  for (const auto& e : log.module4_epochs)
    EXPECT_LE(e.module4_adaptations, EpochCounters::module4_bound(f.data.points.size(), m));
  ASSERT_EQ(log.module1_epochs.size(), f.cfg.module1.epochs);
  ASSERT_EQ(log.module4_epochs.size(), f.cfg.module4.epochs);

  PredictCounters none;
  Predictor p(r.state, *r.index, f.data.labels);
  EXPECT_TRUE(p.predict(f.data.points[test[0]], 0, &none).empty());
  EXPECT_EQ(none.index_queries, 0u);
}

TEST(Prediction, RetrievalOnlyScoresAreSimilarities) {
  Fixture f;
  auto r = run_pipeline(f.data, f.cfg, StopAfter::module2);
  Predictor p(r.state, *r.index, f.data.labels, Predictor::Mode::retrieval_only);
  const auto& e = f.data.points[f.data.split_indices(true).front()];
  for (const auto& t : p.predict(e, 10)) {
    EXPECT_EQ(t.s, t.a);
    EXPECT_EQ(t.c, 0.0);
  }
}

TEST(Pipeline, DeterministicInExactMode) {
  Fixture f;
  auto a = run_pipeline(f.data, f.cfg), b = run_pipeline(f.data, f.cfg);
  EXPECT_TRUE(a.state == b.state);
  std::stringstream sa, sb;
  a.state.write(sa);
  b.state.write(sb);
  EXPECT_EQ(sa.str(), sb.str());
  const auto test = f.data.split_indices(true);
  EXPECT_EQ(predict_points(Predictor(a.state, *a.index, f.data.labels), f.data.points, test, 10),
            predict_points(Predictor(b.state, *b.index, f.data.labels), f.data.points, test, 10));
}

TEST(Pipeline, StopAfterParsing) {
  EXPECT_EQ(parse_stop_after("module2"), StopAfter::module2);
  EXPECT_EQ(parse_stop_after(""), StopAfter::module4);
  EXPECT_THROW(parse_stop_after("module5"), ConfigError);
}

TEST(Artifacts, CheckpointAndShortlistRoundTrip) {
  Fixture f;
  auto r = run_pipeline(f.data, f.cfg);
  std::stringstream ck;
  r.state.write(ck);
  EXPECT_TRUE(ModelState::read(ck) == r.state);
  std::string bytes = ck.str();
  std::istringstream cut(bytes.substr(0, bytes.size() / 3));
  EXPECT_THROW(ModelState::read(cut), FormatError);

  std::stringstream sl;
  write_shortlists(sl, r.shortlists);
  EXPECT_EQ(read_shortlists(sl), r.shortlists);
  std::istringstream bad("MMXCDATA\x01\x00\x00\x00");
  EXPECT_THROW(read_shortlists(bad), FormatError);
}

TEST(Optimizer, AdamWMatchesHandComputation) {
  Matrix p(1, 2, std::vector<double>{1.0, -2.0});
  AdamW opt({0.9, 0.999, 1e-8, 0.1});
  opt.add(&p);
  const double lr = 0.01;
  std::vector<Matrix> g{Matrix(1, 2, std::vector<double>{0.5, -1.0})};
  opt.step(g, lr);
  // first step: mhat = g, vhat = g^2, so the update is lr * sign(g) (up to eps)
  EXPECT_NEAR(p[0], 1.0 * (1 - lr * 0.1) - lr * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 * (1 - lr * 0.1) + lr * 1.0 / (1.0 + 1e-8), 1e-15);
  const double p0 = p[0];
  g[0] = Matrix(1, 2, std::vector<double>{0.25, 0.0});
  opt.step(g, lr);
  const double m = 0.9 * 0.05 + 0.1 * 0.25, v = 0.999 * 0.00025 + 0.001 * 0.0625;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0], p0 * (1 - lr * 0.1) - lr * mhat / (std::sqrt(vhat) + 1e-8), 1e-15);
  EXPECT_THROW(opt.step({}, lr), DimensionError);
}

TEST(Optimizer, OneCycleCosineShape) {
  OneCycleCosine s(1.0, 100, 10);
  EXPECT_DOUBLE_EQ(s(0), 0.1);
  EXPECT_DOUBLE_EQ(s(9), 1.0);
  EXPECT_DOUBLE_EQ(s(10), 1.0);
  EXPECT_NEAR(s(55), 0.5, 1e-12);
  EXPECT_NEAR(s(99), 0.5 * (1 + std::cos(std::numbers::pi * 89.0 / 90.0)), 1e-12);
  for (std::size_t t = 11; t < 100; ++t) EXPECT_LE(s(t), s(t - 1));
  EXPECT_EQ(OneCycleCosine::with_capped_warmup(1.0, 100, 1000).warmup(), 10u);
  EXPECT_EQ(OneCycleCosine::with_capped_warmup(1.0, 100000, 1000).warmup(), 1000u);
}
