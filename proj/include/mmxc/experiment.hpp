#pragma once

// Prediction files, held-out evaluation and ablation runs.

#include <fstream>

#include "mmxc/metrics.hpp"
#include "mmxc/trainer.hpp"

namespace mmxc {

/// Held-out points that have at least one positive, with their positives.
struct EvalSet {
  std::vector<std::uint32_t> points;
  PositiveSets positives;
};

inline EvalSet make_eval_set(const Dataset& d) {
  EvalSet e;
  for (auto i : d.split_indices(true)) {
    if (d.gt.positives[i].empty()) continue;
    e.points.push_back(i);
    e.positives.push_back(d.gt.positives[i]);
  }
  return e;
}

struct PredictionRow {
  std::string point;
  std::string label;
  ScoreTriple score;
};

/// point, label, s, c, a per line (tab-separated, exact round-trip formatting).
inline void write_predictions(std::ostream& os, const Dataset& d, std::span<const std::uint32_t> points,
                              const std::vector<std::vector<ScoreTriple>>& preds) {
  if (points.size() != preds.size()) throw DimensionError("write_predictions: count mismatch");
  os << "point\tlabel\ts\tc\ta\n";
  os << std::setprecision(17);
  for (std::size_t k = 0; k < points.size(); ++k)
    for (const auto& t : preds[k])
      os << d.points[points[k]].id << '\t' << d.labels[t.label].id << '\t' << t.s << '\t' << t.c << '\t' << t.a << '\n';
}

/// Reads a prediction file back into rankings aligned with the dataset.
/// Points are returned in order of first appearance.
inline std::pair<std::vector<std::uint32_t>, std::vector<Ranking>> read_predictions(std::istream& is, const Dataset& d) {
  std::unordered_map<std::string, std::uint32_t> point_of, label_of;
  for (std::size_t i = 0; i < d.points.size(); ++i) point_of[d.points[i].id] = static_cast<std::uint32_t>(i);
  for (std::size_t l = 0; l < d.labels.size(); ++l) label_of[d.labels[l].id] = static_cast<std::uint32_t>(l);
  std::vector<std::uint32_t> points;
  std::vector<Ranking> ranks;
  std::unordered_map<std::uint32_t, std::size_t> slot;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.rfind("point\t", 0) == 0) continue;
    std::istringstream fields(line);
    std::string p, l;
    double s = 0, c = 0, a = 0;
    if (!(std::getline(fields, p, '\t') && std::getline(fields, l, '\t') && (fields >> s >> c >> a)))
      throw FormatError("predictions: malformed line " + std::to_string(lineno));
    auto pi = point_of.find(p);
    auto li = label_of.find(l);
    if (pi == point_of.end() || li == label_of.end())
      throw FormatError("predictions: unknown id on line " + std::to_string(lineno));
    auto [it, inserted] = slot.try_emplace(pi->second, points.size());
    if (inserted) {
      points.push_back(pi->second);
      ranks.emplace_back();
    }
    ranks[it->second].push_back({li->second, s});
  }
  return {points, ranks};
}

struct ExperimentResult {
  std::string name;
  MetricSummary metrics;
  PredictCounters counters;
  std::size_t test_points = 0;
};

/// Scores the evaluation set with a trained pipeline.
inline ExperimentResult evaluate_result(const Dataset& d, const PipelineResult& r, Predictor::Mode mode,
                                        std::size_t k = 100) {
  if (!r.index) throw PhaseError("evaluate_result: no index (stopped after Module I?)");
  const EvalSet es = make_eval_set(d);
  Predictor p(r.state, *r.index, d.labels, mode);
  ExperimentResult out;
  auto preds = predict_points(p, d.points, es.points, k, &out.counters);
  std::vector<Ranking> ranks;
  ranks.reserve(preds.size());
  for (const auto& x : preds) ranks.push_back(to_ranking(x));
  out.metrics = evaluate(ranks, es.positives, d.labels.size());
  out.test_points = es.points.size();
  return out;
}

/// Trains and evaluates one named variant on top of `base`.
inline ExperimentResult run_variant(const Dataset& d, const PipelineConfig& base, const AblationVariant& v,
                                    TrainLog* log = nullptr) {
  const PipelineConfig cfg = apply_ablation(base, v);
  const PipelineResult r = run_pipeline(d, cfg, v.module1_only ? StopAfter::module2 : StopAfter::module4, log);
  ExperimentResult out =
      evaluate_result(d, r, v.module1_only ? Predictor::Mode::retrieval_only : Predictor::Mode::full);
  out.name = v.name;
  return out;
}

}  // namespace mmxc
