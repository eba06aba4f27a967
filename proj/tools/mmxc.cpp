// Command-line front end: data preparation, training, indexing, prediction,
// evaluation and ablation runs.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mmxc/mmxc.hpp"

namespace {

using namespace mmxc;

/// Flags shared by every subcommand that builds a PipelineConfig.
struct ConfigFlags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  bool exact_ann = false;
  bool alpha_one = false;
  std::optional<double> beta;
  std::optional<std::size_t> shortlist_cap;
  std::vector<std::string> sets;  // key=value overrides

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value configuration file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "random seed");
    app->add_flag("--exact-ann", exact_ann, "use the exact scan instead of HNSW");
    app->add_flag("--alpha-one", alpha_one, "use the label embedding as classifier (alpha = 1)");
    app->add_option("--beta", beta, "fusion weight of the classifier score")->check(CLI::Range(0.0, 1.0));
    app->add_option("--shortlist-cap", shortlist_cap, "labels retrieved per datapoint")->check(CLI::PositiveNumber);
    app->add_option("--set", sets, "extra key=value override (repeatable)");
  }

  PipelineConfig build(PipelineConfig cfg = {}) const {
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      apply_config_text(cfg, in);
    }
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (exact_ann) cfg.index = IndexChoice::exact;
    if (alpha_one) cfg.alpha_one = true;
    if (beta) cfg.beta = *beta;
    if (shortlist_cap) cfg.shortlist_cap = *shortlist_cap;
    cfg.validate();
    return cfg;
  }

  /// Applies only the flags that matter after training.
  void apply_inference(PipelineConfig& cfg) const {
    if (exact_ann) cfg.index = IndexChoice::exact;
    if (alpha_one) cfg.alpha_one = true;
    if (beta) cfg.beta = *beta;
    if (shortlist_cap) cfg.shortlist_cap = *shortlist_cap;
  }
};

template <class T>
void save(const T& obj, const std::string& path) {
  auto os = open_out(path);
  obj.write(os);
}

AugmentedIndex load_index(const std::string& path) {
  auto is = open_in(path);
  return AugmentedIndex::read(is);
}

void print_metrics(const std::vector<std::pair<std::string, MetricSummary>>& rows) {
  write_metric_table(std::cout, rows);
}

int cmd_synth(const SyntheticSpec& spec, const std::string& out, const std::string& json, const std::string& features) {
  Dataset d = generate_synthetic(spec);
  save_dataset(d, out);
  if (!json.empty()) {
    VisualFeatures side;
    std::ofstream js(json);
    if (!js) throw FormatError("cannot write '" + json + "'");
    export_products(d, js, side);
    if (!features.empty()) save(side, features);
  }
  std::cout << "points " << d.points.size() << ", labels " << d.labels.size() << ", positive pairs "
            << d.gt.pair_count() << ", test points " << d.split_indices(true).size() << "\n";
  return 0;
}

int cmd_prepare(const std::string& input, const std::string& features, const std::string& out, double test_ratio,
                const std::string& pre_out, const std::string& checkpoint, const ConfigFlags& flags) {
  std::optional<VisualFeatures> side;
  if (!features.empty()) {
    auto is = open_in(features);
    side = VisualFeatures::read(is);
  }
  std::ifstream in(input);
  if (!in) throw FormatError("cannot open '" + input + "'");
  IngestOptions opt;
  opt.test_ratio = test_ratio;
  IngestReport rep;
  Dataset d = ingest_products(in, side ? &*side : nullptr, opt, &rep);
  if (d.dims.visual_width == 0) d.dims.visual_width = 1;  // text-only corpus
  d.validate();
  save_dataset(d, out);
  std::cout << "records " << rep.records << ", accepted " << rep.accepted << ", rejected (empty) "
            << rep.rejected_empty << ", rejected (duplicate) " << rep.rejected_duplicate << ", dropped edges "
            << rep.dropped_edges << ", images without features " << rep.images_without_features << "\n";
  if (!pre_out.empty()) {
    ModelState s = checkpoint.empty() ? init_model(d.dims, d.labels.size(), flags.build()) : load_checkpoint(checkpoint);
    auto os = open_out(pre_out);
    write_pre_embeddings(os, s.encoder, d.points);
  }
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& out, const std::string& stop,
              const std::string& index_out, const std::string& shortlists_out, bool quiet, const ConfigFlags& flags) {
  const Dataset d = load_dataset(data_path);
  const PipelineConfig cfg = flags.build();
  TrainLog log;
  if (!quiet) log.progress = &std::clog;
  PipelineResult r = run_pipeline(d, cfg, parse_stop_after(stop), &log);
  save_checkpoint(r.state, out);
  if (!index_out.empty() && r.index) save(*r.index, index_out);
  if (!shortlists_out.empty() && !r.shortlists.empty()) {
    auto os = open_out(shortlists_out);
    write_shortlists(os, r.shortlists);
  }
  std::cout << "phase " << phase_name(r.state.phase) << ", checkpoint " << out << "\n";
  return 0;
}

int cmd_index(const std::string& data_path, const std::string& checkpoint, const std::string& index_out,
              const std::string& shortlists_out, const std::string& checkpoint_out, const ConfigFlags& flags) {
  const Dataset d = load_dataset(data_path);
  ModelState s = load_checkpoint(checkpoint);
  flags.apply_inference(s.config);
  Module2Output m2 = run_module2(s, d);
  save(m2.index, index_out);
  if (!shortlists_out.empty()) {
    auto os = open_out(shortlists_out);
    write_shortlists(os, m2.shortlists);
  }
  if (!checkpoint_out.empty()) save_checkpoint(s, checkpoint_out);
  std::cout << "index entries " << m2.index.size() << " for " << m2.index.num_labels() << " labels\n";
  return 0;
}

int cmd_predict(const std::string& data_path, const std::string& checkpoint, const std::string& index_path,
                const std::string& out, std::size_t k, bool retrieval_only, const ConfigFlags& flags) {
  const Dataset d = load_dataset(data_path);
  ModelState s = load_checkpoint(checkpoint);
  flags.apply_inference(s.config);
  const AugmentedIndex index = index_path.empty() ? build_label_index(s, d) : load_index(index_path);
  const auto mode = retrieval_only || s.phase != Phase::frozen ? Predictor::Mode::retrieval_only : Predictor::Mode::full;
  Predictor p(s, index, d.labels, mode);
  const auto test = d.split_indices(true);
  PredictCounters counters;
  auto preds = predict_points(p, d.points, test, k, &counters);
  std::ofstream os(out);
  if (!os) throw FormatError("cannot write '" + out + "'");
  write_predictions(os, d, test, preds);
  std::cout << "predicted " << test.size() << " points, " << counters.index_queries << " index queries, "
            << counters.classifier_evals << " classifier evaluations\n";
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& preds_path, std::size_t k, const std::string& bins_out,
             const std::string& categories_out) {
  const Dataset d = load_dataset(data_path);
  std::ifstream in(preds_path);
  if (!in) throw FormatError("cannot open '" + preds_path + "'");
  auto [points, ranks] = read_predictions(in, d);
  std::vector<Ranking> kept;
  PositiveSets pos;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (d.gt.positives[points[j]].empty()) continue;
    kept.push_back(std::move(ranks[j]));
    pos.push_back(d.gt.positives[points[j]]);
  }
  const MetricSummary s = evaluate(kept, pos, d.labels.size());
  print_metrics({{preds_path, s}});
  PositiveSets train_pos;
  for (auto i : d.split_indices(false)) train_pos.push_back(d.gt.positives[i]);
  const BinPartition bins = equal_mass_bins(label_frequency(train_pos, d.labels.size()));
  const auto shares = bin_decomposition(kept, pos, bins, k);
  if (!bins_out.empty()) {
    std::ofstream os(bins_out);
    write_bin_series(os, bins, shares);
  } else {
    std::cout << "\n";
    write_bin_series(std::cout, bins, shares);
  }
  if (!categories_out.empty()) {
    std::ofstream os(categories_out);
    write_category_series(os, category_report(kept, pos, d.label_category, k), k);
  }
  return 0;
}

int cmd_ablate(const std::string& variant, const std::string& data_path, bool quiet, const ConfigFlags& flags) {
  const Dataset d = load_dataset(data_path);
  const PipelineConfig base = flags.build();
  std::vector<const AblationVariant*> todo;
  if (variant == "all") {
    for (const auto& v : ablation_variants()) todo.push_back(&v);
  } else {
    todo.push_back(&find_ablation(variant));
  }
  std::vector<std::pair<std::string, MetricSummary>> rows;
  for (const auto* v : todo) {
    TrainLog log;
    if (!quiet) {
      log.progress = &std::clog;
      std::clog << "variant " << v->name << ": " << v->description << "\n";
    }
    rows.emplace_back(v->name, run_variant(d, base, *v, &log).metrics);
  }
  print_metrics(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-modal extreme classification"};
  app.require_subcommand(1);

  // synth
  SyntheticSpec spec;
  std::string synth_out, synth_json, synth_features;
  auto* synth = app.add_subcommand("synth", "generate a planted-cluster dataset");
  synth->add_option("--out", synth_out, "dataset bundle to write")->required();
  synth->add_option("--clusters", spec.clusters);
  synth->add_option("--labels", spec.labels);
  synth->add_option("--points", spec.points);
  synth->add_option("--groups", spec.cluster_groups);
  synth->add_option("--dropout", spec.modality_dropout)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--visual-noise", spec.visual_noise);
  synth->add_option("--token-noise", spec.token_noise)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--positives", spec.target_positives, "mean positives per datapoint");
  synth->add_option("--test-ratio", spec.test_ratio)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", spec.seed);
  synth->add_option("--json", synth_json, "also write the products as JSON lines");
  synth->add_option("--features", synth_features, "visual feature sidecar for --json");

  // prepare
  std::string prep_in, prep_features, prep_out, prep_pre, prep_ckpt;
  double prep_ratio = 0.2;
  ConfigFlags prep_flags;
  auto* prepare = app.add_subcommand("prepare", "ingest product JSON and cache pre-embeddings");
  prepare->add_option("--input", prep_in, "JSON lines or JSON array")->required()->check(CLI::ExistingFile);
  prepare->add_option("--features", prep_features, "visual feature sidecar")->check(CLI::ExistingFile);
  prepare->add_option("--out", prep_out, "dataset bundle to write")->required();
  prepare->add_option("--test-ratio", prep_ratio)->check(CLI::Range(0.0, 1.0));
  prepare->add_option("--pre-embeddings", prep_pre, "write encoder outputs for every descriptor");
  prepare->add_option("--checkpoint", prep_ckpt, "encoders to use for --pre-embeddings")->check(CLI::ExistingFile);
  prep_flags.attach(prepare);

  // train
  std::string train_data, train_out, train_stop = "module4", train_index, train_sl;
  bool train_quiet = false;
  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "run Modules I-IV");
  train->add_option("--data", train_data)->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "checkpoint to write")->required();
  train->add_option("--stop-after", train_stop, "module1 | module2 | module3 | module4");
  train->add_option("--index-out", train_index, "also write the final index");
  train->add_option("--shortlists-out", train_sl, "also write the Module II shortlists");
  train->add_flag("--quiet", train_quiet);
  train_flags.attach(train);

  // index
  std::string idx_data, idx_ckpt, idx_out, idx_sl, idx_ckpt_out;
  ConfigFlags idx_flags;
  auto* index = app.add_subcommand("index", "Module II: build the index and shortlists from a Module I checkpoint");
  index->add_option("--data", idx_data)->required()->check(CLI::ExistingFile);
  index->add_option("--checkpoint", idx_ckpt)->required()->check(CLI::ExistingFile);
  index->add_option("--out", idx_out, "index to write")->required();
  index->add_option("--shortlists-out", idx_sl);
  index->add_option("--checkpoint-out", idx_ckpt_out, "checkpoint advanced past Module II");
  idx_flags.attach(index);

  // predict
  std::string pred_data, pred_ckpt, pred_index, pred_out;
  std::size_t pred_k = 100;
  bool pred_retrieval = false;
  ConfigFlags pred_flags;
  auto* predict = app.add_subcommand("predict", "score held-out datapoints");
  predict->add_option("--data", pred_data)->required()->check(CLI::ExistingFile);
  predict->add_option("--checkpoint", pred_ckpt)->required()->check(CLI::ExistingFile);
  predict->add_option("--index", pred_index, "prebuilt index (default: build from the checkpoint)")
      ->check(CLI::ExistingFile);
  predict->add_option("--out", pred_out, "TSV of point, label, s, c, a")->required();
  predict->add_option("-k,--top", pred_k)->check(CLI::NonNegativeNumber);
  predict->add_flag("--retrieval-only", pred_retrieval, "rank by similarity only");
  pred_flags.attach(predict);

  // eval
  std::string eval_data, eval_preds, eval_bins, eval_cats;
  std::size_t eval_k = 5;
  auto* eval = app.add_subcommand("eval", "metrics, frequency bins and categories for a prediction file");
  eval->add_option("--data", eval_data)->required()->check(CLI::ExistingFile);
  eval->add_option("--predictions", eval_preds)->required()->check(CLI::ExistingFile);
  eval->add_option("-k", eval_k, "cutoff for bins and categories")->check(CLI::PositiveNumber);
  eval->add_option("--bins-out", eval_bins);
  eval->add_option("--categories-out", eval_cats);

  // ablate
  std::string abl_variant, abl_data;
  bool abl_quiet = false;
  ConfigFlags abl_flags;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate a named variant (or 'all')");
  std::string variant_names = "all";
  for (const auto& v : ablation_variants()) variant_names += " | " + v.name;
  ablate->add_option("variant", abl_variant, variant_names)->required();
  ablate->add_option("--data", abl_data)->required()->check(CLI::ExistingFile);
  ablate->add_flag("--quiet", abl_quiet);
  abl_flags.attach(ablate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(spec, synth_out, synth_json, synth_features);
    if (*prepare) return cmd_prepare(prep_in, prep_features, prep_out, prep_ratio, prep_pre, prep_ckpt, prep_flags);
    if (*train) return cmd_train(train_data, train_out, train_stop, train_index, train_sl, train_quiet, train_flags);
    if (*index) return cmd_index(idx_data, idx_ckpt, idx_out, idx_sl, idx_ckpt_out, idx_flags);
    if (*predict) return cmd_predict(pred_data, pred_ckpt, pred_index, pred_out, pred_k, pred_retrieval, pred_flags);
    if (*eval) return cmd_eval(eval_data, eval_preds, eval_k, eval_bins, eval_cats);
    if (*ablate) return cmd_ablate(abl_variant, abl_data, abl_quiet, abl_flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
