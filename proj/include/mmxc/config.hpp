#pragma once

// Pipeline configuration and its key=value text form.

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "mmxc/objectives.hpp"
#include "mmxc/retrieval.hpp"

namespace mmxc {

enum class Phase : std::uint8_t { initialized = 0, module1 = 1, module2 = 2, module3 = 3, frozen = 4 };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::initialized: return "initialized";
    case Phase::module1: return "module1";
    case Phase::module2: return "module2";
    case Phase::module3: return "module3";
    case Phase::frozen: return "frozen";
  }
  return "?";
}

/// Which retrieval structure Module II builds.
enum class RetrievalKind : std::uint8_t { bag = 0, vec = 1 };
/// exact scan, HNSW, or exact up to `exact_max_labels` labels.
enum class IndexChoice : std::uint8_t { automatic = 0, exact = 1, hnsw = 2 };

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct PhaseSchedule {
  std::size_t epochs = 0;
  double lr = 0.0;
  std::size_t batch = 1;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::size_t dim = 64;
  std::size_t native_dim = 256;

  // Desk-scale schedule; large-corpus runs use far more epochs, smaller rates and bigger batches.
  PhaseSchedule module1{50, 2e-3, 128};
  PhaseSchedule module4{10, 1e-3, 200};
  std::size_t warmup_steps = 1000;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  std::size_t cache_refresh_epochs = 1;

  MiningConfig mining;

  double beta = 0.7;
  std::size_t shortlist_cap = kDefaultShortlistCap;
  IndexChoice index = IndexChoice::automatic;
  std::size_t exact_max_labels = 2000;
  HnswParams hnsw;

  // ablations
  RetrievalKind retrieval = RetrievalKind::bag;
  AdaptMode adapt = AdaptMode::cross_attention;
  bool self_attention = true;
  bool alpha_one = false;

  void validate() const {
    mining.validate();
    if (dim == 0 || native_dim < dim) throw ConfigError("dim must satisfy 0 < dim <= native_dim");
    if (module1.batch == 0 || module4.batch == 0) throw ConfigError("batch sizes must be positive");
    if (!(module1.lr > 0.0) || !(module4.lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0, 1]");
    if (shortlist_cap == 0) throw ConfigError("shortlist_cap must be positive");
    if (cache_refresh_epochs == 0) throw ConfigError("cache_refresh_epochs must be positive");
  }

  IndexParams index_params(std::size_t num_labels) const {
    IndexParams p;
    p.hnsw = hnsw;
    p.hnsw.seed = seed;
    switch (index) {
      case IndexChoice::exact: p.mode = IndexMode::exact; break;
      case IndexChoice::hnsw: p.mode = IndexMode::hnsw; break;
      case IndexChoice::automatic:
        p.mode = num_labels <= exact_max_labels ? IndexMode::exact : IndexMode::hnsw;
        break;
    }
    return p;
  }
};

namespace detail {

template <class N>
N parse_number(const std::string& key, const std::string& text) {
  N v{};
  const char* b = text.data();
  const char* e = b + text.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) throw ConfigError("bad value for '" + key + "': '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + text + "'");
}

inline std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Binding {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

inline const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> t;
    auto sz = [&t](const std::string& k, auto getter) {
      t[k] = {[k, getter](PipelineConfig& c, const std::string& v) { getter(c) = parse_number<std::size_t>(k, v); },
              [getter](const PipelineConfig& c) { return std::to_string(getter(const_cast<PipelineConfig&>(c))); }};
    };
    auto dbl = [&t](const std::string& k, auto getter) {
      t[k] = {[k, getter](PipelineConfig& c, const std::string& v) { getter(c) = parse_number<double>(k, v); },
              [getter](const PipelineConfig& c) { return fmt_double(getter(const_cast<PipelineConfig&>(c))); }};
    };
    auto boolean = [&t](const std::string& k, auto getter) {
      t[k] = {[k, getter](PipelineConfig& c, const std::string& v) { getter(c) = parse_bool(k, v); },
              [getter](const PipelineConfig& c) {
                return std::string(getter(const_cast<PipelineConfig&>(c)) ? "true" : "false");
              }};
    };
    t["seed"] = {[](PipelineConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const PipelineConfig& c) { return std::to_string(c.seed); }};
    sz("dim", [](PipelineConfig& c) -> std::size_t& { return c.dim; });
    sz("native_dim", [](PipelineConfig& c) -> std::size_t& { return c.native_dim; });
    sz("module1.epochs", [](PipelineConfig& c) -> std::size_t& { return c.module1.epochs; });
    dbl("module1.lr", [](PipelineConfig& c) -> double& { return c.module1.lr; });
    sz("module1.batch", [](PipelineConfig& c) -> std::size_t& { return c.module1.batch; });
    sz("module4.epochs", [](PipelineConfig& c) -> std::size_t& { return c.module4.epochs; });
    dbl("module4.lr", [](PipelineConfig& c) -> double& { return c.module4.lr; });
    sz("module4.batch", [](PipelineConfig& c) -> std::size_t& { return c.module4.batch; });
    sz("warmup_steps", [](PipelineConfig& c) -> std::size_t& { return c.warmup_steps; });
    dbl("weight_decay", [](PipelineConfig& c) -> double& { return c.weight_decay; });
    dbl("adam_beta1", [](PipelineConfig& c) -> double& { return c.adam_beta1; });
    dbl("adam_beta2", [](PipelineConfig& c) -> double& { return c.adam_beta2; });
    sz("cache_refresh_epochs", [](PipelineConfig& c) -> std::size_t& { return c.cache_refresh_epochs; });
    dbl("mining.pos_threshold", [](PipelineConfig& c) -> double& { return c.mining.pos_threshold; });
    sz("mining.p_size", [](PipelineConfig& c) -> std::size_t& { return c.mining.p_size; });
    sz("mining.n_size", [](PipelineConfig& c) -> std::size_t& { return c.mining.n_size; });
    dbl("mining.margin1", [](PipelineConfig& c) -> double& { return c.mining.margin1; });
    sz("mining.s_size", [](PipelineConfig& c) -> std::size_t& { return c.mining.s_size; });
    sz("mining.t_size", [](PipelineConfig& c) -> std::size_t& { return c.mining.t_size; });
    dbl("mining.margin4", [](PipelineConfig& c) -> double& { return c.mining.margin4; });
    boolean("mining.no_hard_pos", [](PipelineConfig& c) -> bool& { return c.mining.no_hard_pos; });
    boolean("mining.no_hard_neg", [](PipelineConfig& c) -> bool& { return c.mining.no_hard_neg; });
    dbl("beta", [](PipelineConfig& c) -> double& { return c.beta; });
    sz("shortlist_cap", [](PipelineConfig& c) -> std::size_t& { return c.shortlist_cap; });
    sz("exact_max_labels", [](PipelineConfig& c) -> std::size_t& { return c.exact_max_labels; });
    sz("hnsw.m", [](PipelineConfig& c) -> std::size_t& { return c.hnsw.m; });
    sz("hnsw.ef_construction", [](PipelineConfig& c) -> std::size_t& { return c.hnsw.ef_construction; });
    sz("hnsw.ef_search", [](PipelineConfig& c) -> std::size_t& { return c.hnsw.ef_search; });
    boolean("self_attention", [](PipelineConfig& c) -> bool& { return c.self_attention; });
    boolean("alpha_one", [](PipelineConfig& c) -> bool& { return c.alpha_one; });
    t["index"] = {[](PipelineConfig& c, const std::string& v) {
                    if (v == "auto") c.index = IndexChoice::automatic;
                    else if (v == "exact") c.index = IndexChoice::exact;
                    else if (v == "hnsw") c.index = IndexChoice::hnsw;
                    else throw ConfigError("index must be auto|exact|hnsw, got '" + v + "'");
                  },
                  [](const PipelineConfig& c) {
                    return std::string(c.index == IndexChoice::automatic ? "auto"
                                       : c.index == IndexChoice::exact   ? "exact"
                                                                         : "hnsw");
                  }};
    t["retrieval"] = {[](PipelineConfig& c, const std::string& v) {
                        if (v == "bag") c.retrieval = RetrievalKind::bag;
                        else if (v == "vec") c.retrieval = RetrievalKind::vec;
                        else throw ConfigError("retrieval must be bag|vec, got '" + v + "'");
                      },
                      [](const PipelineConfig& c) {
                        return std::string(c.retrieval == RetrievalKind::bag ? "bag" : "vec");
                      }};
    t["adapt"] = {[](PipelineConfig& c, const std::string& v) {
                    if (v == "xattn") c.adapt = AdaptMode::cross_attention;
                    else if (v == "bypass") c.adapt = AdaptMode::bypass;
                    else if (v == "concat") c.adapt = AdaptMode::concat;
                    else throw ConfigError("adapt must be xattn|bypass|concat, got '" + v + "'");
                  },
                  [](const PipelineConfig& c) {
                    return std::string(c.adapt == AdaptMode::cross_attention ? "xattn"
                                       : c.adapt == AdaptMode::bypass        ? "bypass"
                                                                             : "concat");
                  }};
    return t;
  }();
  return table;
}

}  // namespace detail

/// Sets one key; unknown keys are an error.
inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const auto& b = detail::bindings();
  auto it = b.find(key);
  if (it == b.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, detail::trim(value));
}

/// Applies `key = value` lines on top of `cfg`. '#' starts a comment.
inline void apply_config_text(PipelineConfig& cfg, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline PipelineConfig parse_config(const std::string& text, PipelineConfig base = {}) {
  std::istringstream in(text);
  apply_config_text(base, in);
  return base;
}

/// Every key, sorted, as `key = value` lines.
inline std::string to_config_text(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [k, b] : detail::bindings()) out += k + " = " + b.get(cfg) + "\n";
  return out;
}

/// Named ablation variants and the overrides each applies on top of a base config.
struct AblationVariant {
  std::string name;
  std::string description;
  std::vector<std::pair<std::string, std::string>> overrides;
  bool module1_only = false;  // evaluate retrieval after Module II, no classifiers
};

inline const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> v = {
      {"full", "complete pipeline", {}, false},
      {"no-pos", "random instead of hard positives", {{"mining.no_hard_pos", "true"}}, false},
      {"no-pos-neg", "random positives and negatives", {{"mining.no_hard_pos", "true"}, {"mining.no_hard_neg", "true"}}, false},
      {"p1-bag", "Module I model, bag + centroid retrieval", {{"retrieval", "bag"}}, true},
      {"p1-vec", "Module I model, one vector per label", {{"retrieval", "vec"}}, true},
      {"concat", "feed-forward head over [x ; z] instead of cross-attention", {{"adapt", "concat"}}, false},
      {"no-self-attn", "self-attention block removed", {{"self_attention", "false"}}, false},
      {"no-xattn", "cross-attention bypassed", {{"adapt", "bypass"}}, false},
      {"alpha-one", "label embedding as classifier (alpha = 1)", {{"alpha_one", "true"}}, false},
  };
  return v;
}

inline const AblationVariant& find_ablation(const std::string& name) {
  for (const auto& v : ablation_variants())
    if (v.name == name) return v;
  throw ConfigError("unknown ablation '" + name + "'");
}

inline PipelineConfig apply_ablation(PipelineConfig cfg, const AblationVariant& v) {
  for (const auto& [k, val] : v.overrides) set_config_value(cfg, k, val);
  return cfg;
}

}  // namespace mmxc
