#pragma once

// Datasets: the native bundle format, product JSON ingestion (ASIN / title /
// images / also_buy), visual feature sidecars and the pre-embedding cache.

#include <cctype>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "mmxc/model.hpp"

namespace mmxc {

struct Dataset {
  static constexpr std::string_view kMagic = "MMXCDATA";
  static constexpr std::uint32_t kVersion = 1;

  EncoderDims dims;                  // vocab_size and visual_width are meaningful
  std::vector<std::string> vocab;    // token strings, may be empty for synthetic data
  std::vector<Entity> points;        // datapoints
  std::vector<Entity> labels;        // labels
  GroundTruth gt;                    // points x labels
  std::vector<bool> is_test;         // per point
  std::vector<std::string> label_category;  // per label, may be empty

  std::vector<bool> train_mask() const {
    std::vector<bool> m(is_test.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = !is_test[i];
    return m;
  }

  std::vector<std::uint32_t> split_indices(bool test) const {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < points.size(); ++i)
      if (is_test[i] == test) out.push_back(static_cast<std::uint32_t>(i));
    return out;
  }

  void validate() const {
    if (gt.num_points != points.size() || gt.num_labels != labels.size())
      throw FormatError("dataset: ground truth shape does not match entities");
    if (is_test.size() != points.size()) throw FormatError("dataset: split mask size mismatch");
    if (!label_category.empty() && label_category.size() != labels.size())
      throw FormatError("dataset: category map size mismatch");
    for (const auto& e : points) validate_entity(e);
    for (const auto& e : labels) validate_entity(e);
  }

  void write(std::ostream& os) const {
    BinaryWriter w(os);
    w.header(kMagic, kVersion);
    w.u64(dims.vocab_size);
    w.u64(dims.visual_width);
    w.u64(vocab.size());
    for (const auto& t : vocab) w.str(t);
    write_entities(w, points);
    write_entities(w, labels);
    for (std::size_t i = 0; i < points.size(); ++i) {
      w.u8(is_test[i] ? 1 : 0);
      w.u32(static_cast<std::uint32_t>(gt.positives[i].size()));
      for (auto l : gt.positives[i]) w.u32(l);
    }
    w.u64(label_category.size());
    for (const auto& c : label_category) w.str(c);
    w.check();
  }

  static Dataset read(std::istream& is) {
    BinaryReader r(is);
    if (r.header(kMagic) != kVersion) throw FormatError("dataset: unsupported version");
    Dataset d;
    d.dims.vocab_size = r.u64();
    d.dims.visual_width = r.u64();
    const std::uint64_t nv = r.u64();
    if (nv > (1ull << 32)) throw FormatError("dataset: bad vocabulary size");
    d.vocab.resize(nv);
    for (auto& t : d.vocab) t = r.str();
    d.points = read_entities(r);
    d.labels = read_entities(r);
    d.gt = GroundTruth(d.points.size(), d.labels.size());
    d.is_test.resize(d.points.size());
    for (std::size_t i = 0; i < d.points.size(); ++i) {
      d.is_test[i] = r.u8() != 0;
      const std::uint32_t n = r.u32();
      if (n > d.labels.size()) throw FormatError("dataset: too many positives");
      for (std::uint32_t k = 0; k < n; ++k) {
        const std::uint32_t l = r.u32();
        if (l >= d.labels.size()) throw FormatError("dataset: label index out of range");
        d.gt.add(i, l);
      }
    }
    const std::uint64_t nc = r.u64();
    if (nc != 0 && nc != d.labels.size()) throw FormatError("dataset: bad category count");
    d.label_category.resize(nc);
    for (auto& c : d.label_category) c = r.str();
    d.validate();
    return d;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  void validate_entity(const Entity& e) const {
    if (e.descriptors.empty()) throw FormatError("dataset: entity '" + e.id + "' has no descriptors");
    for (const auto& desc : e.descriptors) {
      if (desc.modality == Modality::visual && desc.features.size() != dims.visual_width)
        throw FormatError("dataset: visual width mismatch in '" + e.id + "'");
      if (desc.modality == Modality::text && desc.tokens.empty())
        throw FormatError("dataset: empty text descriptor in '" + e.id + "'");
    }
  }

  static void write_entities(BinaryWriter& w, const std::vector<Entity>& es) {
    w.u64(es.size());
    for (const auto& e : es) {
      w.str(e.id);
      w.u32(static_cast<std::uint32_t>(e.descriptors.size()));
      for (const auto& d : e.descriptors) {
        w.u8(static_cast<std::uint8_t>(d.modality));
        if (d.modality == Modality::text) {
          w.u32(static_cast<std::uint32_t>(d.tokens.size()));
          for (auto t : d.tokens) w.u32(t);
        } else {
          w.u32(static_cast<std::uint32_t>(d.features.size()));
          for (double v : d.features) w.f64(v);
        }
      }
    }
  }

  static std::vector<Entity> read_entities(BinaryReader& r) {
    const std::uint64_t n = r.u64();
    if (n > (1ull << 32)) throw FormatError("dataset: bad entity count");
    std::vector<Entity> es(n);
    for (auto& e : es) {
      e.id = r.str();
      const std::uint32_t m = r.u32();
      if (m > (1u << 16)) throw FormatError("dataset: too many descriptors");
      e.descriptors.resize(m);
      for (auto& d : e.descriptors) {
        const std::uint8_t mod = r.u8();
        if (mod > 1) throw FormatError("dataset: bad modality");
        d.modality = static_cast<Modality>(mod);
        const std::uint32_t len = r.u32();
        if (len > (1u << 24)) throw FormatError("dataset: descriptor too long");
        if (d.modality == Modality::text) {
          d.tokens.resize(len);
          for (auto& t : d.tokens) t = r.u32();
        } else {
          d.features.resize(len);
          for (auto& v : d.features) v = r.f64();
        }
      }
    }
    return es;
  }
};

inline void save_dataset(const Dataset& d, const std::string& path) {
  auto os = open_out(path);
  d.write(os);
}

inline Dataset load_dataset(const std::string& path) {
  auto is = open_in(path);
  return Dataset::read(is);
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Deterministic split: an id is a test id when its hash falls in the first
/// `test_ratio` fraction of the hash range.
inline bool is_test_id(std::string_view id, double test_ratio) {
  return static_cast<double>(fnv1a(id) % 1000000ull) < test_ratio * 1000000.0;
}

// ---------------------------------------------------------------------------
// visual feature sidecar

/// (ASIN, image index) -> feature vector.
struct VisualFeatures {
  static constexpr std::string_view kMagic = "MMXCVFEA";
  static constexpr std::uint32_t kVersion = 1;

  std::size_t width = 0;
  std::map<std::pair<std::string, std::uint32_t>, std::vector<double>> vectors;

  const std::vector<double>* find(const std::string& asin, std::uint32_t image) const {
    auto it = vectors.find({asin, image});
    return it == vectors.end() ? nullptr : &it->second;
  }

  void write(std::ostream& os) const {
    BinaryWriter w(os);
    w.header(kMagic, kVersion);
    w.u64(width);
    for (const auto& [key, v] : vectors) {
      w.str(key.first);
      w.u32(key.second);
      for (double x : v) w.f64(x);
    }
    w.check();
  }

  static VisualFeatures read(std::istream& is) {
    BinaryReader r(is);
    if (r.header(kMagic) != kVersion) throw FormatError("features: unsupported version");
    VisualFeatures f;
    f.width = r.u64();
    if (f.width == 0 || f.width > (1u << 20)) throw FormatError("features: bad width");
    while (!r.at_end()) {
      std::string asin = r.str();
      const std::uint32_t idx = r.u32();
      std::vector<double> v(f.width);
      for (double& x : v) x = r.f64();
      f.vectors[{std::move(asin), idx}] = std::move(v);
    }
    return f;
  }
};

// ---------------------------------------------------------------------------
// product JSON

struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IngestReport {
  std::size_t records = 0;             // records read
  std::size_t accepted = 0;
  std::size_t rejected_empty = 0;      // neither title nor usable images
  std::size_t rejected_duplicate = 0;  // repeated ASIN
  std::size_t dropped_edges = 0;       // also_buy pointing at unknown products
  std::size_t images_without_features = 0;
};

/// Lower-cased alphanumeric runs.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct IngestOptions {
  double test_ratio = 0.2;
  std::size_t visual_width = 0;  // 0: take it from the sidecar or the first inline vector
};

/// Reads one JSON object per line, or a single JSON array. Every accepted
/// product is both a datapoint and a label; also_buy defines the positives.
inline Dataset ingest_products(std::istream& in, const VisualFeatures* sidecar, const IngestOptions& opt,
                               IngestReport* report_out = nullptr) {
  IngestReport report;
  std::vector<nlohmann::json> records;
  {
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
      try {
        auto arr = nlohmann::json::parse(text);
        for (auto& r : arr) records.push_back(std::move(r));
      } catch (const nlohmann::json::parse_error& e) {
        throw IngestError(std::string("malformed JSON array: ") + e.what());
      }
    } else {
      std::istringstream lines(text);
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(lines, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          records.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
          throw IngestError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
      }
    }
  }

  Dataset d;
  d.dims.visual_width = opt.visual_width != 0 ? opt.visual_width : (sidecar ? sidecar->width : 0);
  std::unordered_map<std::string, std::uint32_t> vocab_ids;
  std::unordered_map<std::string, std::uint32_t> index_of;
  std::vector<std::vector<std::string>> also_buy;
  std::vector<std::string> categories;
  bool any_category = false;

  for (std::size_t rec = 0; rec < records.size(); ++rec) {
    const auto& j = records[rec];
    ++report.records;
    if (!j.is_object() || !j.contains("ASIN") || !j["ASIN"].is_string()) {
      throw IngestError("record " + std::to_string(rec + 1) + ": missing string field 'ASIN'");
    }
    Entity e;
    e.id = j["ASIN"].get<std::string>();
    if (index_of.count(e.id)) {
      ++report.rejected_duplicate;
      continue;
    }
    if (j.contains("title") && j["title"].is_string()) {
      auto toks = tokenize(j["title"].get<std::string>());
      if (!toks.empty()) {
        std::vector<std::uint32_t> ids;
        for (auto& t : toks) {
          auto [it, inserted] = vocab_ids.try_emplace(t, static_cast<std::uint32_t>(d.vocab.size()));
          if (inserted) d.vocab.push_back(t);
          ids.push_back(it->second);
        }
        e.descriptors.push_back(Descriptor::text(std::move(ids)));
      }
    }
    if (j.contains("images") && j["images"].is_array()) {
      std::uint32_t k = 0;
      for (const auto& img : j["images"]) {
        std::vector<double> f;
        if (img.is_array()) {
          for (const auto& x : img) f.push_back(x.get<double>());
        } else if (const auto* found = sidecar ? sidecar->find(e.id, k) : nullptr) {
          f = *found;
        }
        ++k;
        if (f.empty()) {
          ++report.images_without_features;
          continue;
        }
        if (d.dims.visual_width == 0) d.dims.visual_width = f.size();
        if (f.size() != d.dims.visual_width) {
          throw IngestError("record " + std::to_string(rec + 1) + ": visual feature width " +
                            std::to_string(f.size()) + ", expected " + std::to_string(d.dims.visual_width));
        }
        e.descriptors.push_back(Descriptor::visual(std::move(f)));
      }
    }
    if (e.descriptors.empty()) {
      ++report.rejected_empty;
      continue;
    }
    std::vector<std::string> related;
    if (j.contains("also_buy") && j["also_buy"].is_array())
      for (const auto& a : j["also_buy"])
        if (a.is_string()) related.push_back(a.get<std::string>());
    std::string category;
    if (j.contains("category") && j["category"].is_string()) {
      category = j["category"].get<std::string>();
      any_category = true;
    }
    index_of[e.id] = static_cast<std::uint32_t>(d.points.size());
    d.points.push_back(std::move(e));
    also_buy.push_back(std::move(related));
    categories.push_back(std::move(category));
  }

  d.dims.vocab_size = d.vocab.size();
  d.labels = d.points;
  d.gt = GroundTruth(d.points.size(), d.labels.size());
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    for (const auto& target : also_buy[i]) {
      auto it = index_of.find(target);
      if (it == index_of.end()) {
        ++report.dropped_edges;
        continue;
      }
      d.gt.add(i, it->second);
    }
  }
  d.is_test.resize(d.points.size());
  for (std::size_t i = 0; i < d.points.size(); ++i) d.is_test[i] = is_test_id(d.points[i].id, opt.test_ratio);
  if (any_category) {
    for (auto& c : categories)
      if (c.empty()) c = "other";
    d.label_category = std::move(categories);
  }
  report.accepted = d.points.size();
  if (report_out) *report_out = report;
  return d;
}

/// Writes a product dataset back out as JSON lines plus a feature sidecar.
/// Image references are named "<ASIN>#<k>" and resolved through the sidecar.
inline void export_products(const Dataset& d, std::ostream& json_out, VisualFeatures& sidecar) {
  sidecar.width = d.dims.visual_width;
  sidecar.vectors.clear();
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    const Entity& e = d.points[i];
    nlohmann::json j;
    j["ASIN"] = e.id;
    std::string title;
    nlohmann::json images = nlohmann::json::array();
    std::uint32_t k = 0;
    for (const auto& desc : e.descriptors) {
      if (desc.modality == Modality::text) {
        for (auto t : desc.tokens) {
          if (!title.empty()) title += ' ';
          title += t < d.vocab.size() ? d.vocab[t] : "t" + std::to_string(t);
        }
      } else {
        images.push_back(e.id + "#" + std::to_string(k));
        sidecar.vectors[{e.id, k}] = desc.features;
        ++k;
      }
    }
    if (!title.empty()) j["title"] = title;
    j["images"] = images;
    nlohmann::json also = nlohmann::json::array();
    if (i < d.gt.positives.size())
      for (auto l : d.gt.positives[i]) also.push_back(d.labels[l].id);
    j["also_buy"] = also;
    if (!d.label_category.empty() && i < d.label_category.size()) j["category"] = d.label_category[i];
    json_out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// pre-embedding cache

struct PreEmbeddingRecord {
  std::string entity_id;
  std::uint32_t descriptor = 0;
  Modality modality = Modality::text;
  std::vector<double> values;  // D_native

  friend bool operator==(const PreEmbeddingRecord&, const PreEmbeddingRecord&) = default;
};

inline constexpr std::string_view kPreEmbeddingMagic = "MMXCPREE";

/// Encoder outputs (before pooling) for every descriptor of every entity.
inline void write_pre_embeddings(std::ostream& os, const EncoderParams& enc, std::span<const Entity> entities) {
  BinaryWriter w(os);
  w.header(kPreEmbeddingMagic, 1);
  w.u64(enc.dims.native_dim);
  for (const auto& e : entities) {
    for (std::size_t k = 0; k < e.descriptors.size(); ++k) {
      const auto& d = e.descriptors[k];
      Matrix v = encode_native<Matrix>(d, view(enc));
      w.str(e.id);
      w.u32(static_cast<std::uint32_t>(k));
      w.u8(static_cast<std::uint8_t>(d.modality));
      for (double x : v.values()) w.f64(x);
    }
  }
  w.check();
}

inline std::vector<PreEmbeddingRecord> read_pre_embeddings(std::istream& is) {
  BinaryReader r(is);
  if (r.header(kPreEmbeddingMagic) != 1) throw FormatError("pre-embeddings: unsupported version");
  const std::uint64_t width = r.u64();
  if (width == 0 || width > (1u << 20)) throw FormatError("pre-embeddings: bad width");
  std::vector<PreEmbeddingRecord> out;
  while (!r.at_end()) {
    PreEmbeddingRecord rec;
    rec.entity_id = r.str();
    rec.descriptor = r.u32();
    const std::uint8_t m = r.u8();
    if (m > 1) throw FormatError("pre-embeddings: bad modality");
    rec.modality = static_cast<Modality>(m);
    rec.values.resize(width);
    for (double& x : rec.values) x = r.f64();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace mmxc
