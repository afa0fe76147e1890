#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "awelab/error.hpp"

namespace awelab {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
// Row-major so that a frame (row) is contiguous and tensors serialize row by row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kDefaultMaxFrames = 50;
inline constexpr int kDefaultFeatureDim = 39;

// T x F acoustic features, one frame per row.
using FeatureSequence = Matrix;

struct Segment {
  std::string id;
  std::string lang;
  std::string word;
  std::vector<std::string> phonemes;
  FeatureSequence features;

  Index frames() const { return features.rows(); }
  Index feature_dim() const { return features.cols(); }

  friend bool operator==(const Segment& a, const Segment& b) {
    return a.id == b.id && a.lang == b.lang && a.word == b.word &&
           a.phonemes == b.phonemes && a.features.rows() == b.features.rows() &&
           a.features.cols() == b.features.cols() && a.features == b.features;
  }
};

// An immutable, validated collection of segments sharing one feature dimension.
class SegmentArchive {
 public:
  SegmentArchive() = default;

  // Validates every invariant; throws DimensionMismatch, DuplicateId,
  // OverLength or ConfigInvalid on violation.
  explicit SegmentArchive(std::vector<Segment> segments,
                          int max_frames = kDefaultMaxFrames)
      : segments_(std::move(segments)) {
    if (!segments_.empty()) feature_dim_ = segments_.front().feature_dim();
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      check_segment(segments_[i], i, max_frames);
      if (!seen.insert(segments_[i].id).second)
        throw DuplicateId("duplicate segment id '" + segments_[i].id + "'");
    }
  }

  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& operator[](std::size_t i) const { return segments_[i]; }
  std::size_t size() const { return segments_.size(); }
  bool empty() const { return segments_.empty(); }
  Index feature_dim() const { return feature_dim_; }

  auto begin() const { return segments_.begin(); }
  auto end() const { return segments_.end(); }

  // Distinct word labels in first-appearance order.
  std::vector<std::string> words() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& s : segments_)
      if (seen.insert(s.word).second) out.push_back(s.word);
    return out;
  }

  friend bool operator==(const SegmentArchive& a, const SegmentArchive& b) {
    return a.feature_dim_ == b.feature_dim_ && a.segments_ == b.segments_;
  }

 private:
  void check_segment(const Segment& s, std::size_t index, int max_frames) const {
    const std::string where = "segment '" + s.id + "'";
    if (s.id.empty())
      throw ConfigInvalid("segment " + std::to_string(index) + " has an empty id");
    if (s.word.empty()) throw ConfigInvalid(where + " has an empty word label");
    if (s.phonemes.empty()) throw ConfigInvalid(where + " has no phonemes");
    if (s.frames() < 1) throw ConfigInvalid(where + " has no frames");
    if (s.frames() > max_frames)
      throw OverLength(where + " has " + std::to_string(s.frames()) +
                       " frames, limit is " + std::to_string(max_frames));
    if (s.feature_dim() != feature_dim_)
      throw DimensionMismatch(where + " has feature dim " +
                              std::to_string(s.feature_dim()) + ", archive has " +
                              std::to_string(feature_dim_));
    if (!s.features.allFinite())
      throw ConfigInvalid(where + " contains non-finite feature values");
  }

  std::vector<Segment> segments_;
  Index feature_dim_ = 0;
};

// ---------------------------------------------------------------------------
// Archive file format: UTF-8 JSON lines, one segment per line.

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  auto out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

// Throws std::invalid_argument with a short reason; callers attach context.
inline double number_from_json(const nlohmann::json& j) {
  if (!j.is_number()) throw std::invalid_argument("expected a number");
  return j.get<double>();
}

inline Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = number_from_json(j[i]);
  return v;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument("expected a non-empty array of rows");
  const auto rows = static_cast<Index>(j.size());
  if (!j[0].is_array()) throw std::invalid_argument("expected an array of rows");
  const auto cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw std::invalid_argument("ragged feature rows");
    for (Index c = 0; c < cols; ++c)
      m(r, c) = number_from_json(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline nlohmann::json segment_to_json(const Segment& s) {
  return nlohmann::json{{"id", s.id},
                        {"lang", s.lang},
                        {"word", s.word},
                        {"phonemes", s.phonemes},
                        {"features", detail::matrix_to_json(s.features)}};
}

inline Segment segment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  Segment s;
  s.id = detail::require_string(j, "id");
  s.lang = detail::require_string(j, "lang");
  s.word = detail::require_string(j, "word");
  const auto& ph = detail::require(j, "phonemes");
  if (!ph.is_array()) throw std::invalid_argument("field 'phonemes' must be an array");
  for (const auto& p : ph) {
    if (!p.is_string()) throw std::invalid_argument("phoneme symbols must be strings");
    s.phonemes.push_back(p.get<std::string>());
  }
  s.features = detail::matrix_from_json(detail::require(j, "features"));
  return s;
}

inline void write_archive(const SegmentArchive& archive, std::ostream& out) {
  for (const auto& s : archive)
    out << segment_to_json(s).dump(-1, ' ', false, nlohmann::json::error_handler_t::strict)
        << '\n';
}

// Blank lines are skipped. Errors carry the 1-based line number.
inline SegmentArchive read_archive(std::istream& in, int max_frames = kDefaultMaxFrames) {
  std::vector<Segment> segments;
  std::unordered_map<std::string, std::size_t> id_line;
  std::string line;
  std::size_t line_no = 0;
  Index dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Segment s;
    try {
      s = segment_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed segment record: ") + e.what(), line_no);
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("malformed segment record: ") + e.what(), line_no);
    }
    if (dim < 0) dim = s.feature_dim();
    if (s.feature_dim() != dim)
      throw DimensionMismatch("line " + std::to_string(line_no) + ": segment '" + s.id +
                              "' has feature dim " + std::to_string(s.feature_dim()) +
                              ", archive has " + std::to_string(dim));
    if (s.frames() > max_frames)
      throw OverLength("line " + std::to_string(line_no) + ": segment '" + s.id + "' has " +
                       std::to_string(s.frames()) + " frames, limit is " +
                       std::to_string(max_frames));
    if (auto [it, fresh] = id_line.emplace(s.id, line_no); !fresh)
      throw DuplicateId("line " + std::to_string(line_no) + ": duplicate segment id '" + s.id +
                        "' (first seen on line " + std::to_string(it->second) + ")");
    segments.push_back(std::move(s));
  }
  return SegmentArchive(std::move(segments), max_frames);
}

inline SegmentArchive load_archive(const std::string& path, int max_frames = kDefaultMaxFrames) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive '" + path + "'");
  return read_archive(in, max_frames);
}

inline void save_archive(const SegmentArchive& archive, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write archive '" + path + "'");
  write_archive(archive, out);
  out.flush();
  if (!out) throw IoError("write failed for archive '" + path + "'");
}

// ---------------------------------------------------------------------------
// Synthetic corpora

struct PhonemeTemplate {
  std::string symbol;
  Vector mean;
  double spread = 1.0;
};

struct LexiconEntry {
  std::string word;
  std::vector<std::string> phonemes;
};

struct SynthConfig {
  std::string lang = "syn";
  std::vector<PhonemeTemplate> inventory;
  std::vector<LexiconEntry> lexicon;
  int min_frames_per_phoneme = 2;
  int max_frames_per_phoneme = 4;
  double noise_scale = 0.3;
  int segments_per_word = 5;
  std::uint64_t seed = 0;
  int max_frames = kDefaultMaxFrames;

  Index feature_dim() const {
    return inventory.empty() ? 0 : inventory.front().mean.size();
  }

  void validate() const {
    if (inventory.empty()) throw ConfigInvalid("phoneme inventory is empty");
    if (lexicon.empty()) throw ConfigInvalid("lexicon is empty");
    if (min_frames_per_phoneme < 1 || max_frames_per_phoneme < min_frames_per_phoneme)
      throw ConfigInvalid("frames_per_phoneme range must satisfy 1 <= min <= max");
    if (segments_per_word < 0) throw ConfigInvalid("segments_per_word must be >= 0");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
      throw ConfigInvalid("noise_scale must be finite and >= 0");
    std::unordered_set<std::string> symbols;
    for (const auto& t : inventory) {
      if (t.mean.size() != feature_dim() || t.mean.size() == 0)
        throw ConfigInvalid("phoneme '" + t.symbol + "' template has inconsistent dimension");
      if (!symbols.insert(t.symbol).second)
        throw ConfigInvalid("phoneme '" + t.symbol + "' listed twice");
    }
    std::unordered_set<std::string> words;
    for (const auto& e : lexicon) {
      if (e.word.empty() || e.phonemes.empty())
        throw ConfigInvalid("lexicon entries need a word and at least one phoneme");
      if (!words.insert(e.word).second) throw ConfigInvalid("word '" + e.word + "' listed twice");
      for (const auto& p : e.phonemes)
        if (!symbols.count(p))
          throw ConfigInvalid("word '" + e.word + "' uses phoneme '" + p +
                              "' outside the inventory");
      if (static_cast<long>(e.phonemes.size()) * max_frames_per_phoneme > max_frames)
        throw ConfigInvalid("word '" + e.word + "' can exceed " + std::to_string(max_frames) +
                            " frames");
    }
  }
};

// Every segment's frames are, per phoneme of its word, k copies of the
// phoneme template plus independent Gaussian noise (noise_scale * spread).
inline SegmentArchive synth_corpus(const SynthConfig& cfg) {
  cfg.validate();
  std::unordered_map<std::string, const PhonemeTemplate*> by_symbol;
  for (const auto& t : cfg.inventory) by_symbol.emplace(t.symbol, &t);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> duration(cfg.min_frames_per_phoneme,
                                              cfg.max_frames_per_phoneme);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Index dim = cfg.feature_dim();

  std::vector<Segment> segments;
  segments.reserve(cfg.lexicon.size() * static_cast<std::size_t>(cfg.segments_per_word));
  std::size_t counter = 0;
  for (int rep = 0; rep < cfg.segments_per_word; ++rep) {
    for (const auto& entry : cfg.lexicon) {
      std::vector<int> lengths;
      int total = 0;
      for (std::size_t i = 0; i < entry.phonemes.size(); ++i) {
        lengths.push_back(duration(rng));
        total += lengths.back();
      }
      Segment s;
      std::ostringstream id;
      id << cfg.lang << '-' << std::setw(6) << std::setfill('0') << counter++;
      s.id = id.str();
      s.lang = cfg.lang;
      s.word = entry.word;
      s.phonemes = entry.phonemes;
      s.features.resize(total, dim);
      Index row = 0;
      for (std::size_t i = 0; i < entry.phonemes.size(); ++i) {
        const auto& tpl = *by_symbol.at(entry.phonemes[i]);
        const double sigma = cfg.noise_scale * tpl.spread;
        for (int k = 0; k < lengths[i]; ++k, ++row) {
          for (Index c = 0; c < dim; ++c)
            s.features(row, c) = tpl.mean[c] + (sigma > 0.0 ? sigma * gauss(rng) : 0.0);
        }
      }
      segments.push_back(std::move(s));
    }
  }
  return SegmentArchive(std::move(segments), cfg.max_frames);
}

// Compact description of a synthetic "language" from which a full SynthConfig
// is generated. Languages built with the same template_seed share phoneme
// templates; inventory_overlap is the fraction of templates kept shared, the
// rest are redrawn from lexicon_seed.
struct LanguageSpec {
  std::string lang = "syn";
  int feature_dim = kDefaultFeatureDim;
  int inventory_size = 12;
  std::uint64_t template_seed = 1;
  double template_scale = 1.0;
  double inventory_overlap = 1.0;
  std::uint64_t lexicon_seed = 2;
  int num_words = 40;
  int min_word_phonemes = 3;
  int max_word_phonemes = 6;
  // Fraction of words derived from an earlier word by a single phoneme edit.
  double derived_fraction = 0.5;
  // Leading (stem, stem + suffix_phoneme) word pairs, all sharing one suffix.
  int suffix_pairs = 0;
  int suffix_phoneme = 0;
  int min_frames_per_phoneme = 2;
  int max_frames_per_phoneme = 4;
  double noise_scale = 0.3;
  int segments_per_word = 5;
  std::uint64_t seed = 3;
  int max_frames = kDefaultMaxFrames;
};

inline std::string phoneme_symbol(int i, int inventory_size) {
  if (inventory_size <= 26) return std::string(1, static_cast<char>('a' + i));
  return "p" + std::to_string(i);
}

inline std::string word_label(const std::vector<std::string>& phonemes) {
  bool single_chars = std::all_of(phonemes.begin(), phonemes.end(),
                                  [](const std::string& p) { return p.size() == 1; });
  std::string out;
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    if (!single_chars && i > 0) out += '.';
    out += phonemes[i];
  }
  return out;
}

// Words whose phoneme sequence appears in `exclude` are never generated, which
// keeps the lexicons of two generated languages disjoint.
inline SynthConfig make_language(const LanguageSpec& spec,
                                 const std::set<std::vector<std::string>>& exclude = {}) {
  if (spec.inventory_size < 2) throw ConfigInvalid("inventory_size must be >= 2");
  if (spec.feature_dim < 1) throw ConfigInvalid("feature_dim must be >= 1");
  if (!(spec.inventory_overlap >= 0.0 && spec.inventory_overlap <= 1.0))
    throw ConfigInvalid("inventory_overlap must lie in [0, 1]");
  if (spec.min_word_phonemes < 1 || spec.max_word_phonemes < spec.min_word_phonemes)
    throw ConfigInvalid("word length range must satisfy 1 <= min <= max");
  if (spec.num_words < 1) throw ConfigInvalid("num_words must be >= 1");

  SynthConfig cfg;
  cfg.lang = spec.lang;
  cfg.min_frames_per_phoneme = spec.min_frames_per_phoneme;
  cfg.max_frames_per_phoneme = spec.max_frames_per_phoneme;
  cfg.noise_scale = spec.noise_scale;
  cfg.segments_per_word = spec.segments_per_word;
  cfg.seed = spec.seed;
  cfg.max_frames = spec.max_frames;

  std::mt19937_64 shared_rng(spec.template_seed);
  std::mt19937_64 own_rng(spec.lexicon_seed);
  std::normal_distribution<double> gauss(0.0, spec.template_scale);
  const int shared = static_cast<int>(std::lround(spec.inventory_overlap * spec.inventory_size));
  for (int i = 0; i < spec.inventory_size; ++i) {
    PhonemeTemplate t;
    t.symbol = phoneme_symbol(i, spec.inventory_size);
    t.mean.resize(spec.feature_dim);
    // Shared templates consume the shared stream identically in every language.
    Vector shared_mean(spec.feature_dim);
    for (int c = 0; c < spec.feature_dim; ++c) shared_mean[c] = gauss(shared_rng);
    if (i < shared) {
      t.mean = shared_mean;
    } else {
      for (int c = 0; c < spec.feature_dim; ++c) t.mean[c] = gauss(own_rng);
    }
    cfg.inventory.push_back(std::move(t));
  }

  std::set<std::vector<std::string>> taken = exclude;
  std::uniform_int_distribution<int> pick_phoneme(0, spec.inventory_size - 1);
  std::uniform_int_distribution<int> pick_len(spec.min_word_phonemes, spec.max_word_phonemes);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto sym = [&](int i) { return cfg.inventory[static_cast<std::size_t>(i)].symbol; };

  const long max_attempts = 1000L * spec.num_words;
  long attempts = 0;
  if (spec.suffix_pairs > 0) {
    if (2 * spec.suffix_pairs > spec.num_words || spec.min_word_phonemes >= spec.max_word_phonemes)
      throw ConfigInvalid("suffix_pairs needs room for two words per pair and a stem length "
                          "below max_word_phonemes");
    if (spec.suffix_phoneme < 0 || spec.suffix_phoneme >= spec.inventory_size)
      throw ConfigInvalid("suffix_phoneme is outside the inventory");
    std::uniform_int_distribution<int> stem_len(spec.min_word_phonemes, spec.max_word_phonemes - 1);
    int made = 0;
    while (made < spec.suffix_pairs) {
      if (++attempts > max_attempts) throw ConfigInvalid("cannot generate distinct suffix pairs");
      std::vector<std::string> stem;
      const int len = stem_len(own_rng);
      for (int i = 0; i < len; ++i) stem.push_back(sym(pick_phoneme(own_rng)));
      auto longer = stem;
      longer.push_back(sym(spec.suffix_phoneme));
      if (taken.count(stem) || taken.count(longer)) continue;
      taken.insert(stem);
      taken.insert(longer);
      cfg.lexicon.push_back({word_label(stem), stem});
      cfg.lexicon.push_back({word_label(longer), std::move(longer)});
      ++made;
    }
  }
  while (static_cast<int>(cfg.lexicon.size()) < spec.num_words) {
    if (++attempts > max_attempts)
      throw ConfigInvalid("cannot generate " + std::to_string(spec.num_words) +
                          " distinct words with the given inventory and lengths");
    std::vector<std::string> phones;
    if (!cfg.lexicon.empty() && unit(own_rng) < spec.derived_fraction) {
      std::uniform_int_distribution<std::size_t> pick_word(0, cfg.lexicon.size() - 1);
      phones = cfg.lexicon[pick_word(own_rng)].phonemes;
      std::uniform_int_distribution<int> pick_edit(0, 2);
      std::uniform_int_distribution<std::size_t> pos(0, phones.size() - 1);
      switch (pick_edit(own_rng)) {
        case 0:  // substitution
          phones[pos(own_rng)] = sym(pick_phoneme(own_rng));
          break;
        case 1:  // suffix
          phones.push_back(sym(pick_phoneme(own_rng)));
          break;
        default:  // deletion
          phones.erase(phones.begin() + static_cast<std::ptrdiff_t>(pos(own_rng)));
          break;
      }
    } else {
      const int len = pick_len(own_rng);
      for (int i = 0; i < len; ++i) phones.push_back(sym(pick_phoneme(own_rng)));
    }
    const auto len = static_cast<int>(phones.size());
    if (len < spec.min_word_phonemes || len > spec.max_word_phonemes) continue;
    if (!taken.insert(phones).second) continue;
    cfg.lexicon.push_back({word_label(phones), std::move(phones)});
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  std::size_t train_count = 0;
  std::size_t db_count = 0;
  std::size_t query_count = 0;
  std::size_t finetune_count = 0;
  std::uint64_t seed = 0;

  std::size_t total() const { return train_count + db_count + query_count + finetune_count; }
};

struct DatasetSplit {
  SegmentArchive train;
  SegmentArchive db;
  SegmentArchive query;
  SegmentArchive finetune;
};

namespace detail {

inline SegmentArchive subset(const SegmentArchive& archive, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  std::vector<Segment> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(archive[i]);
  return SegmentArchive(std::move(out), std::numeric_limits<int>::max());
}

}  // namespace detail

// Uniform sampling without replacement. Train and db take the first slots of a
// seeded permutation; queries are then drawn from the remainder, skipping any
// segment whose word has no occurrence in db; fine-tune takes what follows.
// Each output keeps the archive's original order.
inline DatasetSplit split_dataset(const SegmentArchive& archive, const SplitSpec& spec) {
  if (archive.empty()) throw InfeasibleSplit("cannot split an empty archive");
  if (spec.total() > archive.size())
    throw InfeasibleSplit("split requests " + std::to_string(spec.total()) +
                          " segments but the archive has " + std::to_string(archive.size()));
  std::vector<std::size_t> order(archive.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::size_t next = 0;
  const auto take = [&](std::size_t n) {
    std::vector<std::size_t> out(order.begin() + static_cast<std::ptrdiff_t>(next),
                                 order.begin() + static_cast<std::ptrdiff_t>(next + n));
    next += n;
    return out;
  };
  auto train = take(spec.train_count);
  auto db = take(spec.db_count);

  std::unordered_set<std::string> db_words;
  for (auto i : db) db_words.insert(archive[i].word);

  std::vector<std::size_t> query;
  std::vector<std::size_t> rest;
  for (; next < order.size(); ++next) {
    const auto i = order[next];
    if (query.size() < spec.query_count && db_words.count(archive[i].word)) {
      query.push_back(i);
    } else {
      rest.push_back(i);
    }
  }
  if (query.size() < spec.query_count)
    throw InfeasibleSplit("only " + std::to_string(query.size()) + " of " +
                          std::to_string(spec.query_count) +
                          " queries have a word that occurs in the database");
  if (rest.size() < spec.finetune_count)
    throw InfeasibleSplit("not enough segments left for the fine-tune split");
  rest.resize(spec.finetune_count);

  return {detail::subset(archive, std::move(train)), detail::subset(archive, std::move(db)),
          detail::subset(archive, std::move(query)), detail::subset(archive, std::move(rest))};
}

}  // namespace awelab
