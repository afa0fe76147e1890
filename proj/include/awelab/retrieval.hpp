#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "awelab/corpus.hpp"
#include "awelab/error.hpp"

namespace awelab {

// a.b / (|a| |b|); zero when either vector has zero norm.
template <class A, class B>
double cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size())
    throw DimensionMismatch("cosine of vectors with dims " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

struct IndexedEmbedding {
  std::string id;
  std::string word;
  Vector z;
};

struct RankedItem {
  std::string id;
  double score = 0.0;
};

using RankedList = std::vector<RankedItem>;

// Exact brute-force cosine index; immutable once built.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;

  explicit RetrievalIndex(std::vector<IndexedEmbedding> entries) : entries_(std::move(entries)) {
    std::unordered_set<std::string> ids;
    for (const auto& e : entries_) {
      if (!ids.insert(e.id).second) throw DuplicateId("duplicate index id '" + e.id + "'");
      if (e.z.size() != entries_.front().z.size())
        throw DimensionMismatch("entry '" + e.id + "' has dim " + std::to_string(e.z.size()) +
                                ", index has " + std::to_string(entries_.front().z.size()));
    }
    if (!entries_.empty()) dim_ = entries_.front().z.size();
    norms_.reserve(entries_.size());
    for (const auto& e : entries_) norms_.push_back(e.z.norm());
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Index dim() const { return dim_; }
  const std::vector<IndexedEmbedding>& entries() const { return entries_; }

  // Scores descending, ties by ascending id. k = nullopt returns the full ranking.
  RankedList query(const Vector& qz, std::optional<std::size_t> k = std::nullopt) const {
    if (entries_.empty()) return {};
    if (qz.size() != dim_)
      throw DimensionMismatch("query has dim " + std::to_string(qz.size()) + ", index has " +
                              std::to_string(dim_));
    const double qn = qz.norm();
    RankedList out;
    out.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const double s = (qn == 0.0 || norms_[i] == 0.0) ? 0.0 : qz.dot(entries_[i].z) / (qn * norms_[i]);
      out.push_back({entries_[i].id, s});
    }
    const auto better = [](const RankedItem& a, const RankedItem& b) {
      return a.score != b.score ? a.score > b.score : a.id < b.id;
    };
    const std::size_t n = std::min(k.value_or(out.size()), out.size());
    if (n < out.size()) {
      std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), out.end(), better);
      out.resize(n);
    } else {
      std::sort(out.begin(), out.end(), better);
    }
    return out;
  }

 private:
  std::vector<IndexedEmbedding> entries_;
  std::vector<double> norms_;
  Index dim_ = 0;
};

inline RetrievalIndex build_index(std::vector<IndexedEmbedding> embeddings) {
  return RetrievalIndex(std::move(embeddings));
}

// Mean of precision@p over the positions p of relevant items in a full ranking.
inline double average_precision(const RankedList& ranked,
                                const std::unordered_set<std::string>& relevant) {
  if (relevant.empty()) throw EmptyRelevant("average precision needs at least one relevant id");
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t p = 0; p < ranked.size(); ++p) {
    if (relevant.count(ranked[p].id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(p + 1);
    }
  }
  if (hits != relevant.size())
    throw EmptyRelevant("relevant ids missing from the ranking; a full ranking is required");
  return sum / static_cast<double>(relevant.size());
}

struct Query {
  Vector z;
  std::string word;
};

struct MapResult {
  double map = 0.0;
  std::vector<double> per_query_ap;
};

// Relevance is exact word match. Every query word must occur in the index.
inline MapResult evaluate_map(const RetrievalIndex& index, const std::vector<Query>& queries) {
  std::unordered_map<std::string, std::unordered_set<std::string>> by_word;
  for (const auto& e : index.entries()) by_word[e.word].insert(e.id);
  MapResult out;
  out.per_query_ap.reserve(queries.size());
  for (const auto& q : queries) {
    auto it = by_word.find(q.word);
    if (it == by_word.end())
      throw QueryWithoutRelevant("query word '" + q.word + "' has no relevant entry in the index");
    out.per_query_ap.push_back(average_precision(index.query(q.z), it->second));
  }
  double sum = 0.0;
  for (double ap : out.per_query_ap) sum += ap;
  out.map = queries.empty() ? 0.0 : sum / static_cast<double>(queries.size());
  return out;
}

inline double mean_average_precision(const RetrievalIndex& index, const std::vector<Query>& queries) {
  return evaluate_map(index, queries).map;
}

// ---------------------------------------------------------------------------
// Embedding file: JSON lines {"id", "word", "vector"}.

inline void write_embeddings(const std::vector<IndexedEmbedding>& entries, std::ostream& out) {
  for (const auto& e : entries) {
    nlohmann::json j{{"id", e.id}, {"word", e.word}, {"vector", detail::vector_to_json(e.z)}};
    out << j.dump() << '\n';
  }
}

inline std::vector<IndexedEmbedding> read_embeddings(std::istream& in) {
  std::vector<IndexedEmbedding> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw std::invalid_argument("record is not an object");
      out.push_back({detail::require_string(j, "id"), detail::require_string(j, "word"),
                     detail::vector_from_json(detail::require(j, "vector"))});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed embedding record: ") + e.what(), line_no);
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("malformed embedding record: ") + e.what(), line_no);
    }
    if (out.back().z.size() != out.front().z.size())
      throw DimensionMismatch("line " + std::to_string(line_no) + ": embedding '" +
                              out.back().id + "' has dim " + std::to_string(out.back().z.size()) +
                              ", file has " + std::to_string(out.front().z.size()));
  }
  return out;
}

inline void save_embeddings(const std::vector<IndexedEmbedding>& entries, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embeddings '" + path + "'");
  write_embeddings(entries, out);
  out.flush();
  if (!out) throw IoError("write failed for embeddings '" + path + "'");
}

inline std::vector<IndexedEmbedding> load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embeddings '" + path + "'");
  return read_embeddings(in);
}

inline std::vector<Query> as_queries(const std::vector<IndexedEmbedding>& entries) {
  std::vector<Query> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back({e.z, e.word});
  return out;
}

}  // namespace awelab
