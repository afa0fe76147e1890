#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iterator>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "awelab/corpus.hpp"
#include "awelab/error.hpp"
#include "awelab/retrieval.hpp"

namespace awelab {

// Levenshtein distance with unit insert/delete/substitute costs. Works on any
// pair of sized ranges whose elements compare with ==.
template <class RangeA, class RangeB>
std::size_t edit_distance(const RangeA& a, const RangeB& b) {
  const auto n = static_cast<std::size_t>(std::size(a));
  const auto m = static_cast<std::size_t>(std::size(b));
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  auto ai = std::begin(a);
  for (std::size_t i = 1; i <= n; ++i, ++ai) {
    cur[0] = i;
    auto bj = std::begin(b);
    for (std::size_t j = 1; j <= m; ++j, ++bj) {
      const std::size_t sub = prev[j - 1] + (*ai == *bj ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// ---------------------------------------------------------------------------
// Cosine similarity grouped by phoneme-sequence edit distance

struct PsedBucket {
  std::size_t distance = 0;
  std::size_t pair_count = 0;
  double mean = 0.0;
  double variance = 0.0;  // population variance

  bool empty() const { return pair_count == 0; }
};

struct PsedBucketStats {
  std::vector<PsedBucket> buckets;  // distances 0..D_max
  std::size_t pairs_considered = 0;
};

struct PairSampling {
  // 0 enumerates every unordered pair of distinct segments.
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;
};

using EmbeddingTable = std::unordered_map<std::string, Vector>;

namespace detail {

struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
};

}  // namespace detail

// Every unordered pair of distinct segments (or a seeded sample of pairs,
// drawn with replacement) contributes its cosine to the bucket of its
// phoneme edit distance; pairs farther than max_distance are ignored.
inline PsedBucketStats psed_buckets(const SegmentArchive& archive, const EmbeddingTable& embeddings,
                                    std::size_t max_distance, const PairSampling& sampling = {}) {
  std::vector<const Vector*> vecs;
  vecs.reserve(archive.size());
  for (const auto& s : archive) {
    auto it = embeddings.find(s.id);
    if (it == embeddings.end()) throw MissingEmbedding("no embedding for segment '" + s.id + "'");
    vecs.push_back(&it->second);
  }

  // Distances are a function of the two words only.
  std::unordered_map<std::string, std::size_t> word_index;
  std::vector<const std::vector<std::string>*> word_phones;
  std::vector<std::size_t> seg_word;
  for (const auto& s : archive) {
    auto [it, fresh] = word_index.emplace(s.word, word_phones.size());
    if (fresh) word_phones.push_back(&s.phonemes);
    seg_word.push_back(it->second);
  }
  const std::size_t nw = word_phones.size();
  std::vector<std::size_t> word_dist(nw * nw);
  for (std::size_t i = 0; i < nw; ++i)
    for (std::size_t j = i; j < nw; ++j)
      word_dist[i * nw + j] = word_dist[j * nw + i] = edit_distance(*word_phones[i], *word_phones[j]);

  std::vector<detail::Welford> acc(max_distance + 1);
  PsedBucketStats stats;
  const auto visit = [&](std::size_t i, std::size_t j) {
    const std::size_t d = word_dist[seg_word[i] * nw + seg_word[j]];
    if (d > max_distance) return;
    acc[d].add(cosine(*vecs[i], *vecs[j]));
    ++stats.pairs_considered;
  };

  const std::size_t n = archive.size();
  if (sampling.sample_size == 0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) visit(i, j);
  } else if (n >= 2) {
    std::mt19937_64 rng(sampling.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t s = 0; s < sampling.sample_size; ++s) {
      std::size_t i = pick(rng), j = pick(rng);
      while (j == i) j = pick(rng);
      visit(std::min(i, j), std::max(i, j));
    }
  }

  for (std::size_t d = 0; d <= max_distance; ++d) {
    PsedBucket b;
    b.distance = d;
    b.pair_count = acc[d].n;
    if (b.pair_count > 0) {
      b.mean = acc[d].mean;
      b.variance = acc[d].m2 / static_cast<double>(acc[d].n);
    }
    stats.buckets.push_back(b);
  }
  return stats;
}

inline void write_psed_table(const PsedBucketStats& stats, std::ostream& out) {
  out << "distance, pair_count, mean_cosine, variance\n";
  out << std::setprecision(17);
  for (const auto& b : stats.buckets) {
    out << b.distance << ", " << b.pair_count << ", ";
    if (b.empty()) {
      out << "empty, empty\n";
    } else {
      out << b.mean << ", " << b.variance << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Word centroids

struct WordCentroid {
  std::string word;
  Vector mean;
};

template <class EmbedFn>
WordCentroid word_centroid(const SegmentArchive& archive, EmbedFn&& embed, const std::string& word) {
  Vector sum;
  std::size_t count = 0;
  for (const auto& s : archive) {
    if (s.word != word) continue;
    Vector v = embed(s);
    if (count == 0) {
      sum = std::move(v);
    } else {
      if (v.size() != sum.size()) throw DimensionMismatch("embeddings of '" + word + "' differ in dim");
      sum += v;
    }
    ++count;
  }
  if (count == 0) throw UnknownWord("word '" + word + "' does not occur in the archive");
  return {word, sum / static_cast<double>(count)};
}

// ---------------------------------------------------------------------------
// PCA

struct SymmetricEigen {
  Vector values;  // descending
  Matrix vectors;  // column i belongs to values[i]
};

// Cyclic Jacobi rotations on a symmetric matrix.
inline SymmetricEigen jacobi_eigen(Matrix a, int max_sweeps = 100) {
  const Index n = a.rows();
  if (a.cols() != n) throw DimensionMismatch("jacobi_eigen needs a square matrix");
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-15 * scale) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return a(x, x) > a(y, y); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Index i = 0; i < n; ++i) {
    out.values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

struct PcaProjection {
  Vector mean;
  Matrix components;  // k x d, orthonormal rows
  Vector eigenvalues;  // k, descending

  Index dim() const { return mean.size(); }
  Index rank() const { return components.rows(); }

  Vector project(const Vector& v) const {
    if (v.size() != dim())
      throw DimensionMismatch("vector has dim " + std::to_string(v.size()) + ", projection has " +
                              std::to_string(dim()));
    return components * (v - mean);
  }
};

// Sample covariance (divided by n - 1) of the mean-centred rows, top-k
// eigenvectors. Each component is signed so its first nonzero coordinate is
// positive.
inline PcaProjection pca_fit(const std::vector<Vector>& vectors, Index k) {
  if (vectors.size() < 2) throw InsufficientData("PCA needs at least two vectors");
  const Index d = vectors.front().size();
  const auto n = static_cast<Index>(vectors.size());
  if (k < 1 || k > std::min(d, n))
    throw InsufficientData("PCA rank " + std::to_string(k) + " exceeds min(dim, count) = " +
                           std::to_string(std::min(d, n)));
  Matrix data(n, d);
  for (Index i = 0; i < n; ++i) {
    if (vectors[static_cast<std::size_t>(i)].size() != d)
      throw DimensionMismatch("PCA input vectors differ in dimension");
    data.row(i) = vectors[static_cast<std::size_t>(i)].transpose();
  }
  PcaProjection out;
  out.mean = data.colwise().mean().transpose();
  const Matrix centred = data.rowwise() - out.mean.transpose();
  const Matrix cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
  const auto eig = jacobi_eigen(cov);
  out.components.resize(k, d);
  out.eigenvalues.resize(k);
  for (Index i = 0; i < k; ++i) {
    Vector c = eig.vectors.col(i);
    for (Index j = 0; j < d; ++j) {
      if (std::abs(c[j]) > 1e-12) {
        if (c[j] < 0.0) c = -c;
        break;
      }
    }
    out.components.row(i) = c.transpose();
    out.eigenvalues[i] = std::max(0.0, eig.values[i]);
  }
  return out;
}

struct PairDifference {
  std::string word_a;
  std::string word_b;
  Vector delta;  // project(b) - project(a)
};

inline std::vector<PairDifference> pair_difference_vectors(
    const std::vector<std::pair<WordCentroid, WordCentroid>>& pairs, const PcaProjection& proj) {
  std::vector<PairDifference> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs)
    out.push_back({a.word, b.word, proj.project(b.mean) - proj.project(a.mean)});
  return out;
}

inline void write_pair_differences(const std::vector<PairDifference>& diffs, std::ostream& out) {
  out << "word_a, word_b, dx, dy\n";
  out << std::setprecision(17);
  for (const auto& d : diffs) {
    out << d.word_a << ", " << d.word_b;
    for (Index i = 0; i < d.delta.size(); ++i) out << ", " << d.delta[i];
    out << '\n';
  }
}

}  // namespace awelab
