#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "awelab/analysis.hpp"
#include "test_support.hpp"

namespace awelab {
namespace {

using testing::random_matrix;
using testing::random_vector;

using Phones = std::vector<std::string>;

Phones chars(const std::string& s) {
  Phones out;
  for (char c : s) out.emplace_back(1, c);
  return out;
}

// Full (n+1)x(m+1) table, independent of the two-row implementation.
std::size_t dp_edit_distance(const Phones& a, const Phones& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
  return d[a.size()][b.size()];
}

Phones random_phones(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(0, 8), sym(0, 4);
  Phones out(static_cast<std::size_t>(len(rng)));
  for (auto& p : out) p = std::string(1, static_cast<char>('a' + sym(rng)));
  return out;
}

TEST(EditDistance, Examples) {
  EXPECT_EQ(edit_distance(chars("abc"), chars("abc")), 0u);
  EXPECT_EQ(edit_distance(Phones{}, chars("abcde")), 5u);
  EXPECT_EQ(edit_distance(chars("abcde"), Phones{}), 5u);
  EXPECT_EQ(edit_distance(chars("kitten"), chars("sitting")), 3u);
  EXPECT_EQ(dp_edit_distance(chars("kitten"), chars("sitting")), 3u);
}

TEST(EditDistance, MultiCharacterSymbolsAreOpaque) {
  EXPECT_EQ(edit_distance(Phones{"aa", "b"}, Phones{"a", "ab"}), 2u);
  EXPECT_EQ(edit_distance(Phones{"sh", "iy"}, Phones{"sh", "iy"}), 0u);
}

TEST(EditDistance, MetricAxiomsAndOracle) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 1000; ++k) {
    const auto a = random_phones(rng), b = random_phones(rng), c = random_phones(rng);
    const auto ab = edit_distance(a, b), bc = edit_distance(b, c), ac = edit_distance(a, c);
    EXPECT_EQ(edit_distance(a, a), 0u);
    EXPECT_EQ(ab, edit_distance(b, a));
    EXPECT_LE(ac, ab + bc);
    EXPECT_EQ(ab, dp_edit_distance(a, b));
  }
}

SegmentArchive labelled_archive(const std::vector<std::pair<std::string, Phones>>& words, Index dim,
                                std::mt19937_64& rng) {
  std::vector<Segment> segs;
  for (std::size_t i = 0; i < words.size(); ++i)
    segs.push_back({"s" + std::to_string(i), "xx", words[i].first, words[i].second, random_matrix(2, dim, rng)});
  return SegmentArchive(std::move(segs));
}

TEST(PsedBuckets, IdenticalEmbeddingsGiveUnitMean) {
  std::mt19937_64 rng(2);
  const auto archive = labelled_archive(
      {{"abc", chars("abc")}, {"abd", chars("abd")}, {"xyz", chars("xyz")}, {"abc", chars("abc")}}, 2, rng);
  EmbeddingTable table;
  const Vector v = random_vector(4, rng);
  for (const auto& s : archive) table[s.id] = v;
  const auto stats = psed_buckets(archive, table, 4);
  ASSERT_EQ(stats.buckets.size(), 5u);
  for (const auto& b : stats.buckets) {
    if (b.empty()) continue;
    EXPECT_NEAR(b.mean, 1.0, 1e-15);
    EXPECT_NEAR(b.variance, 0.0, 1e-15);
  }
  EXPECT_TRUE(stats.buckets[2].empty());
  EXPECT_EQ(stats.buckets[0].pair_count, 1u);
  EXPECT_EQ(stats.buckets[1].pair_count, 2u);
  EXPECT_EQ(stats.buckets[3].pair_count, 3u);
}

TEST(PsedBuckets, BucketCountIsMaxDistancePlusOne) {
  std::mt19937_64 rng(3);
  const auto archive = labelled_archive({{"a", chars("a")}, {"b", chars("b")}}, 2, rng);
  EmbeddingTable table{{"s0", random_vector(3, rng)}, {"s1", random_vector(3, rng)}};
  for (std::size_t d : {0u, 1u, 4u, 9u}) EXPECT_EQ(psed_buckets(archive, table, d).buckets.size(), d + 1);
}

TEST(PsedBuckets, MatchesPairwiseRecomputation) {
  std::mt19937_64 rng(4);
  const auto archive = labelled_archive({{"kat", chars("kat")},
                                         {"kat", chars("kat")},
                                         {"bat", chars("bat")},
                                         {"bats", chars("bats")},
                                         {"dog", chars("dog")},
                                         {"dogs", chars("dogs")}},
                                        2, rng);
  EmbeddingTable table;
  for (const auto& s : archive) table[s.id] = random_vector(5, rng);
  const std::size_t dmax = 3;
  const auto stats = psed_buckets(archive, table, dmax);

  std::vector<std::vector<double>> sims(dmax + 1);
  for (std::size_t i = 0; i < archive.size(); ++i)
    for (std::size_t j = i + 1; j < archive.size(); ++j) {
      const auto d = dp_edit_distance(archive[i].phonemes, archive[j].phonemes);
      if (d <= dmax) sims[d].push_back(cosine(table[archive[i].id], table[archive[j].id]));
    }
  std::size_t total = 0;
  for (std::size_t d = 0; d <= dmax; ++d) {
    const auto& b = stats.buckets[d];
    ASSERT_EQ(b.pair_count, sims[d].size()) << "distance " << d;
    total += b.pair_count;
    if (sims[d].empty()) {
      EXPECT_TRUE(b.empty());
      continue;
    }
    double mean = 0.0;
    for (double s : sims[d]) mean += s;
    mean /= static_cast<double>(sims[d].size());
    double var = 0.0;
    for (double s : sims[d]) var += (s - mean) * (s - mean);
    var /= static_cast<double>(sims[d].size());
    EXPECT_NEAR(b.mean, mean, 1e-12);
    EXPECT_NEAR(b.variance, var, 1e-12);
    EXPECT_GE(b.mean, -1.0);
    EXPECT_LE(b.mean, 1.0);
    EXPECT_GE(b.variance, 0.0);
  }
  EXPECT_EQ(stats.pairs_considered, total);
}

TEST(PsedBuckets, MissingEmbedding) {
  std::mt19937_64 rng(5);
  const auto archive = labelled_archive({{"a", chars("a")}, {"b", chars("b")}}, 2, rng);
  EmbeddingTable table{{"s0", random_vector(3, rng)}};
  EXPECT_THROW(psed_buckets(archive, table, 2), MissingEmbedding);
}

TEST(PsedBuckets, SampledModeIsSeededAndCountsSamples) {
  std::mt19937_64 rng(6);
  std::vector<std::pair<std::string, Phones>> words;
  for (int i = 0; i < 30; ++i) words.push_back({"w" + std::to_string(i % 5), chars(std::string(1 + i % 5, 'a'))});
  const auto archive = labelled_archive(words, 2, rng);
  EmbeddingTable table;
  for (const auto& s : archive) table[s.id] = random_vector(3, rng);
  const auto a = psed_buckets(archive, table, 10, {200, 9});
  const auto b = psed_buckets(archive, table, 10, {200, 9});
  EXPECT_EQ(a.pairs_considered, 200u);
  for (std::size_t d = 0; d < a.buckets.size(); ++d) {
    EXPECT_EQ(a.buckets[d].pair_count, b.buckets[d].pair_count);
    EXPECT_EQ(a.buckets[d].mean, b.buckets[d].mean);
  }
}

TEST(PsedTable, EmptyBucketsFlagged) {
  PsedBucketStats stats;
  stats.buckets = {{0, 2, 0.5, 0.25}, {1, 0, 0.0, 0.0}};
  std::ostringstream out;
  write_psed_table(stats, out);
  EXPECT_EQ(out.str(), "distance, pair_count, mean_cosine, variance\n0, 2, 0.5, 0.25\n1, 0, empty, empty\n");
}

TEST(WordCentroid, Examples) {
  std::mt19937_64 rng(7);
  const auto archive = labelled_archive(
      {{"one", chars("a")}, {"pair", chars("b")}, {"pair", chars("b")}, {"five", chars("c")}, {"five", chars("c")},
       {"five", chars("c")}, {"five", chars("c")}, {"five", chars("c")}},
      2, rng);
  EmbeddingTable table;
  for (const auto& s : archive) table[s.id] = random_vector(4, rng);
  table["s2"] = -table["s1"];
  const auto embed = [&](const Segment& s) { return table.at(s.id); };

  EXPECT_EQ(word_centroid(archive, embed, "one").mean, table["s0"]);
  EXPECT_LT(word_centroid(archive, embed, "pair").mean.cwiseAbs().maxCoeff(), 1e-15);
  Vector sum = Vector::Zero(4);
  for (int i = 3; i < 8; ++i)
    for (Index k = 0; k < 4; ++k) sum[k] += table["s" + std::to_string(i)][k];
  EXPECT_LT((word_centroid(archive, embed, "five").mean - sum / 5.0).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(word_centroid(archive, embed, "absent"), UnknownWord);
}

TEST(JacobiEigen, DiagonalizesRandomSymmetric) {
  std::mt19937_64 rng(8);
  const Matrix a = random_matrix(7, 7, rng);
  const Matrix s = a + a.transpose();
  const auto e = jacobi_eigen(s);
  const Matrix recon = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  EXPECT_LT((recon - s).cwiseAbs().maxCoeff(), 1e-10);
  for (Index i = 1; i < 7; ++i) EXPECT_GE(e.values[i - 1], e.values[i]);
}

std::vector<Vector> rows_of(const Matrix& m) {
  std::vector<Vector> out;
  for (Index i = 0; i < m.rows(); ++i) out.push_back(m.row(i).transpose());
  return out;
}

void expect_matches_dense_oracle(const Matrix& data, Index k, double tol) {
  const auto proj = pca_fit(rows_of(data), k);
  const Matrix centred = data.rowwise() - data.colwise().mean();
  const Matrix cov = centred.transpose() * centred / static_cast<double>(data.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Vector ascending = solver.eigenvalues();
  for (Index i = 0; i < k; ++i) EXPECT_NEAR(proj.eigenvalues[i], std::max(0.0, ascending[ascending.size() - 1 - i]), tol);
  const Matrix gram = proj.components * proj.components.transpose();
  EXPECT_LT((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-8);
  for (Index i = 1; i < k; ++i) EXPECT_GE(proj.eigenvalues[i - 1], proj.eigenvalues[i]);
  EXPECT_LE(proj.eigenvalues.sum(), cov.trace() + 1e-9);
}

TEST(PcaFit, MatchesDenseEigensolver) {
  std::mt19937_64 rng(9);
  expect_matches_dense_oracle(random_matrix(10, 5, rng), 5, 1e-10);
  expect_matches_dense_oracle(random_matrix(50, 16, rng), 16, 1e-8);
  expect_matches_dense_oracle(random_matrix(4, 9, rng), 3, 1e-10);
}

TEST(PcaFit, PointsOnALine) {
  std::vector<Vector> pts;
  for (double x : {-2.0, 0.5, 1.0, 3.0, 7.0}) {
    Vector v(3);
    v << x, 4.0, -1.0;
    pts.push_back(v);
  }
  const auto proj = pca_fit(pts, 2);
  EXPECT_NEAR(std::abs(proj.components(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(proj.components(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(proj.eigenvalues[1], 0.0, 1e-12);
  EXPECT_GT(proj.components(0, 0), 0.0);
}

TEST(PcaFit, SignConventionFirstNonzeroPositive) {
  std::mt19937_64 rng(10);
  const auto proj = pca_fit(rows_of(random_matrix(20, 6, rng)), 4);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 6; ++j) {
      if (std::abs(proj.components(i, j)) > 1e-12) {
        EXPECT_GT(proj.components(i, j), 0.0);
        break;
      }
    }
  }
}

TEST(PcaFit, InsufficientData) {
  std::mt19937_64 rng(11);
  EXPECT_THROW(pca_fit({random_vector(3, rng)}, 1), InsufficientData);
  EXPECT_THROW(pca_fit(rows_of(random_matrix(5, 3, rng)), 4), InsufficientData);
  EXPECT_THROW(pca_fit(rows_of(random_matrix(2, 3, rng)), 3), InsufficientData);
}

TEST(PairDifference, IdentityPairIsExactlyZero) {
  std::mt19937_64 rng(12);
  const auto proj = pca_fit(rows_of(random_matrix(12, 6, rng)), 2);
  const WordCentroid w{"w", random_vector(6, rng)};
  const auto diffs = pair_difference_vectors({{w, w}}, proj);
  ASSERT_EQ(diffs.size(), 1u);
  EXPECT_EQ(diffs[0].delta[0], 0.0);
  EXPECT_EQ(diffs[0].delta[1], 0.0);
}

TEST(PairDifference, MeanCancels) {
  std::mt19937_64 rng(13);
  auto proj = pca_fit(rows_of(random_matrix(12, 6, rng)), 2);
  const WordCentroid a{"a", random_vector(6, rng)}, b{"b", random_vector(6, rng)};
  const auto d1 = pair_difference_vectors({{a, b}}, proj)[0].delta;
  EXPECT_LT((d1 - proj.components * (b.mean - a.mean)).cwiseAbs().maxCoeff(), 1e-12);
  proj.mean = random_vector(6, rng);
  const auto d2 = pair_difference_vectors({{a, b}}, proj)[0].delta;
  EXPECT_LT((d1 - d2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PairDifference, DimensionMismatch) {
  std::mt19937_64 rng(14);
  const auto proj = pca_fit(rows_of(random_matrix(12, 6, rng)), 2);
  const WordCentroid a{"a", random_vector(5, rng)};
  EXPECT_THROW(pair_difference_vectors({{a, a}}, proj), DimensionMismatch);
}

TEST(PairDifference, TableFormat) {
  Vector d(2);
  d << 0.5, -1.25;
  std::ostringstream out;
  write_pair_differences({{"go", "goes", d}}, out);
  EXPECT_EQ(out.str(), "word_a, word_b, dx, dy\ngo, goes, 0.5, -1.25\n");
}

}  // namespace
}  // namespace awelab
