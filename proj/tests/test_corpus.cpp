#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>

#include "awelab/corpus.hpp"
#include "test_support.hpp"

namespace awelab {
namespace {

using testing::random_matrix;
using testing::random_segment;
using testing::TempDir;

SegmentArchive small_archive(std::size_t n, Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Segment> segs;
  for (std::size_t i = 0; i < n; ++i)
    segs.push_back(random_segment("s" + std::to_string(i), "w" + std::to_string(i % 7),
                                  1 + static_cast<Index>(i % 9), dim, rng));
  return SegmentArchive(std::move(segs));
}

std::string archive_text(const SegmentArchive& a) {
  std::ostringstream out;
  write_archive(a, out);
  return out.str();
}

TEST(LoadArchive, TwoValidSegments) {
  TempDir dir;
  const auto a = small_archive(2, 39, 1);
  save_archive(a, dir.file("a.jsonl"));
  const auto b = load_archive(dir.file("a.jsonl"));
  EXPECT_EQ(b.size(), 2u);
  EXPECT_EQ(b.feature_dim(), 39);
  EXPECT_EQ(a, b);
}

TEST(LoadArchive, OverLengthSegmentNamesId) {
  std::mt19937_64 rng(2);
  std::stringstream text;
  text << segment_to_json(random_segment("long-one", "w", 51, 39, rng)).dump() << '\n';
  try {
    read_archive(text, 50);
    FAIL() << "expected OverLength";
  } catch (const OverLength& e) {
    EXPECT_NE(std::string(e.what()).find("long-one"), std::string::npos);
  }
}

TEST(LoadArchive, FiftyFramesAccepted) {
  std::mt19937_64 rng(2);
  std::stringstream text;
  text << segment_to_json(random_segment("ok", "w", 50, 39, rng)).dump() << '\n';
  EXPECT_EQ(read_archive(text, 50).size(), 1u);
}

TEST(LoadArchive, FeatureDimMismatch) {
  std::mt19937_64 rng(3);
  std::stringstream text;
  text << segment_to_json(random_segment("a", "w", 4, 39, rng)).dump() << '\n';
  text << segment_to_json(random_segment("b", "w", 4, 13, rng)).dump() << '\n';
  EXPECT_THROW(read_archive(text), DimensionMismatch);
}

TEST(LoadArchive, DuplicateId) {
  std::mt19937_64 rng(4);
  std::stringstream text;
  text << segment_to_json(random_segment("a", "w", 4, 3, rng)).dump() << '\n';
  text << segment_to_json(random_segment("a", "v", 4, 3, rng)).dump() << '\n';
  EXPECT_THROW(read_archive(text), DuplicateId);
}

TEST(LoadArchive, MalformedLineReportsLineNumber) {
  std::mt19937_64 rng(5);
  std::stringstream text;
  text << segment_to_json(random_segment("a", "w", 4, 3, rng)).dump() << '\n';
  text << "{\"id\": \"b\", \"lang\": \n";
  try {
    read_archive(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadArchive, MissingFieldIsParseError) {
  std::stringstream text;
  text << R"({"id":"a","lang":"x","word":"w","features":[[1.0]]})" << '\n';
  EXPECT_THROW(read_archive(text), ParseError);
}

TEST(LoadArchive, EmptyPhonemesRejected) {
  std::stringstream text;
  text << R"({"id":"a","lang":"x","word":"w","phonemes":[],"features":[[1.0]]})" << '\n';
  EXPECT_THROW(read_archive(text), Error);
}

TEST(LoadArchive, MissingFileIsIoError) {
  EXPECT_THROW(load_archive("/nonexistent/dir/archive.jsonl"), IoError);
}

TEST(SaveArchive, ThreeSegmentRoundTrip) {
  TempDir dir;
  const auto a = small_archive(3, 5, 6);
  save_archive(a, dir.file("a.jsonl"));
  EXPECT_EQ(load_archive(dir.file("a.jsonl")), a);
}

TEST(SaveArchive, EmptyArchiveHasNoRecords) {
  TempDir dir;
  save_archive(SegmentArchive{}, dir.file("e.jsonl"));
  std::ifstream in(dir.file("e.jsonl"));
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_TRUE(content.empty());
  EXPECT_TRUE(load_archive(dir.file("e.jsonl")).empty());
}

TEST(SaveArchive, UnicodeLabelsPreservedByteExact) {
  std::mt19937_64 rng(7);
  const std::vector<std::string> labels = {"\xC3\xA9t\xC3\xA9", "\xE6\x97\xA5\xE6\x9C\xAC",
                                           "\xD0\xBC\xD0\xB8\xD1\x80", "\xF0\x9F\x8E\xB5",
                                           "stra\xC3\x9F" "e"};
  std::vector<Segment> segs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto s = random_segment("u" + std::to_string(i), labels[i], 3, 2, rng);
    s.phonemes = {labels[i], labels[(i + 1) % labels.size()]};
    s.lang = labels[(i + 2) % labels.size()];
    segs.push_back(std::move(s));
  }
  const SegmentArchive a(std::move(segs));
  std::stringstream text(archive_text(a));
  const auto b = read_archive(text);
  ASSERT_EQ(a, b);
  for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(b[i].word, labels[i]);
}

TEST(SaveArchive, ExtremeValuesRoundTripExactly) {
  std::vector<Segment> segs;
  Matrix f(2, 4);
  f << 0.1, -1e-300, 1.7976931348623157e308, 4.9406564584124654e-324, 1.0 / 3.0, -0.0, 123456789.123456789,
      2.2250738585072014e-308;
  segs.push_back({"x", "l", "w", {"p"}, f});
  const SegmentArchive a(std::move(segs));
  std::stringstream text(archive_text(a));
  const auto b = read_archive(text);
  for (Index i = 0; i < f.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(b[0].features.data()[i]),
              std::bit_cast<std::uint64_t>(f.data()[i]));
}

TEST(SaveArchive, RandomArchivesRoundTrip) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = small_archive(1 + seed % 11, 1 + static_cast<Index>(seed % 6), seed);
    std::stringstream text(archive_text(a));
    EXPECT_EQ(read_archive(text), a) << "seed " << seed;
  }
}

SynthConfig two_phoneme_config() {
  SynthConfig cfg;
  cfg.lang = "t";
  Vector a(3), b(3);
  a << 1.0, 2.0, 3.0;
  b << -1.0, 0.5, 0.0;
  cfg.inventory = {{"a", a, 1.0}, {"b", b, 1.0}};
  cfg.lexicon = {{"ab", {"a", "b"}}};
  cfg.min_frames_per_phoneme = 2;
  cfg.max_frames_per_phoneme = 2;
  cfg.noise_scale = 0.0;
  cfg.segments_per_word = 1;
  return cfg;
}

TEST(SynthCorpus, ZeroNoiseConstruction) {
  const auto cfg = two_phoneme_config();
  const auto archive = synth_corpus(cfg);
  ASSERT_EQ(archive.size(), 1u);
  const auto& f = archive[0].features;
  ASSERT_EQ(f.rows(), 4);
  EXPECT_EQ(Vector(f.row(0).transpose()), cfg.inventory[0].mean);
  EXPECT_EQ(Vector(f.row(1).transpose()), cfg.inventory[0].mean);
  EXPECT_EQ(Vector(f.row(2).transpose()), cfg.inventory[1].mean);
  EXPECT_EQ(Vector(f.row(3).transpose()), cfg.inventory[1].mean);
  EXPECT_EQ(archive[0].phonemes, (std::vector<std::string>{"a", "b"}));
}

TEST(SynthCorpus, ZeroNoiseRepeatedPhonemesGiveIdenticalRows) {
  auto cfg = testing::toy_language();
  cfg.noise_scale = 0.0;
  const auto archive = synth_corpus(cfg);
  std::map<std::string, Vector> templates;
  for (const auto& t : cfg.inventory) templates.emplace(t.symbol, t.mean);
  for (const auto& s : archive) {
    // Collapse runs so adjacent repeats of one phoneme compare cleanly.
    std::vector<Vector> expected;
    for (const auto& p : s.phonemes)
      if (expected.empty() || expected.back() != templates.at(p)) expected.push_back(templates.at(p));
    std::vector<Vector> rows;
    for (Index r = 0; r < s.frames(); ++r) {
      Vector row = s.features.row(r).transpose();
      if (rows.empty() || rows.back() != row) rows.push_back(std::move(row));
    }
    EXPECT_EQ(rows, expected) << s.id;
  }
}

TEST(SynthCorpus, DeterministicByteIdentical) {
  const auto cfg = testing::toy_language(9);
  EXPECT_EQ(archive_text(synth_corpus(cfg)), archive_text(synth_corpus(cfg)));
  auto other = cfg;
  other.seed = 10;
  EXPECT_NE(archive_text(synth_corpus(cfg)), archive_text(synth_corpus(other)));
}

TEST(SynthCorpus, TenWordsTimesFiveSegments) {
  auto cfg = testing::toy_language();
  cfg.segments_per_word = 5;
  ASSERT_EQ(cfg.lexicon.size(), 10u);
  const auto archive = synth_corpus(cfg);
  EXPECT_EQ(archive.size(), 50u);
  std::map<std::string, int> per_word;
  for (const auto& s : archive) ++per_word[s.word];
  for (const auto& [w, n] : per_word) EXPECT_EQ(n, 5) << w;
}

TEST(SynthCorpus, PhonemeOutsideInventoryRejected) {
  auto cfg = two_phoneme_config();
  cfg.lexicon.push_back({"ac", {"a", "c"}});
  EXPECT_THROW(synth_corpus(cfg), ConfigInvalid);
}

TEST(SynthCorpus, InvalidFrameRangeRejected) {
  auto cfg = two_phoneme_config();
  cfg.min_frames_per_phoneme = 0;
  EXPECT_THROW(synth_corpus(cfg), ConfigInvalid);
}

TEST(SynthCorpus, WordThatCanExceedMaxFramesRejected) {
  auto cfg = two_phoneme_config();
  cfg.max_frames = 3;
  EXPECT_THROW(synth_corpus(cfg), ConfigInvalid);
}

TEST(SynthCorpus, SegmentsWithinMaxFrames) {
  const auto archive = synth_corpus(testing::toy_language());
  for (const auto& s : archive) {
    EXPECT_GE(s.frames(), 1);
    EXPECT_LE(s.frames(), kDefaultMaxFrames);
  }
}

TEST(MakeLanguage, ExcludedLexiconIsDisjoint) {
  LanguageSpec src;
  src.num_words = 20;
  src.lexicon_seed = 1;
  const auto a = make_language(src);
  std::set<std::vector<std::string>> taken;
  for (const auto& e : a.lexicon) taken.insert(e.phonemes);
  LanguageSpec tgt = src;
  tgt.lexicon_seed = 1;  // same stream: every word would collide without the exclusion
  const auto b = make_language(tgt, taken);
  for (const auto& e : b.lexicon) EXPECT_EQ(taken.count(e.phonemes), 0u) << e.word;
}

TEST(MakeLanguage, OverlapSharesTemplates) {
  LanguageSpec a;
  a.template_seed = 5;
  a.lexicon_seed = 6;
  a.inventory_overlap = 0.5;
  LanguageSpec b = a;
  b.lexicon_seed = 7;
  const auto ca = make_language(a);
  const auto cb = make_language(b);
  for (int i = 0; i < a.inventory_size; ++i) {
    const bool same = ca.inventory[i].mean == cb.inventory[i].mean;
    EXPECT_EQ(same, i < a.inventory_size / 2) << "template " << i;
  }
}

TEST(MakeLanguage, SuffixPairsLeadTheLexicon) {
  LanguageSpec spec;
  spec.suffix_pairs = 4;
  spec.suffix_phoneme = 2;
  const auto cfg = make_language(spec);
  for (int i = 0; i < 4; ++i) {
    auto stem = cfg.lexicon[2 * i].phonemes;
    stem.push_back(phoneme_symbol(2, spec.inventory_size));
    EXPECT_EQ(stem, cfg.lexicon[2 * i + 1].phonemes);
  }
}

TEST(SplitDataset, CardinalityAndDisjointness) {
  const auto archive = small_archive(100, 3, 11);
  const auto s = split_dataset(archive, {60, 30, 5, 5, 42});
  EXPECT_EQ(s.train.size(), 60u);
  EXPECT_EQ(s.db.size(), 30u);
  EXPECT_EQ(s.query.size(), 5u);
  EXPECT_EQ(s.finetune.size(), 5u);
  std::unordered_set<std::string> ids;
  for (const auto* part : {&s.train, &s.db, &s.query, &s.finetune})
    for (const auto& seg : *part) EXPECT_TRUE(ids.insert(seg.id).second) << seg.id;
  EXPECT_EQ(ids.size(), 100u);
}

TEST(SplitDataset, QueryWordsAppearInDb) {
  const auto archive = small_archive(100, 3, 12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = split_dataset(archive, {20, 30, 20, 10, seed});
    std::unordered_set<std::string> db_words;
    for (const auto& seg : s.db) db_words.insert(seg.word);
    for (const auto& seg : s.query) EXPECT_TRUE(db_words.count(seg.word)) << seg.word;
  }
}

TEST(SplitDataset, OverRequestIsInfeasible) {
  const auto archive = small_archive(100, 3, 13);
  EXPECT_THROW(split_dataset(archive, {101, 0, 0, 0, 0}), InfeasibleSplit);
  EXPECT_THROW(split_dataset(archive, {60, 30, 6, 5, 0}), InfeasibleSplit);
}

TEST(SplitDataset, QueryWordAbsentFromDbIsInfeasible) {
  std::mt19937_64 rng(14);
  std::vector<Segment> segs;
  for (int i = 0; i < 10; ++i)
    segs.push_back(random_segment("s" + std::to_string(i), "w" + std::to_string(i), 2, 2, rng));
  const SegmentArchive archive(std::move(segs));
  EXPECT_THROW(split_dataset(archive, {0, 5, 1, 0, 0}), InfeasibleSplit);
}

TEST(SplitDataset, EmptyArchiveIsInfeasible) {
  EXPECT_THROW(split_dataset(SegmentArchive{}, {0, 0, 0, 0, 0}), InfeasibleSplit);
}

TEST(SplitDataset, Deterministic) {
  const auto archive = small_archive(100, 3, 15);
  const auto a = split_dataset(archive, {60, 30, 5, 5, 7});
  const auto b = split_dataset(archive, {60, 30, 5, 5, 7});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.db, b.db);
  EXPECT_EQ(a.query, b.query);
  EXPECT_EQ(a.finetune, b.finetune);
  const auto c = split_dataset(archive, {60, 30, 5, 5, 8});
  EXPECT_FALSE(a.train == c.train);
}

TEST(SplitDataset, SegmentsRespectMaxFrames) {
  const auto archive = synth_corpus(testing::toy_language());
  const auto s = split_dataset(archive, {10, 15, 5, 5, 1});
  for (const auto* part : {&s.train, &s.db, &s.query, &s.finetune})
    for (const auto& seg : *part) EXPECT_LE(seg.frames(), kDefaultMaxFrames);
}

}  // namespace
}  // namespace awelab
