#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "awelab/analysis.hpp"
#include "awelab/config.hpp"
#include "awelab/corpus.hpp"
#include "awelab/error.hpp"
#include "awelab/ne.hpp"
#include "awelab/retrieval.hpp"
#include "awelab/sa.hpp"

namespace awelab {

inline std::vector<IndexedEmbedding> embed_archive(const SAModel& model, const SegmentArchive& archive) {
  std::vector<IndexedEmbedding> out;
  out.reserve(archive.size());
  for (const auto& s : archive)
    out.push_back({s.id, s.word, encode(model, s.features, std::numeric_limits<int>::max()).z});
  return out;
}

inline std::vector<IndexedEmbedding> ne_embed_archive(const SegmentArchive& archive, Index partitions) {
  std::vector<IndexedEmbedding> out;
  out.reserve(archive.size());
  for (const auto& s : archive) out.push_back({s.id, s.word, ne_encode(s.features, partitions)});
  return out;
}

inline EmbeddingTable to_table(const std::vector<IndexedEmbedding>& entries) {
  EmbeddingTable t;
  for (const auto& e : entries) t.emplace(e.id, e.z);
  return t;
}

// MAP of `queries` against `db` with exact word-match relevance.
inline double retrieval_map(const std::vector<IndexedEmbedding>& db,
                            const std::vector<IndexedEmbedding>& queries) {
  return mean_average_precision(build_index(db), as_queries(queries));
}

// Pairs (a, b) of lexicon words where b is a plus one trailing phoneme, taken
// from the largest group sharing the same appended phoneme.
inline std::vector<std::pair<std::string, std::string>> find_suffix_pairs(const SegmentArchive& archive,
                                                                         std::size_t limit) {
  std::map<std::vector<std::string>, std::string> by_phones;
  for (const auto& s : archive) by_phones.emplace(s.phonemes, s.word);
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> groups;
  for (const auto& [phones, word] : by_phones) {
    if (phones.size() < 2) continue;
    std::vector<std::string> stem(phones.begin(), phones.end() - 1);
    auto it = by_phones.find(stem);
    if (it != by_phones.end()) groups[phones.back()].emplace_back(it->second, word);
  }
  std::vector<std::pair<std::string, std::string>> best;
  for (auto& [suffix, pairs] : groups)
    if (pairs.size() > best.size()) best = pairs;
  if (best.size() > limit) best.resize(limit);
  return best;
}

// Largest pairwise angle (degrees) between the difference vectors.
inline double max_pairwise_angle_deg(const std::vector<PairDifference>& diffs) {
  double worst = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i)
    for (std::size_t j = i + 1; j < diffs.size(); ++j) {
      const double c = std::clamp(cosine(diffs[i].delta, diffs[j].delta), -1.0, 1.0);
      worst = std::max(worst, std::acos(c) * 180.0 / std::numbers::pi);
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string source_corpus;
  std::string target_corpus;
  SplitSpec source_split;
  SplitSpec target_split;
  std::vector<Index> dims{16, 32};
  Index transfer_dim = 32;
  std::vector<Index> ne_partitions{3, 6};
  std::vector<std::size_t> finetune_sizes{0};
  TrainConfig train;
  TrainConfig finetune;
  // Training of the target-only model; defaults to `train`.
  std::optional<TrainConfig> no_transfer;
  std::size_t psed_max_distance = 4;
  std::size_t psed_sample_size = 0;
  std::vector<std::pair<std::string, std::string>> pca_pairs;
  std::size_t pca_auto_pairs = 4;
  std::string out_dir;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [a, b] : pca_pairs) pairs.push_back({a, b});
    nlohmann::json j{{"source_corpus", source_corpus},
                     {"target_corpus", target_corpus},
                     {"source_split", awelab::to_json(source_split)},
                     {"target_split", awelab::to_json(target_split)},
                     {"dims", dims},
                     {"transfer_dim", transfer_dim},
                     {"ne_m", ne_partitions},
                     {"finetune_sizes", finetune_sizes},
                     {"train", awelab::to_json(train)},
                     {"finetune", awelab::to_json(finetune)},
                     {"psed_max_distance", psed_max_distance},
                     {"psed_sample_size", psed_sample_size},
                     {"pca_pairs", std::move(pairs)},
                     {"pca_auto_pairs", pca_auto_pairs},
                     {"out", out_dir},
                     {"seed", seed}};
    if (no_transfer) j["no_transfer"] = awelab::to_json(*no_transfer);
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    detail::reject_unknown(j,
                           {"source_corpus", "target_corpus", "source_split", "target_split", "dims",
                            "transfer_dim", "ne_m", "finetune_sizes", "train", "finetune",
                            "no_transfer", "psed_max_distance", "psed_sample_size", "pca_pairs",
                            "pca_auto_pairs", "out", "seed"},
                           "experiment config");
    ExperimentConfig c;
    detail::read_if(j, "source_corpus", c.source_corpus);
    detail::read_if(j, "target_corpus", c.target_corpus);
    if (j.contains("source_split")) c.source_split = split_spec_from_json(j["source_split"]);
    if (j.contains("target_split")) c.target_split = split_spec_from_json(j["target_split"]);
    detail::read_if(j, "dims", c.dims);
    detail::read_if(j, "transfer_dim", c.transfer_dim);
    detail::read_if(j, "ne_m", c.ne_partitions);
    detail::read_if(j, "finetune_sizes", c.finetune_sizes);
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    if (j.contains("finetune")) c.finetune = train_config_from_json(j["finetune"]);
    if (j.contains("no_transfer")) c.no_transfer = train_config_from_json(j["no_transfer"]);
    detail::read_if(j, "psed_max_distance", c.psed_max_distance);
    detail::read_if(j, "psed_sample_size", c.psed_sample_size);
    detail::read_if(j, "pca_pairs", c.pca_pairs);
    detail::read_if(j, "pca_auto_pairs", c.pca_auto_pairs);
    detail::read_if(j, "out", c.out_dir);
    detail::read_if(j, "seed", c.seed);
    return c;
  }

  // Output location does not take part in the digest.
  std::string digest() const {
    auto j = to_json();
    j.erase("out");
    return config_digest(j);
  }
};

// ---------------------------------------------------------------------------
// Reports

struct ReportCell {
  std::string experiment;
  std::string method;   // "SA", "NE", "SA No Transfer"
  std::string variant;  // dimension, partition count or fine-tune size
  std::string corpus;   // "source" or "target"
  std::string metric;   // "MAP", ...
  double value = 0.0;
  Index dim = 0;
  std::string config_hash;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"experiment", experiment}, {"method", method}, {"variant", variant},
            {"corpus", corpus},         {"metric", metric}, {"value", value},
            {"dim", dim},               {"config_hash", config_hash}, {"seed", seed}};
  }
};

struct ExperimentReport {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ReportCell> cells;
  std::map<std::string, std::vector<LossPoint>> loss_curves;
  std::optional<PsedBucketStats> psed;
  std::vector<PairDifference> pca_pairs;

  const ReportCell* find(const std::string& method, const std::string& variant,
                         const std::string& metric = "MAP") const {
    for (const auto& c : cells)
      if (c.method == method && c.variant == variant && c.metric == metric) return &c;
    return nullptr;
  }

  std::string table() const {
    std::ostringstream out;
    out << "# " << experiment << "  config " << config_hash << "  seed " << seed << '\n';
    out << std::left << std::setw(16) << "method" << std::setw(12) << "variant" << std::setw(8)
        << "dim" << std::setw(8) << "corpus" << std::setw(20) << "metric" << "value\n";
    for (const auto& c : cells)
      out << std::left << std::setw(16) << c.method << std::setw(12) << c.variant << std::setw(8)
          << c.dim << std::setw(8) << c.corpus << std::setw(20) << c.metric << std::fixed
          << std::setprecision(4) << c.value << std::defaultfloat << '\n';
    return out.str();
  }
};

namespace detail {

// Appends cells to <out>/cells.jsonl as soon as they are computed so an
// aborted run leaves its finished cells on disk.
class ReportWriter {
 public:
  ReportWriter(ExperimentReport& report, std::string out_dir)
      : report_(report), dir_(std::move(out_dir)) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(std::filesystem::path(dir_) / "checkpoints");
    cells_.open(std::filesystem::path(dir_) / "cells.jsonl", std::ios::binary | std::ios::trunc);
    if (!cells_) throw IoError("cannot write into output directory '" + dir_ + "'");
  }

  bool enabled() const { return !dir_.empty(); }
  std::string path(const std::string& name) const {
    return (std::filesystem::path(dir_) / name).string();
  }

  void add(std::string method, std::string variant, std::string corpus, std::string metric,
           double value, Index dim) {
    ReportCell cell{report_.experiment, std::move(method), std::move(variant), std::move(corpus),
                    std::move(metric), value, dim, report_.config_hash, report_.seed};
    report_.cells.push_back(cell);
    if (enabled()) {
      cells_ << cell.to_json().dump() << '\n';
      cells_.flush();
    }
  }

  void checkpoint(const std::string& name, const SAModel& m) {
    if (enabled()) save_checkpoint(m, path("checkpoints/" + name + ".json"));
  }

  void curve(const std::string& name, std::vector<LossPoint> curve) {
    if (enabled()) {
      std::ostringstream out;
      out << "batch\tloss\n" << std::setprecision(17);
      for (const auto& p : curve) out << p.batch << '\t' << p.loss << '\n';
      write_text_file(path("loss_" + name + ".tsv"), out.str());
    }
    report_.loss_curves[name] = std::move(curve);
  }

  void finish(const nlohmann::json& config) {
    if (!enabled()) return;
    write_text_file(path("config.json"), config.dump(2) + '\n');
    write_text_file(path("report.txt"), report_.table());
    if (report_.psed) {
      std::ostringstream out;
      write_psed_table(*report_.psed, out);
      write_text_file(path("psed.csv"), out.str());
    }
    if (!report_.pca_pairs.empty()) {
      std::ostringstream out;
      write_pair_differences(report_.pca_pairs, out);
      write_text_file(path("pca_pairs.csv"), out.str());
    }
  }

 private:
  ExperimentReport& report_;
  std::string dir_;
  std::ofstream cells_;
};

inline std::string variant_of(Index v) { return std::to_string(v); }

inline void add_ne_rows(ReportWriter& w, const DatasetSplit& split, const ExperimentConfig& cfg,
                        const std::string& corpus) {
  for (Index m : cfg.ne_partitions) {
    if (m < 1) throw ConfigInvalid("NE partition counts must be >= 1");
    const double map = retrieval_map(ne_embed_archive(split.db, m), ne_embed_archive(split.query, m));
    w.add("NE", "m=" + std::to_string(m), corpus, "MAP", map, split.db.feature_dim() * m);
  }
}

inline void require_queries(const DatasetSplit& split, const std::string& corpus) {
  if (split.db.empty() || split.query.empty())
    throw ConfigInvalid(corpus + " split needs non-empty db and query sets for MAP evaluation");
}

}  // namespace detail

// Trains one SA per configured dimension on the source training split and
// evaluates MAP on the source db/query split, next to NE for each m.
inline ExperimentReport run_dimension_sweep(const ExperimentConfig& cfg) {
  if (cfg.dims.empty() || cfg.ne_partitions.empty())
    throw ConfigInvalid("dimension sweep needs non-empty dims and ne_m lists");
  ExperimentReport report;
  report.experiment = "dimension-sweep";
  report.config_hash = cfg.digest();
  report.seed = cfg.seed;
  detail::ReportWriter writer(report, cfg.out_dir);

  const auto source = load_archive(cfg.source_corpus);
  const auto split = split_dataset(source, cfg.source_split);
  detail::require_queries(split, "source");

  detail::add_ne_rows(writer, split, cfg, "source");
  for (Index d : cfg.dims) {
    auto trained = train(SAModel::initialized(source.feature_dim(), d, cfg.seed), split.train, cfg.train);
    writer.checkpoint("sa_d" + std::to_string(d), trained.model);
    writer.curve("sa_d" + std::to_string(d), trained.loss_curve);
    const double map =
        retrieval_map(embed_archive(trained.model, split.db), embed_archive(trained.model, split.query));
    writer.add("SA", detail::variant_of(d), "source", "MAP", map, d);
  }
  writer.finish(cfg.to_json());
  return report;
}

// Pretrains on the source language, then on the target language: evaluates
// fine-tuned copies for every fine-tune size (0 = pretrained model as is),
// NE, and an SA trained on the target fine-tune data only. Also records the
// PSED statistics and suffix-pair difference vectors of the pretrained
// encoder on the target language.
inline ExperimentReport run_transfer_experiment(const ExperimentConfig& cfg) {
  if (cfg.finetune_sizes.empty() || cfg.ne_partitions.empty())
    throw ConfigInvalid("transfer experiment needs non-empty finetune_sizes and ne_m lists");
  ExperimentReport report;
  report.experiment = "transfer";
  report.config_hash = cfg.digest();
  report.seed = cfg.seed;
  detail::ReportWriter writer(report, cfg.out_dir);

  const auto source = load_archive(cfg.source_corpus);
  const auto target = load_archive(cfg.target_corpus);
  if (source.feature_dim() != target.feature_dim())
    throw DimensionMismatch("source and target corpora have different feature dims");
  const auto src_split = split_dataset(source, cfg.source_split);
  const auto tgt_split = split_dataset(target, cfg.target_split);
  detail::require_queries(tgt_split, "target");
  const std::size_t largest = *std::max_element(cfg.finetune_sizes.begin(), cfg.finetune_sizes.end());
  if (largest > tgt_split.finetune.size())
    throw InfeasibleSplit("fine-tune size " + std::to_string(largest) + " exceeds the target fine-tune split (" +
                          std::to_string(tgt_split.finetune.size()) + ")");

  const Index dim = cfg.transfer_dim;
  const auto init = SAModel::initialized(source.feature_dim(), dim, cfg.seed);

  auto pretrained = train(init, src_split.train, cfg.train);
  writer.checkpoint("pretrained", pretrained.model);
  writer.curve("pretrain", pretrained.loss_curve);

  const auto target_db = embed_archive(pretrained.model, tgt_split.db);
  report.psed = psed_buckets(tgt_split.db, to_table(target_db), cfg.psed_max_distance,
                             {cfg.psed_sample_size, cfg.seed});
  for (const auto& b : report.psed->buckets)
    if (!b.empty())
      writer.add("SA", "d=" + std::to_string(b.distance), "target", "psed_mean", b.mean, dim);

  detail::add_ne_rows(writer, tgt_split, cfg, "target");

  const auto prefix = [&](std::size_t n) {
    std::vector<Segment> segs(tgt_split.finetune.begin(),
                              tgt_split.finetune.begin() + static_cast<std::ptrdiff_t>(n));
    return SegmentArchive(std::move(segs), std::numeric_limits<int>::max());
  };

  const auto largest_split = prefix(largest);
  auto scratch = largest_split.empty()
                     ? TrainResult{init, {}}
                     : train(init, largest_split, cfg.no_transfer.value_or(cfg.train));
  writer.checkpoint("no_transfer", scratch.model);
  writer.curve("no_transfer", scratch.loss_curve);
  writer.add("SA No Transfer", std::to_string(largest), "target", "MAP",
              retrieval_map(embed_archive(scratch.model, tgt_split.db),
                            embed_archive(scratch.model, tgt_split.query)),
              dim);

  for (std::size_t n : cfg.finetune_sizes) {
    const auto subset = prefix(n);
    auto tuned = subset.empty() ? TrainResult{pretrained.model, {}}
                                : train(pretrained.model, subset, cfg.finetune);
    writer.checkpoint("sa_ft" + std::to_string(n), tuned.model);
    writer.curve("finetune_" + std::to_string(n), tuned.loss_curve);
    writer.add("SA", std::to_string(n), "target", "MAP",
                retrieval_map(embed_archive(tuned.model, tgt_split.db),
                              embed_archive(tuned.model, tgt_split.query)),
                dim);
  }

  auto pairs = cfg.pca_pairs.empty() ? find_suffix_pairs(target, cfg.pca_auto_pairs) : cfg.pca_pairs;
  if (!pairs.empty()) {
    const auto embed = [&](const Segment& s) {
      return encode(pretrained.model, s.features, std::numeric_limits<int>::max()).z;
    };
    std::vector<Vector> centroids;
    for (const auto& w : target.words()) centroids.push_back(word_centroid(target, embed, w).mean);
    if (centroids.size() >= 2 && dim >= 2) {
      const auto proj = pca_fit(centroids, 2);
      std::vector<std::pair<WordCentroid, WordCentroid>> centroid_pairs;
      for (const auto& [a, b] : pairs)
        centroid_pairs.emplace_back(word_centroid(target, embed, a), word_centroid(target, embed, b));
      report.pca_pairs = pair_difference_vectors(centroid_pairs, proj);
      if (report.pca_pairs.size() >= 2)
        writer.add("SA", "pretrained", "target", "max_pair_angle_deg",
                    max_pairwise_angle_deg(report.pca_pairs), dim);
    }
  }

  writer.finish(cfg.to_json());
  return report;
}

}  // namespace awelab
