#pragma once

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"

#include "awelab/analysis.hpp"
#include "awelab/config.hpp"
#include "awelab/corpus.hpp"
#include "awelab/harness.hpp"
#include "awelab/ne.hpp"
#include "awelab/retrieval.hpp"
#include "awelab/sa.hpp"

namespace awelab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckOptions {
  std::uint64_t seed = 7;
  Index embed_dim = 8;
  Index feature_dim = 5;
  Index frames = 7;
  LossReduction reduction = LossReduction::kMean;
};

// Random SA instance, analytic BPTT gradient vs central differences.
inline GradCheckResult run_gradcheck(const GradcheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto model = SAModel::initialized(o.feature_dim, o.embed_dim, o.seed);
  // Non-zero biases so every tensor carries a gradient worth checking.
  model.for_each([&](auto name, auto& t) {
    if (std::string_view(name).find(".b_") != std::string_view::npos)
      for (Index i = 0; i < t.size(); ++i) t.data()[i] = 0.1 * gauss(rng);
  });
  Matrix seq(o.frames, o.feature_dim);
  for (Index i = 0; i < seq.size(); ++i) seq.data()[i] = gauss(rng);
  const auto analytic = bptt(model, seq, o.reduction);
  return check_gradients(model, analytic.grads, [&](const SAModel& m) {
    return reconstruction_loss(m, seq, o.reduction, std::numeric_limits<int>::max());
  });
}

namespace detail {

inline std::set<std::vector<std::string>> lexicon_of(const std::vector<std::string>& paths) {
  std::set<std::vector<std::string>> out;
  for (const auto& p : paths)
    for (const auto& s : load_archive(p)) out.insert(s.phonemes);
  return out;
}

inline std::vector<IndexedEmbedding> find_by_id(const std::vector<IndexedEmbedding>& entries,
                                                const std::string& id) {
  for (const auto& e : entries)
    if (e.id == id) return {e};
  return {};
}

inline void print_ranking(std::ostream& out, const RetrievalIndex& index, const IndexedEmbedding& q,
                          std::optional<std::size_t> k) {
  std::unordered_map<std::string, const IndexedEmbedding*> by_id;
  for (const auto& e : index.entries()) by_id.emplace(e.id, &e);
  out << "query " << q.id << " (" << q.word << ")\n";
  std::size_t rank = 0;
  for (const auto& item : index.query(q.z, k))
    out << std::setw(5) << ++rank << "  " << item.id << "  " << by_id.at(item.id)->word << "  "
        << std::fixed << std::setprecision(6) << item.score << std::defaultfloat << '\n';
}

inline ExperimentConfig experiment_from(const std::string& path, const std::string& out_dir,
                                        std::optional<std::uint64_t> seed) {
  auto cfg = ExperimentConfig::from_json(read_json_file(path));
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed) cfg.seed = *seed;
  return cfg;
}

inline TrainConfig train_config_from(const std::string& path) {
  return path.empty() ? TrainConfig{} : train_config_from_json(read_json_file(path));
}

}  // namespace detail

// Entry point of the `awelab` tool. Usage errors return 2, failures 1.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr, std::istream& in = std::cin) {
  CLI::App app{"Acoustic word embedding laboratory", "awelab"};
  app.require_subcommand(1);

  std::string config, out_path, model_path, archive_path, index_path, queries_path, embeddings_path;
  std::optional<std::uint64_t> seed;
  Index dim = 32;
  Index partitions = 6;
  std::optional<std::size_t> top_k;

  // synth
  std::vector<std::string> exclude;
  auto* synth = app.add_subcommand("synth", "generate a synthetic segment archive");
  synth->add_option("--config", config, "synth config (JSON)")->required();
  synth->add_option("--out", out_path, "output archive")->required();
  synth->add_option("--seed", seed, "override the sampling seed");
  synth->add_option("--exclude", exclude, "archive(s) whose words must not be generated");

  // split
  SplitSpec split_counts;
  auto* split = app.add_subcommand("split", "partition an archive into train/db/query/finetune");
  split->add_option("--archive", archive_path)->required();
  split->add_option("--config", config, "split spec (JSON)");
  split->add_option("--train", split_counts.train_count);
  split->add_option("--db", split_counts.db_count);
  split->add_option("--query", split_counts.query_count);
  split->add_option("--finetune", split_counts.finetune_count);
  split->add_option("--seed", seed);
  split->add_option("--out", out_path, "output directory")->required();

  // train / finetune
  std::string curve_path;
  std::optional<std::int64_t> batches;
  auto* train_cmd = app.add_subcommand("train", "train a sequence autoencoder");
  train_cmd->add_option("--archive", archive_path)->required();
  train_cmd->add_option("--config", config, "train config (JSON)");
  train_cmd->add_option("--dim", dim, "embedding dimension");
  train_cmd->add_option("--seed", seed, "initialization seed");
  train_cmd->add_option("--batches", batches, "override max_batches");
  train_cmd->add_option("--loss-curve", curve_path, "write the per-batch loss here");
  train_cmd->add_option("--out", out_path, "output checkpoint")->required();

  auto* finetune = app.add_subcommand("finetune", "continue training a checkpoint");
  finetune->add_option("--model", model_path)->required();
  finetune->add_option("--archive", archive_path)->required();
  finetune->add_option("--config", config, "train config (JSON)");
  finetune->add_option("--batches", batches, "override max_batches");
  finetune->add_option("--out", out_path, "output checkpoint")->required();

  // embeddings
  auto* encode_cmd = app.add_subcommand("encode", "embed every segment with a trained encoder");
  encode_cmd->add_option("--model", model_path)->required();
  encode_cmd->add_option("--archive", archive_path)->required();
  encode_cmd->add_option("--out", out_path, "embedding file")->required();

  auto* ne_cmd = app.add_subcommand("ne-encode", "embed every segment with the naive encoder");
  ne_cmd->add_option("--archive", archive_path)->required();
  ne_cmd->add_option("--m", partitions, "partition count")->check(CLI::PositiveNumber);
  ne_cmd->add_option("--out", out_path, "embedding file")->required();

  // retrieval
  auto* index_cmd = app.add_subcommand("index", "validate an embedding file as a search index");
  index_cmd->add_option("--embeddings", embeddings_path)->required();
  index_cmd->add_option("--out", out_path, "write the validated index here");

  std::string query_id;
  auto* search = app.add_subcommand("search", "rank index entries for query ids (stdin if no --id)");
  search->add_option("--index", index_path)->required();
  search->add_option("--queries", queries_path)->required();
  search->add_option("--id", query_id);
  search->add_option("--k", top_k, "number of results");

  auto* eval = app.add_subcommand("eval-map", "mean average precision of queries against an index");
  eval->add_option("--index", index_path)->required();
  eval->add_option("--queries", queries_path)->required();

  // analysis
  std::size_t max_distance = 4;
  std::size_t sample = 0;
  auto* psed = app.add_subcommand("analyze-psed", "cosine similarity by phoneme edit distance");
  psed->add_option("--archive", archive_path)->required();
  psed->add_option("--embeddings", embeddings_path)->required();
  psed->add_option("--dmax", max_distance);
  psed->add_option("--sample", sample, "sample this many pairs instead of all");
  psed->add_option("--seed", seed);
  psed->add_option("--out", out_path);

  std::vector<std::string> pair_args;
  auto* pca = app.add_subcommand("pca-pairs", "2-D PCA difference vectors of word pairs");
  pca->add_option("--archive", archive_path)->required();
  pca->add_option("--embeddings", embeddings_path)->required();
  pca->add_option("--pair", pair_args, "word pair 'a,b' (repeatable); default: suffix pairs");
  pca->add_option("--k", top_k, "number of automatic suffix pairs");
  pca->add_option("--out", out_path);

  // checks and experiments
  GradcheckOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of BPTT gradients");
  gradcheck->add_option("--seed", gc.seed);
  gradcheck->add_option("--dim", gc.embed_dim)->check(CLI::PositiveNumber);
  gradcheck->add_option("--feature-dim", gc.feature_dim)->check(CLI::PositiveNumber);
  gradcheck->add_option("--frames", gc.frames)->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep-dim", "embedding dimension sweep on the source corpus");
  sweep->add_option("--config", config)->required();
  sweep->add_option("--out", out_path, "output directory");
  sweep->add_option("--seed", seed);

  auto* transfer = app.add_subcommand("transfer-exp", "language transfer and fine-tune sweep");
  transfer->add_option("--config", config)->required();
  transfer->add_option("--out", out_path, "output directory");
  transfer->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "awelab: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      auto cfg = synth_config_from_any(read_json_file(config), detail::lexicon_of(exclude));
      if (seed) cfg.seed = *seed;
      const auto archive = synth_corpus(cfg);
      save_archive(archive, out_path);
      out << "wrote " << archive.size() << " segments (" << cfg.lexicon.size() << " words, dim "
          << archive.feature_dim() << ") to " << out_path << '\n';
    } else if (split->parsed()) {
      SplitSpec spec = config.empty() ? split_counts : split_spec_from_json(read_json_file(config));
      if (seed) spec.seed = *seed;
      const auto parts = split_dataset(load_archive(archive_path), spec);
      std::filesystem::create_directories(out_path);
      const auto dir = std::filesystem::path(out_path);
      save_archive(parts.train, (dir / "train.jsonl").string());
      save_archive(parts.db, (dir / "db.jsonl").string());
      save_archive(parts.query, (dir / "query.jsonl").string());
      save_archive(parts.finetune, (dir / "finetune.jsonl").string());
      out << "train " << parts.train.size() << ", db " << parts.db.size() << ", query "
          << parts.query.size() << ", finetune " << parts.finetune.size() << '\n';
    } else if (train_cmd->parsed()) {
      auto tc = detail::train_config_from(config);
      if (batches) tc.max_batches = *batches;
      const auto archive = load_archive(archive_path);
      auto result = train(SAModel::initialized(archive.feature_dim(), dim, seed.value_or(0)), archive, tc);
      save_checkpoint(result.model, out_path);
      if (!curve_path.empty()) {
        std::ostringstream curve;
        curve << "batch\tloss\n" << std::setprecision(17);
        for (const auto& p : result.loss_curve) curve << p.batch << '\t' << p.loss << '\n';
        write_text_file(curve_path, curve.str());
      }
      out << "trained " << result.loss_curve.size() << " batches";
      if (!result.loss_curve.empty())
        out << ", loss " << result.loss_curve.front().loss << " -> " << result.loss_curve.back().loss;
      out << '\n';
    } else if (finetune->parsed()) {
      auto tc = detail::train_config_from(config);
      if (batches) tc.max_batches = *batches;
      save_checkpoint(fine_tune(load_checkpoint(model_path), load_archive(archive_path), tc), out_path);
      out << "wrote " << out_path << '\n';
    } else if (encode_cmd->parsed()) {
      const auto entries = embed_archive(load_checkpoint(model_path), load_archive(archive_path));
      save_embeddings(entries, out_path);
      out << "wrote " << entries.size() << " embeddings to " << out_path << '\n';
    } else if (ne_cmd->parsed()) {
      const auto entries = ne_embed_archive(load_archive(archive_path), partitions);
      save_embeddings(entries, out_path);
      out << "wrote " << entries.size() << " embeddings to " << out_path << '\n';
    } else if (index_cmd->parsed()) {
      auto entries = load_embeddings(embeddings_path);
      const auto index = build_index(entries);
      if (!out_path.empty()) save_embeddings(index.entries(), out_path);
      out << "index: " << index.size() << " entries, dim " << index.dim() << '\n';
    } else if (search->parsed()) {
      const auto index = build_index(load_embeddings(index_path));
      const auto queries = load_embeddings(queries_path);
      const auto run = [&](const std::string& id) {
        auto q = detail::find_by_id(queries, id);
        if (q.empty()) {
          err << "awelab: unknown query id '" << id << "'\n";
          return false;
        }
        detail::print_ranking(out, index, q.front(), top_k);
        return true;
      };
      if (!query_id.empty()) return run(query_id) ? kExitOk : kExitFailure;
      bool ok = true;
      for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        ok = run(line) && ok;
      }
      return ok ? kExitOk : kExitFailure;
    } else if (eval->parsed()) {
      const double map = retrieval_map(load_embeddings(index_path), load_embeddings(queries_path));
      out << "MAP " << std::fixed << std::setprecision(4) << map << std::defaultfloat << '\n';
    } else if (psed->parsed()) {
      const auto stats = psed_buckets(load_archive(archive_path), to_table(load_embeddings(embeddings_path)),
                                      max_distance, {sample, seed.value_or(0)});
      std::ostringstream table;
      write_psed_table(stats, table);
      if (out_path.empty()) {
        out << table.str();
      } else {
        write_text_file(out_path, table.str());
      }
    } else if (pca->parsed()) {
      const auto archive = load_archive(archive_path);
      const auto table = to_table(load_embeddings(embeddings_path));
      const auto embed = [&](const Segment& s) {
        auto it = table.find(s.id);
        if (it == table.end()) throw MissingEmbedding("no embedding for segment '" + s.id + "'");
        return it->second;
      };
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto& p : pair_args) {
        const auto comma = p.find(',');
        if (comma == std::string::npos) {
          err << "awelab: --pair expects 'word_a,word_b', got '" << p << "'\n";
          return kExitUsage;
        }
        pairs.emplace_back(p.substr(0, comma), p.substr(comma + 1));
      }
      if (pairs.empty()) pairs = find_suffix_pairs(archive, top_k.value_or(4));
      std::vector<Vector> centroids;
      for (const auto& w : archive.words()) centroids.push_back(word_centroid(archive, embed, w).mean);
      const auto proj = pca_fit(centroids, 2);
      std::vector<std::pair<WordCentroid, WordCentroid>> cps;
      for (const auto& [a, b] : pairs)
        cps.emplace_back(word_centroid(archive, embed, a), word_centroid(archive, embed, b));
      std::ostringstream text;
      write_pair_differences(pair_difference_vectors(cps, proj), text);
      if (out_path.empty()) {
        out << text.str();
      } else {
        write_text_file(out_path, text.str());
      }
    } else if (gradcheck->parsed()) {
      const auto r = run_gradcheck(gc);
      out << "max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error
          << std::defaultfloat << " over " << r.checked << " entries (worst: " << r.worst.tensor << '['
          << r.worst.index << "])\n";
      return r.max_rel_error < kGradcheckTolerance ? kExitOk : kExitFailure;
    } else if (sweep->parsed()) {
      const auto report = run_dimension_sweep(detail::experiment_from(config, out_path, seed));
      out << report.table();
    } else if (transfer->parsed()) {
      const auto report = run_transfer_experiment(detail::experiment_from(config, out_path, seed));
      out << report.table();
      if (report.psed) write_psed_table(*report.psed, out);
    }
  } catch (const Error& e) {
    err << "awelab: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "awelab: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace awelab::cli
