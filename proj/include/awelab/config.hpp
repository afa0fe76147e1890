#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "awelab/corpus.hpp"
#include "awelab/error.hpp"
#include "awelab/nncore.hpp"
#include "awelab/sa.hpp"

// JSON forms of the configuration types. Missing keys keep their defaults;
// unknown keys are rejected so typos do not silently fall back.
namespace awelab {

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& what) {
  if (!j.is_object()) throw ConfigInvalid(what + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigInvalid("unknown key '" + key + "' in " + what);
  }
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed JSON in '") + path + "': " + e.what(), 1);
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

// 64-bit FNV-1a of the compact JSON dump, printed as 16 hex digits.
inline std::string config_digest(const nlohmann::json& j) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

// --- TrainConfig ------------------------------------------------------------

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"batch_size", c.batch_size},
                   {"max_batches", c.max_batches},
                   {"initial_lr", c.schedule.initial_lr},
                   {"decay", c.schedule.decay},
                   {"period", c.schedule.period},
                   {"loss_reduction", to_string(c.loss_reduction)},
                   {"seed", c.seed},
                   {"shuffle", c.shuffle}};
  // JSON has no infinity; null means clipping is disabled.
  j["clip_norm"] = std::isfinite(c.clip_norm) && c.clip_norm > 0.0 ? nlohmann::json(c.clip_norm)
                                                                   : nlohmann::json(nullptr);
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"batch_size", "max_batches", "initial_lr", "decay", "period",
                          "clip_norm", "loss_reduction", "seed", "shuffle", "threads"},
                         "train config");
  TrainConfig c;
  detail::read_if(j, "batch_size", c.batch_size);
  detail::read_if(j, "max_batches", c.max_batches);
  detail::read_if(j, "initial_lr", c.schedule.initial_lr);
  detail::read_if(j, "decay", c.schedule.decay);
  detail::read_if(j, "period", c.schedule.period);
  if (j.contains("clip_norm")) {
    if (j["clip_norm"].is_null()) {
      c.clip_norm = kNoClip;
    } else {
      detail::read_if(j, "clip_norm", c.clip_norm);
    }
  }
  if (j.contains("loss_reduction"))
    c.loss_reduction = loss_reduction_from_string(j["loss_reduction"].get<std::string>());
  detail::read_if(j, "seed", c.seed);
  detail::read_if(j, "shuffle", c.shuffle);
  detail::read_if(j, "threads", c.threads);
  c.validate();
  return c;
}

// --- SplitSpec ----------------------------------------------------------------

inline nlohmann::json to_json(const SplitSpec& s) {
  return {{"train", s.train_count},
          {"db", s.db_count},
          {"query", s.query_count},
          {"finetune", s.finetune_count},
          {"seed", s.seed}};
}

inline SplitSpec split_spec_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"train", "db", "query", "finetune", "seed"}, "split spec");
  SplitSpec s;
  detail::read_if(j, "train", s.train_count);
  detail::read_if(j, "db", s.db_count);
  detail::read_if(j, "query", s.query_count);
  detail::read_if(j, "finetune", s.finetune_count);
  detail::read_if(j, "seed", s.seed);
  return s;
}

// --- Synthetic corpora ----------------------------------------------------------

inline nlohmann::json to_json(const LanguageSpec& s) {
  return {{"lang", s.lang},
          {"feature_dim", s.feature_dim},
          {"inventory_size", s.inventory_size},
          {"template_seed", s.template_seed},
          {"template_scale", s.template_scale},
          {"inventory_overlap", s.inventory_overlap},
          {"lexicon_seed", s.lexicon_seed},
          {"num_words", s.num_words},
          {"min_word_phonemes", s.min_word_phonemes},
          {"max_word_phonemes", s.max_word_phonemes},
          {"derived_fraction", s.derived_fraction},
          {"suffix_pairs", s.suffix_pairs},
          {"suffix_phoneme", s.suffix_phoneme},
          {"min_frames_per_phoneme", s.min_frames_per_phoneme},
          {"max_frames_per_phoneme", s.max_frames_per_phoneme},
          {"noise_scale", s.noise_scale},
          {"segments_per_word", s.segments_per_word},
          {"seed", s.seed},
          {"max_frames", s.max_frames}};
}

inline LanguageSpec language_spec_from_json(const nlohmann::json& j) {
  detail::reject_unknown(
      j,
      {"lang", "feature_dim", "inventory_size", "template_seed", "template_scale",
       "inventory_overlap", "lexicon_seed", "num_words", "min_word_phonemes", "max_word_phonemes",
       "derived_fraction", "suffix_pairs", "suffix_phoneme", "min_frames_per_phoneme",
       "max_frames_per_phoneme", "noise_scale", "segments_per_word", "seed", "max_frames"},
      "language spec");
  LanguageSpec s;
  detail::read_if(j, "lang", s.lang);
  detail::read_if(j, "feature_dim", s.feature_dim);
  detail::read_if(j, "inventory_size", s.inventory_size);
  detail::read_if(j, "template_seed", s.template_seed);
  detail::read_if(j, "template_scale", s.template_scale);
  detail::read_if(j, "inventory_overlap", s.inventory_overlap);
  detail::read_if(j, "lexicon_seed", s.lexicon_seed);
  detail::read_if(j, "num_words", s.num_words);
  detail::read_if(j, "min_word_phonemes", s.min_word_phonemes);
  detail::read_if(j, "max_word_phonemes", s.max_word_phonemes);
  detail::read_if(j, "derived_fraction", s.derived_fraction);
  detail::read_if(j, "suffix_pairs", s.suffix_pairs);
  detail::read_if(j, "suffix_phoneme", s.suffix_phoneme);
  detail::read_if(j, "min_frames_per_phoneme", s.min_frames_per_phoneme);
  detail::read_if(j, "max_frames_per_phoneme", s.max_frames_per_phoneme);
  detail::read_if(j, "noise_scale", s.noise_scale);
  detail::read_if(j, "segments_per_word", s.segments_per_word);
  detail::read_if(j, "seed", s.seed);
  detail::read_if(j, "max_frames", s.max_frames);
  return s;
}

inline nlohmann::json to_json(const SynthConfig& c) {
  auto inventory = nlohmann::json::array();
  for (const auto& t : c.inventory)
    inventory.push_back(
        {{"symbol", t.symbol}, {"mean", detail::vector_to_json(t.mean)}, {"spread", t.spread}});
  auto lexicon = nlohmann::json::array();
  for (const auto& e : c.lexicon) lexicon.push_back({{"word", e.word}, {"phonemes", e.phonemes}});
  return {{"lang", c.lang},
          {"inventory", std::move(inventory)},
          {"lexicon", std::move(lexicon)},
          {"min_frames_per_phoneme", c.min_frames_per_phoneme},
          {"max_frames_per_phoneme", c.max_frames_per_phoneme},
          {"noise_scale", c.noise_scale},
          {"segments_per_word", c.segments_per_word},
          {"seed", c.seed},
          {"max_frames", c.max_frames}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"lang", "inventory", "lexicon", "min_frames_per_phoneme",
                          "max_frames_per_phoneme", "noise_scale", "segments_per_word", "seed",
                          "max_frames"},
                         "synth config");
  SynthConfig c;
  detail::read_if(j, "lang", c.lang);
  try {
    for (const auto& t : j.at("inventory")) {
      PhonemeTemplate p;
      p.symbol = t.at("symbol").get<std::string>();
      p.mean = detail::vector_from_json(t.at("mean"));
      if (t.contains("spread")) p.spread = t["spread"].get<double>();
      c.inventory.push_back(std::move(p));
    }
    for (const auto& e : j.at("lexicon"))
      c.lexicon.push_back(
          {e.at("word").get<std::string>(), e.at("phonemes").get<std::vector<std::string>>()});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("bad synth config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigInvalid(std::string("bad synth config: ") + e.what());
  }
  detail::read_if(j, "min_frames_per_phoneme", c.min_frames_per_phoneme);
  detail::read_if(j, "max_frames_per_phoneme", c.max_frames_per_phoneme);
  detail::read_if(j, "noise_scale", c.noise_scale);
  detail::read_if(j, "segments_per_word", c.segments_per_word);
  detail::read_if(j, "seed", c.seed);
  detail::read_if(j, "max_frames", c.max_frames);
  c.validate();
  return c;
}

// Accepts either {"language": LanguageSpec} or a full SynthConfig object.
inline SynthConfig synth_config_from_any(const nlohmann::json& j,
                                         const std::set<std::vector<std::string>>& exclude = {}) {
  if (j.is_object() && j.contains("language")) {
    detail::reject_unknown(j, {"language"}, "synth config");
    return make_language(language_spec_from_json(j["language"]), exclude);
  }
  return synth_config_from_json(j);
}

}  // namespace awelab
