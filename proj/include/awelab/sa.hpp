#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "awelab/corpus.hpp"
#include "awelab/error.hpp"
#include "awelab/nncore.hpp"

namespace awelab {

// Sequence-to-sequence autoencoder: a GRU encoder whose final state is the
// embedding, a historyless GRU decoder started from that state and fed zero
// vectors, and an affine readout back to feature space.
struct SAModel {
  GruParams encoder;
  GruParams decoder;
  AffineParams output;

  SAModel() = default;
  SAModel(Index feature_dim, Index embed_dim)
      : encoder(feature_dim, embed_dim), decoder(feature_dim, embed_dim),
        output(embed_dim, feature_dim) {}

  static SAModel initialized(Index feature_dim, Index embed_dim, std::uint64_t seed) {
    auto p = init_params(feature_dim, embed_dim, feature_dim, seed);
    SAModel m;
    m.encoder = std::move(p.encoder);
    m.decoder = std::move(p.decoder);
    m.output = std::move(p.output);
    return m;
  }

  Index feature_dim() const { return encoder.input_dim(); }
  Index embed_dim() const { return encoder.hidden_dim(); }

  template <class F>
  void for_each(F&& f) {
    encoder.for_each([&](std::string_view n, auto& t) { f(std::string("encoder.") += n, t); });
    decoder.for_each([&](std::string_view n, auto& t) { f(std::string("decoder.") += n, t); });
    output.for_each([&](std::string_view n, auto& t) { f(std::string("output.") += n, t); });
  }
  template <class F>
  void for_each(F&& f) const {
    encoder.for_each([&](std::string_view n, const auto& t) { f(std::string("encoder.") += n, t); });
    decoder.for_each([&](std::string_view n, const auto& t) { f(std::string("decoder.") += n, t); });
    output.for_each([&](std::string_view n, const auto& t) { f(std::string("output.") += n, t); });
  }

  void check_shapes() const {
    encoder.check_shapes();
    decoder.check_shapes();
    const Index f = feature_dim(), d = embed_dim();
    if (f < 1 || d < 1) throw DimensionMismatch("model dimensions must be positive");
    if (decoder.input_dim() != f || decoder.hidden_dim() != d || output.input_dim() != d ||
        output.output_dim() != f || output.b.size() != f)
      throw DimensionMismatch("encoder, decoder and output shapes disagree");
  }
};

struct Embedding {
  Vector z;

  Index dim() const { return z.size(); }
};

namespace detail {

inline void check_input(const SAModel& m, const FeatureSequence& seq, int max_frames) {
  if (seq.cols() != m.feature_dim())
    throw DimensionMismatch("sequence has feature dim " + std::to_string(seq.cols()) +
                            ", model expects " + std::to_string(m.feature_dim()));
  if (seq.rows() < 1) throw DimensionMismatch("sequence has no frames");
  if (seq.rows() > max_frames)
    throw OverLength("sequence has " + std::to_string(seq.rows()) + " frames, limit is " +
                     std::to_string(max_frames));
}

inline Matrix readout(const AffineParams& out, const GruTrace& trace) {
  Matrix y(static_cast<Index>(trace.size()), out.output_dim());
  for (std::size_t t = 0; t < trace.size(); ++t)
    y.row(static_cast<Index>(t)) = (out.w * trace.steps[t].h + out.b).transpose();
  return y;
}

}  // namespace detail

// Final encoder state, starting from h0 = 0.
inline Embedding encode(const SAModel& m, const FeatureSequence& seq,
                        int max_frames = kDefaultMaxFrames) {
  detail::check_input(m, seq, max_frames);
  const auto trace = gru_forward_trace(m.encoder, seq, HiddenState::Zero(m.embed_dim()));
  return {trace.final_state()};
}

inline Matrix decode(const SAModel& m, const Embedding& z, Index steps) {
  if (z.dim() != m.embed_dim())
    throw DimensionMismatch("embedding has dim " + std::to_string(z.dim()) + ", model has " +
                            std::to_string(m.embed_dim()));
  if (steps < 1) throw DimensionMismatch("decode needs at least one output step");
  return detail::readout(m.output, gru_forward_zero_input_trace(m.decoder, steps, z.z));
}

inline double reconstruction_loss(const SAModel& m, const FeatureSequence& seq,
                                  LossReduction reduction = LossReduction::kMean,
                                  int max_frames = kDefaultMaxFrames) {
  const auto z = encode(m, seq, max_frames);
  return mse_loss(decode(m, z, seq.rows()), seq, reduction).loss;
}

struct SAGradient {
  double loss = 0.0;
  SAModel grads;
};

// Exact gradient of the reconstruction loss of one sequence w.r.t. every
// parameter, by backpropagation through decoder, embedding and encoder.
inline SAGradient bptt(const SAModel& m, const FeatureSequence& seq,
                       LossReduction reduction = LossReduction::kMean,
                       int max_frames = kDefaultMaxFrames) {
  m.check_shapes();
  detail::check_input(m, seq, max_frames);
  const Index steps = seq.rows();
  const Index hidden = m.embed_dim();

  const auto enc = gru_forward_trace(m.encoder, seq, HiddenState::Zero(hidden));
  const auto dec = gru_forward_zero_input_trace(m.decoder, steps, enc.final_state());
  const Matrix y = detail::readout(m.output, dec);
  auto loss = mse_loss(y, seq, reduction);

  SAGradient out{loss.loss, SAModel(m.feature_dim(), hidden)};
  Matrix dec_state_grads(steps, hidden);
  for (Index t = 0; t < steps; ++t) {
    const Vector dy = loss.grad.row(t).transpose();
    out.grads.output.w.noalias() += dy * dec.steps[static_cast<std::size_t>(t)].h.transpose();
    out.grads.output.b += dy;
    dec_state_grads.row(t) = (m.output.w.transpose() * dy).transpose();
  }
  const Vector dz = gru_backward(m.decoder, dec, dec_state_grads, out.grads.decoder);

  Matrix enc_state_grads = Matrix::Zero(steps, hidden);
  enc_state_grads.row(steps - 1) = dz.transpose();
  gru_backward(m.encoder, enc, enc_state_grads, out.grads.encoder);
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t batch_size = 32;
  std::int64_t max_batches = 1000;
  LrSchedule schedule;
  double clip_norm = 5.0;
  LossReduction loss_reduction = LossReduction::kMean;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Worker threads for per-sequence gradients; 0 means AWELAB_THREADS or 1.
  unsigned threads = 0;

  void validate() const {
    if (batch_size < 1) throw ConfigInvalid("batch_size must be >= 1");
    if (max_batches < 0) throw ConfigInvalid("max_batches must be >= 0");
    schedule.validate();
  }
};

struct LossPoint {
  std::int64_t batch = 0;
  double loss = 0.0;
};

struct TrainResult {
  SAModel model;
  std::vector<LossPoint> loss_curve;
};

// Raised when a batch produces a non-finite loss or gradient. Carries the
// last model whose parameters were all finite and the curve up to it.
class TrainingAborted : public NonFinite {
 public:
  TrainingAborted(const std::string& what, TrainResult last_finite)
      : NonFinite(what), last_finite_(std::move(last_finite)) {}
  const TrainResult& last_finite() const { return last_finite_; }

 private:
  TrainResult last_finite_;
};

inline unsigned worker_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("AWELAB_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

namespace detail {

// Per-sequence gradients are summed in fixed chunks of consecutive batch
// positions and the chunk sums are added in order, so the result does not
// depend on the number of worker threads.
inline constexpr std::size_t kGradientChunk = 4;

inline SAGradient batch_gradient(const SAModel& m, const SegmentArchive& archive,
                                 const std::vector<std::size_t>& batch, LossReduction reduction,
                                 unsigned threads) {
  const std::size_t chunks = (batch.size() + kGradientChunk - 1) / kGradientChunk;
  std::vector<SAGradient> partial(chunks, SAGradient{0.0, SAModel(m.feature_dim(), m.embed_dim())});
  std::vector<std::exception_ptr> errors(chunks);
  const auto work = [&](std::size_t c) {
    try {
      const std::size_t lo = c * kGradientChunk;
      const std::size_t hi = std::min(batch.size(), lo + kGradientChunk);
      for (std::size_t i = lo; i < hi; ++i) {
        auto g = bptt(m, archive[batch[i]].features, reduction, std::numeric_limits<int>::max());
        partial[c].loss += g.loss;
        add_scaled(partial[c].grads, g.grads, 1.0);
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(chunks));
  if (n <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks; c += n) work(c);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  SAGradient total{0.0, SAModel(m.feature_dim(), m.embed_dim())};
  for (const auto& p : partial) {
    total.loss += p.loss;
    add_scaled(total.grads, p.grads, 1.0);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  total.loss *= inv;
  for (auto view : tensor_views(total.grads))
    for (double& v : view) v *= inv;
  return total;
}

}  // namespace detail

// Gradient of the batch-averaged loss. Public so batch independence can be checked.
inline SAGradient batch_gradient(const SAModel& m, const SegmentArchive& archive,
                                 const std::vector<std::size_t>& batch,
                                 LossReduction reduction = LossReduction::kMean,
                                 unsigned threads = 1) {
  if (batch.empty()) throw EmptyArchive("empty batch");
  return detail::batch_gradient(m, archive, batch, reduction, threads);
}

// Mini-batch SGD on the reconstruction loss. Batches are consecutive runs of
// a stream of per-epoch permutations (seeded); a batch holds
// min(batch_size, archive size) segments and may straddle an epoch boundary.
// The curve records each batch's average loss before its update.
inline TrainResult train(SAModel model, const SegmentArchive& archive, const TrainConfig& cfg) {
  cfg.validate();
  model.check_shapes();
  TrainResult result{std::move(model), {}};
  if (cfg.max_batches == 0) return result;
  if (archive.empty()) throw EmptyArchive("cannot train on an empty archive");
  if (archive.feature_dim() != result.model.feature_dim())
    throw DimensionMismatch("archive feature dim " + std::to_string(archive.feature_dim()) +
                            " does not match model feature dim " +
                            std::to_string(result.model.feature_dim()));

  const unsigned threads = worker_threads(cfg.threads);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(archive.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  const std::size_t batch_size = std::min(cfg.batch_size, archive.size());
  result.loss_curve.reserve(static_cast<std::size_t>(cfg.max_batches));

  std::vector<std::size_t> batch(batch_size);
  for (std::int64_t b = 0; b < cfg.max_batches; ++b) {
    for (auto& slot : batch) {
      if (cursor == order.size()) {
        cursor = 0;
        if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
      }
      slot = order[cursor++];
    }
    auto g = detail::batch_gradient(result.model, archive, batch, cfg.loss_reduction, threads);
    if (!std::isfinite(g.loss) || !all_finite(g.grads))
      throw TrainingAborted("non-finite loss at batch " + std::to_string(b), std::move(result));
    auto next = sgd_step(result.model, g.grads, lr_at(cfg.schedule, b), cfg.clip_norm);
    result.loss_curve.push_back({b, g.loss});
    if (!all_finite(next))
      throw TrainingAborted("non-finite parameters after batch " + std::to_string(b),
                            std::move(result));
    result.model = std::move(next);
  }
  return result;
}

// Continues SGD from pretrained parameters; an empty subset is a no-op.
inline SAModel fine_tune(SAModel model, const SegmentArchive& subset, const TrainConfig& cfg) {
  if (subset.empty()) return model;
  return train(std::move(model), subset, cfg).model;
}

// ---------------------------------------------------------------------------
// Checkpoints: one JSON document with a header and row-major named tensors.

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kGruConvention = "h=(1-z)*h_prev+z*candidate";

inline nlohmann::json checkpoint_to_json(const SAModel& m) {
  nlohmann::json tensors = nlohmann::json::object();
  m.for_each([&](const std::string& name, const auto& t) {
    nlohmann::json values = nlohmann::json::array();
    for (Index i = 0; i < t.size(); ++i) values.push_back(t.data()[i]);
    tensors[name] = {{"shape", {t.rows(), t.cols()}}, {"values", std::move(values)}};
  });
  return {{"format_version", kCheckpointVersion},
          {"feature_dim", m.feature_dim()},
          {"embed_dim", m.embed_dim()},
          {"gru_convention", kGruConvention},
          {"tensors", std::move(tensors)}};
}

inline SAModel checkpoint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("format_version"))
    throw ConfigInvalid("checkpoint header is missing format_version");
  if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != kCheckpointVersion)
    throw VersionMismatch("unsupported checkpoint format_version " + j["format_version"].dump() +
                          " (supported: " + std::to_string(kCheckpointVersion) + ")");
  if (!j.contains("gru_convention") || j["gru_convention"] != kGruConvention)
    throw VersionMismatch("checkpoint uses a different GRU convention");
  try {
    const auto f = j.at("feature_dim").get<Index>();
    const auto d = j.at("embed_dim").get<Index>();
    if (f < 1 || d < 1) throw DimensionMismatch("checkpoint dimensions must be positive");
    SAModel m(f, d);
    const auto& tensors = j.at("tensors");
    m.for_each([&](const std::string& name, auto& t) {
      if (!tensors.contains(name)) throw DimensionMismatch("checkpoint lacks tensor " + name);
      const auto& entry = tensors[name];
      const auto shape = entry.at("shape").get<std::vector<Index>>();
      const auto& values = entry.at("values");
      if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols() ||
          static_cast<Index>(values.size()) != t.size())
        throw DimensionMismatch("tensor " + name + " has a corrupted shape");
      for (Index i = 0; i < t.size(); ++i)
        t.data()[i] = detail::number_from_json(values[static_cast<std::size_t>(i)]);
    });
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DimensionMismatch(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DimensionMismatch(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const SAModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(m).dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

inline SAModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), 1);
  }
  return checkpoint_from_json(j);
}

}  // namespace awelab
