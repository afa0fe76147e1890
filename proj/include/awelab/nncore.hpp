#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "awelab/corpus.hpp"
#include "awelab/error.hpp"

namespace awelab {

using HiddenState = Vector;

// Gated recurrent unit, convention
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   c = tanh(W_h x + U_h (r * h) + b_h)
//   h' = (1 - z) * h + z * c
struct GruParams {
  Matrix w_z, w_r, w_h;  // hidden x input
  Matrix u_z, u_r, u_h;  // hidden x hidden
  Vector b_z, b_r, b_h;

  GruParams() = default;
  GruParams(Index input_dim, Index hidden_dim)
      : w_z(Matrix::Zero(hidden_dim, input_dim)),
        w_r(Matrix::Zero(hidden_dim, input_dim)),
        w_h(Matrix::Zero(hidden_dim, input_dim)),
        u_z(Matrix::Zero(hidden_dim, hidden_dim)),
        u_r(Matrix::Zero(hidden_dim, hidden_dim)),
        u_h(Matrix::Zero(hidden_dim, hidden_dim)),
        b_z(Vector::Zero(hidden_dim)),
        b_r(Vector::Zero(hidden_dim)),
        b_h(Vector::Zero(hidden_dim)) {}

  Index input_dim() const { return w_z.cols(); }
  Index hidden_dim() const { return w_z.rows(); }

  template <class F>
  void for_each(F&& f) {
    f("W_z", w_z); f("W_r", w_r); f("W_h", w_h);
    f("U_z", u_z); f("U_r", u_r); f("U_h", u_h);
    f("b_z", b_z); f("b_r", b_r); f("b_h", b_h);
  }
  template <class F>
  void for_each(F&& f) const {
    f("W_z", w_z); f("W_r", w_r); f("W_h", w_h);
    f("U_z", u_z); f("U_r", u_r); f("U_h", u_h);
    f("b_z", b_z); f("b_r", b_r); f("b_h", b_h);
  }

  void check_shapes() const {
    const Index h = hidden_dim(), in = input_dim();
    const bool ok = w_r.rows() == h && w_r.cols() == in && w_h.rows() == h && w_h.cols() == in &&
                    u_z.rows() == h && u_z.cols() == h && u_r.rows() == h && u_r.cols() == h &&
                    u_h.rows() == h && u_h.cols() == h && b_z.size() == h && b_r.size() == h &&
                    b_h.size() == h;
    if (!ok) throw DimensionMismatch("inconsistent GRU parameter shapes");
  }
};

struct AffineParams {
  Matrix w;  // output x hidden
  Vector b;

  AffineParams() = default;
  AffineParams(Index hidden_dim, Index output_dim)
      : w(Matrix::Zero(output_dim, hidden_dim)), b(Vector::Zero(output_dim)) {}

  Index input_dim() const { return w.cols(); }
  Index output_dim() const { return w.rows(); }

  template <class F>
  void for_each(F&& f) { f("W_o", w); f("b_o", b); }
  template <class F>
  void for_each(F&& f) const { f("W_o", w); f("b_o", b); }
};

// Flat views over every tensor of a parameter container, in visiting order.
template <class Params>
std::vector<std::span<double>> tensor_views(Params& p) {
  std::vector<std::span<double>> out;
  p.for_each([&](std::string_view, auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

template <class Params>
std::vector<std::span<const double>> tensor_views(const Params& p) {
  std::vector<std::span<const double>> out;
  p.for_each([&](std::string_view, const auto& t) {
    out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return out;
}

// Same shapes and bit-identical values.
template <class Params>
bool identical(const Params& a, const Params& b) {
  bool same = true;
  std::vector<std::pair<Index, Index>> shapes;
  a.for_each([&](std::string_view, const auto& t) { shapes.emplace_back(t.rows(), t.cols()); });
  std::size_t k = 0;
  b.for_each([&](std::string_view, const auto& t) {
    if (k >= shapes.size() || shapes[k] != std::pair<Index, Index>(t.rows(), t.cols())) same = false;
    ++k;
  });
  if (!same || k != shapes.size()) return false;
  auto va = tensor_views(a);
  auto vb = tensor_views(b);
  for (std::size_t i = 0; i < va.size(); ++i)
    if (!std::equal(va[i].begin(), va[i].end(), vb[i].begin())) return false;
  return true;
}

template <class Params>
void set_zero(Params& p) {
  p.for_each([](std::string_view, auto& t) { t.setZero(); });
}

// a += scale * b, tensor by tensor.
template <class Params>
void add_scaled(Params& a, const Params& b, double scale) {
  auto dst = tensor_views(a);
  auto src = tensor_views(b);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].size() != src[i].size()) throw DimensionMismatch("parameter shapes differ");
    for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += scale * src[i][j];
  }
}

template <class Params>
double squared_norm(const Params& p) {
  double sum = 0.0;
  for (auto view : tensor_views(p))
    for (double v : view) sum += v * v;
  return sum;
}

template <class Params>
bool all_finite(const Params& p) {
  for (auto view : tensor_views(p))
    for (double v : view)
      if (!std::isfinite(v)) return false;
  return true;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Forward

struct GruStepCache {
  Vector x;  // empty for zero-input steps
  HiddenState h_prev;
  Vector z, r, candidate;
  HiddenState h;
};

namespace detail {

inline GruStepCache gru_step_cached(const GruParams& p, const Vector* x, const HiddenState& h_prev) {
  GruStepCache c;
  Vector a_z = p.u_z * h_prev + p.b_z;
  Vector a_r = p.u_r * h_prev + p.b_r;
  Vector a_h = p.b_h;
  if (x != nullptr) {
    a_z.noalias() += p.w_z * *x;
    a_r.noalias() += p.w_r * *x;
    a_h.noalias() += p.w_h * *x;
    c.x = *x;
  }
  c.z = a_z.unaryExpr([](double v) { return sigmoid(v); });
  c.r = a_r.unaryExpr([](double v) { return sigmoid(v); });
  a_h.noalias() += p.u_h * c.r.cwiseProduct(h_prev);
  c.candidate = a_h.array().tanh().matrix();
  c.h = (1.0 - c.z.array()) * h_prev.array() + c.z.array() * c.candidate.array();
  c.h_prev = h_prev;
  return c;
}

inline void check_step_shapes(const GruParams& p, Index input_dim, const HiddenState& h) {
  p.check_shapes();
  if (input_dim != p.input_dim())
    throw DimensionMismatch("GRU input has dim " + std::to_string(input_dim) + ", expected " +
                            std::to_string(p.input_dim()));
  if (h.size() != p.hidden_dim())
    throw DimensionMismatch("GRU state has dim " + std::to_string(h.size()) + ", expected " +
                            std::to_string(p.hidden_dim()));
}

}  // namespace detail

inline HiddenState gru_step(const GruParams& p, const Vector& x, const HiddenState& h_prev) {
  detail::check_step_shapes(p, x.size(), h_prev);
  return detail::gru_step_cached(p, &x, h_prev).h;
}

// Per-step caches of an unrolled GRU; enough to run backpropagation through time.
struct GruTrace {
  std::vector<GruStepCache> steps;

  std::size_t size() const { return steps.size(); }
  const HiddenState& final_state() const { return steps.back().h; }
  std::vector<HiddenState> states() const {
    std::vector<HiddenState> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.h);
    return out;
  }
};

// Runs the GRU over the rows of `inputs` starting from h0.
inline GruTrace gru_forward_trace(const GruParams& p, const Matrix& inputs, const HiddenState& h0) {
  if (inputs.rows() < 1) throw DimensionMismatch("GRU input sequence is empty");
  detail::check_step_shapes(p, inputs.cols(), h0);
  GruTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(inputs.rows()));
  HiddenState h = h0;
  for (Index t = 0; t < inputs.rows(); ++t) {
    const Vector x = inputs.row(t).transpose();
    trace.steps.push_back(detail::gru_step_cached(p, &x, h));
    h = trace.steps.back().h;
  }
  return trace;
}

// Runs `steps` GRU updates whose input is the zero vector.
inline GruTrace gru_forward_zero_input_trace(const GruParams& p, Index steps, const HiddenState& h0) {
  if (steps < 1) throw DimensionMismatch("GRU needs at least one step");
  detail::check_step_shapes(p, p.input_dim(), h0);
  GruTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(steps));
  HiddenState h = h0;
  for (Index t = 0; t < steps; ++t) {
    trace.steps.push_back(detail::gru_step_cached(p, nullptr, h));
    h = trace.steps.back().h;
  }
  return trace;
}

inline std::vector<HiddenState> gru_forward(const GruParams& p, const Matrix& inputs,
                                            const HiddenState& h0) {
  return gru_forward_trace(p, inputs, h0).states();
}

inline std::vector<HiddenState> gru_forward_zero_input(const GruParams& p, Index steps,
                                                       const HiddenState& h0) {
  return gru_forward_zero_input_trace(p, steps, h0).states();
}

// ---------------------------------------------------------------------------
// Backward

// Backpropagates through a traced GRU run. Row t of `state_grads` is the
// gradient of the loss w.r.t. h_t coming from outside the recurrence.
// Parameter gradients are accumulated into `grads`; returns dloss/dh0.
inline HiddenState gru_backward(const GruParams& p, const GruTrace& trace, const Matrix& state_grads,
                                GruParams& grads) {
  const Index hidden = p.hidden_dim();
  if (state_grads.rows() != static_cast<Index>(trace.size()) || state_grads.cols() != hidden)
    throw DimensionMismatch("state gradient shape does not match the trace");
  Vector dh = Vector::Zero(hidden);
  for (Index t = static_cast<Index>(trace.size()) - 1; t >= 0; --t) {
    const auto& c = trace.steps[static_cast<std::size_t>(t)];
    dh += state_grads.row(t).transpose();

    const Vector d_z = dh.cwiseProduct(c.candidate - c.h_prev);
    const Vector d_cand = dh.cwiseProduct(c.z);
    Vector dh_prev = dh.cwiseProduct((1.0 - c.z.array()).matrix());

    const Vector da_h = d_cand.cwiseProduct((1.0 - c.candidate.array().square()).matrix());
    const Vector reset_h = c.r.cwiseProduct(c.h_prev);
    grads.u_h.noalias() += da_h * reset_h.transpose();
    grads.b_h += da_h;
    const Vector d_reset_h = p.u_h.transpose() * da_h;
    const Vector d_r = d_reset_h.cwiseProduct(c.h_prev);
    dh_prev += d_reset_h.cwiseProduct(c.r);

    const Vector da_z = d_z.cwiseProduct((c.z.array() * (1.0 - c.z.array())).matrix());
    const Vector da_r = d_r.cwiseProduct((c.r.array() * (1.0 - c.r.array())).matrix());
    grads.u_z.noalias() += da_z * c.h_prev.transpose();
    grads.u_r.noalias() += da_r * c.h_prev.transpose();
    grads.b_z += da_z;
    grads.b_r += da_r;
    dh_prev.noalias() += p.u_z.transpose() * da_z;
    dh_prev.noalias() += p.u_r.transpose() * da_r;

    if (c.x.size() > 0) {
      grads.w_z.noalias() += da_z * c.x.transpose();
      grads.w_r.noalias() += da_r * c.x.transpose();
      grads.w_h.noalias() += da_h * c.x.transpose();
    }
    dh = std::move(dh_prev);
  }
  return dh;
}

// ---------------------------------------------------------------------------
// Loss

enum class LossReduction { kMean, kSum };

inline std::string to_string(LossReduction r) { return r == LossReduction::kMean ? "mean" : "sum"; }

inline LossReduction loss_reduction_from_string(const std::string& s) {
  if (s == "mean") return LossReduction::kMean;
  if (s == "sum") return LossReduction::kSum;
  throw ConfigInvalid("loss_reduction must be 'mean' or 'sum', got '" + s + "'");
}

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d y
};

// Squared reconstruction error sum_t ||x_t - y_t||^2, divided by T*F under
// the mean reduction.
inline LossResult mse_loss(const Matrix& y, const Matrix& x,
                           LossReduction reduction = LossReduction::kMean) {
  if (y.rows() != x.rows() || y.cols() != x.cols())
    throw DimensionMismatch("mse_loss operands have different shapes");
  const double scale =
      reduction == LossReduction::kMean ? 1.0 / static_cast<double>(std::max<Index>(1, y.size())) : 1.0;
  LossResult out;
  const Matrix diff = y - x;
  out.loss = scale * diff.squaredNorm();
  out.grad = (2.0 * scale) * diff;
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

struct LrSchedule {
  double initial_lr = 1.0;
  double decay = 0.95;
  std::int64_t period = 500;

  void validate() const {
    if (!(initial_lr > 0.0)) throw ConfigInvalid("initial learning rate must be > 0");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigInvalid("decay must lie in (0, 1]");
    if (period < 1) throw ConfigInvalid("decay period must be >= 1");
  }
};

// initial_lr * decay^floor(batch / period)
inline double lr_at(const LrSchedule& s, std::int64_t batch_index) {
  return s.initial_lr * std::pow(s.decay, static_cast<double>(batch_index / s.period));
}

inline constexpr double kNoClip = std::numeric_limits<double>::infinity();

// One plain SGD update. When the global L2 norm of `grads` exceeds clip_norm
// the whole gradient is rescaled to that norm first. A clip_norm of +inf (or
// any non-positive value) disables clipping.
template <class Params>
Params sgd_step(Params params, const Params& grads, double lr, double clip_norm = kNoClip) {
  if (!(lr > 0.0)) throw ConfigInvalid("learning rate must be > 0");
  if (!all_finite(grads)) throw NonFinite("gradient contains non-finite values");
  const double norm = std::sqrt(squared_norm(grads));
  double scale = 1.0;
  if (clip_norm > 0.0 && std::isfinite(clip_norm) && norm > clip_norm) scale = clip_norm / norm;
  add_scaled(params, grads, -lr * scale);
  return params;
}

namespace detail {

template <class Params>
void fill_uniform(Params& p, std::mt19937_64& rng) {
  p.for_each([&](std::string_view name, auto& t) {
    if (name.front() == 'b') {
      t.setZero();
      return;
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(t.cols()));
    std::uniform_real_distribution<double> dist(-s, s);
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  });
}

}  // namespace detail

struct InitializedParams {
  GruParams encoder;
  GruParams decoder;
  AffineParams output;
};

// Weights ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per matrix, biases zero.
inline InitializedParams init_params(Index input_dim, Index hidden_dim, Index output_dim,
                                     std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
    throw ConfigInvalid("model dimensions must be positive");
  InitializedParams out{GruParams(input_dim, hidden_dim), GruParams(input_dim, hidden_dim),
                        AffineParams(hidden_dim, output_dim)};
  std::mt19937_64 rng(seed);
  detail::fill_uniform(out.encoder, rng);
  detail::fill_uniform(out.decoder, rng);
  detail::fill_uniform(out.output, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor); the floor keeps entries that are zero (or
// near the rounding limit of the finite difference) from dividing by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares `analytic` against central differences of `loss` around `params`.
template <class Params, class LossFn>
GradCheckResult check_gradients(const Params& params, const Params& analytic, LossFn&& loss,
                                double eps = 1e-5) {
  GradCheckResult result;
  Params probe = params;
  std::vector<std::string> names;
  probe.for_each([&](std::string_view name, auto&) { names.emplace_back(name); });
  auto views = tensor_views(probe);
  auto grads = tensor_views(analytic);
  for (std::size_t k = 0; k < views.size(); ++k) {
    for (std::size_t i = 0; i < views[k].size(); ++i) {
      const double saved = views[k][i];
      views[k][i] = saved + eps;
      const double up = loss(probe);
      views[k][i] = saved - eps;
      const double down = loss(probe);
      views[k][i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(grads[k][i], numeric);
      ++result.checked;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = {names[k], i, grads[k][i], numeric, err};
      }
    }
  }
  return result;
}

}  // namespace awelab
