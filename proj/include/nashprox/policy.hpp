#pragma once

// Policy parameterizations: tabular softmax and a rectifier MLP over the
// flattened context matrix. Both expose log-probabilities, score functions
// and a vector-Jacobian product from logit space to parameter space.
//
// MLP parameter order: for each layer in turn, the weight matrix row-major
// (out x in), then its bias vector.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "nashprox/core.hpp"
#include "nashprox/game.hpp"
#include "nashprox/rng.hpp"

namespace nashprox {

class TabularSoftmaxPolicy {
public:
  TabularSoftmaxPolicy() = default;

  /// One logit row per enumerable context; a single row is shared by all contexts.
  TabularSoftmaxPolicy(std::size_t contexts, std::size_t actions) : logits_(contexts, actions, 0.0) {
    ActionSpace{actions};
    if (contexts == 0) throw ArgumentError("tabular policy needs at least one context row");
  }

  static TabularSoftmaxPolicy from_logits(std::span<const double> logits) {
    TabularSoftmaxPolicy p(1, logits.size());
    std::copy(logits.begin(), logits.end(), p.logits_.data.begin());
    return p;
  }

  static TabularSoftmaxPolicy from_probs(std::span<const double> probs) {
    check_simplex(probs, 1e-9, "policy");
    for (double v : probs)
      if (v <= 0.0) throw SupportError("tabular policy needs strictly positive probabilities");
    return from_logits(log_of(probs));
  }

  std::size_t num_actions() const { return logits_.cols; }
  std::size_t num_rows() const { return logits_.rows; }
  std::size_t num_params() const { return logits_.data.size(); }
  std::vector<double>& params() { return logits_.data; }
  const std::vector<double>& params() const { return logits_.data; }

  std::size_t row_of(const Context& x) const {
    if (logits_.rows == 1) return 0;
    if (x.index >= logits_.rows) throw ArgumentError("context index has no logit row");
    return x.index;
  }

  std::vector<double> logits(const Context& x) const {
    const auto r = logits_.row(row_of(x));
    return {r.begin(), r.end()};
  }

  std::span<double> row(std::size_t i) { return {logits_.data.data() + i * logits_.cols, logits_.cols}; }
  std::span<const double> row(std::size_t i) const { return logits_.row(i); }

  /// Adds dlogits into the parameter block of x's row.
  void accumulate_vjp(const Context& x, std::span<const double> dlogits, std::span<double> grad,
                      double scale = 1.0) const {
    const std::size_t off = row_of(x) * logits_.cols;
    for (std::size_t y = 0; y < logits_.cols; ++y) grad[off + y] += scale * dlogits[y];
  }

  bool operator==(const TabularSoftmaxPolicy&) const = default;

private:
  Matrix logits_;
};

class MlpPolicy {
public:
  /// Activations kept from one forward pass for the backward pass.
  struct Tape {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l] = post-ReLU output of layer l
    std::vector<double> logits;
  };

  MlpPolicy() = default;

  explicit MlpPolicy(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw ArgumentError("MLP needs at least input and output widths");
    for (auto d : dims_)
      if (d == 0) throw ArgumentError("MLP layer widths must be positive");
    ActionSpace{dims_.back()};
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) n += dims_[l + 1] * dims_[l] + dims_[l + 1];
    params_.assign(n, 0.0);
  }

  /// Glorot-uniform weights, zero biases.
  static MlpPolicy glorot(std::vector<std::size_t> dims, Rng& rng) {
    MlpPolicy p(std::move(dims));
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < p.dims_.size(); ++l) {
      const std::size_t in = p.dims_[l], out = p.dims_[l + 1];
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      for (std::size_t i = 0; i < in * out; ++i) p.params_[off + i] = rng.uniform(-a, a);
      off += in * out + out;
    }
    return p;
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t num_actions() const { return dims_.back(); }
  std::size_t num_params() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  void forward(std::span<const double> input, Tape& tape) const {
    if (input.size() != dims_.front()) throw ArgumentError("MLP input has the wrong dimension");
    const std::size_t layers = dims_.size() - 1;
    tape.acts.resize(layers);
    tape.acts[0].assign(input.begin(), input.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = dims_[l], out = dims_[l + 1];
      const double* w = params_.data() + off;
      const double* b = w + in * out;
      const std::vector<double>& a = tape.acts[l];
      std::vector<double>& z = (l + 1 == layers) ? tape.logits : tape.acts[l + 1];
      z.resize(out);
      for (std::size_t o = 0; o < out; ++o) {
        const double* wr = w + o * in;
        double s = b[o];
        for (std::size_t i = 0; i < in; ++i) s += wr[i] * a[i];
        z[o] = (l + 1 == layers) ? s : std::max(s, 0.0);
      }
      off += in * out + out;
    }
  }

  std::vector<double> logits(const Context& x) const {
    Tape t;
    forward(x.theta, t);
    return t.logits;
  }

  /// grad += scale * J^T dlogits, using the activations on the tape.
  void backward(const Tape& tape, std::span<const double> dlogits, std::span<double> grad,
                double scale = 1.0) const {
    const std::size_t layers = dims_.size() - 1;
    std::vector<std::size_t> offsets(layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      offsets[l] = off;
      off += dims_[l + 1] * dims_[l] + dims_[l + 1];
    }
    std::vector<double> delta(dlogits.begin(), dlogits.end());
    for (double& d : delta) d *= scale;
    std::vector<double> prev;
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = dims_[l], out = dims_[l + 1];
      const double* w = params_.data() + offsets[l];
      double* gw = grad.data() + offsets[l];
      double* gb = gw + in * out;
      const std::vector<double>& a = tape.acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* gr = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) gr[i] += d * a[i];
      }
      if (l == 0) break;
      prev.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* wr = w + o * in;
        for (std::size_t i = 0; i < in; ++i) prev[i] += d * wr[i];
      }
      // ReLU gate of layer l's output (acts[l] holds post-activation values).
      for (std::size_t i = 0; i < in; ++i)
        if (a[i] <= 0.0) prev[i] = 0.0;
      delta.swap(prev);
    }
  }

  void accumulate_vjp(const Context& x, std::span<const double> dlogits, std::span<double> grad,
                      double scale = 1.0) const {
    Tape t;
    forward(x.theta, t);
    backward(t, dlogits, grad, scale);
  }

  bool operator==(const MlpPolicy&) const = default;

private:
  std::vector<std::size_t> dims_;
  std::vector<double> params_;
};

/// Either parameterization behind one value-type interface.
class Policy {
public:
  Policy(TabularSoftmaxPolicy p) : impl_(std::move(p)) {}
  Policy(MlpPolicy p) : impl_(std::move(p)) {}

  bool is_tabular() const { return std::holds_alternative<TabularSoftmaxPolicy>(impl_); }
  const TabularSoftmaxPolicy& tabular() const { return std::get<TabularSoftmaxPolicy>(impl_); }
  TabularSoftmaxPolicy& tabular() { return std::get<TabularSoftmaxPolicy>(impl_); }
  const MlpPolicy& mlp() const { return std::get<MlpPolicy>(impl_); }
  MlpPolicy& mlp() { return std::get<MlpPolicy>(impl_); }

  std::size_t num_actions() const {
    return std::visit([](const auto& p) { return p.num_actions(); }, impl_);
  }
  std::size_t num_params() const {
    return std::visit([](const auto& p) { return p.num_params(); }, impl_);
  }
  std::vector<double>& params() {
    return std::visit([](auto& p) -> std::vector<double>& { return p.params(); }, impl_);
  }
  const std::vector<double>& params() const {
    return std::visit([](const auto& p) -> const std::vector<double>& { return p.params(); }, impl_);
  }

  std::vector<double> logits(const Context& x) const {
    auto z = std::visit([&](const auto& p) { return p.logits(x); }, impl_);
    if (!all_finite(z)) throw NumericError("policy produced non-finite logits");
    return z;
  }

  std::vector<double> log_probs(const Context& x) const { return log_softmax(logits(x)); }
  Distribution probs(const Context& x) const { return softmax(logits(x)); }

  void accumulate_vjp(const Context& x, std::span<const double> dlogits, std::span<double> grad,
                      double scale = 1.0) const {
    if (grad.size() != num_params()) throw ArgumentError("gradient buffer has the wrong size");
    std::visit([&](const auto& p) { p.accumulate_vjp(x, dlogits, grad, scale); }, impl_);
  }

  /// grad_theta log pi(y|x).
  std::vector<double> score(const Context& x, std::size_t y) const {
    const std::size_t n = num_actions();
    if (y >= n) throw ArgumentError("action index out of range");
    Distribution p = probs(x);
    for (double& v : p) v = -v;
    p[y] += 1.0;
    std::vector<double> g(num_params(), 0.0);
    accumulate_vjp(x, p, g);
    return g;
  }

  std::size_t sample_action(const Context& x, Rng& rng) const { return rng.categorical(probs(x)); }

  /// One forward pass kept for a later backward pass at the same context.
  struct Forward {
    const Context* x = nullptr;
    std::vector<double> log_probs;
    MlpPolicy::Tape tape;
  };

  Forward forward(const Context& x) const {
    Forward f;
    f.x = &x;
    if (const auto* m = std::get_if<MlpPolicy>(&impl_)) {
      m->forward(x.theta, f.tape);
      if (!all_finite(f.tape.logits)) throw NumericError("policy produced non-finite logits");
      f.log_probs = log_softmax(f.tape.logits);
    } else {
      f.log_probs = log_probs(x);
    }
    return f;
  }

  void backward(const Forward& f, std::span<const double> dlogits, std::span<double> grad,
                double scale = 1.0) const {
    if (grad.size() != num_params()) throw ArgumentError("gradient buffer has the wrong size");
    if (const auto* m = std::get_if<MlpPolicy>(&impl_))
      m->backward(f.tape, dlogits, grad, scale);
    else
      tabular().accumulate_vjp(*f.x, dlogits, grad, scale);
  }

  bool operator==(const Policy&) const = default;

private:
  std::variant<TabularSoftmaxPolicy, MlpPolicy> impl_;
};

inline Distribution probs(const Policy& policy, const Context& x) { return policy.probs(x); }
inline std::vector<double> score(const Policy& policy, const Context& x, std::size_t y) {
  return policy.score(x, y);
}
inline std::size_t sample_action(const Policy& policy, const Context& x, Rng& rng) {
  return policy.sample_action(x, rng);
}

// ---------------------------------------------------------------------------
// Improvement operator

struct ImprovementConfig {
  Distribution floor_reference;  // nu
  double tau = 1.0;
};

/// Ratio flooring on a distribution: coordinates with pi/nu < tau are raised to
/// tau*nu, the moved mass is taken from the max-ratio action (lowest index on ties).
inline Distribution improve_distribution(std::span<const double> pi, std::span<const double> nu, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("improvement tau must lie in (0, 1]");
  if (pi.size() != nu.size()) throw ArgumentError("improve: size mismatch");
  Distribution out(pi.begin(), pi.end());
  std::size_t y_max = 0;
  double moved = 0.0;
  for (std::size_t y = 0; y < pi.size(); ++y) {
    if (pi[y] / nu[y] > pi[y_max] / nu[y_max]) y_max = y;
    if (pi[y] < tau * nu[y]) {
      moved += tau * nu[y] - pi[y];
      out[y] = tau * nu[y];
    }
  }
  out[y_max] = pi[y_max] - moved;
  if (moved > 0.0 && !(out[y_max] >= tau * nu[y_max]))
    throw ConfigError("improvement floor is infeasible for this tau");
  return out;
}

/// Parameter-space form: theta_y += log(tau nu_y / pi_y) on floored coordinates and
/// theta_ymax += log(1 - moved / pi_ymax). Applied independently to every logit row.
inline TabularSoftmaxPolicy improve(const TabularSoftmaxPolicy& policy, const ImprovementConfig& cfg) {
  const auto& nu = cfg.floor_reference;
  const double tau = cfg.tau;
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("improvement tau must lie in (0, 1]");
  if (nu.size() != policy.num_actions()) throw ArgumentError("floor reference has the wrong size");
  check_simplex(nu, 1e-9, "floor reference");
  for (double v : nu)
    if (v <= 0.0) throw SupportError("floor reference needs full support");

  TabularSoftmaxPolicy out = policy;
  const std::size_t n = policy.num_actions();
  for (std::size_t r = 0; r < policy.num_rows(); ++r) {
    auto theta = out.row(r);
    const Distribution pi = softmax(theta);
    std::size_t y_max = 0;
    double moved = 0.0;
    bool any = false;
    for (std::size_t y = 0; y < n; ++y) {
      if (pi[y] / nu[y] > pi[y_max] / nu[y_max]) y_max = y;
      if (pi[y] < tau * nu[y]) {
        any = true;
        moved += tau * nu[y] - pi[y];
      }
    }
    if (!any) continue;
    const double keep = 1.0 - moved / pi[y_max];
    if (!(keep > 0.0) || pi[y_max] * keep < tau * nu[y_max])
      throw ConfigError("improvement floor is infeasible for this tau");
    for (std::size_t y = 0; y < n; ++y)
      if (pi[y] < tau * nu[y]) theta[y] += std::log(tau * nu[y] / pi[y]);
    theta[y_max] += std::log(keep);
    // Rounding in the softmax can land a floored coordinate a few ulps short;
    // nudge those logits up until the floor holds on the realized probabilities.
    for (int pass = 0; pass < 64; ++pass) {
      const Distribution q = softmax(theta);
      bool short_fall = false;
      for (std::size_t y = 0; y < n; ++y)
        if (q[y] < tau * nu[y]) {
          short_fall = true;
          theta[y] = std::nextafter(theta[y] + 1e-15 * std::max(1.0, std::abs(theta[y])),
                                    std::numeric_limits<double>::infinity());
        }
      if (!short_fall) break;
    }
  }
  return out;
}

/// Largest tau for which flooring toward nu cannot increase exploitability
/// against the effective anchor at total regularization lambda.
inline double tau0(std::span<const double> nu, std::span<const double> anchor, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("tau0 needs lambda > 0");
  std::vector<double> d(nu.size());
  double nu_min = 1.0;
  for (std::size_t y = 0; y < nu.size(); ++y) {
    if (nu[y] <= 0.0 || anchor[y] <= 0.0) throw SupportError("tau0 needs full-support nu and anchor");
    d[y] = std::log(anchor[y]) - std::log(nu[y]);
    nu_min = std::min(nu_min, nu[y]);
  }
  const double a = std::exp(-1.0 / lambda - 2.0 * span_seminorm(d));
  const double b = 1.0 / (1.0 + 1.0 / nu_min);
  return std::min(a, b);
}

/// Lipschitz (G), smoothness (L) and uniform PL (m) constants of the
/// context-free softmax parameterization with the tau0 floor toward nu.
struct SoftmaxConstants {
  double lipschitz = 1.0;
  double smoothness = 0.0;
  double pl = 0.0;
};

inline SoftmaxConstants softmax_constants(std::span<const double> nu, std::span<const double> anchor,
                                          double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("softmax constants need lambda > 0");
  std::vector<double> d(nu.size());
  double nu_min = 1.0, anchor_min = 1.0;
  for (std::size_t y = 0; y < nu.size(); ++y) {
    if (nu[y] <= 0.0 || anchor[y] <= 0.0) throw SupportError("softmax constants need full support");
    d[y] = std::log(anchor[y]) - std::log(nu[y]);
    nu_min = std::min(nu_min, nu[y]);
    anchor_min = std::min(anchor_min, anchor[y]);
  }
  const double y_count = static_cast<double>(nu.size());
  SoftmaxConstants c;
  c.smoothness = 2.5 * (1.0 + lambda * std::log(1.0 / anchor_min)) + lambda * (4.0 + std::log(y_count));
  const double c_nu = std::exp(std::min(-2.0 * span_seminorm(d), std::log(nu_min / (1.0 + nu_min)))) * nu_min;
  c.pl = lambda * std::exp(-2.0 / lambda) * c_nu * c_nu;
  return c;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   nashprox-policy 1
//   kind tabular|mlp
//   dims d0 d1 ...          (tabular: rows actions)
//   params n
//   v0
//   v1 ...
// Values are written with 17 significant digits so they read back bit-identically.

inline void write_checkpoint(std::ostream& os, const Policy& policy) {
  os << "nashprox-policy 1\n";
  std::vector<std::size_t> dims;
  if (policy.is_tabular()) {
    os << "kind tabular\n";
    dims = {policy.tabular().num_rows(), policy.tabular().num_actions()};
  } else {
    os << "kind mlp\n";
    dims = policy.mlp().dims();
  }
  os << "dims";
  for (auto d : dims) os << ' ' << d;
  os << "\nparams " << policy.num_params() << '\n';
  char buf[40];
  for (double v : policy.params()) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    os << buf;
  }
}

inline Policy read_checkpoint(std::istream& is) {
  std::string tag, kind, word;
  int version = 0;
  if (!(is >> tag >> version) || tag != "nashprox-policy" || version != 1)
    throw ArgumentError("not a policy checkpoint");
  if (!(is >> word >> kind) || word != "kind") throw ArgumentError("checkpoint: missing kind");
  std::string line;
  std::getline(is, line);
  std::getline(is, line);
  std::istringstream dl(line);
  dl >> word;
  if (word != "dims") throw ArgumentError("checkpoint: missing dims");
  std::vector<std::size_t> dims;
  for (std::size_t d; dl >> d;) dims.push_back(d);
  std::size_t n = 0;
  if (!(is >> word >> n) || word != "params") throw ArgumentError("checkpoint: missing params");
  std::vector<double> values(n);
  for (auto& v : values) {
    if (!(is >> word)) throw ArgumentError("checkpoint: truncated parameter list");
    v = std::strtod(word.c_str(), nullptr);
  }
  auto fill = [&](auto p) -> Policy {
    if (p.num_params() != n) throw ArgumentError("checkpoint: parameter count does not match dims");
    p.params() = values;
    return Policy(std::move(p));
  };
  if (kind == "tabular") {
    if (dims.size() != 2) throw ArgumentError("checkpoint: tabular dims are rows actions");
    return fill(TabularSoftmaxPolicy(dims[0], dims[1]));
  }
  if (kind == "mlp") return fill(MlpPolicy(dims));
  throw ArgumentError("checkpoint: unknown kind " + kind);
}

}  // namespace nashprox
