#pragma once

// Independent reference computations used by the check suites and tests.
// None of these reuse the closed forms they are compared against.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "nashprox/core.hpp"
#include "nashprox/estimator.hpp"
#include "nashprox/game.hpp"
#include "nashprox/oracle.hpp"
#include "nashprox/policy.hpp"
#include "nashprox/regularized.hpp"

namespace nashprox::verify {

/// Central differences of f at params with step h.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> params, double h = 1e-5) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double v = params[i];
    params[i] = v + h;
    const double up = f(params);
    params[i] = v - h;
    const double dn = f(params);
    params[i] = v;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d) / std::max({l2_norm(a), l2_norm(b), floor});
}

/// Gradient of theta -> J(theta; competitor) by central differences, competitor frozen.
inline std::vector<double> fd_objective_gradient(const PreferenceGame& game, const RegularizedSpec& spec,
                                                 const Policy& policy, const ContextBatch& contexts,
                                                 double h = 1e-5) {
  const Policy competitor = policy;
  Policy probe = policy;
  return finite_difference(
      [&](const std::vector<double>& p) {
        probe.params() = p;
        return j_objective(game, spec, probe, competitor, contexts);
      },
      policy.params(), h);
}

/// Exact expectation of the pairwise estimator by enumerating y, y' ~ pi and p in {0, 1}
/// with P(p = 1) = P(y > y'). Context-free or a single fixed context.
inline std::vector<double> enumerated_estimator_mean(const PreferenceGame& game, const RegularizedSpec& spec,
                                                     const Policy& policy, const Context& x,
                                                     double clip = kNoClip) {
  const Distribution pi = policy.probs(x);
  const std::size_t n = pi.size();
  std::vector<double> mean(policy.num_params(), 0.0);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t yp = 0; yp < n; ++yp) {
      const double pr = game.preference(x, y, yp);
      for (int outcome = 0; outcome < 2; ++outcome) {
        const double w = pi[y] * pi[yp] * (outcome ? pr : 1.0 - pr);
        if (w == 0.0) continue;
        const PairSample s{x, y, yp, static_cast<double>(outcome)};
        const auto g = pairwise_reinforce(spec, policy, std::span<const PairSample>(&s, 1), clip).vector;
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += w * g[i];
      }
    }
  return mean;
}

/// Same enumeration for the uncentered Online IPO gradient.
inline std::vector<double> enumerated_ipo_mean(const PreferenceGame& game, const RegularizedSpec& spec,
                                               const Policy& policy, const Context& x) {
  const Distribution pi = policy.probs(x);
  const std::size_t n = pi.size();
  std::vector<double> mean(policy.num_params(), 0.0);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t yp = 0; yp < n; ++yp) {
      const double pr = game.preference(x, y, yp);
      for (int outcome = 0; outcome < 2; ++outcome) {
        const double w = pi[y] * pi[yp] * (outcome ? pr : 1.0 - pr);
        if (w == 0.0) continue;
        const PairSample s{x, y, yp, static_cast<double>(outcome)};
        const auto g = online_ipo_gradient(spec, policy, std::span<const PairSample>(&s, 1));
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += w * g[i];
      }
    }
  return mean;
}

/// V(p; q) written out term by term from the matrix and the raw distributions.
inline double direct_value(const Matrix& p_mat, std::span<const double> p, std::span<const double> q, double beta,
                           std::span<const double> ref, double beta_t, std::span<const double> anchor) {
  double v = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j) v += q[i] * p_mat(i, j) * p[j];
  for (std::size_t y = 0; y < p.size(); ++y) {
    if (p[y] <= 0.0) continue;
    v += beta * p[y] * std::log(p[y] / ref[y]);
    if (beta_t > 0.0) v += beta_t * p[y] * std::log(p[y] / anchor[y]);
  }
  return v;
}

struct GridMinimum {
  Distribution argmin;
  double value = std::numeric_limits<double>::infinity();
};

/// Minimizes f over the probability simplex by a lattice search: a uniform grid
/// with `resolution` cells per unit, then repeated zooms of a local lattice around
/// the incumbent. Each zoom shrinks the lattice spacing by `shrink`.
inline GridMinimum simplex_grid_minimize(std::size_t dim, const std::function<double(std::span<const double>)>& f,
                                         std::size_t resolution = 60, std::size_t zooms = 14, int radius = 6,
                                         double shrink = 3.0) {
  GridMinimum best;
  std::vector<double> p(dim);
  // Coarse pass: all compositions of `resolution` into dim parts.
  std::vector<std::size_t> k(dim, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
    if (i + 1 == dim) {
      k[i] = left;
      for (std::size_t j = 0; j < dim; ++j) p[j] = static_cast<double>(k[j]) / static_cast<double>(resolution);
      const double v = f(p);
      if (v < best.value) {
        best.value = v;
        best.argmin = p;
      }
      return;
    }
    for (std::size_t a = 0; a <= left; ++a) {
      k[i] = a;
      rec(i + 1, left - a);
    }
  };
  rec(0, resolution);

  // Zoom passes: offsets d in {-radius..radius}^(dim-1), last coordinate absorbs the sum.
  double h = 1.0 / static_cast<double>(resolution);
  std::vector<int> d(dim - 1);
  for (std::size_t z = 0; z < zooms; ++z) {
    h /= shrink;
    const Distribution center = best.argmin;
    std::function<void(std::size_t)> walk = [&](std::size_t i) {
      if (i == dim - 1) {
        double s = 0.0;
        for (std::size_t j = 0; j + 1 < dim; ++j) {
          p[j] = center[j] + h * d[j];
          if (p[j] < 0.0) return;
          s += p[j];
        }
        p[dim - 1] = 1.0 - s;
        if (p[dim - 1] < 0.0) return;
        const double v = f(p);
        if (v < best.value) {
          best.value = v;
          best.argmin = p;
        }
        return;
      }
      for (int a = -radius; a <= radius; ++a) {
        d[i] = a;
        walk(i + 1);
      }
    };
    walk(0);
  }
  return best;
}

}  // namespace nashprox::verify
