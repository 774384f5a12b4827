#pragma once

// Preference games over a finite action set: a context-free matrix game and
// the low-rank contextual game P(y > y' | x) = sigmoid(A[y][y'] - A[y'][y]),
// A = U * Theta_x * V^T.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nashprox/core.hpp"
#include "nashprox/rng.hpp"

namespace nashprox {

/// A context. `theta` holds the r x r matrix row-major for contextual games and
/// is empty for context-free games; `index` keys tabular policies with one
/// logit row per enumerable context.
struct Context {
  std::size_t index = 0;
  std::vector<double> theta;

  bool operator==(const Context&) const = default;
};

struct ContextBatch {
  std::vector<Context> contexts;
  std::uint64_t seed = 0;
};

struct ActionSpace {
  std::size_t count = 0;

  explicit ActionSpace(std::size_t y) : count(y) {
    if (y < 2) throw ArgumentError("action space needs at least two actions");
  }
};

class MatrixPreferenceGame {
public:
  explicit MatrixPreferenceGame(Matrix p) : p_(std::move(p)) {
    if (p_.rows != p_.cols) throw ArgumentError("preference matrix must be square");
    ActionSpace{p_.rows};
    for (std::size_t i = 0; i < p_.rows; ++i) {
      if (p_(i, i) != 0.5) throw ArgumentError("preference matrix diagonal must be exactly 1/2");
      for (std::size_t j = 0; j < p_.cols; ++j) {
        const double v = p_(i, j);
        if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("preference entries must lie in [0, 1]");
        if (std::abs(v + p_(j, i) - 1.0) > 1e-12)
          throw ArgumentError("preference matrix violates P[y][y'] + P[y'][y] = 1");
      }
    }
  }

  std::size_t num_actions() const { return p_.rows; }
  double preference(std::size_t y, std::size_t y_prime) const { return p_(y, y_prime); }
  const Matrix& matrix() const { return p_; }

private:
  Matrix p_;
};

class LowRankContextualGame {
public:
  LowRankContextualGame(Matrix u, Matrix v) : u_(std::move(u)), v_(std::move(v)) {
    if (u_.rows != v_.rows || u_.cols != v_.cols) throw ArgumentError("U and V must have equal shapes");
    if (u_.cols == 0) throw ArgumentError("rank must be positive");
    ActionSpace{u_.rows};
    if (!all_finite(u_.data) || !all_finite(v_.data)) throw ArgumentError("U, V must be finite");
  }

  std::size_t num_actions() const { return u_.rows; }
  std::size_t rank() const { return u_.cols; }
  const Matrix& u() const { return u_; }
  const Matrix& v() const { return v_; }

  /// A[y][y'] = u_y^T Theta v_{y'}.
  double score(const Context& x, std::size_t y, std::size_t y_prime) const {
    const std::size_t r = rank();
    double s = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < r; ++j) row += x.theta[i * r + j] * v_(y_prime, j);
      s += u_(y, i) * row;
    }
    return s;
  }

  double preference(const Context& x, std::size_t y, std::size_t y_prime) const {
    check_context(x);
    if (y == y_prime) return 0.5;
    // Evaluate the lower-index orientation and reflect, so symmetry is exact.
    if (y > y_prime) return 1.0 - preference(x, y_prime, y);
    return sigmoid(score(x, y, y_prime) - score(x, y_prime, y));
  }

  Matrix matrix(const Context& x) const {
    check_context(x);
    const std::size_t n = num_actions(), r = rank();
    // A = (U Theta) V^T
    Matrix ut(n, r);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t j = 0; j < r; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < r; ++i) s += u_(y, i) * x.theta[i * r + j];
        ut(y, j) = s;
      }
    Matrix a(n, n);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t z = 0; z < n; ++z) {
        double s = 0.0;
        for (std::size_t j = 0; j < r; ++j) s += ut(y, j) * v_(z, j);
        a(y, z) = s;
      }
    Matrix p(n, n, 0.5);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t z = y + 1; z < n; ++z) {
        p(y, z) = sigmoid(a(y, z) - a(z, y));
        p(z, y) = 1.0 - p(y, z);
      }
    return p;
  }

  Context sample_context(Rng& rng, std::size_t index = 0) const {
    Context x;
    x.index = index;
    x.theta.resize(rank() * rank());
    for (double& t : x.theta) t = rng.normal();
    return x;
  }

  void check_context(const Context& x) const {
    if (x.theta.size() != rank() * rank()) throw ArgumentError("context has the wrong dimension");
  }

private:
  Matrix u_;
  Matrix v_;
};

/// Either game form behind one interface.
class PreferenceGame {
public:
  PreferenceGame(MatrixPreferenceGame g) : game_(std::move(g)) {}
  PreferenceGame(LowRankContextualGame g) : game_(std::move(g)) {}

  std::size_t num_actions() const {
    return std::visit([](const auto& g) { return g.num_actions(); }, game_);
  }

  bool context_free() const { return std::holds_alternative<MatrixPreferenceGame>(game_); }

  /// Flattened context length (r * r), 0 for context-free games.
  std::size_t context_dim() const {
    if (context_free()) return 0;
    const auto r = std::get<LowRankContextualGame>(game_).rank();
    return r * r;
  }

  double preference(const Context& x, std::size_t y, std::size_t y_prime) const {
    const std::size_t n = num_actions();
    if (y >= n || y_prime >= n) throw ArgumentError("action index out of range");
    if (const auto* m = std::get_if<MatrixPreferenceGame>(&game_)) return m->preference(y, y_prime);
    return std::get<LowRankContextualGame>(game_).preference(x, y, y_prime);
  }

  /// P_x with (P_x)[y][y'] = P(y > y' | x).
  Matrix preference_matrix(const Context& x) const {
    if (const auto* m = std::get_if<MatrixPreferenceGame>(&game_)) return m->matrix();
    return std::get<LowRankContextualGame>(game_).matrix(x);
  }

  Context sample_context(Rng& rng, std::size_t index = 0) const {
    if (context_free()) return Context{};
    return std::get<LowRankContextualGame>(game_).sample_context(rng, index);
  }

  /// Contexts the batch stands for; the singleton context when a context-free batch is empty.
  std::vector<Context> resolve(const ContextBatch& batch) const {
    if (batch.contexts.empty()) {
      if (!context_free()) throw ArgumentError("contextual games need a nonempty context batch");
      return {Context{}};
    }
    return batch.contexts;
  }

  const MatrixPreferenceGame* as_matrix() const { return std::get_if<MatrixPreferenceGame>(&game_); }
  const LowRankContextualGame* as_low_rank() const { return std::get_if<LowRankContextualGame>(&game_); }

private:
  std::variant<MatrixPreferenceGame, LowRankContextualGame> game_;
};

inline ContextBatch sample_context_batch(const PreferenceGame& game, std::size_t n, std::uint64_t seed) {
  ContextBatch batch;
  batch.seed = seed;
  if (game.context_free()) return batch;
  Rng rng = rng_split(seed, "context");
  batch.contexts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) batch.contexts.push_back(game.sample_context(rng, i));
  return batch;
}

inline double preference_prob(const PreferenceGame& game, const Context& x, std::size_t y, std::size_t y_prime) {
  return game.preference(x, y, y_prime);
}

/// p^T P q over an explicit matrix; p and q may be signed.
inline double bilinear(const Matrix& p_mat, std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    double row = 0.0;
    const auto r = p_mat.row(i);
    for (std::size_t j = 0; j < q.size(); ++j) row += r[j] * q[j];
    s += p[i] * row;
  }
  return s;
}

/// Expected preference of p over q at context x: p^T P_x q.
inline double policy_preference(const PreferenceGame& game, const Context& x, std::span<const double> p,
                                std::span<const double> q) {
  const std::size_t n = game.num_actions();
  if (p.size() != n || q.size() != n) throw ArgumentError("policy_preference: size mismatch");
  check_simplex(p, 1e-9, "p");
  check_simplex(q, 1e-9, "q");
  return bilinear(game.preference_matrix(x), p, q);
}

/// c_y = P(q > y | x) = (P_x^T q)_y, the payoff vector the min-player faces.
inline std::vector<double> payoff_against(const Matrix& p_mat, std::span<const double> q) {
  std::vector<double> c(p_mat.cols, 0.0);
  for (std::size_t i = 0; i < p_mat.rows; ++i) {
    if (q[i] == 0.0) continue;
    const auto r = p_mat.row(i);
    for (std::size_t j = 0; j < p_mat.cols; ++j) c[j] += q[i] * r[j];
  }
  return c;
}

/// Rock-paper-scissors with deterministic outcomes.
inline MatrixPreferenceGame rock_paper_scissors() {
  Matrix p(3, 3, 0.5);
  p(0, 1) = 1.0; p(0, 2) = 0.0;
  p(1, 0) = 0.0; p(1, 2) = 1.0;
  p(2, 0) = 1.0; p(2, 1) = 0.0;
  return MatrixPreferenceGame(std::move(p));
}

/// Random symmetric game: upper triangle uniform in [0, 1], lower triangle reflected.
inline MatrixPreferenceGame random_matrix_game(std::size_t actions, Rng& rng) {
  Matrix p(actions, actions, 0.5);
  for (std::size_t i = 0; i < actions; ++i)
    for (std::size_t j = i + 1; j < actions; ++j) {
      p(i, j) = rng.uniform();
      p(j, i) = 1.0 - p(i, j);
    }
  return MatrixPreferenceGame(std::move(p));
}

/// Low-rank game with standard-normal U and V.
inline LowRankContextualGame random_low_rank_game(std::size_t actions, std::size_t rank, Rng& rng) {
  Matrix u(actions, rank), v(actions, rank);
  for (double& x : u.data) x = rng.normal();
  for (double& x : v.data) x = rng.normal();
  return LowRankContextualGame(std::move(u), std::move(v));
}

}  // namespace nashprox
