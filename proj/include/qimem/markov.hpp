#pragma once

#include <cmath>
#include <map>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qimem/rng.hpp"
#include "qimem/scalar.hpp"

namespace qimem {

/// Row-stochastic matrix, entries(j, i) = P(i | j).
template <typename Scalar = double>
class TransitionMatrix {
 public:
  explicit TransitionMatrix(Matrix<Scalar> entries) : entries_(std::move(entries)) { validate(); }

  Index size() const { return entries_.rows(); }
  const Matrix<Scalar>& entries() const { return entries_; }
  const Scalar& operator()(Index from, Index to) const { return entries_(from, to); }

 private:
  void validate() const {
    if (entries_.rows() == 0 || entries_.rows() != entries_.cols()) {
      throw std::invalid_argument("transition matrix must be square and non-empty");
    }
    for (Index j = 0; j < entries_.rows(); ++j) {
      Scalar sum(0);
      for (Index i = 0; i < entries_.cols(); ++i) {
        const Scalar& t = entries_(j, i);
        if (t < Scalar(0) || t > Scalar(1) + stochastic_tolerance<Scalar>()) {
          throw std::invalid_argument("transition matrix entry outside [0,1] in row " +
                                      std::to_string(j));
        }
        sum += entries_(j, i);
      }
      if (abs_value(Scalar(sum - Scalar(1))) > stochastic_tolerance<Scalar>()) {
        throw std::invalid_argument("transition matrix row " + std::to_string(j) +
                                    " does not sum to 1");
      }
    }
  }

  Matrix<Scalar> entries_;
};

/// Unifilar hidden Markov model: P(x, j | i) = emit(i, x) * [j == successor(i, x)].
template <typename Scalar = double>
class EpsilonMachine {
 public:
  EpsilonMachine(Matrix<Scalar> emission, Eigen::MatrixXi successor)
      : emission_(std::move(emission)), successor_(std::move(successor)) {
    validate();
  }

  int num_states() const { return static_cast<int>(emission_.rows()); }
  int alphabet_size() const { return static_cast<int>(emission_.cols()); }

  const Scalar& emit(int state, int symbol) const { return emission_(state, symbol); }
  /// -1 when the symbol cannot be emitted from this state.
  int successor(int state, int symbol) const { return successor_(state, symbol); }

  const Matrix<Scalar>& emission_matrix() const { return emission_; }
  const Eigen::MatrixXi& successor_map() const { return successor_; }

 private:
  void validate() {
    const Index n = emission_.rows();
    if (n == 0 || emission_.cols() == 0) throw std::invalid_argument("empty epsilon-machine");
    if (successor_.rows() != n || successor_.cols() != emission_.cols()) {
      throw std::invalid_argument("successor map shape does not match emission table");
    }
    for (Index i = 0; i < n; ++i) {
      Scalar sum(0);
      for (Index x = 0; x < emission_.cols(); ++x) {
        const Scalar& e = emission_(i, x);
        if (e < Scalar(0) || e > Scalar(1) + stochastic_tolerance<Scalar>()) {
          throw std::invalid_argument("emission probability outside [0,1]");
        }
        sum += e;
        if (e > Scalar(0)) {
          if (successor_(i, x) < 0 || successor_(i, x) >= n) {
            throw std::invalid_argument("successor undefined for an emittable symbol");
          }
        } else {
          successor_(i, x) = -1;
        }
      }
      if (abs_value(Scalar(sum - Scalar(1))) > stochastic_tolerance<Scalar>()) {
        throw std::invalid_argument("emission probabilities of state " + std::to_string(i) +
                                    " do not sum to 1");
      }
    }
  }

  Matrix<Scalar> emission_;
  Eigen::MatrixXi successor_;
};

template <typename Scalar = double>
class StationaryDistribution {
 public:
  explicit StationaryDistribution(RowVector<Scalar> probs) : probs_(std::move(probs)) {
    Scalar sum(0);
    for (Index i = 0; i < probs_.size(); ++i) {
      if (probs_(i) < Scalar(0)) throw NumericalError("negative stationary probability");
      sum += probs_(i);
    }
    if (abs_value(Scalar(sum - Scalar(1))) > stochastic_tolerance<Scalar>()) {
      throw NumericalError("stationary distribution does not sum to 1");
    }
  }

  Index size() const { return probs_.size(); }
  const RowVector<Scalar>& probs() const { return probs_; }
  const Scalar& operator()(Index i) const { return probs_(i); }

 private:
  RowVector<Scalar> probs_;
};

// ---------------------------------------------------------------------------
// Model constructors

namespace detail {
template <typename Scalar>
void require_probability(const Scalar& p, const char* name) {
  if (!(p >= Scalar(0) && p <= Scalar(1))) {
    throw std::domain_error(std::string(name) + " must lie in [0,1]");
  }
}
}  // namespace detail

/// Two-state coin flipped with probability p per step; output = new state.
template <typename Scalar = double>
EpsilonMachine<Scalar> perturbed_coin(const Scalar& p) {
  detail::require_probability(p, "p");
  Matrix<Scalar> emit(2, 2);
  emit << Scalar(1) - p, p, p, Scalar(1) - p;
  Eigen::MatrixXi succ(2, 2);
  succ << 0, 1, 0, 1;
  return EpsilonMachine<Scalar>(std::move(emit), std::move(succ));
}

/// Three-state machine over {0,1,2} where the last 0 of every run of zeros is
/// replaced by 2. The state is the last output.
template <typename Scalar = double>
EpsilonMachine<Scalar> post_processed_coin(const Scalar& p, const Scalar& q) {
  detail::require_probability(p, "p");
  detail::require_probability(q, "q");
  const Scalar one(1);
  Matrix<Scalar> emit(3, 3);
  emit << one - p, Scalar(0), p,                //
      q * (one - p), one - q, q * p,            //
      Scalar(0), one, Scalar(0);
  Eigen::MatrixXi succ(3, 3);
  succ << 0, 1, 2, 0, 1, 2, 0, 1, 2;
  return EpsilonMachine<Scalar>(std::move(emit), std::move(succ));
}

/// A Markov chain viewed as a machine that emits its next state.
template <typename Scalar>
EpsilonMachine<Scalar> markov_chain_machine(const TransitionMatrix<Scalar>& t) {
  const Index n = t.size();
  Eigen::MatrixXi succ(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) succ(i, j) = static_cast<int>(j);
  }
  return EpsilonMachine<Scalar>(t.entries(), std::move(succ));
}

/// The three-state chain whose first and last rows are uniform:
///   [1/3 1/3 1/3; p q 1-p-q; 1/3 1/3 1/3].
template <typename Scalar = double>
TransitionMatrix<Scalar> three_state_example_chain(const Scalar& p, const Scalar& q) {
  detail::require_probability(p, "p");
  detail::require_probability(q, "q");
  if (p + q > Scalar(1)) throw std::domain_error("p + q must not exceed 1");
  const Scalar third = Scalar(1) / Scalar(3);
  Matrix<Scalar> t(3, 3);
  t << third, third, third, p, q, Scalar(1) - p - q, third, third, third;
  return TransitionMatrix<Scalar>(std::move(t));
}

// ---------------------------------------------------------------------------
// Chain analysis

/// T(i, j) = sum_x P(x | i) [j == f(i, x)].
template <typename Scalar>
TransitionMatrix<Scalar> induced_chain(const EpsilonMachine<Scalar>& m) {
  const int n = m.num_states();
  Matrix<Scalar> t = Matrix<Scalar>::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int x = 0; x < m.alphabet_size(); ++x) {
      if (m.emit(i, x) > Scalar(0)) t(i, m.successor(i, x)) += m.emit(i, x);
    }
  }
  return TransitionMatrix<Scalar>(std::move(t));
}

/// Strong connectivity of the graph of positive transitions.
template <typename Scalar>
bool is_irreducible(const TransitionMatrix<Scalar>& t) {
  const Index n = t.size();
  auto reaches_all = [&](bool reverse) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::queue<Index> frontier;
    frontier.push(0);
    seen[0] = 1;
    Index count = 1;
    while (!frontier.empty()) {
      const Index u = frontier.front();
      frontier.pop();
      for (Index v = 0; v < n; ++v) {
        const Scalar& w = reverse ? t(v, u) : t(u, v);
        if (w > Scalar(0) && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          ++count;
          frontier.push(v);
        }
      }
    }
    return count == n;
  };
  return reaches_all(false) && reaches_all(true);
}

/// ||pi T - pi||_inf
template <typename Scalar>
double stationary_residual(const RowVector<Scalar>& pi, const TransitionMatrix<Scalar>& t) {
  const RowVector<Scalar> diff = pi * t.entries() - pi;
  double r = 0.0;
  for (Index i = 0; i < diff.size(); ++i) r = std::max(r, std::abs(to_double(diff(i))));
  return r;
}

namespace detail {

/// Gaussian elimination choosing the largest pivot (floating point) or the
/// first nonzero pivot (exact scalars).
template <typename Scalar>
Vector<Scalar> solve_dense(Matrix<Scalar> a, Vector<Scalar> b) {
  const Index n = a.rows();
  for (Index col = 0; col < n; ++col) {
    Index pivot = -1;
    for (Index r = col; r < n; ++r) {
      if (a(r, col) == Scalar(0)) continue;
      if constexpr (is_exact_v<Scalar>) {
        pivot = r;
        break;
      } else {
        if (pivot < 0 || abs_value(a(r, col)) > abs_value(a(pivot, col))) pivot = r;
      }
    }
    if (pivot < 0) throw NumericalError("singular linear system");
    a.row(col).swap(a.row(pivot));
    std::swap(b(col), b(pivot));
    for (Index r = col + 1; r < n; ++r) {
      if (a(r, col) == Scalar(0)) continue;
      const Scalar factor = a(r, col) / a(col, col);
      a.row(r) -= factor * a.row(col);
      b(r) -= factor * b(col);
    }
  }
  Vector<Scalar> x(n);
  for (Index r = n - 1; r >= 0; --r) {
    Scalar acc = b(r);
    for (Index c = r + 1; c < n; ++c) acc -= a(r, c) * x(c);
    x(r) = acc / a(r, r);
  }
  return x;
}

}  // namespace detail

inline constexpr double kStationaryTolerance = 1e-13;
inline constexpr long kStationaryMaxIterations = 1'000'000;

/// Unique stationary distribution of an irreducible chain.
///
/// Floating point: power iteration on the lazy chain (I + T)/2, which has the
/// same stationary vector and is aperiodic, until ||pi T - pi||_inf < 1e-13,
/// then for as long as the residual keeps shrinking.
/// Exact scalars: direct solve of pi (T - I) = 0 with sum(pi) = 1.
template <typename Scalar>
StationaryDistribution<Scalar> stationary(const TransitionMatrix<Scalar>& t) {
  if (!is_irreducible(t)) throw NumericalError("non-unique stationary state: chain is reducible");
  const Index n = t.size();
  if constexpr (is_exact_v<Scalar>) {
    Matrix<Scalar> a = (t.entries() - Matrix<Scalar>::Identity(n, n)).transpose();
    a.row(n - 1).setConstant(Scalar(1));
    Vector<Scalar> b = Vector<Scalar>::Zero(n);
    b(n - 1) = Scalar(1);
    const Vector<Scalar> x = detail::solve_dense(std::move(a), std::move(b));
    return StationaryDistribution<Scalar>(x.transpose());
  } else {
    RowVector<Scalar> pi = RowVector<Scalar>::Constant(n, Scalar(1) / Scalar(n));
    double residual = stationary_residual(pi, t);
    for (long it = 0; it < kStationaryMaxIterations && residual >= kStationaryTolerance; ++it) {
      pi = Scalar(0.5) * (pi + pi * t.entries());
      pi /= pi.sum();
      residual = stationary_residual(pi, t);
    }
    if (residual >= kStationaryTolerance) {
      std::ostringstream msg;
      msg << "power iteration did not converge, residual " << residual;
      throw NumericalError(msg.str());
    }
    // Keep iterating while it still helps, down to rounding level.
    for (long it = 0; it < kStationaryMaxIterations; ++it) {
      RowVector<Scalar> next = Scalar(0.5) * (pi + pi * t.entries());
      next /= next.sum();
      const double r = stationary_residual(next, t);
      if (!(r < residual)) break;
      pi = std::move(next);
      residual = r;
    }
    return StationaryDistribution<Scalar>(pi);
  }
}

// ---------------------------------------------------------------------------
// Memory metrics

/// D_c = log2 |S|
template <typename Scalar>
double topological_memory(const EpsilonMachine<Scalar>& m) {
  return std::log2(static_cast<double>(m.num_states()));
}

/// H_c = Shannon entropy (bits) of the stationary distribution.
template <typename Scalar>
double statistical_memory(const EpsilonMachine<Scalar>& m) {
  return shannon_entropy(stationary(induced_chain(m)).probs());
}

/// Past-future mutual information of the perturbed coin:
/// 1 + p log2 p + (1-p) log2 (1-p).
inline double coin_mutual_info_bound(double p) {
  detail::require_probability(p, "p");
  return 1.0 + xlog2x(p) + xlog2x(1.0 - p);
}

// ---------------------------------------------------------------------------
// Trajectories and k-gram laws

/// Symbols are rendered as base-36 digits in k-gram keys.
inline char symbol_char(int x) {
  if (x < 0 || x >= 36) throw std::out_of_range("symbol outside the base-36 alphabet");
  return static_cast<char>(x < 10 ? '0' + x : 'a' + (x - 10));
}

inline int symbol_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'z') return c - 'a' + 10;
  throw std::out_of_range("not a base-36 symbol");
}

inline std::string symbols_to_string(const std::vector<int>& xs) {
  std::string s;
  s.reserve(xs.size());
  for (int x : xs) s.push_back(symbol_char(x));
  return s;
}

/// Reference sequential sampler: emit from P(. | state), then follow f.
template <typename Scalar>
std::vector<int> sample_trajectory(const EpsilonMachine<Scalar>& m, int start, std::size_t steps,
                                   Rng& rng) {
  if (start < 0 || start >= m.num_states()) throw std::out_of_range("start state out of range");
  std::vector<int> out;
  out.reserve(steps);
  int state = start;
  for (std::size_t t = 0; t < steps; ++t) {
    const int x = static_cast<int>(rng.categorical(m.emission_matrix().row(state)));
    out.push_back(x);
    state = m.successor(state, x);
  }
  return out;
}

inline constexpr int kMaxEnumeratedGram = 8;

/// Exact law of the next k outputs given the current causal state. Only
/// positive-probability strings appear in the map.
template <typename Scalar>
std::map<std::string, Scalar> conditional_kgram_distribution(const EpsilonMachine<Scalar>& m,
                                                             int start, int k) {
  if (k < 0 || k > kMaxEnumeratedGram) {
    throw std::invalid_argument("k-gram length must be in [0, " +
                                std::to_string(kMaxEnumeratedGram) + "]");
  }
  std::map<std::string, Scalar> law;
  std::string prefix;
  auto expand = [&](auto&& self, int state, const Scalar& weight) -> void {
    if (static_cast<int>(prefix.size()) == k) {
      law[prefix] += weight;
      return;
    }
    for (int x = 0; x < m.alphabet_size(); ++x) {
      if (!(m.emit(state, x) > Scalar(0))) continue;
      prefix.push_back(symbol_char(x));
      self(self, m.successor(state, x), Scalar(weight * m.emit(state, x)));
      prefix.pop_back();
    }
  };
  expand(expand, start, Scalar(1));
  return law;
}

/// Stationary law of length-k output words.
template <typename Scalar>
std::map<std::string, Scalar> exact_kgram_distribution(const EpsilonMachine<Scalar>& m, int k) {
  if (k > kMaxEnumeratedGram) {
    throw std::invalid_argument("k-gram length exceeds the enumeration guard of " +
                                std::to_string(kMaxEnumeratedGram));
  }
  const auto pi = stationary(induced_chain(m));
  std::map<std::string, Scalar> law;
  for (int i = 0; i < m.num_states(); ++i) {
    if (!(pi(i) > Scalar(0))) continue;
    for (const auto& [gram, prob] : conditional_kgram_distribution(m, i, k)) {
      law[gram] += pi(i) * prob;
    }
  }
  return law;
}

}  // namespace qimem
