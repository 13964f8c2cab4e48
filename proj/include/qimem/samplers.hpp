#pragma once

#include <cstdint>
#include <vector>

#include "qimem/markov.hpp"
#include "qimem/rng.hpp"
#include "qimem/scalar.hpp"

namespace qimem {

// ---------------------------------------------------------------------------
// Stationary-correction decomposition T = 1 pi + Delta

/// Entries of Delta with magnitude at or below this count as zero in floating
/// point. Exact scalars compare against zero directly.
inline constexpr double kDeltaZeroTolerance = 1e-14;

template <typename Scalar>
int delta_sign(const Scalar& d) {
  if constexpr (is_exact_v<Scalar>) {
    return d > Scalar(0) ? 1 : (d < Scalar(0) ? -1 : 0);
  } else {
    if (abs_value(d) <= kDeltaZeroTolerance) return 0;
    return d > Scalar(0) ? 1 : -1;
  }
}

template <typename Scalar>
struct Decomposition {
  StationaryDistribution<Scalar> pi;
  Matrix<Scalar> delta;
};

/// pi and Delta = T - 1 pi. Rejects chains with a zero stationary entry.
template <typename Scalar>
Decomposition<Scalar> decompose(const TransitionMatrix<Scalar>& t) {
  auto pi = stationary(t);
  for (Index i = 0; i < pi.size(); ++i) {
    if (!(pi(i) > Scalar(0))) throw NumericalError("degenerate stationary support");
  }
  Matrix<Scalar> delta = t.entries();
  for (Index j = 0; j < delta.rows(); ++j) delta.row(j) -= pi.probs();
  return {std::move(pi), std::move(delta)};
}

/// f_j = max_{i in S_j^-} (-Delta_ji / pi_i), or 0 when row j has no negative entry.
template <typename Scalar>
Vector<Scalar> fractions(const Matrix<Scalar>& delta, const RowVector<Scalar>& pi) {
  Vector<Scalar> f = Vector<Scalar>::Zero(delta.rows());
  for (Index j = 0; j < delta.rows(); ++j) {
    for (Index i = 0; i < delta.cols(); ++i) {
      if (delta_sign(delta(j, i)) < 0) {
        const Scalar v = -delta(j, i) / pi(i);
        if (v > f(j)) f(j) = v;
      }
    }
  }
  return f;
}

template <typename Scalar>
struct Ratios {
  /// rminus(j, i) = r^-_{j:i->} on S_j^-, zero elsewhere.
  Matrix<Scalar> rminus;
  /// rplus(j, i) = r^+_{j:->i} on S_j^+, zero elsewhere.
  Matrix<Scalar> rplus;
  Vector<Scalar> z;
};

/// Rows with f_j = 0 get empty tables.
template <typename Scalar>
Ratios<Scalar> ratios(const Matrix<Scalar>& delta, const RowVector<Scalar>& pi,
                      const Vector<Scalar>& f) {
  const Index n = delta.rows();
  Ratios<Scalar> r{Matrix<Scalar>::Zero(n, n), Matrix<Scalar>::Zero(n, n),
                   Vector<Scalar>::Zero(n)};
  for (Index j = 0; j < n; ++j) {
    if (!(f(j) > Scalar(0))) continue;
    for (Index i = 0; i < n; ++i) {
      if (delta_sign(delta(j, i)) > 0) r.z(j) += delta(j, i);
    }
    for (Index i = 0; i < n; ++i) {
      const int sign = delta_sign(delta(j, i));
      if (sign < 0) r.rminus(j, i) = -delta(j, i) / (f(j) * pi(i));
      if (sign > 0) r.rplus(j, i) = delta(j, i) / r.z(j);
    }
  }
  return r;
}

template <typename Scalar>
struct CorrectionTables {
  TransitionMatrix<Scalar> t;
  StationaryDistribution<Scalar> pi;
  Matrix<Scalar> delta;
  std::vector<std::vector<Index>> negative;  // S_j^-
  std::vector<std::vector<Index>> positive;  // S_j^+
  Vector<Scalar> f;
  Matrix<Scalar> rminus;
  Matrix<Scalar> rplus;
  Vector<Scalar> z;

  Index size() const { return t.size(); }
};

template <typename Scalar>
CorrectionTables<Scalar> build_tables(const TransitionMatrix<Scalar>& t) {
  auto [pi, delta] = decompose(t);
  const Index n = t.size();
  std::vector<std::vector<Index>> neg(static_cast<std::size_t>(n));
  std::vector<std::vector<Index>> pos(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const int s = delta_sign(delta(j, i));
      if (s < 0) neg[static_cast<std::size_t>(j)].push_back(i);
      if (s > 0) pos[static_cast<std::size_t>(j)].push_back(i);
    }
  }
  Vector<Scalar> f = fractions(delta, pi.probs());
  auto r = ratios(delta, pi.probs(), f);
  return CorrectionTables<Scalar>{t,           std::move(pi),       std::move(delta),
                                  std::move(neg), std::move(pos),   std::move(f),
                                  std::move(r.rminus), std::move(r.rplus), std::move(r.z)};
}

/// Per-sample transition kernel implied by the resampling procedure,
/// computed in closed form from the tables.
template <typename Scalar>
Matrix<Scalar> effective_kernel(const CorrectionTables<Scalar>& tab) {
  const Index n = tab.size();
  Matrix<Scalar> k(n, n);
  for (Index j = 0; j < n; ++j) {
    Scalar rerouted(0);
    for (Index i : tab.negative[static_cast<std::size_t>(j)]) {
      rerouted += tab.pi(i) * tab.rminus(j, i);
    }
    for (Index i = 0; i < n; ++i) {
      const int s = delta_sign(tab.delta(j, i));
      if (s < 0) {
        k(j, i) = tab.pi(i) * (Scalar(1) - tab.f(j) * tab.rminus(j, i));
      } else if (s > 0) {
        k(j, i) = tab.pi(i) + tab.f(j) * rerouted * tab.rplus(j, i);
      } else {
        k(j, i) = tab.pi(i);
      }
    }
  }
  return k;
}

template <typename Scalar>
struct MemoryCost {
  /// Expected number of saved samples per sample, sum_j f_j pi_j.
  Scalar saved_fraction;
  /// saved_fraction * ceil(log2 n)
  Scalar bits_per_sample;
};

inline int index_bits(Index n) {
  int bits = 0;
  while ((Index{1} << bits) < n) ++bits;
  return bits;
}

template <typename Scalar>
MemoryCost<Scalar> expected_memory(const CorrectionTables<Scalar>& tab) {
  Scalar fraction(0);
  for (Index j = 0; j < tab.size(); ++j) fraction += tab.f(j) * tab.pi(j);
  return {fraction, Scalar(fraction * Scalar(index_bits(tab.size())))};
}

// ---------------------------------------------------------------------------
// Negative-probability view of the coin

struct NegprobDecomposition {
  Eigen::Vector2d uniform;
  Eigen::Vector2d correction;
  /// (1 - 2p) / 2
  double coefficient;
};

/// (1-p, p) = (1/2)(1, 1) + ((1-2p)/2)(1, -1)
NegprobDecomposition negprob_decomposition(double p);

// ---------------------------------------------------------------------------
// Ensemble samplers

/// Seed, ensemble size and thread count shared by the ensemble samplers.
struct EnsembleOptions {
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  unsigned threads = 1;
};

struct StepSummary {
  std::size_t step = 0;
  /// Samples holding a saved value after this step.
  std::size_t saved = 0;
  /// Occupation of each value after this step.
  std::vector<std::uint64_t> counts;
  /// transitions[j * n + i] = samples that moved from j to i during this step.
  std::vector<std::uint64_t> transitions;
};

enum class SaveMode {
  /// Each sample is saved independently with probability |2p - 1|.
  probabilistic,
  /// Exactly round(M |2p - 1|) samples are saved, chosen uniformly.
  fixed_count,
};

/// M independent perturbed coins driven by fresh fair coins plus a saved
/// subset that is flipped or kept to restore the correlation.
class CoinEnsemble {
 public:
  CoinEnsemble(double p, EnsembleOptions options, SaveMode mode = SaveMode::probabilistic);

  StepSummary step();

  double p() const { return p_; }
  double save_probability() const { return std::abs(2.0 * p_ - 1.0); }
  std::size_t size() const { return bits_.size(); }
  const std::vector<int>& bits() const { return bits_; }
  /// Saved value per sample, -1 when not saved.
  const std::vector<int>& saved() const { return saved_; }
  std::size_t steps_taken() const { return step_; }

 private:
  void choose_saved();

  double p_;
  EnsembleOptions options_;
  SaveMode mode_;
  std::vector<int> bits_;
  std::vector<int> saved_;
  std::size_t step_ = 0;
};

/// Analytic per-sample kernel of CoinEnsemble with probabilistic saving.
Eigen::Matrix2d coin_ensemble_kernel(double p);

/// The general sampler: every step redraws each sample from pi and reroutes
/// a saved fraction of them according to the correction tables.
class GeneralQISampler {
 public:
  GeneralQISampler(const TransitionMatrix<double>& t, EnsembleOptions options);

  StepSummary qi_step();

  const CorrectionTables<double>& tables() const { return tables_; }
  std::size_t size() const { return samples_.size(); }
  const std::vector<int>& samples() const { return samples_; }
  /// Saved value per sample, -1 when not saved.
  const std::vector<int>& saved() const { return saved_; }
  std::size_t steps_taken() const { return step_; }

 private:
  CorrectionTables<double> tables_;
  EnsembleOptions options_;
  std::vector<int> samples_;
  std::vector<int> saved_;
  std::size_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Single-bit machine for the post-processed coin

struct StochasticBitMachine {
  static constexpr int kMemoryStates = 2;

  int s = 0;
  double p = 0.0;
  double q = 0.0;
};

/// s = 0 for state 0, s = 1 for state 2, and for state 1 s = 0 with
/// probability q, else 1.
StochasticBitMachine sbm_init(int j, double p, double q, Rng& rng);

/// Emits x in {0, 1, 2} and updates the memory bit in place.
int sbm_step(StochasticBitMachine& m, Rng& rng);

std::vector<int> sbm_trajectory(int j, double p, double q, std::size_t steps, Rng& rng);

// ---------------------------------------------------------------------------
// Stochastic causal states

/// Row i holds |C_i> = sum_{x,j} P(x,j|i) |j>|x>, basis index j * |A| + x.
Eigen::MatrixXd stochastic_causal_states(const EpsilonMachine<double>& m);

/// Row i holds sum_j P(j|i) |j>.
Eigen::MatrixXd stochastic_causal_states(const TransitionMatrix<double>& t);

/// Dimension of the span of the rows (singular values above 1e-10).
Index stochastic_causal_dimension(const Eigen::MatrixXd& states);

}  // namespace qimem
