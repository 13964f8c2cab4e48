#pragma once

#include <string>
#include <vector>

#include "qimem/quantum.hpp"
#include "qimem/scalar.hpp"

namespace qimem {

template <typename Scalar>
Matrix<Scalar> kron(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  Matrix<Scalar> k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return k;
}

/// Nonnegative factors F_0..F_N on a cycle of variables s_0..s_N, where
/// F_l maps s_l to s_{l+1} (shape dims[l+1] x dims[l]) and s_{N+1} = s_0.
template <typename Scalar = double>
class CycleFactorGraph {
 public:
  explicit CycleFactorGraph(std::vector<Matrix<Scalar>> factors) : factors_(std::move(factors)) {
    const std::size_t n = factors_.size();
    if (n == 0) throw std::invalid_argument("factor graph needs at least one factor");
    for (std::size_t l = 0; l < n; ++l) {
      const auto& f = factors_[l];
      if (f.rows() != factors_[(l + 1) % n].cols()) {
        throw std::invalid_argument("factor " + std::to_string(l) + " shape does not chain");
      }
      for (Index r = 0; r < f.rows(); ++r) {
        for (Index c = 0; c < f.cols(); ++c) {
          if (f(r, c) < Scalar(0)) {
            throw std::invalid_argument("factor " + std::to_string(l) + " has a negative entry");
          }
        }
      }
    }
  }

  /// Number of factors, equal to the number of variables.
  Index size() const { return static_cast<Index>(factors_.size()); }
  const Matrix<Scalar>& factor(Index l) const { return factors_[static_cast<std::size_t>(l)]; }
  Index dim(Index l) const { return factor(l).cols(); }

 private:
  std::vector<Matrix<Scalar>> factors_;
};

enum class Direction { forward, backward };

template <typename Scalar = double>
class Message {
 public:
  Message(Direction direction, Index edge, Vector<Scalar> values)
      : direction_(direction), edge_(edge), values_(std::move(values)) {
    bool any = false;
    for (Index i = 0; i < values_.size(); ++i) {
      if (values_(i) < Scalar(0)) throw std::invalid_argument("message entries must be nonnegative");
      if (values_(i) > Scalar(0)) any = true;
    }
    if (!any) throw NumericalError("annihilating factor: message is identically zero");
  }

  Direction direction() const { return direction_; }
  /// Variable index l the message lives on.
  Index edge() const { return edge_; }
  const Vector<Scalar>& values() const { return values_; }

 private:
  Direction direction_;
  Index edge_;
  Vector<Scalar> values_;
};

template <typename Scalar>
struct PassResult {
  /// messages[l] lives on variable l; messages[0] is the initial message.
  std::vector<Message<Scalar>> messages;
  /// The message on variable 0 after one full loop.
  Message<Scalar> recirculated;
};

/// mu_{l->l+1} = F_{l-1} mu_{l-1->l}, starting from init on variable 0.
template <typename Scalar>
PassResult<Scalar> forward_pass(const CycleFactorGraph<Scalar>& g, const Vector<Scalar>& init) {
  const Index n = g.size();
  if (init.size() != g.dim(0)) throw std::invalid_argument("initial message has wrong dimension");
  std::vector<Message<Scalar>> out;
  out.reserve(static_cast<std::size_t>(n));
  out.emplace_back(Direction::forward, 0, init);
  for (Index l = 1; l < n; ++l) {
    out.emplace_back(Direction::forward, l, Vector<Scalar>(g.factor(l - 1) * out.back().values()));
  }
  Message<Scalar> back(Direction::forward, 0,
                       Vector<Scalar>(g.factor(n - 1) * out.back().values()));
  return {std::move(out), std::move(back)};
}

/// <nu_{l->l-1}| = <nu_{l+1->l}| F_l, starting from init on variable 0.
/// Row messages are stored as column vectors.
template <typename Scalar>
PassResult<Scalar> backward_pass(const CycleFactorGraph<Scalar>& g, const Vector<Scalar>& init) {
  const Index n = g.size();
  if (init.size() != g.dim(0)) throw std::invalid_argument("initial message has wrong dimension");
  std::vector<Vector<Scalar>> values(static_cast<std::size_t>(n));
  values[0] = init;
  Vector<Scalar> current = init;
  for (Index l = n - 1; l >= 1; --l) {
    current = g.factor(l).transpose() * current;
    values[static_cast<std::size_t>(l)] = current;
  }
  std::vector<Message<Scalar>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index l = 0; l < n; ++l) {
    out.emplace_back(Direction::backward, l, std::move(values[static_cast<std::size_t>(l)]));
  }
  Message<Scalar> back(Direction::backward, 0,
                       Vector<Scalar>(g.factor(0).transpose() * out[n == 1 ? 0 : 1].values()));
  return {std::move(out), std::move(back)};
}

/// p(s) = mu(s) nu(s) / sum_s' mu(s') nu(s')
template <typename Scalar>
Vector<Scalar> marginal(const Message<Scalar>& mu, const Message<Scalar>& nu) {
  if (mu.edge() != nu.edge() || mu.values().size() != nu.values().size()) {
    throw std::invalid_argument("marginal needs messages on the same variable");
  }
  Vector<Scalar> p = mu.values().cwiseProduct(nu.values());
  const Scalar z = p.sum();
  if (!(z > Scalar(0))) throw NumericalError("zero normalizer in marginal");
  return p / z;
}

template <typename Scalar = double>
class ProbabilityMatrix {
 public:
  explicit ProbabilityMatrix(Matrix<Scalar> m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw std::invalid_argument("probability matrix must be square");
    if (!(m_.trace() > Scalar(0))) throw NumericalError("probability matrix has zero trace");
  }

  const Matrix<Scalar>& matrix() const { return m_; }
  /// diag(P) / tr(P)
  Vector<Scalar> marginals() const { return m_.diagonal() / m_.trace(); }

 private:
  Matrix<Scalar> m_;
};

/// P_l = F_{l-1} ... F_0 F_N ... F_l.
template <typename Scalar>
ProbabilityMatrix<Scalar> probability_matrix(const CycleFactorGraph<Scalar>& g, Index l) {
  const Index n = g.size();
  if (l < 0 || l >= n) throw std::out_of_range("step index outside the cycle");
  Matrix<Scalar> p = Matrix<Scalar>::Identity(g.dim(l), g.dim(l));
  for (Index k = 0; k < n; ++k) p = g.factor((l + k) % n) * p;
  return ProbabilityMatrix<Scalar>(std::move(p));
}

/// Marginal of every variable under P(s) ~ prod_l F_l(s_{l+1}, s_l),
/// by depth-first enumeration of all assignments with nonzero weight.
template <typename Scalar>
std::vector<Vector<Scalar>> brute_force_marginals(const CycleFactorGraph<Scalar>& g) {
  const Index n = g.size();
  std::vector<Vector<Scalar>> acc;
  for (Index l = 0; l < n; ++l) acc.push_back(Vector<Scalar>::Zero(g.dim(l)));
  std::vector<Index> s(static_cast<std::size_t>(n), 0);
  Scalar z(0);
  auto visit = [&](auto&& self, Index l, const Scalar& weight) -> void {
    if (l == n) {
      const Scalar w = weight * g.factor(n - 1)(s[0], s[static_cast<std::size_t>(n - 1)]);
      if (w == Scalar(0)) return;
      z += w;
      for (Index k = 0; k < n; ++k) acc[static_cast<std::size_t>(k)](s[static_cast<std::size_t>(k)]) += w;
      return;
    }
    for (Index v = 0; v < g.dim(l); ++v) {
      const Scalar w = l == 0 ? weight : Scalar(weight * g.factor(l - 1)(v, s[static_cast<std::size_t>(l - 1)]));
      if (w == Scalar(0)) continue;
      s[static_cast<std::size_t>(l)] = v;
      self(self, l + 1, w);
    }
  };
  visit(visit, 0, Scalar(1));
  if (!(z > Scalar(0))) throw NumericalError("factor graph has zero partition function");
  for (auto& a : acc) a /= z;
  return acc;
}

struct PhaseDecomposition {
  Eigen::VectorXd p;
  Eigen::VectorXd phi;
};

/// p = mu nu / Z and phi = (1/2) ln(mu / nu), with phi = 0 off the support.
PhaseDecomposition message_phase_decompose(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu);

// ---------------------------------------------------------------------------
// Graphs mirroring the quantum protocols

/// [[sqrt(1-x), 0], [sqrt(x), 0]]
Eigen::MatrixXd fx_factor(double x);

/// A factor graph together with the orthogonal gate that plays the role of
/// each factor in the matching quantum circuit.
struct BpModel {
  std::string name;
  CycleFactorGraph<double> graph;
  std::vector<GateMatrix> gates;
  Eigen::VectorXd init;

  /// Variable index holding the message that corresponds to the measured
  /// state of the circuit.
  Index observed = 0;
};

/// Factors F_PREP = F_{x_j} (x) F_p, CNOT, CNOT^T, F_PREP^T with x_0 = p,
/// x_1 = 1 - p.
BpModel build_coin_graph(double p, int j);

/// Factors G_PREP, G_{U_p}, G_{U_{1-q}}, G_CNOT followed by their transposes
/// in reverse order.
BpModel build_postproc_graph(double p, double q, int j);

/// Coin graph unrolled over `steps` circuit iterations on (steps + 1)-bit
/// variables: only the first copy carries F_{x_j}, each later copy adds a
/// fresh F_p ancilla and a CNOT one bit further down.
BpModel build_multi_step_coin_graph(double p, int j, int steps);

BpModel build_two_step_coin_graph(double p, int j);

/// Quantum state after the first l gates, for l = 0..N.
std::vector<StateVector> quantum_reference_states(const BpModel& model);

struct EquivalenceReport {
  /// max |mu_l / ||mu_l|| - psi_l| per variable.
  std::vector<double> amplitude_deviation;
  double max_amplitude_deviation = 0.0;
  /// max |nu_l - mu_l| over all variables.
  double transpose_residual = 0.0;
  /// 1 - cosine similarity between the recirculated and initial message.
  double cycle_residual = 0.0;
  /// max |diag(P_l)/tr(P_l) - marginal_l| over all variables.
  double diagonal_residual = 0.0;

  bool passed(double tol) const {
    return max_amplitude_deviation < tol && transpose_residual < tol && cycle_residual < tol &&
           diagonal_residual < tol;
  }
};

EquivalenceReport verify_equivalence(const BpModel& model);

}  // namespace qimem
