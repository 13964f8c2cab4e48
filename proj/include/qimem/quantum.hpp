#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "qimem/markov.hpp"
#include "qimem/rng.hpp"
#include "qimem/scalar.hpp"

namespace qimem {

/// Real amplitude vector of unit norm on 2^n basis states. Qubit 1 is the
/// most significant bit of the basis index.
class StateVector {
 public:
  explicit StateVector(Eigen::VectorXd amplitudes);

  static StateVector basis(Index dim, Index index);

  Index dim() const { return amps_.size(); }
  int num_qubits() const;
  const Eigen::VectorXd& amplitudes() const { return amps_; }
  double operator()(Index i) const { return amps_(i); }

  double overlap(const StateVector& other) const { return amps_.dot(other.amps_); }

 private:
  Eigen::VectorXd amps_;
};

/// Kronecker product of state vectors (left factor = more significant qubits).
StateVector tensor(const StateVector& a, const StateVector& b);

/// Real orthogonal gate, G^T G = I within 1e-12.
class GateMatrix {
 public:
  explicit GateMatrix(Eigen::MatrixXd m);

  Index dim() const { return m_.rows(); }
  const Eigen::MatrixXd& matrix() const { return m_; }
  GateMatrix transpose() const { return GateMatrix(m_.transpose()); }

 private:
  Eigen::MatrixXd m_;
};

StateVector apply(const GateMatrix& g, const StateVector& psi);
GateMatrix operator*(const GateMatrix& a, const GateMatrix& b);
GateMatrix kron(const GateMatrix& a, const GateMatrix& b);

/// Symmetric, unit-trace, positive semidefinite (eigenvalues >= -1e-10).
class DensityMatrix {
 public:
  explicit DensityMatrix(Eigen::MatrixXd rho);

  Index dim() const { return rho_.rows(); }
  const Eigen::MatrixXd& matrix() const { return rho_; }
  /// Ascending eigenvalues from the Jacobi solver.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

 private:
  Eigen::MatrixXd rho_;
  Eigen::VectorXd eigenvalues_;
};

// ---------------------------------------------------------------------------
// Symmetric eigenvalues

inline constexpr double kJacobiTolerance = 1e-13;

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// tol. Returns eigenvalues in ascending order.
template <typename Scalar>
Vector<Scalar> jacobi_eigenvalues(Matrix<Scalar> a, Scalar tol = Scalar(kJacobiTolerance),
                                  int max_sweeps = 100) {
  using std::abs;
  using std::sqrt;
  const Index n = a.rows();
  if (n != a.cols()) throw std::invalid_argument("jacobi_eigenvalues needs a square matrix");
  auto off_norm = [&] {
    Scalar s(0);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (i != j) s += a(i, j) * a(i, j);
      }
    }
    return sqrt(s);
  };
  int sweep = 0;
  for (; sweep < max_sweeps && off_norm() > tol; ++sweep) {
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (a(p, q) == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * a(p, q));
        const Scalar sign = theta >= Scalar(0) ? Scalar(1) : Scalar(-1);
        const Scalar t = sign / (abs(theta) + sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  if (off_norm() > tol) throw NumericalError("Jacobi eigensolver did not converge");
  Vector<Scalar> evals = a.diagonal();
  std::sort(evals.data(), evals.data() + evals.size());
  return evals;
}

// ---------------------------------------------------------------------------
// Gates

/// Which orthogonal completion to use for the unspecified second column of
/// U_x. The protocols only ever act on the first column.
enum class Completion { rotation, reflection };

/// [[sqrt(1-x), -sqrt(x)], [sqrt(x), sqrt(1-x)]] (rotation) or
/// [[sqrt(1-x), sqrt(x)], [sqrt(x), -sqrt(1-x)]] (reflection).
GateMatrix u_x(double x, Completion completion = Completion::rotation);

GateMatrix identity_gate(int num_qubits);
GateMatrix pauli_x();

/// |0><0| (x) I + |1><1| (x) X on two adjacent qubits, first is control.
GateMatrix cnot();

/// Gate acting on a single qubit `target` (1-based, qubit 1 most significant)
/// when qubit `control` is in `control_value`; identity otherwise.
GateMatrix controlled(const GateMatrix& single, int control, int target, int num_qubits,
                      int control_value = 1);

// ---------------------------------------------------------------------------
// Measurement

struct MeasurementBranch {
  /// Measured bits, in the order the qubits were requested.
  std::vector<int> bits;
  double probability = 0.0;
  /// Normalized state of the unmeasured qubits; empty when probability is 0.
  std::optional<StateVector> residual;
};

/// Exact computational-basis measurement of `qubits` (1-based). One branch per
/// bit pattern, including zero-probability patterns.
std::vector<MeasurementBranch> measure(const StateVector& psi, const std::vector<int>& qubits);

// ---------------------------------------------------------------------------
// Quantum causal states

/// |xi_i> = sum_{x,j} sqrt(P(x,j|i)) |j>|x> with basis index j * dA + x, where
/// the state and output registers are each padded to a power of two.
std::vector<StateVector> quantum_causal_states(const EpsilonMachine<double>& m);

/// Register sizes used by quantum_causal_states: (dS, dA).
std::pair<Index, Index> causal_register_dims(const EpsilonMachine<double>& m);

/// Single-qubit coin states: |xi_0> = U_p|0>, |xi_1> = U_{1-p}|0>.
StateVector coin_causal_state(int j, double p);

/// Single-qubit representation of the post-processed coin states:
/// |xi_0> = |0>, |xi_1> = sqrt(q)|0> + sqrt(1-q)|1>, |xi_2> = |1>.
StateVector postproc_causal_state(int j, double q);

// ---------------------------------------------------------------------------
// Circuits

struct CircuitBranch {
  int output = 0;
  double probability = 0.0;
  /// Post-measurement memory qubit, empty for zero-probability outputs.
  std::optional<StateVector> next;
};

struct CircuitStep {
  std::vector<CircuitBranch> branches;
  /// Total probability of measurement patterns that map to no output
  /// (y1 = y3 = 1 on the post-processed circuit).
  double forbidden_probability = 0.0;

  double probability_of(int output) const;
  const CircuitBranch* branch(int output) const;
};

/// CNOT^(1,2) on |memory>|xi_0>, then measure qubit 1.
CircuitStep coin_circuit_apply(const StateVector& memory, double p,
                               Completion completion = Completion::rotation);
CircuitStep coin_circuit_step(int j, double p, Completion completion = Completion::rotation);

/// U = CNOT^(3,2) CU_{1-q}^(1,2) notCU_p^(1,3) on three qubits.
GateMatrix postproc_unitary(double p, double q, Completion completion = Completion::rotation);

/// U on |memory>|0>|0>, measure qubits 1 and 3, output x = y1 + 2 y3.
CircuitStep postproc_circuit_apply(const StateVector& memory, double p, double q,
                                   Completion completion = Completion::rotation);
CircuitStep postproc_circuit_step(int j, double p, double q,
                                  Completion completion = Completion::rotation);

/// Iterates the coin circuit from |xi_start>, sampling each measurement.
std::vector<int> sample_coin_circuit(double p, int start, std::size_t steps, Rng& rng);
std::vector<int> sample_postproc_circuit(double p, double q, int start, std::size_t steps,
                                         Rng& rng);

// ---------------------------------------------------------------------------
// Memory metrics

/// rho = sum_i w_i |psi_i><psi_i|
DensityMatrix mixture_density(const std::vector<StateVector>& states,
                              const Eigen::VectorXd& weights);

/// rho = sum_i pi_i |xi_i><xi_i| at the stationary state.
DensityMatrix stationary_density(const EpsilonMachine<double>& m);

inline constexpr double kRankTolerance = 1e-10;

/// D_q = log2 rank(rho), counting eigenvalues above 1e-10.
double quantum_topological_memory(const DensityMatrix& rho);

/// S_q = -Tr rho log2 rho
double quantum_statistical_memory(const DensityMatrix& rho);

/// Binary entropy of lambda = 1/2 + sqrt(p(1-p)).
double coin_sq_closed_form(double p);

}  // namespace qimem
