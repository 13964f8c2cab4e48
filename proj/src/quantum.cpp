#include "qimem/quantum.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace qimem {
namespace {

constexpr double kNormTolerance = 1e-12;

bool is_power_of_two(Index n) { return n > 0 && std::has_single_bit(static_cast<std::uint64_t>(n)); }

Index next_power_of_two(Index n) {
  return static_cast<Index>(std::bit_ceil(static_cast<std::uint64_t>(std::max<Index>(n, 1))));
}

int bit_of(Index index, int qubit, int num_qubits) {
  return static_cast<int>((index >> (num_qubits - qubit)) & 1);
}

}  // namespace

// ---------------------------------------------------------------------------

StateVector::StateVector(Eigen::VectorXd amplitudes) : amps_(std::move(amplitudes)) {
  if (!is_power_of_two(amps_.size())) {
    throw std::invalid_argument("state dimension must be a power of two");
  }
  if (std::abs(amps_.norm() - 1.0) > kNormTolerance) {
    throw NumericalError("state vector is not normalized");
  }
}

StateVector StateVector::basis(Index dim, Index index) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v(index) = 1.0;
  return StateVector(std::move(v));
}

int StateVector::num_qubits() const { return std::countr_zero(static_cast<std::uint64_t>(dim())); }

StateVector tensor(const StateVector& a, const StateVector& b) {
  Eigen::VectorXd v(a.dim() * b.dim());
  for (Index i = 0; i < a.dim(); ++i) v.segment(i * b.dim(), b.dim()) = a(i) * b.amplitudes();
  return StateVector(std::move(v));
}

GateMatrix::GateMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || !is_power_of_two(m_.rows())) {
    throw std::invalid_argument("gate must be square with power-of-two dimension");
  }
  const Eigen::MatrixXd gram = m_.transpose() * m_;
  if ((gram - Eigen::MatrixXd::Identity(m_.rows(), m_.rows())).cwiseAbs().maxCoeff() > 1e-12) {
    throw NumericalError("gate is not orthogonal");
  }
}

StateVector apply(const GateMatrix& g, const StateVector& psi) {
  if (g.dim() != psi.dim()) throw std::invalid_argument("gate/state dimension mismatch");
  Eigen::VectorXd out = g.matrix() * psi.amplitudes();
  out /= out.norm();
  return StateVector(std::move(out));
}

GateMatrix operator*(const GateMatrix& a, const GateMatrix& b) {
  return GateMatrix(a.matrix() * b.matrix());
}

GateMatrix kron(const GateMatrix& a, const GateMatrix& b) {
  const Index n = a.dim();
  const Index m = b.dim();
  Eigen::MatrixXd k(n * m, n * m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) k.block(i * m, j * m, m, m) = a.matrix()(i, j) * b.matrix();
  }
  return GateMatrix(std::move(k));
}

DensityMatrix::DensityMatrix(Eigen::MatrixXd rho) : rho_(std::move(rho)) {
  if (rho_.rows() != rho_.cols()) throw std::invalid_argument("density matrix must be square");
  if ((rho_ - rho_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw NumericalError("density matrix is not symmetric");
  }
  if (std::abs(rho_.trace() - 1.0) > 1e-12) throw NumericalError("density matrix trace != 1");
  eigenvalues_ = jacobi_eigenvalues<double>(rho_);
  if (eigenvalues_.minCoeff() < -kRankTolerance) {
    throw NumericalError("density matrix has a negative eigenvalue");
  }
}

// ---------------------------------------------------------------------------

GateMatrix u_x(double x, Completion completion) {
  detail::require_probability(x, "x");
  const double a = std::sqrt(1.0 - x);
  const double b = std::sqrt(x);
  Eigen::Matrix2d m;
  if (completion == Completion::rotation) {
    m << a, -b, b, a;
  } else {
    m << a, b, b, -a;
  }
  return GateMatrix(m);
}

GateMatrix identity_gate(int num_qubits) {
  const Index d = Index{1} << num_qubits;
  return GateMatrix(Eigen::MatrixXd::Identity(d, d));
}

GateMatrix pauli_x() {
  Eigen::Matrix2d m;
  m << 0, 1, 1, 0;
  return GateMatrix(m);
}

GateMatrix cnot() { return controlled(pauli_x(), 1, 2, 2); }

GateMatrix controlled(const GateMatrix& single, int control, int target, int num_qubits,
                      int control_value) {
  if (single.dim() != 2) throw std::invalid_argument("controlled() expects a one-qubit gate");
  if (control == target || control < 1 || target < 1 || control > num_qubits ||
      target > num_qubits) {
    throw std::invalid_argument("invalid control/target qubits");
  }
  const Index d = Index{1} << num_qubits;
  const Index target_mask = Index{1} << (num_qubits - target);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  for (Index col = 0; col < d; ++col) {
    if (bit_of(col, control, num_qubits) != control_value) {
      m(col, col) = 1.0;
      continue;
    }
    const int in_bit = bit_of(col, target, num_qubits);
    const Index base = col & ~target_mask;
    m(base, col) = single.matrix()(0, in_bit);
    m(base | target_mask, col) = single.matrix()(1, in_bit);
  }
  return GateMatrix(std::move(m));
}

// ---------------------------------------------------------------------------

std::vector<MeasurementBranch> measure(const StateVector& psi, const std::vector<int>& qubits) {
  const int n = psi.num_qubits();
  const int k = static_cast<int>(qubits.size());
  for (int q : qubits) {
    if (q < 1 || q > n) throw std::invalid_argument("measured qubit out of range");
  }
  std::vector<int> rest;
  for (int q = 1; q <= n; ++q) {
    if (std::find(qubits.begin(), qubits.end(), q) == qubits.end()) rest.push_back(q);
  }
  const Index patterns = Index{1} << k;
  const Index rest_dim = Index{1} << rest.size();
  std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(patterns),
                                       Eigen::VectorXd::Zero(rest_dim));
  for (Index i = 0; i < psi.dim(); ++i) {
    Index pattern = 0;
    for (int b = 0; b < k; ++b) pattern = (pattern << 1) | bit_of(i, qubits[b], n);
    Index r = 0;
    for (int q : rest) r = (r << 1) | bit_of(i, q, n);
    partial[static_cast<std::size_t>(pattern)](r) = psi(i);
  }
  std::vector<MeasurementBranch> out;
  out.reserve(static_cast<std::size_t>(patterns));
  for (Index pattern = 0; pattern < patterns; ++pattern) {
    MeasurementBranch br;
    for (int b = 0; b < k; ++b) br.bits.push_back(static_cast<int>((pattern >> (k - 1 - b)) & 1));
    const Eigen::VectorXd& v = partial[static_cast<std::size_t>(pattern)];
    br.probability = v.squaredNorm();
    if (br.probability > 0.0) br.residual = StateVector(v / v.norm());
    out.push_back(std::move(br));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::pair<Index, Index> causal_register_dims(const EpsilonMachine<double>& m) {
  return {next_power_of_two(m.num_states()), next_power_of_two(m.alphabet_size())};
}

std::vector<StateVector> quantum_causal_states(const EpsilonMachine<double>& m) {
  const auto [ds, da] = causal_register_dims(m);
  std::vector<StateVector> states;
  states.reserve(static_cast<std::size_t>(m.num_states()));
  for (int i = 0; i < m.num_states(); ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(ds * da);
    for (int x = 0; x < m.alphabet_size(); ++x) {
      if (m.emit(i, x) > 0.0) v(m.successor(i, x) * da + x) = std::sqrt(m.emit(i, x));
    }
    v /= v.norm();
    states.emplace_back(std::move(v));
  }
  return states;
}

StateVector coin_causal_state(int j, double p) {
  if (j != 0 && j != 1) throw std::out_of_range("coin causal state must be 0 or 1");
  const GateMatrix u = u_x(j == 0 ? p : 1.0 - p);
  return StateVector(u.matrix().col(0));
}

StateVector postproc_causal_state(int j, double q) {
  detail::require_probability(q, "q");
  switch (j) {
    case 0: return StateVector::basis(2, 0);
    case 1: return StateVector(u_x(1.0 - q).matrix().col(0));
    case 2: return StateVector::basis(2, 1);
    default: throw std::out_of_range("post-processed causal state must be 0, 1 or 2");
  }
}

// ---------------------------------------------------------------------------

double CircuitStep::probability_of(int output) const {
  const CircuitBranch* b = branch(output);
  return b ? b->probability : 0.0;
}

const CircuitBranch* CircuitStep::branch(int output) const {
  for (const auto& b : branches) {
    if (b.output == output) return &b;
  }
  return nullptr;
}

CircuitStep coin_circuit_apply(const StateVector& memory, double p, Completion completion) {
  if (memory.dim() != 2) throw std::invalid_argument("coin memory must be one qubit");
  const StateVector ancilla(u_x(p, completion).matrix().col(0));
  const StateVector chi = apply(cnot(), tensor(memory, ancilla));
  CircuitStep step;
  for (auto& br : measure(chi, {1})) {
    step.branches.push_back({br.bits[0], br.probability, std::move(br.residual)});
  }
  return step;
}

CircuitStep coin_circuit_step(int j, double p, Completion completion) {
  return coin_circuit_apply(coin_causal_state(j, p), p, completion);
}

GateMatrix postproc_unitary(double p, double q, Completion completion) {
  const GateMatrix not_cu_p = controlled(u_x(p, completion), 1, 3, 3, 0);
  const GateMatrix cu_q = controlled(u_x(1.0 - q, completion), 1, 2, 3, 1);
  const GateMatrix cnot_32 = controlled(pauli_x(), 3, 2, 3, 1);
  return cnot_32 * cu_q * not_cu_p;
}

CircuitStep postproc_circuit_apply(const StateVector& memory, double p, double q,
                                   Completion completion) {
  if (memory.dim() != 2) throw std::invalid_argument("post-processed memory must be one qubit");
  const StateVector zero = StateVector::basis(2, 0);
  const StateVector out =
      apply(postproc_unitary(p, q, completion), tensor(tensor(memory, zero), zero));
  CircuitStep step;
  for (auto& br : measure(out, {1, 3})) {
    const int y1 = br.bits[0];
    const int y3 = br.bits[1];
    if (y1 == 1 && y3 == 1) {
      step.forbidden_probability += br.probability;
      continue;
    }
    step.branches.push_back({y1 + 2 * y3, br.probability, std::move(br.residual)});
  }
  std::sort(step.branches.begin(), step.branches.end(),
            [](const CircuitBranch& a, const CircuitBranch& b) { return a.output < b.output; });
  return step;
}

CircuitStep postproc_circuit_step(int j, double p, double q, Completion completion) {
  return postproc_circuit_apply(postproc_causal_state(j, q), p, q, completion);
}

namespace {

template <typename StepFn>
std::vector<int> sample_circuit(StateVector memory, std::size_t steps, Rng& rng, StepFn&& fn) {
  std::vector<int> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    CircuitStep step = fn(memory);
    Eigen::VectorXd w(static_cast<Index>(step.branches.size()));
    for (std::size_t b = 0; b < step.branches.size(); ++b) {
      w(static_cast<Index>(b)) = step.branches[b].probability;
    }
    auto& chosen = step.branches[static_cast<std::size_t>(rng.categorical(w))];
    out.push_back(chosen.output);
    memory = std::move(*chosen.next);
  }
  return out;
}

}  // namespace

std::vector<int> sample_coin_circuit(double p, int start, std::size_t steps, Rng& rng) {
  return sample_circuit(coin_causal_state(start, p), steps, rng,
                        [p](const StateVector& m) { return coin_circuit_apply(m, p); });
}

std::vector<int> sample_postproc_circuit(double p, double q, int start, std::size_t steps,
                                         Rng& rng) {
  return sample_circuit(postproc_causal_state(start, q), steps, rng,
                        [p, q](const StateVector& m) { return postproc_circuit_apply(m, p, q); });
}

// ---------------------------------------------------------------------------

DensityMatrix mixture_density(const std::vector<StateVector>& states,
                              const Eigen::VectorXd& weights) {
  if (states.empty() || static_cast<Index>(states.size()) != weights.size()) {
    throw std::invalid_argument("mixture needs one weight per state");
  }
  const Index d = states.front().dim();
  Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& a = states[i].amplitudes();
    rho.noalias() += weights(static_cast<Index>(i)) * a * a.transpose();
  }
  return DensityMatrix(0.5 * (rho + rho.transpose()));
}

DensityMatrix stationary_density(const EpsilonMachine<double>& m) {
  const auto pi = stationary(induced_chain(m));
  return mixture_density(quantum_causal_states(m), pi.probs().transpose());
}

double quantum_topological_memory(const DensityMatrix& rho) {
  const auto rank = (rho.eigenvalues().array() > kRankTolerance).count();
  return std::log2(static_cast<double>(rank));
}

double quantum_statistical_memory(const DensityMatrix& rho) {
  double s = 0.0;
  for (Index i = 0; i < rho.eigenvalues().size(); ++i) {
    s -= xlog2x(std::max(0.0, rho.eigenvalues()(i)));
  }
  return s;
}

double coin_sq_closed_form(double p) {
  detail::require_probability(p, "p");
  return binary_entropy(0.5 + std::sqrt(p * (1.0 - p)));
}

}  // namespace qimem
