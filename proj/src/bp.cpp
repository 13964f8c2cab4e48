#include "qimem/bp.hpp"

#include <cmath>

namespace qimem {
namespace {

Eigen::MatrixXd identity(Index bits) {
  const Index d = Index{1} << bits;
  return Eigen::MatrixXd::Identity(d, d);
}

Eigen::MatrixXd projector(int row, int col) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(row, col) = 1.0;
  return m;
}

/// Appends the mirrored half: transposes of the forward factors in reverse.
void close_cycle(std::vector<Eigen::MatrixXd>& factors, std::vector<GateMatrix>& gates) {
  const std::size_t forward = factors.size();
  for (std::size_t k = forward; k-- > 0;) {
    factors.push_back(factors[k].transpose());
    gates.push_back(gates[k].transpose());
  }
}

BpModel make_model(std::string name, std::vector<Eigen::MatrixXd> factors,
                   std::vector<GateMatrix> gates, Index observed) {
  const Index d = factors.front().cols();
  Eigen::VectorXd init = Eigen::VectorXd::Zero(d);
  init(0) = 1.0;
  return BpModel{std::move(name), CycleFactorGraph<double>(std::move(factors)), std::move(gates),
                 std::move(init), observed};
}

}  // namespace

PhaseDecomposition message_phase_decompose(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu) {
  if (mu.size() != nu.size()) throw std::invalid_argument("messages differ in dimension");
  PhaseDecomposition out{Eigen::VectorXd::Zero(mu.size()), Eigen::VectorXd::Zero(mu.size())};
  for (Index s = 0; s < mu.size(); ++s) {
    if (mu(s) < 0.0 || nu(s) < 0.0) throw std::invalid_argument("messages must be nonnegative");
    if ((mu(s) > 0.0) != (nu(s) > 0.0)) throw std::invalid_argument("message support mismatch");
    if (mu(s) > 0.0) {
      out.p(s) = mu(s) * nu(s);
      out.phi(s) = 0.5 * std::log(mu(s) / nu(s));
    }
  }
  const double z = out.p.sum();
  if (!(z > 0.0)) throw NumericalError("messages have empty support");
  out.p /= z;
  return out;
}

Eigen::MatrixXd fx_factor(double x) {
  detail::require_probability(x, "x");
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2, 2);
  f(0, 0) = std::sqrt(1.0 - x);
  f(1, 0) = std::sqrt(x);
  return f;
}

BpModel build_multi_step_coin_graph(double p, int j, int steps) {
  detail::require_probability(p, "p");
  if (j != 0 && j != 1) throw std::out_of_range("coin causal state must be 0 or 1");
  if (steps < 1) throw std::invalid_argument("need at least one step");
  const int bits = steps + 1;
  const double xj = j == 0 ? p : 1.0 - p;

  std::vector<Eigen::MatrixXd> factors;
  std::vector<GateMatrix> gates;
  factors.push_back(kron(kron(fx_factor(xj), fx_factor(p)), identity(bits - 2)));
  gates.push_back(kron(kron(u_x(xj), u_x(p)), identity_gate(bits - 2)));
  for (int t = 1; t <= steps; ++t) {
    const GateMatrix c = controlled(pauli_x(), t, t + 1, bits);
    factors.push_back(c.matrix());
    gates.push_back(c);
    if (t < steps) {
      factors.push_back(kron(kron(identity(t + 1), fx_factor(p)), identity(bits - t - 2)));
      gates.push_back(kron(kron(identity_gate(t + 1), u_x(p)), identity_gate(bits - t - 2)));
    }
  }
  const auto observed = static_cast<Index>(factors.size());
  close_cycle(factors, gates);
  const std::string name = steps == 1   ? "coin"
                           : steps == 2 ? "coin-two-step"
                                        : "coin-" + std::to_string(steps) + "-step";
  return make_model(name, std::move(factors), std::move(gates), observed);
}

BpModel build_coin_graph(double p, int j) { return build_multi_step_coin_graph(p, j, 1); }

BpModel build_two_step_coin_graph(double p, int j) { return build_multi_step_coin_graph(p, j, 2); }

BpModel build_postproc_graph(double p, double q, int j) {
  detail::require_probability(p, "p");
  detail::require_probability(q, "q");
  Eigen::MatrixXd gj;
  GateMatrix prep_gate = identity_gate(1);
  switch (j) {
    case 0: gj = projector(0, 0); break;
    case 1:
      gj = fx_factor(1.0 - q);
      prep_gate = u_x(1.0 - q);
      break;
    case 2:
      gj = projector(1, 0);
      prep_gate = pauli_x();
      break;
    default: throw std::out_of_range("post-processed causal state must be 0, 1 or 2");
  }
  const Eigen::MatrixXd p0 = projector(0, 0);
  const Eigen::MatrixXd p1 = projector(1, 1);
  const Eigen::MatrixXd i2 = identity(1);

  std::vector<Eigen::MatrixXd> factors;
  std::vector<GateMatrix> gates;
  factors.push_back(kron(kron(gj, p0), p0));
  gates.push_back(kron(prep_gate, identity_gate(2)));
  factors.push_back(kron(kron(p0, i2), fx_factor(p)) + kron(kron(p1, i2), i2));
  gates.push_back(controlled(u_x(p), 1, 3, 3, 0));
  factors.push_back(kron(kron(p0, i2), i2) + kron(kron(p1, fx_factor(1.0 - q)), i2));
  gates.push_back(controlled(u_x(1.0 - q), 1, 2, 3, 1));
  const GateMatrix cnot32 = controlled(pauli_x(), 3, 2, 3, 1);
  factors.push_back(cnot32.matrix());
  gates.push_back(cnot32);
  const auto observed = static_cast<Index>(factors.size());
  close_cycle(factors, gates);
  return make_model("postproc", std::move(factors), std::move(gates), observed);
}

std::vector<StateVector> quantum_reference_states(const BpModel& model) {
  std::vector<StateVector> states;
  states.emplace_back(model.init / model.init.norm());
  for (Index l = 1; l < model.graph.size(); ++l) {
    states.push_back(apply(model.gates[static_cast<std::size_t>(l - 1)], states.back()));
  }
  return states;
}

EquivalenceReport verify_equivalence(const BpModel& model) {
  const auto& g = model.graph;
  const auto fwd = forward_pass(g, model.init);
  const auto bwd = backward_pass(g, model.init);
  const auto psi = quantum_reference_states(model);

  EquivalenceReport r;
  for (Index l = 0; l < g.size(); ++l) {
    const auto& mu = fwd.messages[static_cast<std::size_t>(l)];
    const auto& nu = bwd.messages[static_cast<std::size_t>(l)];
    const Eigen::VectorXd unit = mu.values() / mu.values().norm();
    const double dev = (unit - psi[static_cast<std::size_t>(l)].amplitudes()).cwiseAbs().maxCoeff();
    r.amplitude_deviation.push_back(dev);
    r.max_amplitude_deviation = std::max(r.max_amplitude_deviation, dev);
    r.transpose_residual =
        std::max(r.transpose_residual, (nu.values() - mu.values()).cwiseAbs().maxCoeff());
    const Eigen::VectorXd diag = probability_matrix(g, l).marginals();
    r.diagonal_residual =
        std::max(r.diagonal_residual, (diag - marginal(mu, nu)).cwiseAbs().maxCoeff());
  }
  auto cosine_gap = [&](const Eigen::VectorXd& v) {
    return 1.0 - v.dot(model.init) / (v.norm() * model.init.norm());
  };
  r.cycle_residual = std::max(std::abs(cosine_gap(fwd.recirculated.values())),
                              std::abs(cosine_gap(bwd.recirculated.values())));
  return r;
}

}  // namespace qimem
