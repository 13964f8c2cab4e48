#include "qimem/bp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace qimem;

namespace {

double max_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

Eigen::VectorXd unit(const Eigen::VectorXd& v) { return v / v.norm(); }

/// Random cycle graph with nonnegative factors, some entries zeroed.
CycleFactorGraph<double> random_cycle(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> len(1, 5);
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = len(gen);
  std::vector<int> dims(static_cast<std::size_t>(n));
  for (auto& d : dims) d = dim(gen);
  std::vector<Eigen::MatrixXd> factors;
  for (int l = 0; l < n; ++l) {
    Eigen::MatrixXd f(dims[static_cast<std::size_t>((l + 1) % n)], dims[static_cast<std::size_t>(l)]);
    for (Index r = 0; r < f.rows(); ++r) {
      for (Index c = 0; c < f.cols(); ++c) f(r, c) = u(gen) < 0.2 ? 0.0 : u(gen);
    }
    f(0, 0) += 0.1;  // keeps the all-zero assignment alive
    factors.push_back(std::move(f));
  }
  return CycleFactorGraph<double>(std::move(factors));
}

}  // namespace

TEST(CycleFactorGraph, validation) {
  EXPECT_THROW(CycleFactorGraph<double>({}), std::invalid_argument);
  Eigen::MatrixXd a(2, 3);
  a.setOnes();
  EXPECT_THROW(CycleFactorGraph<double>({a, a}), std::invalid_argument);
  Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(CycleFactorGraph<double>({neg}), std::invalid_argument);
}

TEST(Messages, identity_factors_are_constant) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  CycleFactorGraph<double> g({id, id, id});
  const Eigen::Vector3d init(0.2, 0.5, 0.3);
  const auto fwd = forward_pass(g, Eigen::VectorXd(init));
  const auto bwd = backward_pass(g, Eigen::VectorXd(init));
  for (const auto& m : fwd.messages) EXPECT_EQ(m.values(), init);
  for (const auto& m : bwd.messages) EXPECT_EQ(m.values(), init);
  EXPECT_EQ(fwd.recirculated.values(), init);
}

TEST(Messages, annihilating_factor_raises) {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 2);
  CycleFactorGraph<double> g({Eigen::MatrixXd::Identity(2, 2), zero});
  EXPECT_THROW(forward_pass(g, Eigen::VectorXd(Eigen::Vector2d(1, 0))), NumericalError);
}

TEST(Marginal, uniform_messages) {
  const Eigen::VectorXd u = Eigen::VectorXd::Ones(4);
  const auto p = marginal(Message<double>(Direction::forward, 1, u),
                          Message<double>(Direction::backward, 1, u));
  EXPECT_LT(max_diff(p, Eigen::VectorXd::Constant(4, 0.25)), 1e-16);
}

TEST(CoinGraph, messages_match_circuit_states) {
  for (double p : {0.0, 0.3, 0.8, 1.0}) {
    for (int j = 0; j < 2; ++j) {
      const auto model = build_coin_graph(p, j);
      ASSERT_EQ(model.graph.size(), 4);
      const auto fwd = forward_pass(model.graph, model.init);
      // mu_1 = |xi_j>|xi_0>
      const auto prep = tensor(coin_causal_state(j, p), coin_causal_state(0, p));
      EXPECT_LT(max_diff(unit(fwd.messages[1].values()), prep.amplitudes()), 1e-15);
      // mu_2 = CNOT |xi_j>|xi_0> = |chi_j>
      const auto chi = apply(cnot(), prep);
      EXPECT_LT(max_diff(unit(fwd.messages[2].values()), chi.amplitudes()), 1e-15);
      EXPECT_EQ(model.observed, 2);
    }
  }
}

TEST(CoinGraph, backward_messages_start_from_the_same_state) {
  const auto model = build_coin_graph(0.3, 0);
  const auto bwd = backward_pass(model.graph, model.init);
  EXPECT_EQ(bwd.messages[0].values(), model.init);
  const auto fwd = forward_pass(model.graph, model.init);
  for (Index l = 0; l < model.graph.size(); ++l) {
    EXPECT_LT(max_diff(bwd.messages[static_cast<std::size_t>(l)].values(),
                       fwd.messages[static_cast<std::size_t>(l)].values()),
              1e-15);
  }
}

TEST(CoinGraph, observed_marginal_is_measurement_law) {
  for (double p : {0.1, 0.3, 0.75}) {
    for (int j = 0; j < 2; ++j) {
      const auto model = build_coin_graph(p, j);
      const auto fwd = forward_pass(model.graph, model.init);
      const auto bwd = backward_pass(model.graph, model.init);
      const auto m = marginal(fwd.messages[2], bwd.messages[2]);
      // Bit 1 is the emitted symbol.
      const double one = m(2) + m(3);
      EXPECT_NEAR(one, coin_circuit_step(j, p).probability_of(1), 1e-14);
      EXPECT_NEAR(one, j == 0 ? p : 1 - p, 1e-14);
    }
  }
}

TEST(CoinGraph, probability_matrices) {
  const double p = 0.3;
  for (int j = 0; j < 2; ++j) {
    const auto model = build_coin_graph(p, j);
    const auto& g = model.graph;
    Eigen::MatrixXd p0 = Eigen::MatrixXd::Zero(4, 4);
    p0(0, 0) = 1.0;
    EXPECT_LT(max_diff(probability_matrix(g, 0).matrix(), p0), 1e-15);

    const auto chi = apply(cnot(), tensor(coin_causal_state(j, p), coin_causal_state(0, p)));
    const Eigen::MatrixXd outer = chi.amplitudes() * chi.amplitudes().transpose();
    EXPECT_LT(max_diff(probability_matrix(g, 2).matrix(), outer), 1e-15);
    EXPECT_LT(max_diff(probability_matrix(g, 3).matrix(), probability_matrix(g, 1).matrix()), 1e-15);
  }
  EXPECT_THROW(probability_matrix(build_coin_graph(p, 0).graph, 4), std::out_of_range);
}

TEST(CoinGraph, zero_flip_is_deterministic) {
  const auto model = build_coin_graph(0.0, 0);
  const auto fwd = forward_pass(model.graph, model.init);
  for (const auto& m : fwd.messages) {
    EXPECT_EQ((m.values().array() != 0.0).count(), 1);
    EXPECT_EQ(m.values().maxCoeff(), 1.0);
  }
}

TEST(CoinGraph, recirculates_initial_message) {
  for (double p : {0.0, 0.3, 1.0}) {
    const auto model = build_coin_graph(p, 1);
    const auto fwd = forward_pass(model.graph, model.init);
    EXPECT_LT(max_diff(fwd.recirculated.values(), model.init), 1e-15);
  }
}

TEST(PostprocGraph, observed_message_is_circuit_output) {
  const double p = 1.0 / 9;
  const double q = 2.0 / 3;
  const auto u = postproc_unitary(p, q);
  for (int j = 0; j < 3; ++j) {
    const auto model = build_postproc_graph(p, q, j);
    ASSERT_EQ(model.observed, 4);
    const auto fwd = forward_pass(model.graph, model.init);
    const auto zero = StateVector::basis(2, 0);
    const auto start = tensor(tensor(postproc_causal_state(j, q), zero), zero);
    EXPECT_LT(max_diff(unit(fwd.messages[1].values()), start.amplitudes()), 1e-15);
    const auto out = apply(u, start);
    EXPECT_LT(max_diff(unit(fwd.messages[4].values()), out.amplitudes()), 1e-15);
    EXPECT_LT(max_diff(fwd.recirculated.values(), model.init), 1e-15);

    // Marginal of (y1, y3) at the observed edge reproduces the emission row.
    const auto bwd = backward_pass(model.graph, model.init);
    const auto m = marginal(fwd.messages[4], bwd.messages[4]);
    EXPECT_NEAR(m(5) + m(7), 0.0, 1e-15);
    const auto machine = post_processed_coin(p, q);
    EXPECT_NEAR(m(0) + m(2), machine.emit(j, 0), 1e-14);
    EXPECT_NEAR(m(4) + m(6), machine.emit(j, 1), 1e-14);
    EXPECT_NEAR(m(1) + m(3), machine.emit(j, 2), 1e-14);
  }
  const auto two = forward_pass(build_postproc_graph(p, q, 2).graph, build_postproc_graph(p, q, 2).init);
  EXPECT_EQ(two.messages[4].values()(5), 0.0);
  EXPECT_EQ(two.messages[4].values()(7), 0.0);
}

TEST(TwoStepGraph, theta_matches_two_circuit_iterations) {
  for (double p : {0.0, 0.3, 0.6}) {
    for (int j = 0; j < 2; ++j) {
      const auto model = build_two_step_coin_graph(p, j);
      const auto fwd = forward_pass(model.graph, model.init);
      const auto start = tensor(tensor(coin_causal_state(j, p), coin_causal_state(0, p)),
                                StateVector::basis(2, 0));
      const auto theta = apply(controlled(pauli_x(), 2, 3, 3),
                               apply(kron(identity_gate(2), u_x(p)),
                                     apply(controlled(pauli_x(), 1, 2, 3), start)));
      const auto obs = static_cast<std::size_t>(model.observed);
      EXPECT_LT(max_diff(unit(fwd.messages[obs].values()), theta.amplitudes()), 1e-15);
      EXPECT_LT(max_diff(fwd.recirculated.values(), model.init), 1e-15);
    }
  }
}

TEST(TwoStepGraph, zero_flip_is_deterministic) {
  const auto model = build_two_step_coin_graph(0.0, 1);
  const auto fwd = forward_pass(model.graph, model.init);
  for (const auto& m : fwd.messages) EXPECT_EQ((m.values().array() != 0.0).count(), 1);
}

TEST(TwoStepGraph, observed_bits_follow_two_step_law) {
  for (double p : {0.2, 0.3, 0.75}) {
    const auto coin = perturbed_coin(p);
    std::map<std::string, double> mixed;
    for (int j = 0; j < 2; ++j) {
      const auto model = build_two_step_coin_graph(p, j);
      const auto fwd = forward_pass(model.graph, model.init);
      const auto bwd = backward_pass(model.graph, model.init);
      const auto obs = static_cast<std::size_t>(model.observed);
      const auto m = marginal(fwd.messages[obs], bwd.messages[obs]);
      const auto law = conditional_kgram_distribution(coin, j, 2);
      for (int x1 = 0; x1 < 2; ++x1) {
        for (int x2 = 0; x2 < 2; ++x2) {
          const double bp = m(4 * x1 + 2 * x2) + m(4 * x1 + 2 * x2 + 1);
          const std::string key = symbols_to_string({x1, x2});
          EXPECT_NEAR(bp, law.at(key), 1e-14);
          mixed[key] += 0.5 * bp;
        }
      }
    }
    for (const auto& [k, v] : exact_kgram_distribution(coin, 2)) EXPECT_NEAR(mixed[k], v, 1e-12);
  }
}

TEST(MultiStepGraph, k_steps_recirculate) {
  for (int steps = 1; steps <= 4; ++steps) {
    const auto model = build_multi_step_coin_graph(0.3, 0, steps);
    EXPECT_TRUE(verify_equivalence(model).passed(1e-12)) << steps;
  }
  EXPECT_THROW(build_multi_step_coin_graph(0.3, 0, 0), std::invalid_argument);
}

TEST(PhaseDecomposition, examples) {
  const auto asym = message_phase_decompose(Eigen::Vector2d(2, 1), Eigen::Vector2d(1, 2));
  EXPECT_NEAR(asym.phi(0), std::log(2.0) / 2, 1e-15);
  EXPECT_NEAR(asym.phi(1), -std::log(2.0) / 2, 1e-15);
  EXPECT_NEAR(asym.p(0), 0.5, 1e-15);

  const auto uni = message_phase_decompose(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3));
  EXPECT_LT(max_diff(uni.p, Eigen::VectorXd::Constant(3, 1.0 / 3)), 1e-16);
  EXPECT_TRUE(uni.phi.isZero());

  EXPECT_THROW(message_phase_decompose(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1)),
               std::invalid_argument);
}

TEST(PhaseDecomposition, phaseless_on_protocol_graphs) {
  for (const auto& model : {build_coin_graph(0.3, 0), build_postproc_graph(1.0 / 9, 2.0 / 3, 1),
                            build_two_step_coin_graph(0.4, 1)}) {
    const auto fwd = forward_pass(model.graph, model.init);
    const auto bwd = backward_pass(model.graph, model.init);
    for (Index l = 0; l < model.graph.size(); ++l) {
      const auto d = message_phase_decompose(fwd.messages[static_cast<std::size_t>(l)].values(),
                                             bwd.messages[static_cast<std::size_t>(l)].values());
      EXPECT_LT(d.phi.cwiseAbs().maxCoeff(), 1e-12) << model.name << " " << l;
    }
  }
}

TEST(BruteForce, matches_probability_matrix_on_random_graphs) {
  std::mt19937_64 gen(19);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = random_cycle(gen);
    const auto bf = brute_force_marginals(g);
    for (Index l = 0; l < g.size(); ++l) {
      EXPECT_LT(max_diff(bf[static_cast<std::size_t>(l)], probability_matrix(g, l).marginals()),
                1e-12);
    }
  }
}

TEST(BruteForce, matches_messages_on_protocol_graphs) {
  for (const auto& model : {build_coin_graph(0.3, 0), build_coin_graph(1.0 / 9, 1),
                            build_postproc_graph(1.0 / 9, 2.0 / 3, 0),
                            build_postproc_graph(0.4, 0.2, 1)}) {
    const auto bf = brute_force_marginals(model.graph);
    const auto fwd = forward_pass(model.graph, model.init);
    const auto bwd = backward_pass(model.graph, model.init);
    for (Index l = 0; l < model.graph.size(); ++l) {
      const auto m = marginal(fwd.messages[static_cast<std::size_t>(l)],
                              bwd.messages[static_cast<std::size_t>(l)]);
      EXPECT_LT(max_diff(bf[static_cast<std::size_t>(l)], m), 1e-12) << model.name << " " << l;
    }
  }
}

TEST(Equivalence, all_protocol_graphs) {
  const double fractions[] = {0.0, 0.3, 1.0 / 9, 1.0};
  for (double p : fractions) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_TRUE(verify_equivalence(build_coin_graph(p, j)).passed(1e-12)) << p << " " << j;
      EXPECT_TRUE(verify_equivalence(build_two_step_coin_graph(p, j)).passed(1e-12)) << p;
    }
    for (int j = 0; j < 3; ++j) {
      EXPECT_TRUE(verify_equivalence(build_postproc_graph(p, 2.0 / 3, j)).passed(1e-12))
          << p << " " << j;
    }
  }
}

TEST(Equivalence, quantum_reference_states_follow_gates) {
  const auto model = build_postproc_graph(0.3, 0.4, 1);
  const auto states = quantum_reference_states(model);
  ASSERT_EQ(static_cast<Index>(states.size()), model.graph.size());
  // The mirrored half undoes the forward half.
  EXPECT_LT(max_diff(model.gates.back().matrix().transpose(), model.gates.front().matrix()), 1e-15);
}

TEST(Equivalence, report_flags_broken_gate_pairing) {
  auto model = build_coin_graph(0.3, 0);
  model.gates[1] = identity_gate(2);
  EXPECT_FALSE(verify_equivalence(model).passed(1e-12));
}
