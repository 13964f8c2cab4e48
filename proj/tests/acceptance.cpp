// Acceptance suite. Prints one line per criterion and exits nonzero if any
// criterion fails. Usage: qimem_acceptance <path to qimem binary>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "qimem/bp.hpp"
#include "qimem/markov.hpp"
#include "qimem/quantum.hpp"
#include "qimem/samplers.hpp"
#include "support/random_models.hpp"

using namespace qimem;
namespace fs = std::filesystem;

namespace {

std::string g_tool;
fs::path g_dir;

struct Outcome {
  bool passed = true;
  std::string detail;
};

void check(Outcome& o, bool condition, const std::string& what) {
  if (!condition && o.passed) {
    o.passed = false;
    o.detail = what;
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  return out;
}

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

/// Runs the CLI with stdout/stderr captured to files; returns the exit code.
int tool(const std::string& args) {
  const std::string cmd = shell_quote(g_tool) + " " + args + " > " +
                          shell_quote((g_dir / "stdout.txt").string()) + " 2> " +
                          shell_quote((g_dir / "stderr.txt").string());
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tmp(const std::string& name) { return shell_quote((g_dir / name).string()); }

std::map<std::string, std::string> read_report(const std::string& name) {
  std::map<std::string, std::string> kv;
  std::istringstream in(slurp(g_dir / name));
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string num(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome memory_curve() {
  Outcome o;
  check(o, tool("memory-curve --grid 101 --out " + tmp("curve.csv")) == 0, "memory-curve failed");
  std::istringstream csv(slurp(g_dir / "curve.csv"));
  std::string line;
  std::getline(csv, line);
  check(o, line == "p,classical_bits,quantum_bits,qi_bits,mutual_info_bound", "bad header");
  int rows = 0;
  double worst_q = 0.0;
  double worst_bound = 0.0;
  while (std::getline(csv, line)) {
    const auto c = split(line, ',');
    if (c.size() != 5) {
      check(o, false, "row with " + std::to_string(c.size()) + " cells");
      break;
    }
    ++rows;
    const double p = std::stod(c[0]);
    const double classical = std::stod(c[1]);
    const double quantum = std::stod(c[2]);
    const double qi = std::stod(c[3]);
    const double bound = std::stod(c[4]);
    check(o, classical == (p == 0.5 ? 0.0 : 1.0), "classical bits at p=" + c[0]);

    // Independent route: von Neumann entropy of (1/2)(|x0><x0| + |x1><x1|)
    // from Eigen's eigensolver.
    const Eigen::Vector2d x0(std::sqrt(1 - p), std::sqrt(p));
    const Eigen::Vector2d x1(std::sqrt(p), std::sqrt(1 - p));
    const Eigen::Matrix2d rho = 0.5 * (x0 * x0.transpose() + x1 * x1.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(rho);
    double s = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double l = es.eigenvalues()(i);
      if (l > 0) s -= l * std::log2(l);
    }
    worst_q = std::max(worst_q, std::abs(quantum - s));
    check(o, std::abs(quantum - s) < 1e-10, "quantum bits at p=" + c[0]);
    check(o, qi == std::abs(1 - 2 * p), "qi bits at p=" + c[0]);
    double expected_bound = 1.0;
    if (p > 0) expected_bound += p * std::log2(p);
    if (p < 1) expected_bound += (1 - p) * std::log2(1 - p);
    worst_bound = std::max(worst_bound, std::abs(bound - expected_bound));
    check(o, std::abs(bound - expected_bound) < 1e-12, "bound at p=" + c[0]);
    check(o, bound <= quantum && quantum <= 1.0, "ordering at p=" + c[0]);
  }
  check(o, rows == 101, "expected 101 rows, got " + std::to_string(rows));
  if (o.passed) {
    o.detail = std::to_string(rows) + " rows, max quantum deviation " + num(worst_q) +
               ", max bound deviation " + num(worst_bound);
  }
  return o;
}

Outcome appendix_a() {
  Outcome o;
  check(o, tool("appendix-a --exact --out " + tmp("appendix.csv")) == 0, "appendix-a failed");
  std::map<std::string, Rational> got;
  std::string kernel;
  std::istringstream csv(slurp(g_dir / "appendix.csv"));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    const auto c = split(line, ',');
    if (c.size() != 4) continue;
    if (c[0] == "kernel") {
      kernel = c[3];
      continue;
    }
    got[c[0] + ":" + c[1] + ":" + c[2]] = parse_rational(c[3]);
  }
  const std::map<std::string, const char*> expected{
      {"pi::0", "4/18"},      {"pi::1", "9/18"},       {"pi::2", "5/18"},
      {"delta:0:0", "2/18"},  {"delta:0:1", "-3/18"},  {"delta:0:2", "1/18"},
      {"delta:1:0", "-2/18"}, {"delta:1:1", "3/18"},   {"delta:1:2", "-1/18"},
      {"delta:2:0", "2/18"},  {"delta:2:1", "-3/18"},  {"delta:2:2", "1/18"},
      {"f::0", "1/3"},        {"f::1", "1/2"},         {"f::2", "1/3"},
      {"rminus:1:2", "2/5"},  {"rplus:2:0", "2/3"},    {"rplus:2:2", "1/3"},
      {"saved_fraction::", "5/12"},
  };
  for (const auto& [key, value] : expected) {
    auto it = got.find(key);
    check(o, it != got.end() && it->second == parse_rational(value), key + " != " + value);
  }
  check(o, kernel == "EQUAL", "kernel verdict " + kernel);
  if (o.passed) o.detail = "pi, Delta, f, r, 5/12 exact; kernel EQUAL (exact)";
  return o;
}

Outcome kernel_theorem() {
  Outcome o;
  std::mt19937_64 gen(20240501);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto t = test_models::random_irreducible_chain(1 + trial % 6, gen);
    const auto k = effective_kernel(build_tables(t));
    worst = std::max(worst, (k - t.entries()).cwiseAbs().maxCoeff());
  }
  check(o, worst < 1e-12, "max |K - T| = " + num(worst));
  const auto t3 = three_state_example_chain(parse_rational("1/9"), parse_rational("2/3"));
  check(o, effective_kernel(build_tables(t3)) == t3.entries(), "rational kernel differs from T3");
  if (o.passed) o.detail = "500 chains, max |K - T| " + num(worst) + "; T3 exact";
  return o;
}

Outcome sampler_statistics() {
  Outcome o;
  std::string summary;
  for (const char* p : {"0.1", "0.3", "0.75", "0.9"}) {
    const std::string out = "ens_" + std::string(p) + ".csv";
    const int code = tool("simulate --model coin --algo qi-ensemble --p " + std::string(p) +
                          " --samples 100000 --steps 100 --seed 42 --out " + tmp(out));
    auto r = read_report(out + ".report");
    check(o, code == 0, "qi-ensemble p=" + std::string(p) + " exit " + std::to_string(code));
    check(o, r["passed"] == "true", "p=" + std::string(p) + " transition z-test");
    const double tv = std::stod(r["tv_distance"]);
    check(o, tv < 0.005, "p=" + std::string(p) + " TV " + num(tv));
    const double sz = std::stod(r["saved_fraction_z"]);
    check(o, std::abs(sz) < 3.0, "p=" + std::string(p) + " saved-fraction z " + num(sz));
    std::istringstream rows(slurp(g_dir / out));
    std::string line, last;
    while (std::getline(rows, line)) last = line;
    const auto cells = split(last, ',');
    double final_tv = 1.0;
    if (cells.size() >= 4) {
      final_tv = 0.5 * (std::abs(std::stod(cells[2]) / 1e5 - 0.5) + std::abs(std::stod(cells[3]) / 1e5 - 0.5));
    }
    check(o, final_tv < 0.005, "p=" + std::string(p) + " final-step TV from pi " + num(final_tv));
    summary += "p=" + std::string(p) + " |z|max " + num(std::stod(r["max_abs_z"])) + " tv " + num(tv) + " final tv " + num(final_tv) +
               " saved z " + num(sz) + "; ";
  }
  const int code = tool("simulate --model postproc --algo single-bit --p 1/9 --q 2/3 --steps 1000000 "
                        "--kgram 3 --seed 42 --out " + tmp("sbm.txt"));
  auto r = read_report("sbm.txt.report");
  check(o, code == 0, "single-bit exit " + std::to_string(code));
  check(o, r["k"] == "3" && r["passed"] == "true", "single-bit trigram z-test");
  check(o, r["hard_failures"] == "0", "forbidden trigrams observed");
  if (o.passed) {
    o.detail = summary + "single-bit trigrams |z|max " + num(std::stod(r["max_abs_z"])) +
               ", 0 forbidden";
  }
  return o;
}

Outcome bp_equivalence() {
  Outcome o;
  constexpr double tol = 1e-12;
  double worst = 0.0;
  auto note = [&](double v, const std::string& what) {
    worst = std::max(worst, v);
    check(o, v < tol, what + " = " + num(v));
  };
  auto observed_deviation = [](const BpModel& m, const StateVector& expected) {
    const auto fwd = forward_pass(m.graph, m.init);
    const Eigen::VectorXd& mu = fwd.messages[static_cast<std::size_t>(m.observed)].values();
    return (mu / mu.norm() - expected.amplitudes()).cwiseAbs().maxCoeff();
  };
  auto brute_deviation = [](const BpModel& m) {
    const auto fwd = forward_pass(m.graph, m.init);
    const auto bwd = backward_pass(m.graph, m.init);
    const auto bf = brute_force_marginals(m.graph);
    double d = 0.0;
    for (Index l = 0; l < m.graph.size(); ++l) {
      const auto bp = marginal(fwd.messages[static_cast<std::size_t>(l)], bwd.messages[static_cast<std::size_t>(l)]);
      d = std::max(d, (bp - bf[static_cast<std::size_t>(l)]).cwiseAbs().maxCoeff());
    }
    return d;
  };
  auto report = [&](const BpModel& m, const std::string& tag) {
    const auto r = verify_equivalence(m);
    note(r.max_amplitude_deviation, tag + " amplitude deviation");
    note(r.transpose_residual, tag + " transpose residual");
    note(r.cycle_residual, tag + " cycle residual");
    note(r.diagonal_residual, tag + " diagonal residual");
  };

  const double q = 2.0 / 3.0;
  const StateVector zero = StateVector::basis(2, 0);
  int graphs = 0;
  for (double p : {0.0, 0.3, 1.0 / 9.0, 1.0}) {
    const std::string ps = "p=" + num(p);
    for (int j = 0; j < 2; ++j) {
      const auto coin = build_coin_graph(p, j);
      report(coin, "coin " + ps);
      note(observed_deviation(coin, apply(cnot(), tensor(coin_causal_state(j, p), coin_causal_state(0, p)))),
           "coin circuit " + ps);
      note(brute_deviation(coin), "coin brute force " + ps);

      const auto two = build_two_step_coin_graph(p, j);
      report(two, "two-step " + ps);
      const auto start = tensor(tensor(coin_causal_state(j, p), coin_causal_state(0, p)), zero);
      const auto theta = apply(controlled(pauli_x(), 2, 3, 3),
                               apply(kron(identity_gate(2), u_x(p)), apply(controlled(pauli_x(), 1, 2, 3), start)));
      note(observed_deviation(two, theta), "two-step circuit " + ps);
      graphs += 2;
    }
    for (int j = 0; j < 3; ++j) {
      const auto pp = build_postproc_graph(p, q, j);
      report(pp, "postproc " + ps);
      note(observed_deviation(pp, apply(postproc_unitary(p, q), tensor(tensor(postproc_causal_state(j, q), zero), zero))),
           "postproc circuit " + ps);
      note(brute_deviation(pp), "postproc brute force " + ps);
      ++graphs;
    }
  }
  if (o.passed) o.detail = std::to_string(graphs) + " graphs, max residual " + num(worst);
  return o;
}

Outcome memory_metrics() {
  Outcome o;
  const auto rho = stationary_density(post_processed_coin(1.0 / 9.0, 2.0 / 3.0));
  const auto rank = (rho.eigenvalues().array() > kRankTolerance).count();
  check(o, rank == 2, "post-processed rank " + std::to_string(rank));
  check(o, quantum_topological_memory(rho) == 1.0, "D_q != 1");
  std::mt19937_64 gen(777);
  double margin = INFINITY;
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = test_models::random_machine(1 + trial % 6, 1 + trial % 4, gen);
    const double sq = quantum_statistical_memory(stationary_density(m));
    const double hc = statistical_memory(m);
    margin = std::min(margin, hc - sq);
    check(o, sq <= hc + 1e-12, "S_q > H_c on machine " + std::to_string(trial));
  }
  if (o.passed) o.detail = "rank 2 (D_q = 1 bit); 200 machines, min H_c - S_q " + num(margin);
  return o;
}

Outcome reproducibility() {
  Outcome o;
  const std::vector<std::string> runs{
      "--model coin --algo qi-ensemble --p 0.3 --samples 20000 --steps 20",
      "--model coin --algo qi-ensemble --p 0.75 --samples 20000 --steps 20 --fixed-count",
      "--model postproc --algo qi-general --samples 20000 --steps 20",
      "--model coin --algo baseline --steps 20000",
      "--model postproc --algo quantum --steps 20000",
      "--model postproc --algo single-bit --steps 20000",
  };
  for (std::size_t r = 0; r < runs.size(); ++r) {
    std::string reference;
    for (const char* threads : {"1", "2", "7"}) {
      const std::string out = "repro_" + std::to_string(r) + "_" + threads;
      const int code = tool("simulate " + runs[r] + " --seed 2718 --threads " + threads + " --out " + tmp(out));
      check(o, code == 0, "run '" + runs[r] + "' exit " + std::to_string(code));
      const std::string bytes = slurp(g_dir / out) + '\x1f' + slurp(g_dir / (out + ".report")) + '\x1f' +
                                slurp(g_dir / (out + ".report.csv"));
      if (reference.empty()) {
        reference = bytes;
      } else {
        check(o, bytes == reference, "'" + runs[r] + "' differs with " + threads + " threads");
      }
    }
  }
  if (o.passed) o.detail = std::to_string(runs.size()) + " configurations byte-identical at 1, 2, 7 threads";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: " << argv[0] << " <qimem binary>\n";
    return 2;
  }
  g_tool = fs::absolute(argv[1]).string();
  g_dir = fs::temp_directory_path() / ("qimem_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(g_dir);

  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria{
      {1, "memory curve", 1.0, memory_curve},
      {2, "three-state example (exact)", 1.0, appendix_a},
      {3, "kernel theorem", 10.0, kernel_theorem},
      {4, "sampler statistics", 60.0, sampler_statistics},
      {5, "quantum/BP equivalence", 5.0, bp_equivalence},
      {6, "quantum memory metrics", 5.0, memory_metrics},
      {7, "reproducibility across thread counts", 60.0, reproducibility},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto begin = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
    if (secs >= c.budget_seconds) {
      o.passed = false;
      o.detail = "took " + num(secs) + " s, budget " + num(c.budget_seconds) + " s; " + o.detail;
    }
    std::cout << (o.passed ? "[PASS]" : "[FAIL]") << " criterion " << c.id << " " << c.name << ": "
              << o.detail << " (" << num(secs) << " s)" << std::endl;
    failures += o.passed ? 0 : 1;
  }
  fs::remove_all(g_dir);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
