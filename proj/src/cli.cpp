#include "qimem/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "qimem/bp.hpp"
#include "qimem/markov.hpp"
#include "qimem/quantum.hpp"
#include "qimem/samplers.hpp"
#include "qimem/stats.hpp"

namespace qimem::cli {
namespace {

using nlohmann::json;

constexpr std::uint64_t kStartStream = 0x5354415254ULL;
constexpr double kBpTolerance = 1e-10;

// ---------------------------------------------------------------------------
// Small helpers

Rational parse_parameter(const char* name, const std::string& text) {
  try {
    return parse_rational(text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--") + name + ": " + e.what());
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot open '" + path + "' for writing");
  f << content;
  f.close();
  if (!f) throw UsageError("failed writing '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open '" + path + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void emit(const ExperimentConfig& cfg, std::ostream& out, const std::string& text) {
  if (cfg.out.empty()) {
    out << text;
  } else {
    write_file(cfg.out, text);
  }
}

template <typename Scalar>
std::string fmt(const Scalar& x) {
  if constexpr (is_exact_v<Scalar>) {
    return to_string(x);
  } else {
    return format_double(x);
  }
}

// ---------------------------------------------------------------------------
// Models

struct ModelSpec {
  std::string kind;
  Rational p;
  Rational q;
  std::optional<Matrix<Rational>> matrix;
  bool exact = false;
};

template <typename Scalar>
EpsilonMachine<Scalar> make_machine(const ModelSpec& spec) {
  auto cast = [](const Rational& r) {
    if constexpr (is_exact_v<Scalar>) {
      return r;
    } else {
      return to_double(r);
    }
  };
  if (spec.kind == "coin") return perturbed_coin<Scalar>(cast(spec.p));
  if (spec.kind == "postproc") return post_processed_coin<Scalar>(cast(spec.p), cast(spec.q));
  Matrix<Scalar> t = spec.matrix->unaryExpr(cast);
  return markov_chain_machine(TransitionMatrix<Scalar>(std::move(t)));
}

ModelSpec resolve_model(const ExperimentConfig& cfg) {
  ModelSpec spec;
  spec.kind = cfg.model;
  spec.exact = cfg.exact;
  if (cfg.model == "custom") {
    if (cfg.matrix.empty()) throw UsageError("--model custom needs --matrix");
    const auto rows = read_matrix_file(cfg.matrix);
    Matrix<Rational> m(static_cast<Index>(rows.size()), static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw UsageError("matrix in '" + cfg.matrix + "' is not square");
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        if (rows[r][c].find('/') != std::string::npos) spec.exact = true;
        m(static_cast<Index>(r), static_cast<Index>(c)) = parse_parameter("matrix", rows[r][c]);
      }
    }
    spec.matrix = std::move(m);
  } else if (cfg.model == "coin" || cfg.model == "postproc") {
    spec.p = parse_parameter("p", cfg.p.value_or(cfg.model == "coin" ? "0.3" : "1/9"));
    spec.q = parse_parameter("q", cfg.q.value_or("2/3"));
  } else {
    throw UsageError("unknown model '" + cfg.model + "'");
  }
  return spec;
}

// ---------------------------------------------------------------------------
// appendix-a

template <typename Scalar>
int appendix_a_impl(const Scalar& p, const Scalar& q, std::ostream& text, std::ostringstream& csv) {
  const auto t = three_state_example_chain<Scalar>(p, q);
  const auto tab = build_tables(t);
  const Index n = tab.size();
  auto row_text = [&](const auto& v) {
    std::string s;
    for (Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt<Scalar>(v(i));
    return s;
  };
  auto csv_row = [&](const std::string& name, const std::string& r, Index c, const std::string& v) {
    csv << name << ',' << r << ',' << (c < 0 ? std::string() : std::to_string(c)) << ',' << v << '\n';
  };

  csv << "quantity,row,col,value\n";
  text << "mode = " << (is_exact_v<Scalar> ? "exact" : "double") << '\n';
  text << "pi = " << row_text(tab.pi.probs()) << '\n';
  for (Index i = 0; i < n; ++i) csv_row("pi", "", i, fmt<Scalar>(tab.pi(i)));
  for (Index j = 0; j < n; ++j) {
    text << "delta[" << j << "] = " << row_text(tab.delta.row(j)) << '\n';
    for (Index i = 0; i < n; ++i) csv_row("delta", std::to_string(j), i, fmt<Scalar>(tab.delta(j, i)));
  }
  text << "f = " << row_text(tab.f) << '\n';
  for (Index j = 0; j < n; ++j) csv_row("f", "", j, fmt<Scalar>(tab.f(j)));
  for (Index j = 0; j < n; ++j) {
    text << "rminus[" << j << "] =";
    for (Index i : tab.negative[static_cast<std::size_t>(j)]) {
      text << ' ' << i << ':' << fmt<Scalar>(tab.rminus(j, i));
      csv_row("rminus", std::to_string(j), i, fmt<Scalar>(tab.rminus(j, i)));
    }
    text << "\nrplus[" << j << "] =";
    for (Index i : tab.positive[static_cast<std::size_t>(j)]) {
      text << ' ' << i << ':' << fmt<Scalar>(tab.rplus(j, i));
      csv_row("rplus", std::to_string(j), i, fmt<Scalar>(tab.rplus(j, i)));
    }
    text << '\n';
  }
  text << "Z = " << row_text(tab.z) << '\n';
  for (Index j = 0; j < n; ++j) csv_row("z", "", j, fmt<Scalar>(tab.z(j)));

  const auto mem = expected_memory(tab);
  text << "saved_fraction = " << fmt<Scalar>(mem.saved_fraction) << '\n';
  text << "bits_per_sample = " << fmt<Scalar>(mem.bits_per_sample) << '\n';
  csv_row("saved_fraction", "", -1, fmt<Scalar>(mem.saved_fraction));
  csv_row("bits_per_sample", "", -1, fmt<Scalar>(mem.bits_per_sample));

  const Matrix<Scalar> k = effective_kernel(tab);
  const double dev = (to_double(k) - to_double(t.entries())).cwiseAbs().maxCoeff();
  bool equal = false;
  std::string verdict;
  if constexpr (is_exact_v<Scalar>) {
    equal = k == t.entries();
    verdict = equal ? "EQUAL (exact)" : "DIFFERENT";
  } else {
    equal = dev < 1e-12;
    verdict = equal ? "EQUAL (max deviation " + format_double(dev) + ")" : "DIFFERENT";
  }
  text << "kernel = " << verdict << '\n';
  csv_row("kernel", "", -1, equal ? "EQUAL" : "DIFFERENT");
  return equal ? kPass : kNumericalError;
}

// ---------------------------------------------------------------------------
// simulate

std::string report_block(const std::vector<std::pair<std::string, std::string>>& extra,
                         const ComparisonReport& r) {
  std::string s;
  for (const auto& [k, v] : extra) s += k + "=" + v + "\n";
  return s + r.to_key_value();
}

std::string report_csv(const std::vector<std::pair<std::string, std::string>>& extra,
                       const ComparisonReport& r) {
  std::string head;
  std::string row;
  for (const auto& [k, v] : extra) {
    head += k + ",";
    row += v + ",";
  }
  return head + ComparisonReport::csv_header() + "\n" + row + r.to_csv_row() + "\n";
}

void check_pair(const std::string& model, const std::string& algo) {
  const bool ok = (algo == "baseline" || algo == "qi-general") ||
                  (algo == "quantum" && (model == "coin" || model == "postproc")) ||
                  (algo == "single-bit" && model == "postproc") ||
                  (algo == "qi-ensemble" && model == "coin");
  if (!ok) throw UsageError("algorithm '" + algo + "' does not support model '" + model + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> read_matrix_file(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw UsageError("'" + path + "': " + e.what());
  }
  if (!doc.is_array() || doc.empty()) throw UsageError("'" + path + "' must hold an array of rows");
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : doc) {
    if (!row.is_array()) throw UsageError("'" + path + "' must hold an array of rows");
    auto& out = rows.emplace_back();
    for (const auto& v : row) {
      if (v.is_string()) out.push_back(v.get<std::string>());
      else if (v.is_number()) out.push_back(v.dump());
      else throw UsageError("'" + path + "': entries must be numbers or strings");
    }
  }
  return rows;
}

int cmd_memory_curve(const ExperimentConfig& cfg, std::ostream& out) {
  if (cfg.grid < 2) throw UsageError("--grid must be at least 2");
  std::ostringstream csv;
  csv << "p,classical_bits,quantum_bits,qi_bits,mutual_info_bound\n";
  for (int k = 0; k < cfg.grid; ++k) {
    const double p = static_cast<double>(k) / static_cast<double>(cfg.grid - 1);
    const double classical = p == 0.5 ? 0.0 : 1.0;
    csv << format_double(p) << ',' << format_double(classical) << ','
        << format_double(coin_sq_closed_form(p)) << ',' << format_double(std::abs(1.0 - 2.0 * p))
        << ',' << format_double(coin_mutual_info_bound(p)) << '\n';
  }
  emit(cfg, out, csv.str());
  return kPass;
}

int cmd_appendix_a(const ExperimentConfig& cfg, std::ostream& out) {
  const Rational p = parse_parameter("p", cfg.p.value_or("1/9"));
  const Rational q = parse_parameter("q", cfg.q.value_or("2/3"));
  std::ostringstream csv;
  const int code = cfg.exact ? appendix_a_impl<Rational>(p, q, out, csv)
                             : appendix_a_impl<double>(to_double(p), to_double(q), out, csv);
  if (!cfg.out.empty()) write_file(cfg.out, csv.str());
  return code;
}

int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out) {
  if (!cfg.seed) throw UsageError("simulate needs --seed");
  if (cfg.out.empty()) throw UsageError("simulate needs --out");
  check_pair(cfg.model, cfg.algo);
  const ModelSpec spec = resolve_model(cfg);
  const auto machine = make_machine<double>(spec);
  const auto chain = induced_chain(machine);
  const std::uint64_t seed = *cfg.seed;

  std::vector<std::pair<std::string, std::string>> extra{
      {"model", cfg.model}, {"algo", cfg.algo}, {"seed", std::to_string(seed)},
      {"steps", std::to_string(cfg.steps)}};
  ComparisonReport report;
  report.sigma = cfg.sigma;
  bool passed = true;

  const bool ensemble = cfg.algo == "qi-ensemble" || cfg.algo == "qi-general";
  if (!ensemble) {
    int start = 0;
    if (cfg.start) {
      start = *cfg.start;
      if (start < 0 || start >= machine.num_states()) throw UsageError("--start out of range");
    } else {
      Rng pick = Rng::for_stream(seed, kStartStream, 0);
      start = static_cast<int>(pick.categorical(stationary(chain).probs()));
    }
    Rng rng(seed);
    std::vector<int> traj;
    if (cfg.algo == "baseline") {
      traj = sample_trajectory(machine, start, cfg.steps, rng);
    } else if (cfg.algo == "quantum") {
      const double p = to_double(spec.p);
      traj = spec.kind == "coin" ? sample_coin_circuit(p, start, cfg.steps, rng)
                                 : sample_postproc_circuit(p, to_double(spec.q), start, cfg.steps, rng);
    } else {
      traj = sbm_trajectory(start, to_double(spec.p), to_double(spec.q), cfg.steps, rng);
    }
    std::string body;
    body.reserve(traj.size() * 2);
    for (int x : traj) body += std::to_string(x) + "\n";
    write_file(cfg.out, body);

    const int k = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.kgram), traj.size()));
    extra.emplace_back("start", std::to_string(start));
    extra.emplace_back("k", std::to_string(k));
    if (k >= 1) {
      const auto counts = count_kgrams(traj, k);
      try {
        report = compare(counts, kgram_law_with_variance(machine, k), cfg.sigma);
        extra.emplace_back("variance_model", "long-run");
      } catch (const std::length_error&) {
        report = compare(counts, exact_kgram_distribution(machine, k), cfg.sigma);
        extra.emplace_back("variance_model", "binomial");
      }
    }
    passed = report.passed;
  } else {
    const EnsembleOptions opts{seed, cfg.samples, cfg.threads};
    std::optional<CoinEnsemble> coin;
    std::optional<GeneralQISampler> general;
    double expected_saved = 0.0;
    Index n = chain.size();
    if (cfg.algo == "qi-ensemble") {
      coin.emplace(to_double(spec.p), opts, cfg.fixed_count ? SaveMode::fixed_count : SaveMode::probabilistic);
      expected_saved = coin->save_probability();
    } else {
      general.emplace(chain, opts);
      expected_saved = expected_memory(general->tables()).saved_fraction;
      if (spec.exact) {
        const auto exact_tables = build_tables(induced_chain(make_machine<Rational>(spec)));
        const bool equal = effective_kernel(exact_tables) == exact_tables.t.entries();
        extra.emplace_back("kernel_exact", equal ? "EQUAL" : "DIFFERENT");
        extra.emplace_back("saved_fraction_exact", to_string(expected_memory(exact_tables).saved_fraction));
        passed = passed && equal;
      }
    }

    std::ostringstream csv;
    csv << "step,saved";
    for (Index i = 0; i < n; ++i) csv << ",count_" << i;
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) csv << ",t_" << j << '_' << i;
    }
    csv << '\n';
    std::vector<std::uint64_t> transitions(static_cast<std::size_t>(n * n), 0);
    std::uint64_t saved_total = 0;
    for (std::size_t s = 0; s < cfg.steps; ++s) {
      const StepSummary sum = coin ? coin->step() : general->qi_step();
      csv << sum.step << ',' << sum.saved;
      for (auto c : sum.counts) csv << ',' << c;
      for (std::size_t e = 0; e < sum.transitions.size(); ++e) {
        csv << ',' << sum.transitions[e];
        transitions[e] += sum.transitions[e];
      }
      csv << '\n';
      saved_total += sum.saved;
    }
    write_file(cfg.out, csv.str());

    const std::uint64_t trials = static_cast<std::uint64_t>(cfg.steps) * cfg.samples;
    const double saved_fraction = trials ? static_cast<double>(saved_total) / static_cast<double>(trials) : 0.0;
    const double saved_z = trials ? binomial_z(saved_total, trials, expected_saved) : 0.0;
    extra.emplace_back("samples", std::to_string(cfg.samples));
    extra.emplace_back("saved_fraction", format_double(saved_fraction));
    extra.emplace_back("expected_saved_fraction", format_double(expected_saved));
    extra.emplace_back("saved_fraction_z", format_double(saved_z));
    extra.emplace_back("bits_per_sample", format_double(expected_saved * index_bits(n)));

    report = compare_transitions(transitions, chain.entries(), cfg.sigma);
    const bool saved_ok = cfg.fixed_count || std::abs(saved_z) < cfg.sigma;
    passed = passed && report.passed && saved_ok;
  }

  extra.emplace_back("verdict", passed ? "PASS" : "FAIL");
  const std::string block = report_block(extra, report);
  write_file(cfg.out + ".report", block);
  write_file(cfg.out + ".report.csv", report_csv(extra, report));
  out << block;
  return passed ? kPass : kStatisticalFailure;
}

int cmd_bp_verify(const ExperimentConfig& cfg, std::ostream& out) {
  const std::string& model = cfg.model;
  if (model != "coin" && model != "postproc" && model != "coin-two-step") {
    throw UsageError("bp-verify supports models coin, postproc and coin-two-step");
  }
  const double p = to_double(parse_parameter("p", cfg.p.value_or(model == "postproc" ? "1/9" : "0.3")));
  const double q = to_double(parse_parameter("q", cfg.q.value_or("2/3")));
  std::vector<int> js;
  if (cfg.j) {
    js.push_back(*cfg.j);
  } else {
    const int count = model == "postproc" ? 3 : 2;
    for (int j = 0; j < count; ++j) js.push_back(j);
  }

  std::ostringstream text;
  bool all_ok = true;
  for (int j : js) {
    BpModel m = model == "coin"      ? build_coin_graph(p, j)
                : model == "postproc" ? build_postproc_graph(p, q, j)
                                      : build_two_step_coin_graph(p, j);
    const auto rep = verify_equivalence(m);
    const auto fwd = forward_pass(m.graph, m.init);
    const auto bwd = backward_pass(m.graph, m.init);

    StateVector circuit = StateVector::basis(2, 0);
    if (model == "postproc") {
      const auto zero = StateVector::basis(2, 0);
      circuit = apply(postproc_unitary(p, q), tensor(tensor(postproc_causal_state(j, q), zero), zero));
    } else {
      circuit = apply(cnot(), tensor(coin_causal_state(j, p), coin_causal_state(0, p)));
      if (model == "coin-two-step") {
        circuit = apply(controlled(pauli_x(), 2, 3, 3), tensor(circuit, coin_causal_state(0, p)));
      }
    }
    const Eigen::VectorXd& observed = fwd.messages[static_cast<std::size_t>(m.observed)].values();
    const double circuit_dev =
        (observed / observed.norm() - circuit.amplitudes()).cwiseAbs().maxCoeff();

    const auto brute = brute_force_marginals(m.graph);
    double brute_dev = 0.0;
    for (Index l = 0; l < m.graph.size(); ++l) {
      const auto bp = marginal(fwd.messages[static_cast<std::size_t>(l)], bwd.messages[static_cast<std::size_t>(l)]);
      brute_dev = std::max(brute_dev, (bp - brute[static_cast<std::size_t>(l)]).cwiseAbs().maxCoeff());
    }

    const bool ok = rep.passed(kBpTolerance) && circuit_dev < kBpTolerance && brute_dev < kBpTolerance;
    all_ok = all_ok && ok;
    text << "model=" << m.name << " j=" << j << " max_amplitude_deviation="
         << format_double(rep.max_amplitude_deviation)
         << " transpose_residual=" << format_double(rep.transpose_residual)
         << " cycle_residual=" << format_double(rep.cycle_residual)
         << " diagonal_residual=" << format_double(rep.diagonal_residual)
         << " circuit_deviation=" << format_double(circuit_dev)
         << " brute_force_deviation=" << format_double(brute_dev) << " edge_deviation=";
    for (std::size_t l = 0; l < rep.amplitude_deviation.size(); ++l) {
      text << (l ? ";" : "") << format_double(rep.amplitude_deviation[l]);
    }
    text << " verdict=" << (ok ? "PASS" : "FAIL") << '\n';
  }
  out << text.str();
  if (!cfg.out.empty()) write_file(cfg.out, text.str());
  return all_ok ? kPass : kNumericalError;
}

// ---------------------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Memory-efficient samplers for stochastic processes"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string p;
  std::string q;
  int start = 0;
  int j = 0;

  auto common = [&](CLI::App* s) {
    s->add_option("--seed", seed, "RNG seed (required for sampling)");
    s->add_option("--out", cfg.out, "Output path");
    s->add_option("--config", config_path, "JSON config file; flags take precedence");
    s->add_flag("--exact", cfg.exact, "Use exact rational arithmetic");
  };
  auto params = [&](CLI::App* s) {
    s->add_option("--p", p, "Flip probability (decimal or a/b)");
    s->add_option("--q", q, "Post-processing probability (decimal or a/b)");
  };

  auto* curve = app.add_subcommand("memory-curve", "Memory cost of each sampler for the perturbed coin");
  common(curve);
  curve->add_option("--grid", cfg.grid, "Number of grid points in [0,1]");

  auto* appx = app.add_subcommand("appendix-a", "Correction tables of the three-state example chain");
  common(appx);
  params(appx);

  auto* sim = app.add_subcommand("simulate", "Run a sampler and test it against the exact law");
  common(sim);
  params(sim);
  sim->add_option("--model", cfg.model, "coin, postproc or custom")
      ->check(CLI::IsMember({"coin", "postproc", "custom"}));
  sim->add_option("--algo", cfg.algo, "baseline, quantum, qi-ensemble, single-bit or qi-general")
      ->check(CLI::IsMember({"baseline", "quantum", "qi-ensemble", "single-bit", "qi-general"}));
  sim->add_option("--matrix", cfg.matrix, "JSON transition matrix for --model custom");
  sim->add_option("--samples", cfg.samples, "Ensemble size M");
  sim->add_option("--steps", cfg.steps, "Number of steps");
  sim->add_option("--sigma", cfg.sigma, "z-score threshold");
  sim->add_option("--threads", cfg.threads, "Worker threads for ensemble steps")
      ->check(CLI::PositiveNumber);
  sim->add_option("--start", start, "Initial causal state (default: drawn from pi)");
  sim->add_option("--kgram", cfg.kgram, "Word length for trajectory tests")->check(CLI::Range(1, kMaxEnumeratedGram));
  sim->add_flag("--fixed-count", cfg.fixed_count, "Save exactly round(M|2p-1|) coins per step");

  auto* bpv = app.add_subcommand("bp-verify", "Compare belief propagation with the quantum circuits");
  common(bpv);
  params(bpv);
  bpv->add_option("--model", cfg.model, "coin, postproc or coin-two-step")
      ->check(CLI::IsMember({"coin", "postproc", "coin-two-step"}));
  bpv->add_option("--j", j, "Initial causal state (default: all)");

  try {
    app.parse(argc, argv);
    CLI::App* sub = app.get_subcommands().front();
    if (!config_path.empty()) {
      json doc;
      try {
        doc = json::parse(read_file(config_path));
      } catch (const json::exception& e) {
        throw UsageError("'" + config_path + "': " + e.what());
      }
      if (!doc.is_object()) throw UsageError("'" + config_path + "' must hold a JSON object");
      for (const auto& [key, value] : doc.items()) {
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr || key == "config") {
          throw UsageError("unknown config key '" + key + "' for " + sub->get_name());
        }
        if (opt->count() > 0) continue;
        std::string v = value.is_string() ? value.get<std::string>() : value.dump();
        opt->add_result(v);
        opt->run_callback();
      }
    }
    cfg.subcommand = sub->get_name();
    if (sub->count("--seed") > 0) cfg.seed = seed;
    if (sub->get_option_no_throw("--p") && sub->count("--p") > 0) cfg.p = p;
    if (sub->get_option_no_throw("--q") && sub->count("--q") > 0) cfg.q = q;
    if (sub->get_option_no_throw("--start") && sub->count("--start") > 0) cfg.start = start;
    if (sub->get_option_no_throw("--j") && sub->count("--j") > 0) cfg.j = j;

    if (cfg.subcommand == "memory-curve") return cmd_memory_curve(cfg, out);
    if (cfg.subcommand == "appendix-a") return cmd_appendix_a(cfg, out);
    if (cfg.subcommand == "simulate") return cmd_simulate(cfg, out);
    return cmd_bp_verify(cfg, out);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kUsageError;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

}  // namespace qimem::cli
