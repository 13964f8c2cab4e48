#include "qimem/samplers.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

namespace qimem {
namespace {

constexpr std::uint64_t kSelectionStream = ~std::uint64_t{0};

/// Runs fn(begin, end, worker) over [0, count) split into contiguous chunks.
template <typename Fn>
void parallel_chunks(std::size_t count, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, count));
  if (workers == 1) {
    fn(std::size_t{0}, count, std::size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(count, w * chunk);
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
  for (auto& t : pool) t.join();
}

struct Tally {
  std::vector<std::uint64_t> counts;
  std::vector<std::uint64_t> transitions;
  std::size_t saved = 0;

  explicit Tally(Index n)
      : counts(static_cast<std::size_t>(n), 0), transitions(static_cast<std::size_t>(n * n), 0) {}

  void add(const Tally& o) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    for (std::size_t i = 0; i < transitions.size(); ++i) transitions[i] += o.transitions[i];
    saved += o.saved;
  }
};

std::size_t worker_count(const EnsembleOptions& o) {
  return std::max<std::size_t>(1, std::min<std::size_t>(o.threads, o.samples));
}

}  // namespace

NegprobDecomposition negprob_decomposition(double p) {
  detail::require_probability(p, "p");
  const double c = (1.0 - 2.0 * p) / 2.0;
  return {Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(c, -c), c};
}

// ---------------------------------------------------------------------------

CoinEnsemble::CoinEnsemble(double p, EnsembleOptions options, SaveMode mode)
    : p_(p), options_(options), mode_(mode) {
  detail::require_probability(p, "p");
  bits_.resize(options_.samples);
  saved_.assign(options_.samples, -1);
  parallel_chunks(options_.samples, options_.threads, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t l = b; l < e; ++l) {
      Rng rng = Rng::for_stream(options_.seed, l, 0);
      bits_[l] = rng.bernoulli(0.5) ? 1 : 0;
      if (mode_ == SaveMode::probabilistic && rng.bernoulli(save_probability())) saved_[l] = bits_[l];
    }
  });
  if (mode_ == SaveMode::fixed_count) choose_saved();
}

void CoinEnsemble::choose_saved() {
  const std::size_t m = bits_.size();
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(m) * save_probability()));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::for_stream(options_.seed, kSelectionStream, step_);
  for (std::size_t i = 0; i < target; ++i) {
    const std::size_t pick = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(m - i));
    std::swap(order[i], order[std::min(pick, m - 1)]);
  }
  std::fill(saved_.begin(), saved_.end(), -1);
  for (std::size_t i = 0; i < target; ++i) saved_[order[i]] = bits_[order[i]];
}

StepSummary CoinEnsemble::step() {
  ++step_;
  std::vector<Tally> tallies(worker_count(options_), Tally(2));
  const bool fixed = mode_ == SaveMode::fixed_count;
  parallel_chunks(bits_.size(), options_.threads, [&](std::size_t b, std::size_t e, std::size_t w) {
    Tally& tally = tallies[w];
    for (std::size_t l = b; l < e; ++l) {
      Rng rng = Rng::for_stream(options_.seed, l, step_);
      const int prev = bits_[l];
      int bit = rng.bernoulli(0.5) ? 1 : 0;
      if (const int s = saved_[l]; s >= 0) {
        if ((p_ > 0.5 && bit == s) || (p_ < 0.5 && bit != s)) bit = 1 - bit;
      }
      bits_[l] = bit;
      saved_[l] = (!fixed && rng.bernoulli(save_probability())) ? bit : -1;
      ++tally.counts[static_cast<std::size_t>(bit)];
      ++tally.transitions[static_cast<std::size_t>(prev * 2 + bit)];
    }
  });
  if (fixed) choose_saved();
  Tally total(2);
  for (const auto& t : tallies) total.add(t);
  total.saved = static_cast<std::size_t>(std::count_if(saved_.begin(), saved_.end(), [](int s) { return s >= 0; }));
  return {step_, total.saved, std::move(total.counts), std::move(total.transitions)};
}

Eigen::Matrix2d coin_ensemble_kernel(double p) {
  detail::require_probability(p, "p");
  const double save = std::abs(2.0 * p - 1.0);
  // A saved coin always flips when p > 1/2 and never flips when p < 1/2.
  const double saved_flip = p > 0.5 ? 1.0 : 0.0;
  const double flip = save * saved_flip + (1.0 - save) * 0.5;
  Eigen::Matrix2d k;
  k << 1.0 - flip, flip, flip, 1.0 - flip;
  return k;
}

// ---------------------------------------------------------------------------

GeneralQISampler::GeneralQISampler(const TransitionMatrix<double>& t, EnsembleOptions options)
    : tables_(build_tables(t)), options_(options) {
  samples_.resize(options_.samples);
  saved_.assign(options_.samples, -1);
  parallel_chunks(options_.samples, options_.threads, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t l = b; l < e; ++l) {
      Rng rng = Rng::for_stream(options_.seed, l, 0);
      const int v = static_cast<int>(rng.categorical(tables_.pi.probs()));
      samples_[l] = v;
      if (rng.bernoulli(tables_.f(v))) saved_[l] = v;
    }
  });
}

StepSummary GeneralQISampler::qi_step() {
  ++step_;
  const Index n = tables_.size();
  std::vector<Tally> tallies(worker_count(options_), Tally(n));
  parallel_chunks(samples_.size(), options_.threads, [&](std::size_t b, std::size_t e, std::size_t w) {
    Tally& tally = tallies[w];
    for (std::size_t l = b; l < e; ++l) {
      Rng rng = Rng::for_stream(options_.seed, l, step_);
      const int prev = samples_[l];
      auto i = static_cast<int>(rng.categorical(tables_.pi.probs()));
      if (const int j = saved_[l]; j >= 0 && tables_.rminus(j, i) > 0.0) {
        if (rng.bernoulli(tables_.rminus(j, i))) {
          i = static_cast<int>(rng.categorical(tables_.rplus.row(j)));
        }
      }
      samples_[l] = i;
      saved_[l] = rng.bernoulli(tables_.f(i)) ? i : -1;
      if (saved_[l] >= 0) ++tally.saved;
      ++tally.counts[static_cast<std::size_t>(i)];
      ++tally.transitions[static_cast<std::size_t>(prev * n + i)];
    }
  });
  Tally total(n);
  for (const auto& t : tallies) total.add(t);
  return {step_, total.saved, std::move(total.counts), std::move(total.transitions)};
}

// ---------------------------------------------------------------------------

StochasticBitMachine sbm_init(int j, double p, double q, Rng& rng) {
  detail::require_probability(p, "p");
  detail::require_probability(q, "q");
  switch (j) {
    case 0: return {0, p, q};
    case 1: return {rng.bernoulli(q) ? 0 : 1, p, q};
    case 2: return {1, p, q};
    default: throw std::out_of_range("initial causal state must be 0, 1 or 2");
  }
}

int sbm_step(StochasticBitMachine& m, Rng& rng) {
  int s2 = 0;
  int s3 = 0;
  if (m.s == 0) {
    if (rng.bernoulli(m.p)) s2 = s3 = 1;
  } else {
    s2 = rng.bernoulli(m.q) ? 0 : 1;
  }
  const int x = m.s + 2 * s3;
  m.s = s2;
  return x;
}

std::vector<int> sbm_trajectory(int j, double p, double q, std::size_t steps, Rng& rng) {
  StochasticBitMachine m = sbm_init(j, p, q, rng);
  std::vector<int> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) out.push_back(sbm_step(m, rng));
  return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd stochastic_causal_states(const EpsilonMachine<double>& m) {
  const int n = m.num_states();
  const int a = m.alphabet_size();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n * a);
  for (int i = 0; i < n; ++i) {
    for (int x = 0; x < a; ++x) {
      if (m.emit(i, x) > 0.0) c(i, m.successor(i, x) * a + x) = m.emit(i, x);
    }
  }
  return c;
}

Eigen::MatrixXd stochastic_causal_states(const TransitionMatrix<double>& t) { return t.entries(); }

Index stochastic_causal_dimension(const Eigen::MatrixXd& states) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(states);
  return (svd.singularValues().array() > 1e-10).count();
}

}  // namespace qimem
