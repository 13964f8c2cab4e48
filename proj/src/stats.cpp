#include "qimem/stats.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "qimem/markov.hpp"

namespace qimem {
namespace {

void check_sums_to_one(double total, const char* which) {
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(which) + " distribution does not sum to 1");
  }
}

void finish(ComparisonReport& r) {
  r.max_abs_z = 0.0;
  r.hard_failures = 0;
  for (const auto& e : r.entries) {
    if (e.hard_failure) ++r.hard_failures;
    else r.max_abs_z = std::max(r.max_abs_z, std::abs(e.z));
  }
  r.passed = r.hard_failures == 0 && r.max_abs_z < r.sigma;
}

}  // namespace

void KgramCounts::merge(const KgramCounts& other) {
  if (other.k != k) throw std::invalid_argument("cannot merge k-gram counts with different k");
  for (const auto& [key, c] : other.counts) counts[key] += c;
  total += other.total;
}

KgramCounts count_kgrams(const std::string& trajectory, int k) {
  if (k < 1) throw std::invalid_argument("k-gram length must be at least 1");
  if (static_cast<std::size_t>(k) > trajectory.size()) {
    throw std::invalid_argument("k-gram length exceeds trajectory length");
  }
  KgramCounts out;
  out.k = k;
  const std::size_t windows = trajectory.size() - static_cast<std::size_t>(k) + 1;
  for (std::size_t t = 0; t < windows; ++t) ++out.counts[trajectory.substr(t, static_cast<std::size_t>(k))];
  out.total = windows;
  return out;
}

KgramCounts count_kgrams(const std::vector<int>& trajectory, int k) {
  return count_kgrams(symbols_to_string(trajectory), k);
}

double binomial_z(std::uint64_t observed, std::uint64_t trials, double p) {
  const double n = static_cast<double>(trials);
  const double diff = static_cast<double>(observed) - n * p;
  const double var = n * p * (1.0 - p);
  if (var <= 0.0) {
    if (std::abs(diff) < 0.5) return 0.0;
    return diff > 0 ? std::numeric_limits<double>::infinity()
                    : -std::numeric_limits<double>::infinity();
  }
  return diff / std::sqrt(var);
}

namespace {

/// Shared body of the k-gram comparisons. `law(key)` returns the expected
/// probability (0 for unknown keys) and `z(key, observed, p)` the score.
template <typename LawFn, typename ZFn>
ComparisonReport compare_grams(const KgramCounts& counts, const std::set<std::string>& oracle_keys,
                               double sigma, LawFn&& law, ZFn&& z) {
  ComparisonReport r;
  r.sigma = sigma;
  r.sample_size = counts.total;
  std::set<std::string> keys = oracle_keys;
  for (const auto& [key, c] : counts.counts) keys.insert(key);

  const double n = static_cast<double>(counts.total);
  double l1 = 0.0;
  for (const auto& key : keys) {
    EntryResult e;
    e.key = key;
    e.trials = counts.total;
    if (auto it = counts.counts.find(key); it != counts.counts.end()) e.observed = it->second;
    e.expected_probability = law(key);
    if (counts.total > 0) {
      const double p = e.expected_probability;
      e.z = z(key, e.observed, p);
      e.hard_failure = (p == 0.0 || p == 1.0) && std::isinf(e.z);
      l1 += std::abs(static_cast<double>(e.observed) / n - p);
    }
    r.entries.push_back(std::move(e));
  }
  r.tv = counts.total > 0 ? 0.5 * l1 : 0.0;
  finish(r);
  return r;
}

}  // namespace

ComparisonReport compare(const KgramCounts& counts, const std::map<std::string, double>& exact,
                         double sigma) {
  double total_p = 0.0;
  std::set<std::string> keys;
  for (const auto& [key, p] : exact) {
    total_p += p;
    keys.insert(key);
  }
  check_sums_to_one(total_p, "exact");
  auto law = [&](const std::string& key) {
    auto it = exact.find(key);
    return it == exact.end() ? 0.0 : it->second;
  };
  auto z = [&](const std::string&, std::uint64_t observed, double p) {
    return binomial_z(observed, counts.total, p);
  };
  return compare_grams(counts, keys, sigma, law, z);
}

ComparisonReport compare(const KgramCounts& counts, const std::map<std::string, GramLaw>& exact,
                         double sigma) {
  double total_p = 0.0;
  std::set<std::string> keys;
  for (const auto& [key, g] : exact) {
    total_p += g.probability;
    keys.insert(key);
  }
  check_sums_to_one(total_p, "exact");
  auto law = [&](const std::string& key) {
    auto it = exact.find(key);
    return it == exact.end() ? 0.0 : it->second.probability;
  };
  const double n = static_cast<double>(counts.total);
  auto z = [&](const std::string& key, std::uint64_t observed, double p) {
    const double diff = static_cast<double>(observed) - n * p;
    auto it = exact.find(key);
    const double var = it == exact.end() ? 0.0 : n * it->second.variance;
    if (p == 0.0 || p == 1.0) return binomial_z(observed, counts.total, p);
    if (var < 1.0) {
      // Counts that are deterministic up to window-boundary effects.
      if (std::abs(diff) <= static_cast<double>(counts.k)) return 0.0;
      return diff > 0 ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
    }
    return diff / std::sqrt(var);
  };
  return compare_grams(counts, keys, sigma, law, z);
}

std::map<std::string, GramLaw> kgram_law_with_variance(const EpsilonMachine<double>& m, int k,
                                                       std::size_t max_windows) {
  if (k < 1) throw std::invalid_argument("k-gram length must be at least 1");
  const auto pi = stationary(induced_chain(m));

  // Window chain: (state at window start, next k symbols).
  struct Window {
    int state;
    std::string gram;
  };
  std::vector<Window> windows;
  std::vector<double> weight;
  std::map<std::pair<int, std::string>, Index> index;
  for (int s = 0; s < m.num_states(); ++s) {
    if (!(pi(s) > 0.0)) continue;
    for (const auto& [gram, prob] : conditional_kgram_distribution(m, s, k)) {
      index[{s, gram}] = static_cast<Index>(windows.size());
      windows.push_back({s, gram});
      weight.push_back(pi(s) * prob);
      if (windows.size() > max_windows) {
        throw std::length_error("k-gram window chain exceeds " + std::to_string(max_windows) +
                                " states");
      }
    }
  }
  const auto n = static_cast<Index>(windows.size());
  Eigen::RowVectorXd w(n);
  for (Index a = 0; a < n; ++a) w(a) = weight[static_cast<std::size_t>(a)];

  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Index a = 0; a < n; ++a) {
    const auto& win = windows[static_cast<std::size_t>(a)];
    int end = win.state;
    for (char c : win.gram) end = m.successor(end, symbol_value(c));
    const int next_state = m.successor(win.state, symbol_value(win.gram.front()));
    for (int y = 0; y < m.alphabet_size(); ++y) {
      if (!(m.emit(end, y) > 0.0)) continue;
      const std::string next_gram = win.gram.substr(1) + symbol_char(y);
      p(a, index.at({next_state, next_gram})) += m.emit(end, y);
    }
  }

  // Indicator of each gram over windows, centered at its stationary mean.
  std::map<std::string, Index> column;
  for (const auto& win : windows) column.emplace(win.gram, 0);
  Index c = 0;
  for (auto& [gram, col] : column) col = c++;
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, c);
  for (Index a = 0; a < n; ++a) f(a, column.at(windows[static_cast<std::size_t>(a)].gram)) = 1.0;
  const Eigen::RowVectorXd mean = w * f;
  const Eigen::MatrixXd centered = f.rowwise() - mean;

  // Poisson equation (I - P + 1 pi) g = f - pi f; the long-run variance is
  // 2 pi (f g) - pi (f f) with f centered.
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - p + Eigen::VectorXd::Ones(n) * w;
  const Eigen::MatrixXd g = a.partialPivLu().solve(centered);

  const Eigen::ArrayXd wa = w.transpose().array();
  std::map<std::string, GramLaw> out;
  for (const auto& [gram, col] : column) {
    const Eigen::ArrayXd fc = centered.col(col).array();
    const double var = 2.0 * (wa * fc * g.col(col).array()).sum() - (wa * fc.square()).sum();
    out[gram] = {mean(col), std::max(0.0, var)};
  }
  return out;
}

ComparisonReport compare_transitions(const std::vector<std::uint64_t>& transitions,
                                     const Eigen::MatrixXd& t, double sigma) {
  const Index n = t.rows();
  if (t.cols() != n || static_cast<Index>(transitions.size()) != n * n) {
    throw std::invalid_argument("transition counts do not match the matrix shape");
  }
  ComparisonReport r;
  r.sigma = sigma;
  std::uint64_t grand = 0;
  for (auto c : transitions) grand += c;
  r.sample_size = grand;

  double weighted_tv = 0.0;
  for (Index j = 0; j < n; ++j) {
    std::uint64_t row = 0;
    for (Index i = 0; i < n; ++i) row += transitions[static_cast<std::size_t>(j * n + i)];
    double l1 = 0.0;
    for (Index i = 0; i < n; ++i) {
      EntryResult e;
      e.key = std::to_string(j) + ">" + std::to_string(i);
      e.observed = transitions[static_cast<std::size_t>(j * n + i)];
      e.expected_probability = t(j, i);
      e.trials = row;
      if (row > 0) {
        e.z = binomial_z(e.observed, row, t(j, i));
        e.hard_failure = (t(j, i) == 0.0 || t(j, i) == 1.0) && std::isinf(e.z);
        l1 += std::abs(static_cast<double>(e.observed) / static_cast<double>(row) - t(j, i));
      }
      r.entries.push_back(std::move(e));
    }
    if (grand > 0) weighted_tv += static_cast<double>(row) / static_cast<double>(grand) * 0.5 * l1;
  }
  r.tv = weighted_tv;
  finish(r);
  return r;
}

double tv_distance(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  double sa = 0.0;
  double sb = 0.0;
  for (const auto& [k, v] : a) sa += v;
  for (const auto& [k, v] : b) sb += v;
  check_sums_to_one(sa, "first");
  check_sums_to_one(sb, "second");
  double l1 = 0.0;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    l1 += std::abs(v - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : b) {
    if (a.find(k) == a.end()) l1 += std::abs(v);
  }
  return 0.5 * l1;
}

double tv_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  check_sums_to_one(a.sum(), "first");
  check_sums_to_one(b.sum(), "second");
  const Index n = std::max(a.size(), b.size());
  double l1 = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double x = i < a.size() ? a(i) : 0.0;
    const double y = i < b.size() ? b(i) : 0.0;
    l1 += std::abs(x - y);
  }
  return 0.5 * l1;
}

std::string ComparisonReport::to_key_value() const {
  std::ostringstream out;
  out << "sample_size=" << sample_size << '\n'
      << "sigma=" << format_double(sigma) << '\n'
      << "max_abs_z=" << format_double(max_abs_z) << '\n'
      << "tv_distance=" << format_double(tv) << '\n'
      << "hard_failures=" << hard_failures << '\n'
      << "passed=" << (passed ? "true" : "false") << '\n';
  for (const auto& e : entries) {
    out << "z_" << e.key << '=' << format_double(e.z) << '\n';
  }
  return out.str();
}

std::string ComparisonReport::csv_header() {
  return "sample_size,sigma,max_abs_z,tv_distance,hard_failures,passed";
}

std::string ComparisonReport::to_csv_row() const {
  std::ostringstream out;
  out << sample_size << ',' << format_double(sigma) << ',' << format_double(max_abs_z) << ','
      << format_double(tv) << ',' << hard_failures << ',' << (passed ? 1 : 0);
  return out.str();
}

}  // namespace qimem
