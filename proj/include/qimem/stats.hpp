#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qimem/markov.hpp"
#include "qimem/scalar.hpp"

namespace qimem {

/// Sliding-window counts of length-k output words.
struct KgramCounts {
  int k = 1;
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;

  /// Adds the counts of another shard with the same k.
  void merge(const KgramCounts& other);
};

KgramCounts count_kgrams(const std::vector<int>& trajectory, int k);
KgramCounts count_kgrams(const std::string& trajectory, int k);

struct EntryResult {
  std::string key;
  std::uint64_t observed = 0;
  double expected_probability = 0.0;
  /// Trials the entry was tested over (gram total, or the source row total).
  std::uint64_t trials = 0;
  double z = 0.0;
  /// Observed count differs from an expected probability of exactly 0 or 1.
  bool hard_failure = false;
};

struct ComparisonReport {
  std::vector<EntryResult> entries;
  std::uint64_t sample_size = 0;
  double sigma = 5.0;
  double max_abs_z = 0.0;
  double tv = 0.0;
  std::size_t hard_failures = 0;
  bool passed = true;

  /// Flat key=value lines, one per field, followed by one z_<key> line per entry.
  std::string to_key_value() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

/// Per-gram binomial z-scores against the exact law plus the TV distance
/// between the empirical and exact distributions.
ComparisonReport compare(const KgramCounts& counts, const std::map<std::string, double>& exact,
                         double sigma);

/// Stationary probability of a k-gram together with the long-run variance
/// of its sliding-window count per window, lim Var(count) / N.
struct GramLaw {
  double probability = 0.0;
  double variance = 0.0;
};

/// Exact k-gram law of a machine with long-run count variances, from the
/// Poisson equation of the window chain (state at window start, next k
/// symbols). Throws std::length_error past `max_windows` window states.
std::map<std::string, GramLaw> kgram_law_with_variance(const EpsilonMachine<double>& m, int k,
                                                       std::size_t max_windows = 2000);

/// Same as above with each z scaled by the long-run variance N * variance
/// instead of N p (1 - p), which accounts for overlapping windows and
/// correlated symbols.
ComparisonReport compare(const KgramCounts& counts, const std::map<std::string, GramLaw>& exact,
                         double sigma);

/// transitions[j * n + i] counts moves j -> i. Each entry is tested as a
/// binomial draw within its source row; the TV distance is the row-weighted
/// average of the per-row distances.
ComparisonReport compare_transitions(const std::vector<std::uint64_t>& transitions,
                                     const Eigen::MatrixXd& t, double sigma);

/// Binomial z-score, 0 when expected equals observed for a degenerate p.
double binomial_z(std::uint64_t observed, std::uint64_t trials, double p);

/// (1/2) sum |a - b| with missing keys read as zero. Both inputs must sum
/// to 1 within 1e-9.
double tv_distance(const std::map<std::string, double>& a, const std::map<std::string, double>& b);
double tv_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace qimem
