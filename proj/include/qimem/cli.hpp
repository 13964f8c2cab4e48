#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qimem::cli {

enum ExitCode : int {
  kPass = 0,
  kStatisticalFailure = 1,
  kUsageError = 2,
  kNumericalError = 3,
};

struct ExperimentConfig {
  std::string subcommand;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool exact = false;

  int grid = 101;

  std::string model = "coin";
  std::string algo = "baseline";
  /// Unset values fall back to per-command defaults.
  std::optional<std::string> p;
  std::optional<std::string> q;
  std::string matrix;
  std::size_t samples = 100000;
  std::size_t steps = 1000;
  double sigma = 5.0;
  unsigned threads = 1;
  std::optional<int> start;
  std::optional<int> j;
  int kgram = 3;
  bool fixed_count = false;
};

/// Parses argv, runs the subcommand and returns its exit code. Text output
/// goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int cmd_memory_curve(const ExperimentConfig& cfg, std::ostream& out);
int cmd_appendix_a(const ExperimentConfig& cfg, std::ostream& out);
int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out);
int cmd_bp_verify(const ExperimentConfig& cfg, std::ostream& out);

/// Thrown for invalid flag combinations and unreadable inputs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads a JSON array of rows whose entries are numbers or rational strings
/// such as "1/3". Numeric entries come back in their JSON text form.
std::vector<std::vector<std::string>> read_matrix_file(const std::string& path);

}  // namespace qimem::cli
