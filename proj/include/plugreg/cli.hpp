#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace plugreg {

/// Exit codes of every command.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitPartialFailure = 2 };

struct RunConfig {
  std::string command;  // simulate, estimate, check
  std::string model;
  std::string scale = "desk";
  int dgp = 1;
  std::size_t reps = 0;  // 0: preset default
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;  // estimate: fold stream of this replication
  std::vector<std::string> methods;
  std::string lambda = "caption";  // theorem, caption or a number
  double U = 1.0;
  std::string out;
  std::string input;
  std::string save_data;
  std::string algorithm = "1";  // 1, 2 or cf
  unsigned threads = 0;         // 0: ORTHO_M_THREADS or 1
  bool naive = false;
  bool timing = false;
  bool direct_cv = false;
  std::size_t n_mc = 1000000;
  int probes = 20;
  std::map<std::string, std::string> design;  // DGPConfig overrides
};

/// Reads a flat key = value file ('#' starts a comment).
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Applies file entries to every field not in `given` (flags win).
void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& entries,
                  const std::vector<std::string>& given);

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_estimate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches; never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace plugreg
