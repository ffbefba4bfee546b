#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "surgirl/checkpoint.hpp"
#include "surgirl/incremental.hpp"

namespace surgirl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

// Flat "dotted.key = value" text. '#' starts a comment, blank lines are
// skipped. Every key must be consumed by a getter; finish() rejects the rest
// so a typo can never silently fall back to a default.
class FlatConfig {
 public:
  static FlatConfig parse_file(const std::string& path);
  static FlatConfig parse_text(const std::string& text, const std::string& origin = "<text>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& def);
  std::string require_string(const std::string& key);
  double get_double(const std::string& key, double def);
  long get_long(const std::string& key, long def);
  std::uint64_t get_u64(const std::string& key, std::uint64_t def);
  bool get_bool(const std::string& key, bool def);
  std::vector<std::string> get_list(const std::string& key);  // comma separated

  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  void finish() const;  // throws ConfigError naming any unconsumed key

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;

  const std::string* lookup(const std::string& key);
};

struct RunConfig {
  TaskSpec task;
  NetworkSizes nets;
  LearnerConfig learner;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  long checkpoint_interval = 0;  // 0: final checkpoint only
  bool dump_trajectory = false;
  double stop_at_success = -1.0;
};

RunConfig parse_run_config(const std::string& path);
RunConfig run_config_from_text(const std::string& text);
GroupConfig parse_group_config(const std::string& path);
GroupConfig group_config_from_text(const std::string& text);

// Relative output directories land under $SURGIRL_OUT_ROOT when it is set.
std::string resolve_out_dir(const std::string& dir);

int cli_train(const std::string& config_path);
int cli_eval(const std::string& ckpt_path, const std::string& task,
             int episodes, std::uint64_t seed, const std::string& csv_path = "");
int cli_transfer(const std::string& config_path);
int cli_inspect(const std::string& ckpt_path);

}  // namespace surgirl
