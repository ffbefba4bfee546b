#pragma once

#include <string>
#include <vector>

#include "surgirl/checkpoint.hpp"

namespace surgirl {

enum class Pipeline { KeysOnly, KeysAndQuery, All };

const char* pipeline_name(Pipeline p);
Pipeline pipeline_from_name(const std::string& name);

struct TransferError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ExpansionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Which trained components a new task starts from. key_selection names key
// owners: "inner", the scripted ids, or a learned-policy id.
struct TransferPlan {
  Pipeline pipeline = Pipeline::KeysOnly;
  std::vector<std::string> key_selection;
  bool expand_with_inner = false;  // wrap the source inner actor as knowledge
};

struct NetworkSizes {
  int actor_hidden = 512;
  int query_hidden = 64;
  int d_k = kDefaultKeyDim;
};

// Builds an initialized policy for the target task, copying the plan's
// components bit-exactly from the source checkpoint. Critics are always
// fresh; the source is never mutated.
KianPolicy transfer(const Checkpoint& source, const TaskSpec& target,
                    const TransferPlan& plan, const NetworkSizes& nets,
                    Rng& init_rng);

// Wraps the source checkpoint's inner actor as a frozen LearnedInnerActor
// knowledge policy carrying its trained key.
KnowledgeSet expand_knowledge(const KnowledgeSet& set, const Checkpoint& source,
                              int target_action_dim, const std::string& id = "");

struct LineageEntry {
  std::string task;
  std::string checkpoint_path;
  std::string checkpoint_hash;
  std::string plan;  // "scratch" for the first task
};

struct LineageRecord {
  std::vector<LineageEntry> entries;
};

struct GroupStage {
  TaskSpec task;
  TransferPlan plan;  // ignored for the first stage
};

struct GroupConfig {
  std::vector<GroupStage> stages;
  LearnerConfig learner;
  NetworkSizes nets;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  double stop_at_success = -1.0;  // early stop per stage when >= 0
};

// Trains the first task from scratch, then each subsequent task via its
// transfer plan. Writes per-task metrics CSVs, checkpoints, and a lineage
// manifest under out_dir. Per-stage training results are returned alongside.
LineageRecord run_group(const GroupConfig& cfg,
                        std::vector<TrainResult>* results = nullptr);

void save_lineage(const LineageRecord& rec, const std::string& path);

}  // namespace surgirl
