#pragma once

#include <map>
#include <string>

#include "surgirl/learner.hpp"

namespace surgirl {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct HashMismatchError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct TruncationError : CheckpointError {
  using CheckpointError::CheckpointError;
};

// Versioned bundle of everything needed to reuse or resume a policy:
// knowledge-set manifest, keys, query, inner actor, critics, entropy
// coefficients, RNG states, and (optionally) full trainer state so a resumed
// run continues bit-exactly.
struct Checkpoint {
  int version = 1;
  long global_step = 0;
  KianPolicy policy;
  CriticPair critics;
  EntropyCoefficients coeffs;
  std::map<std::string, std::string> rng_states;

  bool has_trainer_state = false;
  AdamState query_opt, actor_opt, keys_opt;
  std::vector<Transition> replay;
  std::size_t replay_cursor = 0;
  WorldState env_world;
  double episode_return = 0.0;
  double last_episode_return = 0.0;
  int eval_count = 0;
};

// FNV-1a over all parameter block bytes, in file order.
std::uint64_t checkpoint_param_hash(const Checkpoint& ckpt);

Checkpoint snapshot(Learner& learner, const Env* env, bool with_trainer_state);

// Restores a learner (and the env, when trainer state is present) so that
// continued training matches an uninterrupted run exactly.
Learner restore_learner(const Checkpoint& ckpt, const LearnerConfig& cfg,
                        std::uint64_t seed, Env* env);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace surgirl
