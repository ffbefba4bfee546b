#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "surgirl/rng.hpp"

namespace surgirl {

enum class TaskId {
  NeedleReach,
  ECMReach,
  MisOrient,
  GauzeRetrieve,
  NeedlePick,
  PegTransfer,
  NeedleRegrasp,
  BiPegTransfer,
  StaticTrack,
  ActiveTrack,
};

const char* task_name(TaskId id);
TaskId task_from_name(const std::string& name);

// Offsets into the flat observation vector; -1 where a field is absent.
// Scripted knowledge policies read through this and emit zeros for fields
// the task lacks.
struct ObsLayout {
  std::array<int, 2> ee = {-1, -1};     // 3 values each
  std::array<int, 2> grasp = {-1, -1};  // 1 value each
  int obj = -1;                         // 3 values
  int goal = -1;                        // 3 values
  int cam = -1;                         // yaw, pitch
  int img_offset = -1;                  // 2 values
  int target = -1;                      // 3 values (tracking target)
  int yaw = -1;                         // MisOrient current yaw
  int yaw_goal = -1;                    // MisOrient desired yaw
};

struct RewardCoeffs {
  double c_og = 0.0;
  double c_ro = 0.0;
  double c_rg = 0.0;
  double p = 0.0;  // collision penalty
};

struct TaskSpec {
  TaskId id = TaskId::NeedleReach;
  int obs_dim = 0;
  int action_dim = 0;
  int arms = 1;
  int horizon = 50;
  double grasp_threshold = 0.05;
  double a_scale = 0.05;    // meters per unit action component
  double ang_scale = 0.1;   // radians per unit action (tracking, MisOrient)
  RewardCoeffs coeffs;
  ObsLayout layout;

  void validate() const;  // throws ConfigError on out-of-range fields
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TaskSpec default_task_spec(TaskId id);

struct WorldState {
  std::array<std::array<double, 3>, 2> ee{};
  std::array<bool, 2> grasp = {false, false};
  std::array<double, 3> object_pos{};
  std::array<double, 3> goal_pos{};
  bool has_object = false;
  double cam_yaw = 0.0, cam_pitch = 0.0;
  double yaw = 0.0, yaw_goal = 0.0;          // MisOrient
  double target_az = 0.0, target_el = 0.0;   // tracking target direction
  double path_phase = 0.0;                   // ActiveTrack path offset
  int on_target_streak = 0;
  int step = 0;
};

struct StepInfo {
  bool success = false;
  bool collision = false;
  bool target_behind = false;
  double d_og = 0.0, d_ro = 0.0, d_rg = 0.0;
};

struct StepResult {
  std::vector<double> next_obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// R = -c_og*d_og - c_ro*d_ro - c_rg*d_rg - p*[collision] + 20*[success]
double dense_reward(double d_og, double d_ro, double d_rg, bool collision,
                    bool success, const RewardCoeffs& c);

// Pinhole projection of a world-frame target into the virtual image plane of
// a camera at the origin with the given yaw/pitch (focal length 1). Targets
// at or behind 90 degrees off-axis map to a large fixed offset.
std::array<double, 2> project_to_image(double cam_yaw, double cam_pitch,
                                       std::span<const double> target_pos,
                                       bool* behind = nullptr);

class Env {
 public:
  Env(const TaskSpec& spec, std::uint64_t seed);

  std::vector<double> reset();
  StepResult step(std::span<const double> action);

  const TaskSpec& spec() const { return spec_; }
  const WorldState& world() const { return state_; }
  std::vector<double> observe() const;

  // Checkpoint resume support.
  std::string rng_state() const { return rng_.serialize(); }
  void set_rng_state(const std::string& s) { rng_.deserialize(s); }
  void set_world(const WorldState& w) { state_ = w; }

 private:
  TaskSpec spec_;
  WorldState state_;
  Rng rng_;
};

Env make_env(const TaskSpec& spec, std::uint64_t seed);

}  // namespace surgirl
