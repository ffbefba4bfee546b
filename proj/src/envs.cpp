#include "surgirl/envs.hpp"

#include <algorithm>
#include <cmath>

#include "surgirl/mlp.hpp"

namespace surgirl {

namespace {

constexpr double kWorkspaceHalf = 0.5;
constexpr double kReleaseDist = 0.025;   // object-goal release/success threshold
constexpr double kReachTol = 0.025;      // reach-task success tolerance
constexpr double kMisOrientTol = 0.02;
constexpr double kTrackTol = 0.1;        // image-plane offset tolerance
constexpr int kTrackStreak = 5;
constexpr double kArmCollideDist = 0.01;
constexpr double kBehindOffset = 10.0;

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

const char* task_name(TaskId id) {
  switch (id) {
    case TaskId::NeedleReach: return "NeedleReach";
    case TaskId::ECMReach: return "ECMReach";
    case TaskId::MisOrient: return "MisOrient";
    case TaskId::GauzeRetrieve: return "GauzeRetrieve";
    case TaskId::NeedlePick: return "NeedlePick";
    case TaskId::PegTransfer: return "PegTransfer";
    case TaskId::NeedleRegrasp: return "NeedleRegrasp";
    case TaskId::BiPegTransfer: return "BiPegTransfer";
    case TaskId::StaticTrack: return "StaticTrack";
    case TaskId::ActiveTrack: return "ActiveTrack";
  }
  return "?";
}

TaskId task_from_name(const std::string& name) {
  for (int i = 0; i <= static_cast<int>(TaskId::ActiveTrack); ++i) {
    TaskId id = static_cast<TaskId>(i);
    if (name == task_name(id)) return id;
  }
  throw ConfigError("unknown task_id: " + name);
}

void TaskSpec::validate() const {
  if (grasp_threshold < 0.01 || grasp_threshold > 0.1) {
    throw ConfigError("grasp_threshold must lie in [0.01, 0.1]");
  }
  auto in01 = [](double v) { return v == 0.0 || v == 1.0; };
  if (!in01(coeffs.c_og) || !in01(coeffs.c_ro) || !in01(coeffs.c_rg)) {
    throw ConfigError("reward coefficients must lie in {0, 1}");
  }
  if (coeffs.p != 0.0 && coeffs.p != 2.0) {
    throw ConfigError("collision penalty must lie in {0, 2}");
  }
  if (obs_dim <= 0 || action_dim <= 0 || horizon <= 0) {
    throw ConfigError("task dims and horizon must be positive");
  }
}

TaskSpec default_task_spec(TaskId id) {
  TaskSpec s;
  s.id = id;
  switch (id) {
    case TaskId::NeedleReach:
    case TaskId::ECMReach:
      s.obs_dim = 6;
      s.action_dim = 3;
      s.arms = 1;
      s.horizon = 50;
      s.grasp_threshold = 0.05;
      s.coeffs = {0, 0, 1, 0};
      s.layout.ee[0] = 0;
      s.layout.goal = 3;
      break;
    case TaskId::MisOrient:
      s.obs_dim = 2;
      s.action_dim = 1;
      s.arms = 1;
      s.horizon = 50;
      s.grasp_threshold = 0.05;
      s.coeffs = {0, 0, 1, 0};
      s.layout.yaw = 0;
      s.layout.yaw_goal = 1;
      break;
    case TaskId::GauzeRetrieve:
    case TaskId::NeedlePick:
    case TaskId::PegTransfer:
      s.obs_dim = 10;
      s.action_dim = 3;
      s.arms = 1;
      s.horizon = 50;
      s.grasp_threshold = 0.05;
      s.coeffs = {1, 1, 0, 2};
      s.layout.ee[0] = 0;
      s.layout.grasp[0] = 3;
      s.layout.obj = 4;
      s.layout.goal = 7;
      break;
    case TaskId::NeedleRegrasp:
    case TaskId::BiPegTransfer:
      s.obs_dim = 14;
      s.action_dim = 6;
      s.arms = 2;
      s.horizon = 100;
      s.grasp_threshold = 0.05;
      s.coeffs = {1, 1, 0, 2};
      s.layout.ee[0] = 0;
      s.layout.grasp[0] = 3;
      s.layout.ee[1] = 4;
      s.layout.grasp[1] = 7;
      s.layout.obj = 8;
      s.layout.goal = 11;
      break;
    case TaskId::StaticTrack:
    case TaskId::ActiveTrack:
      // Group-4 tasks share one observation layout.
      s.obs_dim = 7;
      s.action_dim = 2;
      s.arms = 1;
      s.horizon = 60;
      s.grasp_threshold = 0.05;
      s.coeffs = {0, 0, 1, 0};
      s.layout.cam = 0;
      s.layout.img_offset = 2;
      s.layout.target = 4;
      break;
  }
  return s;
}

double dense_reward(double d_og, double d_ro, double d_rg, bool collision,
                    bool success, const RewardCoeffs& c) {
  return -c.c_og * d_og - c.c_ro * d_ro - c.c_rg * d_rg -
         (collision ? c.p : 0.0) + (success ? 20.0 : 0.0);
}

std::array<double, 2> project_to_image(double cam_yaw, double cam_pitch,
                                       std::span<const double> target_pos,
                                       bool* behind) {
  double az = std::atan2(target_pos[1], target_pos[0]);
  double horiz = std::sqrt(target_pos[0] * target_pos[0] + target_pos[1] * target_pos[1]);
  double el = std::atan2(target_pos[2], horiz);
  double daz = std::remainder(az - cam_yaw, 2.0 * M_PI);
  double del = el - cam_pitch;
  bool b = std::abs(daz) >= M_PI / 2.0 || std::abs(del) >= M_PI / 2.0;
  if (behind) *behind = b;
  if (b) {
    return {daz >= 0 ? kBehindOffset : -kBehindOffset,
            del >= 0 ? kBehindOffset : -kBehindOffset};
  }
  return {std::tan(daz), std::tan(del)};
}

Env::Env(const TaskSpec& spec, std::uint64_t seed)
    : spec_(spec), rng_(Rng::substream(seed, "env")) {
  spec_.validate();
  reset();
}

Env make_env(const TaskSpec& spec, std::uint64_t seed) { return Env(spec, seed); }

std::vector<double> Env::observe() const {
  std::vector<double> obs(spec_.obs_dim, 0.0);
  const ObsLayout& L = spec_.layout;
  for (int arm = 0; arm < spec_.arms; ++arm) {
    if (L.ee[arm] >= 0) {
      for (int i = 0; i < 3; ++i) obs[L.ee[arm] + i] = state_.ee[arm][i];
    }
    if (L.grasp[arm] >= 0) obs[L.grasp[arm]] = state_.grasp[arm] ? 1.0 : 0.0;
  }
  if (L.obj >= 0) {
    for (int i = 0; i < 3; ++i) obs[L.obj + i] = state_.object_pos[i];
  }
  if (L.goal >= 0) {
    for (int i = 0; i < 3; ++i) obs[L.goal + i] = state_.goal_pos[i];
  }
  if (L.yaw >= 0) obs[L.yaw] = state_.yaw;
  if (L.yaw_goal >= 0) obs[L.yaw_goal] = state_.yaw_goal;
  if (L.cam >= 0) {
    obs[L.cam] = state_.cam_yaw;
    obs[L.cam + 1] = state_.cam_pitch;
  }
  if (L.target >= 0 || L.img_offset >= 0) {
    std::array<double, 3> t = {std::cos(state_.target_el) * std::cos(state_.target_az),
                               std::cos(state_.target_el) * std::sin(state_.target_az),
                               std::sin(state_.target_el)};
    if (L.target >= 0) {
      for (int i = 0; i < 3; ++i) obs[L.target + i] = t[i];
    }
    if (L.img_offset >= 0) {
      auto off = project_to_image(state_.cam_yaw, state_.cam_pitch, t);
      obs[L.img_offset] = off[0];
      obs[L.img_offset + 1] = off[1];
    }
  }
  return obs;
}

std::vector<double> Env::reset() {
  state_ = WorldState{};
  switch (spec_.id) {
    case TaskId::NeedleReach:
    case TaskId::ECMReach:
      state_.ee[0] = {0.0, 0.0, 0.2};
      for (int i = 0; i < 3; ++i) state_.goal_pos[i] = rng_.uniform(-0.2, 0.2);
      break;
    case TaskId::MisOrient:
      state_.yaw = rng_.uniform(-1.0, 1.0);
      state_.yaw_goal = rng_.uniform(-1.0, 1.0);
      break;
    case TaskId::GauzeRetrieve:
    case TaskId::NeedlePick:
    case TaskId::PegTransfer:
      state_.ee[0] = {0.0, 0.0, 0.2};
      state_.has_object = true;
      state_.object_pos = {rng_.uniform(-0.15, 0.15), rng_.uniform(-0.15, 0.15),
                           rng_.uniform(-0.15, 0.0)};
      state_.goal_pos = {rng_.uniform(-0.15, 0.15), rng_.uniform(-0.15, 0.15),
                         rng_.uniform(0.0, 0.15)};
      break;
    case TaskId::NeedleRegrasp:
      state_.ee[0] = {-0.2, 0.0, 0.1};
      state_.ee[1] = {0.2, 0.0, 0.1};
      state_.has_object = true;
      // Needle starts held by the first arm; the goal sits on the second
      // arm's side of the workspace.
      state_.grasp[0] = true;
      state_.object_pos = state_.ee[0];
      state_.goal_pos = {rng_.uniform(0.1, 0.25), rng_.uniform(-0.1, 0.1),
                         rng_.uniform(-0.1, 0.1)};
      break;
    case TaskId::BiPegTransfer:
      state_.ee[0] = {-0.2, 0.0, 0.1};
      state_.ee[1] = {0.2, 0.0, 0.1};
      state_.has_object = true;
      state_.object_pos = {rng_.uniform(-0.25, -0.1), rng_.uniform(-0.1, 0.1),
                           rng_.uniform(-0.1, 0.0)};
      state_.goal_pos = {rng_.uniform(0.1, 0.25), rng_.uniform(-0.1, 0.1),
                         rng_.uniform(-0.1, 0.1)};
      break;
    case TaskId::StaticTrack:
    case TaskId::ActiveTrack:
      state_.cam_yaw = rng_.uniform(-0.6, 0.6);
      state_.cam_pitch = rng_.uniform(-0.4, 0.4);
      state_.target_az = rng_.uniform(-0.6, 0.6);
      state_.target_el = rng_.uniform(-0.4, 0.4);
      state_.path_phase = rng_.uniform(0.0, 2.0 * M_PI);
      break;
  }
  return observe();
}

StepResult Env::step(std::span<const double> action) {
  if (static_cast<int>(action.size()) != spec_.action_dim) {
    throw ShapeError("step: action length != action_dim");
  }
  for (double a : action) {
    if (!std::isfinite(a)) throw ConfigError("step: non-finite action");
  }
  std::vector<double> act(action.begin(), action.end());
  for (double& a : act) a = std::clamp(a, -1.0, 1.0);

  StepInfo info;
  state_.step += 1;

  switch (spec_.id) {
    case TaskId::MisOrient: {
      state_.yaw += spec_.ang_scale * act[0];
      info.d_rg = std::abs(state_.yaw - state_.yaw_goal);
      info.success = info.d_rg < kMisOrientTol;
      break;
    }
    case TaskId::StaticTrack:
    case TaskId::ActiveTrack: {
      state_.cam_yaw += spec_.ang_scale * act[0];
      state_.cam_pitch += spec_.ang_scale * act[1];
      if (spec_.id == TaskId::ActiveTrack) {
        // Seeded smooth target path.
        double t = static_cast<double>(state_.step);
        state_.target_az += 0.01 * std::sin(0.05 * t + state_.path_phase);
        state_.target_el += 0.008 * std::cos(0.04 * t + state_.path_phase);
      }
      std::array<double, 3> tpos = {
          std::cos(state_.target_el) * std::cos(state_.target_az),
          std::cos(state_.target_el) * std::sin(state_.target_az),
          std::sin(state_.target_el)};
      bool behind = false;
      auto off = project_to_image(state_.cam_yaw, state_.cam_pitch, tpos, &behind);
      info.target_behind = behind;
      double norm = std::sqrt(off[0] * off[0] + off[1] * off[1]);
      info.d_rg = std::min(norm, 2.0);
      if (norm < kTrackTol) {
        state_.on_target_streak += 1;
      } else {
        state_.on_target_streak = 0;
      }
      info.success = state_.on_target_streak >= kTrackStreak;
      break;
    }
    default: {
      // Kinematic arm tasks.
      for (int arm = 0; arm < spec_.arms; ++arm) {
        for (int i = 0; i < 3; ++i) {
          double next = state_.ee[arm][i] + spec_.a_scale * act[arm * 3 + i];
          if (std::abs(next) > kWorkspaceHalf) {
            info.collision = true;
            next = std::clamp(next, -kWorkspaceHalf, kWorkspaceHalf);
          }
          state_.ee[arm][i] = next;
        }
      }
      if (spec_.arms == 2 && dist3(state_.ee[0], state_.ee[1]) < kArmCollideDist) {
        info.collision = true;
      }
      if (state_.has_object) {
        // Grasped object rigidly follows its gripper.
        for (int arm = 0; arm < spec_.arms; ++arm) {
          if (state_.grasp[arm]) state_.object_pos = state_.ee[arm];
        }
        // Auto-grasp / handover / release.
        int holder = state_.grasp[0] ? 0 : (state_.grasp[1] ? 1 : -1);
        if (holder < 0) {
          for (int arm = 0; arm < spec_.arms; ++arm) {
            if (dist3(state_.ee[arm], state_.object_pos) < spec_.grasp_threshold) {
              state_.grasp[arm] = true;
              state_.object_pos = state_.ee[arm];
              break;
            }
          }
        } else {
          int other = 1 - holder;
          if (spec_.arms == 2 &&
              dist3(state_.ee[other], state_.object_pos) < spec_.grasp_threshold) {
            state_.grasp[holder] = false;
            state_.grasp[other] = true;
            state_.object_pos = state_.ee[other];
          }
        }
        if (dist3(state_.object_pos, state_.goal_pos) < kReleaseDist) {
          state_.grasp[0] = state_.grasp[1] = false;
        }
        info.d_og = dist3(state_.object_pos, state_.goal_pos);
        info.d_ro = dist3(state_.ee[0], state_.object_pos);
        if (spec_.arms == 2) {
          info.d_ro = std::min(info.d_ro, dist3(state_.ee[1], state_.object_pos));
        }
        info.d_rg = dist3(state_.ee[0], state_.goal_pos);
        info.success = info.d_og < kReleaseDist;
      } else {
        info.d_rg = dist3(state_.ee[0], state_.goal_pos);
        info.success = info.d_rg < kReachTol;
      }
      break;
    }
  }

  StepResult res;
  res.info = info;
  res.reward = dense_reward(info.d_og, info.d_ro, info.d_rg, info.collision,
                            info.success, spec_.coeffs);
  res.done = info.success || state_.step >= spec_.horizon;
  res.next_obs = observe();
  return res;
}

}  // namespace surgirl
