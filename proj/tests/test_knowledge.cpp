#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "surgirl/envs.hpp"
#include "surgirl/knowledge.hpp"

using namespace surgirl;

namespace {

std::vector<double> pick_obs(const TaskSpec& spec, std::array<double, 3> ee,
                             double grasp, std::array<double, 3> obj,
                             std::array<double, 3> goal) {
  std::vector<double> obs(spec.obs_dim, 0.0);
  for (int i = 0; i < 3; ++i) {
    obs[spec.layout.ee[0] + i] = ee[i];
    obs[spec.layout.obj + i] = obj[i];
    obs[spec.layout.goal + i] = goal[i];
  }
  obs[spec.layout.grasp[0]] = grasp;
  return obs;
}

}  // namespace

TEST_CASE("approach at the target gives zero mean") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  auto obs = pick_obs(spec, {0.1, 0.2, 0.0}, 0.0, {0.1, 0.2, 0.0}, {0.3, 0.0, 0.0});
  auto d = approach_policy(obs, spec);
  CHECK(d.mean == std::vector<double>{0.0, 0.0, 0.0});
  for (double s : d.std) CHECK(s == kSigmaKnow);
}

TEST_CASE("approach saturates at the per-axis bound") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  auto obs = pick_obs(spec, {0, 0, 0}, 0.0, {1, 0, 0}, {0, 0, 0});
  auto d = approach_policy(obs, spec);
  CHECK(d.mean[0] == 0.05);
  CHECK(d.mean[1] == 0.0);
  CHECK(d.mean[2] == 0.0);
}

TEST_CASE("approach tracks the goal once the object is grasped") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  auto obs = pick_obs(spec, {0, 0, 0}, 1.0, {0, 0, 0}, {0, 0, -0.04});
  auto d = approach_policy(obs, spec);
  CHECK(d.mean[0] == 0.0);
  CHECK(d.mean[1] == 0.0);
  CHECK(d.mean[2] == doctest::Approx(-0.02).epsilon(1e-12));  // 5 * 0.1 * -0.04
}

TEST_CASE("approach with only a -z displacement moves only in -z") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  auto obs = pick_obs(spec, {0.1, -0.1, 0.2}, 0.0, {0.1, -0.1, 0.1}, {0, 0, 0});
  auto d = approach_policy(obs, spec);
  CHECK(d.mean[0] == 0.0);
  CHECK(d.mean[1] == 0.0);
  CHECK(d.mean[2] < 0.0);
}

TEST_CASE("transport is inactive without a grasp") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  auto obs = pick_obs(spec, {0, 0, 0}, 0.0, {0.2, 0, 0}, {0.3, 0.1, 0});
  auto d = transport_policy(obs, spec);
  CHECK(d.mean == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("transport at the goal gives zero mean") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  auto obs = pick_obs(spec, {0.3, 0.1, 0}, 1.0, {0.3, 0.1, 0}, {0.3, 0.1, 0});
  auto d = transport_policy(obs, spec);
  CHECK(d.mean == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("transport clamps the proportional step") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  auto obs = pick_obs(spec, {0, 0, 0}, 1.0, {0, 0, 0}, {0, 0.2, 0});
  auto d = transport_policy(obs, spec);
  CHECK(d.mean[0] == 0.0);
  CHECK(d.mean[1] == 0.05);  // 5 * 0.1 * 0.2 = 0.1 clamped to a_scale
  CHECK(d.mean[2] == 0.0);
}

TEST_CASE("handover midpoint law") {
  TaskSpec spec = default_task_spec(TaskId::BiPegTransfer);
  std::vector<double> obs(spec.obs_dim, 0.0);
  obs[spec.layout.ee[0]] = -0.1;
  obs[spec.layout.ee[1]] = 0.1;
  auto d = handover_policy(obs, spec);
  CHECK(d.mean[0] == 0.05);   // arm 0 moves toward the midpoint at the origin
  CHECK(d.mean[3] == -0.05);  // arm 1 mirrors
  for (int i : {1, 2, 4, 5}) CHECK(d.mean[i] == 0.0);

  // Swapping arm labels swaps the mean blocks.
  obs[spec.layout.ee[0]] = 0.1;
  obs[spec.layout.ee[1]] = -0.1;
  auto d2 = handover_policy(obs, spec);
  CHECK(d2.mean[0] == d.mean[3]);
  CHECK(d2.mean[3] == d.mean[0]);
}

TEST_CASE("handover: both arms at the same point gives zero mean") {
  TaskSpec spec = default_task_spec(TaskId::BiPegTransfer);
  std::vector<double> obs(spec.obs_dim, 0.0);
  for (int i = 0; i < 3; ++i) {
    obs[spec.layout.ee[0] + i] = 0.2;
    obs[spec.layout.ee[1] + i] = 0.2;
  }
  auto d = handover_policy(obs, spec);
  for (double m : d.mean) CHECK(m == 0.0);
}

TEST_CASE("handover receiving arm heads for the held object") {
  TaskSpec spec = default_task_spec(TaskId::BiPegTransfer);
  std::vector<double> obs(spec.obs_dim, 0.0);
  obs[spec.layout.ee[0]] = -0.2;
  obs[spec.layout.ee[1]] = 0.2;
  obs[spec.layout.grasp[0]] = 1.0;  // arm 0 holds the object
  obs[spec.layout.obj] = -0.2;
  auto d = handover_policy(obs, spec);
  CHECK(d.mean[3] == -0.05);  // arm 1 moves toward the object, saturated
}

TEST_CASE("handover emits zeros on single-arm tasks") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  auto obs = pick_obs(spec, {0.1, 0, 0}, 0.0, {0.2, 0, 0}, {0.3, 0, 0});
  auto d = handover_policy(obs, spec);
  for (double m : d.mean) CHECK(m == 0.0);
}

TEST_CASE("scripted means stay within the per-axis bound") {
  Rng rng(123);
  for (TaskId id : {TaskId::NeedlePick, TaskId::BiPegTransfer, TaskId::NeedleReach}) {
    TaskSpec spec = default_task_spec(id);
    for (int trial = 0; trial < 10000 / 3; ++trial) {
      std::vector<double> obs(spec.obs_dim);
      for (double& v : obs) v = rng.uniform(-0.5, 0.5);
      for (int arm = 0; arm < spec.arms; ++arm) {
        if (spec.layout.grasp[arm] < 0) continue;  // NeedleReach has no gripper
        obs[spec.layout.grasp[arm]] = rng.uniform(0.0, 1.0) > 0.5 ? 1.0 : 0.0;
      }
      for (const auto& fn : {approach_policy, transport_policy, handover_policy}) {
        auto d = fn(obs, spec);
        for (double m : d.mean) {
          REQUIRE(std::abs(m) <= spec.a_scale + 1e-15);
        }
        for (double s : d.std) REQUIRE(s > 0.0);
      }
    }
  }
}

TEST_CASE("scripted laws are translation equivariant") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::array<double, 3> ee, obj, goal, shift;
    for (int i = 0; i < 3; ++i) {
      ee[i] = rng.uniform(-0.3, 0.3);
      obj[i] = rng.uniform(-0.3, 0.3);
      goal[i] = rng.uniform(-0.3, 0.3);
      shift[i] = rng.uniform(-0.1, 0.1);
    }
    std::array<double, 3> ee2, obj2, goal2;
    for (int i = 0; i < 3; ++i) {
      ee2[i] = ee[i] + shift[i];
      obj2[i] = obj[i] + shift[i];
      goal2[i] = goal[i] + shift[i];
    }
    auto a = approach_policy(pick_obs(spec, ee, 0.0, obj, goal), spec);
    auto b = approach_policy(pick_obs(spec, ee2, 0.0, obj2, goal2), spec);
    for (int i = 0; i < 3; ++i) CHECK(a.mean[i] == doctest::Approx(b.mean[i]).epsilon(1e-12));
  }
}

TEST_CASE("greedy approach solves NeedleReach within the horizon") {
  TaskSpec spec = default_task_spec(TaskId::NeedleReach);
  KnowledgePolicy kp{.id = "approach", .kind = PolicyKind::ScriptedApproach};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Env env(spec, seed);
    auto obs = env.reset();
    bool solved = false;
    for (int t = 0; t < 50; ++t) {
      auto a = kp.greedy_action(obs, spec);
      auto r = env.step(a);
      obs = std::move(r.next_obs);
      if (r.info.success) {
        solved = true;
        break;
      }
    }
    CHECK(solved);
  }
}

TEST_CASE("act_dist reports normalized means for scripted policies") {
  TaskSpec spec = default_task_spec(TaskId::NeedlePick);
  KnowledgePolicy kp{.id = "approach", .kind = PolicyKind::ScriptedApproach};
  auto obs = pick_obs(spec, {0, 0, 0}, 0.0, {1, 0, 0}, {0, 0, 0});
  auto d = kp.act_dist(obs, spec);
  CHECK(d.mean[0] == doctest::Approx(1.0).epsilon(1e-12));  // 0.05 / a_scale
}

TEST_CASE("add_knowledge basics") {
  Rng rng(1);
  KnowledgeSet empty;
  auto one = add_knowledge(empty, {.id = "a", .kind = PolicyKind::ScriptedApproach}, rng);
  CHECK(one.size() == 1);
  CHECK(one.keys[0].embedding.size() == 4);
  CHECK(one.keys[0].owner_policy_id == "a");

  auto set = default_knowledge_set(rng);
  CHECK(set.size() == 3);
  CHECK(set.index_of("approach") == 0);
  CHECK(set.index_of("transport") == 1);
  CHECK(set.index_of("handover") == 2);
  CHECK(set.index_of("missing") == -1);

  CHECK_THROWS_AS(
      add_knowledge(set, {.id = "approach", .kind = PolicyKind::ScriptedApproach}, rng),
      RegistrationError);
}

TEST_CASE("add_knowledge preserves a supplied key bit-exactly") {
  Rng rng(2);
  KnowledgeSet set;
  KnowledgeKey key{.embedding = {0.125, -0.25, 0.5, -1.0}, .owner_policy_id = ""};
  auto out = add_knowledge(set, {.id = "x", .kind = PolicyKind::ScriptedTransport},
                           rng, 4, key);
  CHECK(out.keys[0].embedding == std::vector<double>{0.125, -0.25, 0.5, -1.0});
  CHECK(out.keys[0].owner_policy_id == "x");
}

TEST_CASE("fresh keys respect the init bound") {
  Rng rng(3);
  auto set = default_knowledge_set(rng, 16);
  for (const auto& k : set.keys) {
    CHECK(k.embedding.size() == 16);
    for (double v : k.embedding) CHECK(std::abs(v) <= 0.25);
  }
}

TEST_CASE("policy kind names round trip") {
  for (auto k : {PolicyKind::ScriptedApproach, PolicyKind::ScriptedTransport,
                 PolicyKind::ScriptedHandover, PolicyKind::LearnedInnerActor}) {
    CHECK(policy_kind_from_name(policy_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(policy_kind_from_name("bogus"), ConfigError);
}
