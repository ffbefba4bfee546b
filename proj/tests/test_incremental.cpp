#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "surgirl/incremental.hpp"

using namespace surgirl;

namespace {

std::string tmp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

LearnerConfig small_config() {
  LearnerConfig cfg;
  cfg.batch = 8;
  cfg.buffer_capacity = 256;
  cfg.start_steps = 15;
  cfg.eval_interval = 40;
  cfg.eval_episodes = 2;
  cfg.critic_hidden = 10;
  cfg.total_steps = 90;
  return cfg;
}

Checkpoint source_checkpoint(TaskId task, std::uint64_t seed) {
  Rng rng(seed);
  auto spec = default_task_spec(task);
  KianPolicy p = make_kian_policy(spec, default_knowledge_set(rng), rng, 10, 6, 4);
  Learner learner(std::move(p), small_config(), seed);
  return snapshot(learner, nullptr, false);
}

NetworkSizes small_nets() { return {.actor_hidden = 10, .query_hidden = 6, .d_k = 4}; }

}  // namespace

TEST_CASE("pipeline names round trip") {
  for (auto p : {Pipeline::KeysOnly, Pipeline::KeysAndQuery, Pipeline::All}) {
    CHECK(pipeline_from_name(pipeline_name(p)) == p);
  }
  CHECK_THROWS_AS(pipeline_from_name("Everything"), ConfigError);
}

TEST_CASE("KeysOnly copies selected keys and nothing else") {
  Checkpoint src = source_checkpoint(TaskId::MisOrient, 31);
  Rng rng(131);
  TransferPlan plan{Pipeline::KeysOnly, {"inner", "approach", "transport", "handover"}, false};
  auto target = default_task_spec(TaskId::ECMReach);
  KianPolicy p = transfer(src, target, plan, small_nets(), rng);

  CHECK(p.inner_key == src.policy.inner_key);
  for (const char* id : {"approach", "transport", "handover"}) {
    int si = src.policy.knowledge.index_of(id);
    int ti = p.knowledge.index_of(id);
    CHECK(p.knowledge.keys[ti].embedding == src.policy.knowledge.keys[si].embedding);
  }
  CHECK(p.query_params != src.policy.query_params);
  CHECK(p.actor_params != src.policy.actor_params);
  CHECK(p.task.id == TaskId::ECMReach);
}

TEST_CASE("KeysAndQuery copies the query and leaves unselected keys fresh") {
  Checkpoint src = source_checkpoint(TaskId::NeedleRegrasp, 32);
  Rng rng(132);
  TransferPlan plan{Pipeline::KeysAndQuery, {"approach", "transport"}, false};
  auto target = default_task_spec(TaskId::BiPegTransfer);
  KianPolicy p = transfer(src, target, plan, small_nets(), rng);

  CHECK(p.query_params == src.policy.query_params);
  CHECK(p.query_spec == src.policy.query_spec);
  CHECK(p.actor_params != src.policy.actor_params);
  int s_h = src.policy.knowledge.index_of("handover");
  int t_h = p.knowledge.index_of("handover");
  CHECK(p.knowledge.keys[t_h].embedding != src.policy.knowledge.keys[s_h].embedding);
  CHECK(p.knowledge.keys[p.knowledge.index_of("approach")].embedding ==
        src.policy.knowledge.keys[src.policy.knowledge.index_of("approach")].embedding);
  CHECK(p.inner_key != src.policy.inner_key);  // inner key not selected
}

TEST_CASE("All copies the inner actor bit-exactly") {
  Checkpoint src = source_checkpoint(TaskId::NeedlePick, 33);
  Rng rng(133);
  TransferPlan plan{Pipeline::All, {"inner", "approach", "transport", "handover"}, false};
  auto target = default_task_spec(TaskId::PegTransfer);
  KianPolicy p = transfer(src, target, plan, small_nets(), rng);
  CHECK(p.actor_params == src.policy.actor_params);
  CHECK(p.actor_spec == src.policy.actor_spec);
  CHECK(p.query_params == src.policy.query_params);
  CHECK(p.inner_key == src.policy.inner_key);
}

TEST_CASE("transfer validation errors name the offending component") {
  Checkpoint src = source_checkpoint(TaskId::MisOrient, 34);
  Rng rng(134);
  auto target = default_task_spec(TaskId::NeedleReach);

  TransferPlan empty_sel{Pipeline::KeysOnly, {}, false};
  CHECK_THROWS_AS(transfer(src, target, empty_sel, small_nets(), rng), TransferError);

  TransferPlan q{Pipeline::KeysAndQuery, {"approach"}, false};
  try {
    transfer(src, target, q, small_nets(), rng);
    FAIL("expected TransferError");
  } catch (const TransferError& e) {
    CHECK(std::string(e.what()).find("query") != std::string::npos);
  }

  TransferPlan all{Pipeline::All, {"approach"}, false};
  Checkpoint src6 = source_checkpoint(TaskId::NeedleReach, 35);
  auto mis = default_task_spec(TaskId::MisOrient);
  try {
    transfer(src6, mis, all, small_nets(), rng);
    FAIL("expected TransferError");
  } catch (const TransferError& e) {
    std::string what = e.what();
    CHECK((what.find("inner_actor") != std::string::npos ||
           what.find("query") != std::string::npos));
  }

  TransferPlan missing{Pipeline::KeysOnly, {"nonexistent"}, false};
  CHECK_THROWS_AS(transfer(src, target, missing, small_nets(), rng), TransferError);
}

TEST_CASE("transfer never mutates the source") {
  Checkpoint src = source_checkpoint(TaskId::NeedlePick, 36);
  std::uint64_t h0 = checkpoint_param_hash(src);
  Rng rng(136);
  TransferPlan plan{Pipeline::All, {"inner", "approach"}, true};
  transfer(src, default_task_spec(TaskId::PegTransfer), plan, small_nets(), rng);
  CHECK(checkpoint_param_hash(src) == h0);
}

TEST_CASE("expand_knowledge wraps the source inner actor frozen") {
  Checkpoint src = source_checkpoint(TaskId::NeedlePick, 37);
  Rng rng(137);
  KnowledgeSet base = default_knowledge_set(rng);
  KnowledgeSet grown = expand_knowledge(base, src, 3);
  CHECK(grown.size() == 4);
  int idx = grown.index_of("learned_NeedlePick");
  REQUIRE(idx == 3);
  CHECK(grown.keys[idx].embedding == src.policy.inner_key);
  CHECK(grown.policies[idx].actor_params == src.policy.actor_params);

  // Frozen copy equivalence: the wrapped policy's greedy action equals the
  // source actor's tanh mean.
  std::vector<double> obs(src.policy.task.obs_dim, 0.05);
  auto a = grown.policies[idx].greedy_action(obs, src.policy.task);
  auto head = mlp_forward(src.policy.actor_spec, src.policy.actor_params, obs);
  for (int i = 0; i < src.policy.task.action_dim; ++i) {
    CHECK(a[i] == doctest::Approx(std::tanh(head[i])).epsilon(1e-15));
  }

  // Chaining a second expansion keeps ordering.
  Checkpoint src2 = source_checkpoint(TaskId::PegTransfer, 38);
  KnowledgeSet grown2 = expand_knowledge(grown, src2, 3);
  CHECK(grown2.size() == 5);
  CHECK(grown2.index_of("learned_NeedlePick") == 3);
  CHECK(grown2.index_of("learned_PegTransfer") == 4);

  CHECK_THROWS_AS(expand_knowledge(grown, src, 6), ExpansionError);
  CHECK_THROWS_AS(expand_knowledge(grown, src, 3), RegistrationError);
}

TEST_CASE("transferred policies grow the attention dimension") {
  Checkpoint src = source_checkpoint(TaskId::NeedlePick, 39);
  Rng rng(139);
  TransferPlan plan{Pipeline::All, {"inner", "approach", "transport", "handover"}, true};
  KianPolicy p = transfer(src, default_task_spec(TaskId::PegTransfer), plan,
                          small_nets(), rng);
  CHECK(p.components() == 5);
  std::vector<double> obs(p.task.obs_dim, 0.0);
  auto w = policy_weights(p, obs);
  CHECK(w.w.size() == 5);
}

TEST_CASE("run_group on a single task equals plain training") {
  GroupConfig gc;
  gc.learner = small_config();
  gc.nets = small_nets();
  gc.seed = 40;
  gc.out_dir = tmp_dir("surgirl_group_single");
  gc.stages.push_back({default_task_spec(TaskId::MisOrient), {}});

  std::vector<TrainResult> results;
  LineageRecord lineage = run_group(gc, &results);
  REQUIRE(lineage.entries.size() == 1);
  CHECK(lineage.entries[0].plan == "scratch");
  REQUIRE(results.size() == 1);

  // Replicate the stage run directly.
  std::uint64_t stage_seed = Rng::mix(40, "stage-0");
  Rng init = Rng::substream(stage_seed, "init");
  KianPolicy p = make_kian_policy(gc.stages[0].task, default_knowledge_set(init, 4),
                                  init, 10, 6, 4);
  Learner learner(std::move(p), gc.learner, stage_seed);
  Env env(gc.stages[0].task, stage_seed);
  auto direct = learner.train(env, gc.learner.total_steps);
  REQUIRE(direct.metrics.size() == results[0].metrics.size());
  for (std::size_t i = 0; i < direct.metrics.size(); ++i) {
    CHECK(direct.metrics[i].episode_return == results[0].metrics[i].episode_return);
    CHECK(direct.metrics[i].critic_loss == results[0].metrics[i].critic_loss);
  }
}

TEST_CASE("run_group chains stages and persists artifacts") {
  GroupConfig gc;
  gc.learner = small_config();
  gc.nets = small_nets();
  gc.seed = 41;
  gc.out_dir = tmp_dir("surgirl_group_track");
  gc.stages.push_back({default_task_spec(TaskId::StaticTrack), {}});
  gc.stages.push_back({default_task_spec(TaskId::ActiveTrack),
                       {Pipeline::All, {"inner", "approach", "transport", "handover"}, false}});

  LineageRecord lineage = run_group(gc);
  REQUIRE(lineage.entries.size() == 2);
  CHECK(lineage.entries[0].task == "StaticTrack");
  CHECK(lineage.entries[1].task == "ActiveTrack");
  CHECK(lineage.entries[1].plan == "All");
  for (const auto& e : lineage.entries) {
    CHECK(std::filesystem::exists(e.checkpoint_path));
    Checkpoint ck = load_checkpoint(e.checkpoint_path);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(checkpoint_param_hash(ck)));
    CHECK(e.checkpoint_hash == buf);
  }
  CHECK(std::filesystem::exists(gc.out_dir + "/0_StaticTrack_metrics.csv"));
  CHECK(std::filesystem::exists(gc.out_dir + "/1_ActiveTrack_metrics.csv"));
  CHECK(std::filesystem::exists(gc.out_dir + "/lineage.json"));

  // Determinism: rerunning gives identical lineage hashes.
  gc.out_dir = tmp_dir("surgirl_group_track2");
  LineageRecord again = run_group(gc);
  for (std::size_t i = 0; i < lineage.entries.size(); ++i) {
    CHECK(again.entries[i].checkpoint_hash == lineage.entries[i].checkpoint_hash);
  }
}

TEST_CASE("run_group rejects empty configs") {
  GroupConfig gc;
  CHECK_THROWS_AS(run_group(gc), ConfigError);
}
