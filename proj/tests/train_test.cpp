#include "psl/train.hpp"

#include <cmath>
#include <memory>

#include <gtest/gtest.h>

namespace psl {
namespace {

std::vector<double> flatten(AgentParams& p) {
  std::vector<double> out;
  for_each_param(p, [&](const std::string&, auto& m) {
    out.insert(out.end(), m.data(), m.data() + m.size());
  });
  return out;
}

AgentConfig small_agent(Variant v = Variant::PSL) {
  AgentConfig c;
  c.variant = v;
  c.embed_dim = 16;
  c.spm_dim = 12;
  c.spm_hidden = 16;
  c.obs_encoder_dims = {16};
  c.hidden_dim = 16;
  c.n_rays = 16;
  c.n_actions = 6;
  return c;
}

struct WorldFixture {
  SemanticSpaceConfig scfg;
  Codebook cb;
  std::vector<Scene> scenes;
  std::vector<Episode> episodes;
  FovConfig fov;
  std::unique_ptr<EpisodeSet> set;

  WorldFixture() : scfg{}, cb{[this] {
    scfg.dim = 16;
    scfg.seed = 3;
    return build_codebook(scfg);
  }()} {
    SceneGenConfig gcfg;
    gcfg.rooms = 2;
    gcfg.min_size = 12;
    gcfg.max_size = 14;
    gcfg.objects_per_room = 1;
    for (std::uint64_t s : {101ull, 102ull}) scenes.push_back(generate_scene(s, gcfg));

    EpisodeConfig ecfg;
    ecfg.min_optimal_m = 0.5;  // the scenes here are only ~3 m across
    Rng rng(7);
    for (int i = 0; i < 6; ++i) {
      const Scene& scene = scenes[static_cast<std::size_t>(i % 2)];
      episodes.push_back(generate_episode(scene, cb, rng, ecfg, fov, "ep-" + std::to_string(i)));
    }
    set = std::make_unique<EpisodeSet>(scenes, episodes, cb, fov);
  }
};

WorldFixture& world() {
  static WorldFixture* f = new WorldFixture();
  return *f;
}

RolloutBuffer collect_once(const AgentParams& params, const PPOConfig& cfg,
                           Variant variant = Variant::PSL) {
  std::vector<EnvStream> envs;
  std::vector<PolicyState> states;
  std::vector<Rng> rngs;
  for (int e = 0; e < cfg.n_envs; ++e) {
    envs.emplace_back(*world().set, e, cfg.n_envs, cfg.seed, variant, RewardConfig{},
                      cfg.max_episode_steps);
    states.push_back(initial_policy_state(params.config));
    rngs.emplace_back(derive_seed(cfg.seed, "actions:" + std::to_string(e)));
  }
  RolloutBuffer buf = collect_rollouts(envs, states, rngs, params, cfg);
  compute_gae(buf, cfg.discount, cfg.gae_lambda);
  return buf;
}

PPOConfig small_ppo() {
  PPOConfig cfg;
  cfg.n_envs = 2;
  cfg.horizon = 16;
  cfg.minibatches = 2;
  cfg.epochs = 2;
  cfg.max_episode_steps = 24;
  cfg.seed = 11;
  return cfg;
}

TEST(TrainReward, SuccessBonusesOnlyOnTheStopStep) {
  const StepSnapshot near{0.2, 0.1, 0.0};
  const RewardConfig cfg;
  const RewardTerms t = step_reward_terms(near, near, cfg);
  // hovering in range without stopping earns only the dense terms
  EXPECT_DOUBLE_EQ(train_step_reward(near, near, false, cfg), t.dense_dist + t.dense_angle + t.delay);
  EXPECT_DOUBLE_EQ(train_step_reward(near, near, true, cfg), t.total());
  EXPECT_NEAR(train_step_reward(near, near, true, cfg) - train_step_reward(near, near, false, cfg),
              10.0, 1e-12);

  const StepSnapshot far{3.0, 0.1, 0.0};
  EXPECT_DOUBLE_EQ(train_step_reward(far, far, true, cfg), -cfg.delay_penalty);
}

TEST(Surrogate, ClipRuleExamples) {
  // positive advantage, ratio above the band: clipped branch wins, no gradient
  const Surrogate a = clipped_surrogate(1.5, 2.0, 0.2);
  EXPECT_DOUBLE_EQ(a.objective, 1.2 * 2.0);
  EXPECT_DOUBLE_EQ(a.dratio, 0.0);
  EXPECT_TRUE(a.clipped);

  // zero advantage: no objective, no gradient
  const Surrogate z = clipped_surrogate(1.5, 0.0, 0.2);
  EXPECT_DOUBLE_EQ(z.objective, 0.0);
  EXPECT_DOUBLE_EQ(z.dratio, 0.0);

  // in-band ratio: plain surrogate with live gradient
  const Surrogate b = clipped_surrogate(1.1, -0.5, 0.2);
  EXPECT_DOUBLE_EQ(b.objective, 1.1 * -0.5);
  EXPECT_DOUBLE_EQ(b.dratio, -0.5);
  EXPECT_FALSE(b.clipped);

  // negative advantage, ratio below the band: min() picks the clipped branch
  const Surrogate c = clipped_surrogate(0.5, -1.0, 0.2);
  EXPECT_DOUBLE_EQ(c.objective, -0.8);
  EXPECT_DOUBLE_EQ(c.dratio, 0.0);
  EXPECT_TRUE(c.clipped);

  // negative advantage, ratio above the band: unclipped branch is more
  // pessimistic, so the gradient stays live
  const Surrogate d = clipped_surrogate(1.5, -1.0, 0.2);
  EXPECT_DOUBLE_EQ(d.objective, -1.5);
  EXPECT_DOUBLE_EQ(d.dratio, -1.0);
  EXPECT_TRUE(d.clipped);
}

RolloutBuffer hand_buffer(const std::vector<double>& rewards, const std::vector<double>& values,
                          const std::vector<bool>& dones, double bootstrap) {
  RolloutBuffer buf;
  buf.n_envs = 1;
  buf.horizon = static_cast<int>(rewards.size());
  buf.env.resize(1);
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    Transition tr;
    tr.reward = rewards[t];
    tr.value = values[t];
    tr.done = dones[t];
    buf.env[0].push_back(tr);
  }
  buf.bootstrap_value = {bootstrap};
  return buf;
}

TEST(Gae, ThreeStepHandTrace) {
  // r = (0, 0, 5), V = (1, 1, 1), terminal at the last step, gamma=0.99,
  // lambda=0.95: A2 = 4, A1 = -0.01 + 0.9405*4, A0 = -0.01 + 0.9405*A1.
  RolloutBuffer buf = hand_buffer({0.0, 0.0, 5.0}, {1.0, 1.0, 1.0}, {false, false, true}, 123.0);
  compute_gae(buf, 0.99, 0.95);
  EXPECT_NEAR(buf.adv[0][2], 4.0, 1e-9);
  EXPECT_NEAR(buf.adv[0][1], 3.752, 1e-9);
  EXPECT_NEAR(buf.adv[0][0], 3.518756, 1e-9);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(buf.ret[0][t], buf.adv[0][t] + 1.0, 1e-12);
}

TEST(Gae, SingleTerminalStep) {
  RolloutBuffer buf = hand_buffer({1.0}, {0.0}, {true}, 99.0);
  compute_gae(buf, 0.99, 0.95);
  EXPECT_DOUBLE_EQ(buf.adv[0][0], 1.0);
  EXPECT_DOUBLE_EQ(buf.ret[0][0], 1.0);
}

TEST(Gae, TelescopesAtLambdaGammaOne) {
  Rng rng(13);
  std::vector<double> r(8), v(8);
  std::vector<bool> d(8, false);
  for (int t = 0; t < 8; ++t) {
    r[static_cast<std::size_t>(t)] = rng.uniform(-1.0, 1.0);
    v[static_cast<std::size_t>(t)] = rng.uniform(-1.0, 1.0);
  }
  d[7] = true;
  RolloutBuffer buf = hand_buffer(r, v, d, 55.0);
  compute_gae(buf, 1.0, 1.0);
  for (int t = 0; t < 8; ++t) {
    double tail = 0.0;
    for (int k = t; k < 8; ++k) tail += r[static_cast<std::size_t>(k)];
    EXPECT_NEAR(buf.adv[0][t], tail - v[static_cast<std::size_t>(t)], 1e-9);
  }
}

TEST(Gae, BootstrapsOpenSequencesAndRespectsDones) {
  RolloutBuffer open = hand_buffer({0.0}, {2.0}, {false}, 3.0);
  compute_gae(open, 0.5, 0.9);
  EXPECT_DOUBLE_EQ(open.adv[0][0], 0.5 * 3.0 - 2.0);

  // a done at t=0 must hide both the next value and the next advantage
  RolloutBuffer cut = hand_buffer({1.0, 7.0}, {0.5, 0.25}, {true, false}, 10.0);
  compute_gae(cut, 0.99, 0.95);
  EXPECT_DOUBLE_EQ(cut.adv[0][0], 1.0 - 0.5);
  EXPECT_DOUBLE_EQ(cut.adv[0][1], 7.0 + 0.99 * 10.0 - 0.25);
}

TEST(Adam, ConstantUnitGradientMovesByTheLearningRate) {
  const AgentConfig c = small_agent();
  AgentParams params = init_agent(c, 5);
  const std::vector<double> before = flatten(params);

  PPOConfig cfg;
  cfg.learning_rate = 0.1;
  AdamState state;
  for (int step = 0; step < 3; ++step) {
    AgentParams grads = zeros_like(params);
    for_each_param(grads, [](const std::string&, auto& m) { m.setOnes(); });
    adam_step(params, grads, state, cfg);
  }
  const std::vector<double> after = flatten(params);
  for (std::size_t i = 0; i < before.size(); ++i) {
    ASSERT_NEAR(before[i] - after[i], 0.3, 1e-6) << "param " << i;
  }
  EXPECT_EQ(state.step_count, 3);
}

TEST(Adam, ZeroGradientIsANoOp) {
  const AgentConfig c = small_agent();
  AgentParams params = init_agent(c, 6);
  const std::vector<double> before = flatten(params);
  AdamState state;
  AgentParams grads = zeros_like(params);
  adam_step(params, grads, state, PPOConfig{});
  EXPECT_EQ(flatten(params), before);
}

TEST(GradClip, GlobalNormComputedAndScaled) {
  AgentParams grads = zeros_like(init_agent(small_agent(), 1));
  grads.actor_b[0] = 3.0;
  grads.actor_b[1] = 4.0;
  EXPECT_DOUBLE_EQ(global_grad_norm(grads), 5.0);

  clip_grad_norm(grads, 0.5);
  EXPECT_NEAR(global_grad_norm(grads), 0.5, 1e-12);
  EXPECT_NEAR(grads.actor_b[0], 0.3, 1e-12);
  EXPECT_NEAR(grads.actor_b[1], 0.4, 1e-12);

  clip_grad_norm(grads, 10.0);  // under the cap: untouched
  EXPECT_NEAR(global_grad_norm(grads), 0.5, 1e-12);
}

TEST(PpoConfig, MinibatchesMustDivideEnvs) {
  PPOConfig cfg = small_ppo();
  cfg.n_envs = 6;
  cfg.minibatches = 4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.minibatches = 3;
  EXPECT_NO_THROW(cfg.validate());
  cfg.discount = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(EpisodeSet, RejectsInconsistentInputs) {
  WorldFixture& w = world();
  EXPECT_THROW(EpisodeSet(w.scenes, {}, w.cb, w.fov), std::invalid_argument);

  std::vector<Scene> dup = {w.scenes[0], w.scenes[0]};
  EXPECT_THROW(EpisodeSet(dup, w.episodes, w.cb, w.fov), std::invalid_argument);

  std::vector<Episode> orphan = w.episodes;
  orphan[0].scene_id = "missing-scene";
  EXPECT_THROW(EpisodeSet(w.scenes, orphan, w.cb, w.fov), std::invalid_argument);

  std::vector<Episode> no_views = w.episodes;
  no_views[0].goal_views.clear();
  EXPECT_THROW(EpisodeSet(w.scenes, no_views, w.cb, w.fov), std::invalid_argument);
}

TEST(EpisodeSet, PreparesGoalVectorsAndDistanceFields) {
  WorldFixture& w = world();
  ASSERT_EQ(w.set->size(), 6u);
  for (std::size_t i = 0; i < w.set->size(); ++i) {
    const PreparedEpisode& pe = w.set->prepared(i);
    ASSERT_EQ(pe.goal_embeddings.size(), pe.ep->goal_views.size());
    ASSERT_EQ(pe.goal_layouts.size(), pe.ep->goal_views.size());
    for (std::size_t g = 0; g < pe.goal_embeddings.size(); ++g) {
      const ViewCandidate& v =
          pe.ep->all_candidates.at(static_cast<std::size_t>(pe.ep->goal_views[g]));
      EXPECT_TRUE(pe.goal_embeddings[g] == v.embedding);
      EXPECT_EQ(pe.goal_layouts[g].size(), w.fov.n_rays);
    }
    // the cached field reproduces the episode's optimal length at the start
    const Cell start = cell_of(pe.ep->start);
    const double d =
        (*pe.dist_field)[static_cast<std::size_t>(start.y) * pe.scene->width + start.x];
    EXPECT_DOUBLE_EQ(d, pe.ep->optimal_length_m);
  }
}

TEST(Snapshot, MeasuresFieldDistanceAndDiscreteErrors) {
  WorldFixture& w = world();
  const PreparedEpisode& pe = w.set->prepared(0);
  const ViewCandidate& gv =
      pe.ep->all_candidates.at(static_cast<std::size_t>(pe.ep->goal_views[0]));
  const int omega = w.fov.omega;

  const StepSnapshot s = make_snapshot(pe, pe.ep->start, gv, omega);
  EXPECT_DOUBLE_EQ(s.dist_m, pe.ep->optimal_length_m);
  EXPECT_NEAR(s.yaw_err_rad,
              yaw_index_distance(pe.ep->start.yaw, gv.pose.yaw, omega) * 2.0 * std::numbers::pi / omega,
              1e-12);
  AgentPose tilted = pe.ep->start;
  tilted.pitch = 1;
  const StepSnapshot st = make_snapshot(pe, tilted, gv, omega);
  EXPECT_NEAR(st.pitch_err_rad, std::abs(1 - gv.pose.pitch) * kPitchStepRad, 1e-12);
}

TEST(EnvStream, WalksItsEpisodeSliceAndTracksPath) {
  WorldFixture& w = world();
  EnvStream env(*w.set, 0, 2, 42, Variant::PSL, RewardConfig{}, 50);
  EXPECT_EQ(&env.prepared(), &w.set->prepared(0));
  EXPECT_EQ(env.goal_vec().size(), 16);  // embedding for non-layout variants

  // immediate stop far from the goal: done, not successful, episode advances
  const auto out = env.act(Action::Stop);
  EXPECT_TRUE(out.done);
  EXPECT_FALSE(out.success);
  EXPECT_DOUBLE_EQ(out.path_length_m, 0.0);
  EXPECT_DOUBLE_EQ(out.optimal_length_m, w.set->prepared(0).ep->optimal_length_m);
  EXPECT_TRUE(env.pending_reset());
  EXPECT_EQ(&env.prepared(), &w.set->prepared(2));  // stride = n_envs

  EnvStream lo(*w.set, 1, 2, 42, Variant::LO, RewardConfig{}, 50);
  EXPECT_EQ(&lo.prepared(), &w.set->prepared(1));
  EXPECT_EQ(lo.goal_vec().size(), w.fov.n_rays);  // depth scan goal
}

TEST(EnvStream, TruncatesAtMaxStepsAndCountsMovedCells) {
  WorldFixture& w = world();
  const PreparedEpisode& pe = w.set->prepared(0);
  const int omega = w.fov.omega;

  // probe the scene for a heading at the start pose where a forward move lands
  AgentPose probe = pe.ep->start;
  int turns = 0;
  for (; turns < omega; ++turns) {
    const AgentPose fwd = step(*pe.scene, probe, Action::MoveForward, omega).pose;
    if (fwd.x != probe.x || fwd.y != probe.y) break;
    probe = step(*pe.scene, probe, Action::TurnLeft, omega).pose;
  }
  ASSERT_LT(turns, omega) << "start pose is fully walled in";

  EnvStream env(*w.set, 0, 1, 7, Variant::PSL, RewardConfig{}, turns + 1);
  for (int i = 0; i < turns; ++i) {
    const auto mid = env.act(Action::TurnLeft);
    ASSERT_FALSE(mid.done);
  }
  const auto out = env.act(Action::MoveForward);
  EXPECT_TRUE(out.done);
  EXPECT_TRUE(out.truncated);
  EXPECT_DOUBLE_EQ(out.path_length_m, kCellMeters);  // turns are free, one cell moved
  EXPECT_TRUE(env.pending_reset());

  // a blocked forward move adds no path length
  EnvStream spin(*w.set, 0, 1, 7, Variant::PSL, RewardConfig{}, 2);
  spin.act(Action::TurnLeft);
  const auto spun = spin.act(Action::TurnRight);
  EXPECT_TRUE(spun.truncated);
  EXPECT_DOUBLE_EQ(spun.path_length_m, 0.0);
}

TEST(EnvStream, DeterministicPerSeedAndIndex) {
  WorldFixture& w = world();
  EnvStream a(*w.set, 0, 2, 9, Variant::PSL, RewardConfig{}, 20);
  EnvStream b(*w.set, 0, 2, 9, Variant::PSL, RewardConfig{}, 20);
  for (int t = 0; t < 40; ++t) {
    ASSERT_TRUE(a.goal_vec() == b.goal_vec());
    const Action act = static_cast<Action>(t % 5);
    const auto oa = a.act(act);
    const auto ob = b.act(act);
    ASSERT_DOUBLE_EQ(oa.reward, ob.reward);
    ASSERT_EQ(oa.done, ob.done);
  }
}

TEST(CollectRollouts, FillsExactCapacityWithBoundaries) {
  const AgentConfig ac = small_agent();
  const AgentParams params = init_agent(ac, 15);
  const PPOConfig cfg = small_ppo();
  const RolloutBuffer buf = collect_once(params, cfg);

  EXPECT_EQ(buf.n_envs, 2);
  EXPECT_EQ(buf.horizon, 16);
  EXPECT_EQ(buf.total_steps(), 32);
  ASSERT_EQ(buf.env.size(), 2u);
  ASSERT_EQ(buf.h0.size(), 2u);
  ASSERT_EQ(buf.bootstrap_value.size(), 2u);
  for (const auto& steps : buf.env) {
    ASSERT_EQ(steps.size(), 16u);
    for (std::size_t t = 1; t < steps.size(); ++t) {
      // a reset flag appears exactly after a done transition
      ASSERT_EQ(steps[t].input.reset_hidden, steps[t - 1].done);
    }
    for (const Transition& tr : steps) {
      ASSERT_TRUE(std::isfinite(tr.logp));
      ASSERT_TRUE(std::isfinite(tr.value));
      ASSERT_TRUE(std::isfinite(tr.reward));
      ASSERT_GE(tr.action, 0);
      ASSERT_LT(tr.action, 6);
    }
  }
  EXPECT_GE(buf.stats.episodes, buf.stats.successes);
}

TEST(CollectRollouts, ThreadCountDoesNotChangeTheBuffer) {
  const AgentConfig ac = small_agent();
  const AgentParams params = init_agent(ac, 16);
  PPOConfig cfg = small_ppo();
  cfg.n_envs = 4;
  cfg.minibatches = 2;

  cfg.threads = 1;
  const RolloutBuffer a = collect_once(params, cfg);
  cfg.threads = 4;
  const RolloutBuffer b = collect_once(params, cfg);

  ASSERT_EQ(a.env.size(), b.env.size());
  for (std::size_t e = 0; e < a.env.size(); ++e) {
    for (std::size_t t = 0; t < a.env[e].size(); ++t) {
      ASSERT_EQ(a.env[e][t].action, b.env[e][t].action);
      ASSERT_DOUBLE_EQ(a.env[e][t].logp, b.env[e][t].logp);
      ASSERT_DOUBLE_EQ(a.env[e][t].value, b.env[e][t].value);
      ASSERT_DOUBLE_EQ(a.env[e][t].reward, b.env[e][t].reward);
      ASSERT_EQ(a.env[e][t].done, b.env[e][t].done);
    }
    ASSERT_DOUBLE_EQ(a.bootstrap_value[e], b.bootstrap_value[e]);
  }
}

TEST(PpoUpdate, ZeroLearningRateLeavesParamsBitIdentical) {
  const AgentConfig ac = small_agent();
  AgentParams params = init_agent(ac, 17);
  PPOConfig cfg = small_ppo();
  const RolloutBuffer buf = collect_once(params, cfg);

  cfg.learning_rate = 0.0;
  const std::vector<double> before = flatten(params);
  AdamState adam;
  Rng rng(1);
  ppo_update(buf, params, adam, cfg, rng);
  EXPECT_EQ(flatten(params), before);
}

TEST(PpoUpdate, FlatAdvantagesFreezeTheActorHead) {
  const AgentConfig ac = small_agent();
  AgentParams params = init_agent(ac, 18);
  PPOConfig cfg = small_ppo();
  cfg.entropy_coef = 0.0;
  RolloutBuffer buf = collect_once(params, cfg);
  // 0.5 is exactly representable, so mean subtraction leaves no residual;
  // a residual of even 1e-17 would be amplified to lr-sized steps by Adam.
  for (auto& a : buf.adv) std::fill(a.begin(), a.end(), 0.5);

  const Eigen::MatrixXd actor_w = params.actor_w;
  const Eigen::VectorXd actor_b = params.actor_b;
  const Eigen::MatrixXd critic_w = params.critic_w;
  AdamState adam;
  Rng rng(2);
  ppo_update(buf, params, adam, cfg, rng);

  EXPECT_TRUE(params.actor_w == actor_w);
  EXPECT_TRUE(params.actor_b == actor_b);
  EXPECT_FALSE(params.critic_w == critic_w);  // value regression still learns
}

TEST(PpoUpdate, ValueLossFallsOnAFrozenBuffer) {
  const AgentConfig ac = small_agent();
  AgentParams params = init_agent(ac, 19);
  PPOConfig cfg = small_ppo();
  cfg.entropy_coef = 0.0;
  cfg.learning_rate = 5e-3;
  RolloutBuffer buf = collect_once(params, cfg);
  for (auto& a : buf.adv) std::fill(a.begin(), a.end(), 0.0);

  AdamState adam;
  Rng rng(3);
  std::vector<double> losses;
  for (int i = 0; i < 8; ++i) losses.push_back(ppo_update(buf, params, adam, cfg, rng).value_loss);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(PpoUpdate, DeterministicGivenSeeds) {
  const AgentConfig ac = small_agent();
  const AgentParams init = init_agent(ac, 20);
  const PPOConfig cfg = small_ppo();
  const RolloutBuffer buf = collect_once(init, cfg);

  AgentParams pa = init;
  AgentParams pb = init;
  AdamState sa, sb;
  Rng ra(4), rb(4);
  const UpdateStats ua = ppo_update(buf, pa, sa, cfg, ra);
  const UpdateStats ub = ppo_update(buf, pb, sb, cfg, rb);
  EXPECT_EQ(flatten(pa), flatten(pb));
  EXPECT_DOUBLE_EQ(ua.policy_loss, ub.policy_loss);
  EXPECT_DOUBLE_EQ(ua.value_loss, ub.value_loss);
  EXPECT_DOUBLE_EQ(ua.grad_norm, ub.grad_norm);
}

TEST(PpoUpdate, ReportsFiniteDiagnostics) {
  const AgentConfig ac = small_agent();
  AgentParams params = init_agent(ac, 25);
  const PPOConfig cfg = small_ppo();
  const RolloutBuffer buf = collect_once(params, cfg);
  AdamState adam;
  Rng rng(5);
  const UpdateStats st = ppo_update(buf, params, adam, cfg, rng);
  EXPECT_TRUE(std::isfinite(st.policy_loss));
  EXPECT_TRUE(std::isfinite(st.value_loss));
  EXPECT_GE(st.value_loss, 0.0);
  EXPECT_GE(st.entropy, 0.0);
  EXPECT_LE(st.entropy, std::log(6.0) + 1e-9);
  EXPECT_GE(st.clip_fraction, 0.0);
  EXPECT_LE(st.clip_fraction, 1.0);
  EXPECT_GE(st.grad_norm, 0.0);
  EXPECT_NO_THROW(check_finite(params));
}

TEST(TrainAgent, RunsDeterministicRoundsWithProgress) {
  const AgentConfig ac = small_agent();
  PPOConfig cfg = small_ppo();
  cfg.total_env_steps = 64;  // 2 envs x 16 horizon -> 2 rounds
  int callbacks = 0;
  TrainResult a = train_agent(*world().set, ac, cfg, RewardConfig{},
                              [&](const ProgressRow&) { ++callbacks; });
  TrainResult b = train_agent(*world().set, ac, cfg, RewardConfig{});

  EXPECT_EQ(a.env_steps, 64);
  ASSERT_EQ(a.progress.size(), 2u);
  EXPECT_EQ(callbacks, 2);
  EXPECT_EQ(a.progress[0].update, 1);
  EXPECT_EQ(a.progress[1].update, 2);
  EXPECT_EQ(a.progress[1].env_steps, 64);

  EXPECT_EQ(flatten(a.params), flatten(b.params));
  ASSERT_EQ(b.progress.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(a.progress[i].value_loss, b.progress[i].value_loss);
    EXPECT_DOUBLE_EQ(a.progress[i].sr, b.progress[i].sr);
    EXPECT_DOUBLE_EQ(a.progress[i].mean_return, b.progress[i].mean_return);
  }
}

}  // namespace
}  // namespace psl
