#pragma once

#include <stdexcept>
#include <string>

#include "psl/serialize.hpp"

// One JSON document configures a whole run (scene generation through
// training and evaluation). Unknown keys are rejected everywhere, and
// cross-section consistency (embedding widths, ray counts, yaw divisions) is
// validated up front rather than failing deep inside a run.

namespace psl {

struct RunConfig {
  std::uint64_t seed = 0;
  SemanticSpaceConfig semspace;
  SceneGenConfig scene_gen;
  FovConfig fov;
  EpisodeConfig episodes;
  RewardConfig reward;
  AgentConfig agent;
  PPOConfig ppo;

  void validate() const {
    agent.validate();
    ppo.validate();
    if (agent.embed_dim != semspace.dim) {
      throw std::invalid_argument("config: agent.embed_dim must equal semspace.dim");
    }
    if (agent.n_rays != fov.n_rays) {
      throw std::invalid_argument("config: agent.n_rays must equal fov.n_rays");
    }
    if (episodes.yaw_divisions != fov.omega) {
      throw std::invalid_argument("config: episodes.yaw_divisions must equal fov.omega");
    }
    if (episodes.min_optimal_m > episodes.max_optimal_m) {
      throw std::invalid_argument("config: episodes.min_optimal_m > max_optimal_m");
    }
    if (episodes.k_pick > episodes.k_pool) {
      throw std::invalid_argument("config: episodes.k_pick > k_pool");
    }
    if (reward.dist_threshold_m <= 0.0 || reward.success_radius_m < 0.0) {
      throw std::invalid_argument("config: reward thresholds must be positive");
    }
  }
};

inline json scene_gen_config_to_json(const SceneGenConfig& c) {
  return json{{"rooms", c.rooms},
              {"min_size", c.min_size},
              {"max_size", c.max_size},
              {"objects_per_room", c.objects_per_room},
              {"min_duplicate_categories", c.min_duplicate_categories},
              {"viewpoint_radius_m", num(c.viewpoint_radius_m)},
              {"context_radius_m", num(c.context_radius_m)}};
}

inline SceneGenConfig scene_gen_config_from_json(const json& j) {
  expect_keys(j,
              {"rooms", "min_size", "max_size", "objects_per_room", "min_duplicate_categories",
               "viewpoint_radius_m", "context_radius_m"},
              "scene_gen config");
  SceneGenConfig c;
  maybe_get(j, "rooms", c.rooms);
  maybe_get(j, "min_size", c.min_size);
  maybe_get(j, "max_size", c.max_size);
  maybe_get(j, "objects_per_room", c.objects_per_room);
  maybe_get(j, "min_duplicate_categories", c.min_duplicate_categories);
  maybe_get(j, "viewpoint_radius_m", c.viewpoint_radius_m);
  maybe_get(j, "context_radius_m", c.context_radius_m);
  return c;
}

inline json fov_config_to_json(const FovConfig& c) {
  return json{{"n_rays", c.n_rays},
              {"fov_rad", num(c.fov_rad)},
              {"max_range_m", num(c.max_range_m)},
              {"omega", c.omega}};
}

inline FovConfig fov_config_from_json(const json& j) {
  expect_keys(j, {"n_rays", "fov_rad", "max_range_m", "omega"}, "fov config");
  FovConfig c;
  maybe_get(j, "n_rays", c.n_rays);
  maybe_get(j, "fov_rad", c.fov_rad);
  maybe_get(j, "max_range_m", c.max_range_m);
  maybe_get(j, "omega", c.omega);
  return c;
}

inline json episode_config_to_json(const EpisodeConfig& c) {
  return json{{"min_optimal_m", num(c.min_optimal_m)},
              {"max_optimal_m", num(c.max_optimal_m)},
              {"selection", c.selection == GoalSelection::Entropy ? "entropy" : "random"},
              {"k_pool", c.k_pool},
              {"k_pick", c.k_pick},
              {"yaw_divisions", c.yaw_divisions},
              {"pitch_levels", c.pitch_levels},
              {"ambiguous_entropy", num(c.ambiguous_entropy)},
              {"max_attempts", c.max_attempts}};
}

inline EpisodeConfig episode_config_from_json(const json& j) {
  expect_keys(j,
              {"min_optimal_m", "max_optimal_m", "selection", "k_pool", "k_pick", "yaw_divisions",
               "pitch_levels", "ambiguous_entropy", "max_attempts"},
              "episodes config");
  EpisodeConfig c;
  maybe_get(j, "min_optimal_m", c.min_optimal_m);
  maybe_get(j, "max_optimal_m", c.max_optimal_m);
  if (j.contains("selection")) {
    const std::string s = j.at("selection").get<std::string>();
    if (s == "entropy") {
      c.selection = GoalSelection::Entropy;
    } else if (s == "random") {
      c.selection = GoalSelection::Random;
    } else {
      throw std::runtime_error("episodes config: selection must be entropy|random");
    }
  }
  maybe_get(j, "k_pool", c.k_pool);
  maybe_get(j, "k_pick", c.k_pick);
  maybe_get(j, "yaw_divisions", c.yaw_divisions);
  maybe_get(j, "pitch_levels", c.pitch_levels);
  maybe_get(j, "ambiguous_entropy", c.ambiguous_entropy);
  maybe_get(j, "max_attempts", c.max_attempts);
  return c;
}

inline json reward_config_to_json(const RewardConfig& c) {
  return json{{"success_reward", num(c.success_reward)},
              {"dist_threshold_m", num(c.dist_threshold_m)},
              {"angle_threshold_rad", num(c.angle_threshold_rad)},
              {"delay_penalty", num(c.delay_penalty)},
              {"success_radius_m", num(c.success_radius_m)},
              {"mode", c.mode == RewardMode::Relaxed ? "relaxed" : "strict"}};
}

inline RewardConfig reward_config_from_json(const json& j) {
  expect_keys(j,
              {"success_reward", "dist_threshold_m", "angle_threshold_rad", "delay_penalty",
               "success_radius_m", "mode"},
              "reward config");
  RewardConfig c;
  maybe_get(j, "success_reward", c.success_reward);
  maybe_get(j, "dist_threshold_m", c.dist_threshold_m);
  maybe_get(j, "angle_threshold_rad", c.angle_threshold_rad);
  maybe_get(j, "delay_penalty", c.delay_penalty);
  maybe_get(j, "success_radius_m", c.success_radius_m);
  if (j.contains("mode")) {
    const std::string s = j.at("mode").get<std::string>();
    if (s == "relaxed") {
      c.mode = RewardMode::Relaxed;
    } else if (s == "strict") {
      c.mode = RewardMode::Strict;
    } else {
      throw std::runtime_error("reward config: mode must be relaxed|strict");
    }
  }
  return c;
}

inline json ppo_config_to_json(const PPOConfig& c) {
  return json{{"n_envs", c.n_envs},
              {"horizon", c.horizon},
              {"total_env_steps", c.total_env_steps},
              {"learning_rate", num(c.learning_rate)},
              {"clip_epsilon", num(c.clip_epsilon)},
              {"discount", num(c.discount)},
              {"gae_lambda", num(c.gae_lambda)},
              {"epochs", c.epochs},
              {"minibatches", c.minibatches},
              {"value_coef", num(c.value_coef)},
              {"entropy_coef", num(c.entropy_coef)},
              {"max_grad_norm", num(c.max_grad_norm)},
              {"max_episode_steps", c.max_episode_steps}};
}

inline PPOConfig ppo_config_from_json(const json& j) {
  expect_keys(j,
              {"n_envs", "horizon", "total_env_steps", "learning_rate", "clip_epsilon", "discount",
               "gae_lambda", "epochs", "minibatches", "value_coef", "entropy_coef", "max_grad_norm",
               "max_episode_steps"},
              "ppo config");
  PPOConfig c;
  maybe_get(j, "n_envs", c.n_envs);
  maybe_get(j, "horizon", c.horizon);
  maybe_get(j, "total_env_steps", c.total_env_steps);
  maybe_get(j, "learning_rate", c.learning_rate);
  maybe_get(j, "clip_epsilon", c.clip_epsilon);
  maybe_get(j, "discount", c.discount);
  maybe_get(j, "gae_lambda", c.gae_lambda);
  maybe_get(j, "epochs", c.epochs);
  maybe_get(j, "minibatches", c.minibatches);
  maybe_get(j, "value_coef", c.value_coef);
  maybe_get(j, "entropy_coef", c.entropy_coef);
  maybe_get(j, "max_grad_norm", c.max_grad_norm);
  maybe_get(j, "max_episode_steps", c.max_episode_steps);
  return c;
}

inline json run_config_to_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"semspace", semspace_config_to_json(c.semspace)},
              {"scene_gen", scene_gen_config_to_json(c.scene_gen)},
              {"fov", fov_config_to_json(c.fov)},
              {"episodes", episode_config_to_json(c.episodes)},
              {"reward", reward_config_to_json(c.reward)},
              {"agent", agent_config_to_json(c.agent)},
              {"ppo", ppo_config_to_json(c.ppo)}};
}

inline RunConfig run_config_from_json(const json& j) {
  expect_keys(j, {"seed", "semspace", "scene_gen", "fov", "episodes", "reward", "agent", "ppo"},
              "run config");
  RunConfig c;
  maybe_get(j, "seed", c.seed);
  if (j.contains("semspace")) c.semspace = semspace_config_from_json(j.at("semspace"));
  if (j.contains("scene_gen")) c.scene_gen = scene_gen_config_from_json(j.at("scene_gen"));
  if (j.contains("fov")) c.fov = fov_config_from_json(j.at("fov"));
  if (j.contains("episodes")) c.episodes = episode_config_from_json(j.at("episodes"));
  if (j.contains("reward")) c.reward = reward_config_from_json(j.at("reward"));
  if (j.contains("agent")) c.agent = agent_config_from_json(j.at("agent"));
  if (j.contains("ppo")) c.ppo = ppo_config_from_json(j.at("ppo"));
  // keep the dependent widths in sync unless the file pinned them explicitly
  if (!j.contains("agent") || !j.at("agent").contains("embed_dim")) c.agent.embed_dim = c.semspace.dim;
  if (!j.contains("agent") || !j.at("agent").contains("n_rays")) c.agent.n_rays = c.fov.n_rays;
  if (!j.contains("episodes") || !j.at("episodes").contains("yaw_divisions")) {
    c.episodes.yaw_divisions = c.fov.omega;
  }
  c.ppo.seed = c.seed;
  if (!j.contains("semspace") || !j.at("semspace").contains("seed")) {
    c.semspace.seed = derive_seed(c.seed, "semspace");
  }
  c.validate();
  return c;
}

}  // namespace psl
