#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "psl/agent.hpp"
#include "psl/episodes.hpp"
#include "psl/reward.hpp"
#include "psl/semspace.hpp"
#include "psl/world.hpp"

// On-policy training: a bank of gridworld environments advances in lockstep
// with the recurrent policy, rollouts are scored with GAE, and updates are
// clipped-surrogate policy gradient steps over whole environment sequences
// (minibatching splits environments, never time, so the recurrent state is
// always replayed from a true sequence start).

namespace psl {

struct PPOConfig {
  int n_envs = 8;
  int horizon = 128;              // steps per env per rollout
  long long total_env_steps = 200000;
  double learning_rate = 2.5e-4;
  double clip_epsilon = 0.2;
  double discount = 0.99;
  double gae_lambda = 0.95;
  int epochs = 4;
  int minibatches = 4;            // environment groups per epoch
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_episode_steps = 200;    // truncation horizon
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const {
    if (n_envs < 1) throw std::invalid_argument("ppo: n_envs must be >= 1");
    if (horizon < 1) throw std::invalid_argument("ppo: horizon must be >= 1");
    if (minibatches < 1 || n_envs % minibatches != 0) {
      throw std::invalid_argument("ppo: minibatches must divide n_envs");
    }
    if (clip_epsilon <= 0.0) throw std::invalid_argument("ppo: clip_epsilon must be > 0");
    if (discount < 0.0 || discount > 1.0) throw std::invalid_argument("ppo: discount outside [0, 1]");
    if (gae_lambda < 0.0 || gae_lambda > 1.0) throw std::invalid_argument("ppo: gae_lambda outside [0, 1]");
    if (epochs < 1) throw std::invalid_argument("ppo: epochs must be >= 1");
    if (learning_rate < 0.0) throw std::invalid_argument("ppo: learning_rate must be >= 0");
    if (max_episode_steps < 1) throw std::invalid_argument("ppo: max_episode_steps must be >= 1");
    if (threads < 1) throw std::invalid_argument("ppo: threads must be >= 1");
  }
};

// Reward actually paid during training: dense shaping every step, the success
// bonuses only on the step where the agent commits by stopping. Paying the
// bonuses every in-range step would make hovering forever the optimal policy.
inline double train_step_reward(const StepSnapshot& prev, const StepSnapshot& cur, bool stopped,
                                const RewardConfig& cfg) {
  const RewardTerms t = step_reward_terms(prev, cur, cfg);
  double r = t.dense_dist + t.dense_angle + t.delay;
  if (stopped) r += t.success_dist + t.success_angle;
  return r;
}

// --- prepared episode bank ----------------------------------------------------

// Everything per episode that is static across rollouts: distance field to
// the goal's viewpoints, goal vectors per selected view (semantic embedding
// and goal-view depth scan), and the scene render cache.
struct PreparedEpisode {
  const Episode* ep = nullptr;
  const Scene* scene = nullptr;
  const RenderCache* cache = nullptr;
  const std::vector<double>* dist_field = nullptr;
  std::vector<Embedding> goal_embeddings;       // per selected goal view
  std::vector<Eigen::VectorXd> goal_layouts;    // per selected goal view
};

class EpisodeSet {
 public:
  EpisodeSet(std::vector<Scene> scenes, std::vector<Episode> episodes, const Codebook& cb,
             const FovConfig& fov)
      : codebook_(&cb), fov_(fov), episodes_(std::move(episodes)) {
    if (episodes_.empty()) throw std::invalid_argument("episode set: no episodes");
    for (Scene& s : scenes) {
      const std::string id = s.id;
      if (!scenes_.emplace(id, std::move(s)).second) {
        throw std::invalid_argument("episode set: duplicate scene id '" + id + "'");
      }
    }
    for (auto& [id, scene] : scenes_) caches_.emplace(id, build_render_cache(scene, cb));

    prepared_.reserve(episodes_.size());
    for (const Episode& ep : episodes_) {
      auto sit = scenes_.find(ep.scene_id);
      if (sit == scenes_.end()) {
        throw std::invalid_argument("episode set: episode '" + ep.episode_id + "' references unknown scene '" +
                                    ep.scene_id + "'");
      }
      const Scene& scene = sit->second;
      const std::string field_key = ep.scene_id + "/" + ep.goal_instance;
      auto fit = fields_.find(field_key);
      if (fit == fields_.end()) {
        fit = fields_.emplace(field_key, distance_field(scene, scene.viewpoints.at(ep.goal_instance))).first;
      }
      PreparedEpisode pe;
      pe.ep = &ep;
      pe.scene = &scene;
      pe.cache = &caches_.at(ep.scene_id);
      pe.dist_field = &fit->second;
      for (int idx : ep.goal_views) {
        const ViewCandidate& v = ep.all_candidates.at(static_cast<std::size_t>(idx));
        pe.goal_embeddings.push_back(v.embedding);
        pe.goal_layouts.push_back(render(*pe.cache, v.pose, fov_).layout);
      }
      if (pe.goal_embeddings.empty()) {
        throw std::invalid_argument("episode set: episode '" + ep.episode_id + "' has no goal views");
      }
      prepared_.push_back(std::move(pe));
    }
  }

  EpisodeSet(const EpisodeSet&) = delete;
  EpisodeSet& operator=(const EpisodeSet&) = delete;

  std::size_t size() const { return prepared_.size(); }
  const PreparedEpisode& prepared(std::size_t i) const { return prepared_[i]; }
  const Codebook& codebook() const { return *codebook_; }
  const FovConfig& fov() const { return fov_; }
  const std::vector<Episode>& episodes() const { return episodes_; }
  const Scene& scene(const std::string& id) const { return scenes_.at(id); }
  const RenderCache& cache(const std::string& id) const { return caches_.at(id); }

 private:
  const Codebook* codebook_;
  FovConfig fov_;
  std::vector<Episode> episodes_;
  std::map<std::string, Scene> scenes_;
  std::map<std::string, RenderCache> caches_;
  std::map<std::string, std::vector<double>> fields_;  // scene/instance -> meters
  std::vector<PreparedEpisode> prepared_;
};

inline StepSnapshot make_snapshot(const PreparedEpisode& pe, const AgentPose& pose,
                                  const ViewCandidate& goal_view, int omega) {
  const Cell c = cell_of(pose);
  StepSnapshot s;
  s.dist_m = (*pe.dist_field)[static_cast<std::size_t>(c.y) * pe.scene->width + c.x];
  s.yaw_err_rad = yaw_index_distance(pose.yaw, goal_view.pose.yaw, omega) * 2.0 * std::numbers::pi / omega;
  s.pitch_err_rad = std::abs(pose.pitch - goal_view.pose.pitch) * kPitchStepRad;
  return s;
}

// --- environment stream ---------------------------------------------------------

// One sequential stream of episodes. Deterministic given (episode set, seed,
// env index): env i plays episodes i, i+n_envs, i+2*n_envs, ... so a bank of
// streams covers the set independent of thread layout.
class EnvStream {
 public:
  EnvStream(const EpisodeSet& set, int env_index, int n_envs, std::uint64_t seed, Variant variant,
            const RewardConfig& reward, int max_episode_steps)
      : set_(&set),
        rng_(derive_seed(seed, "env:" + std::to_string(env_index))),
        cursor_(static_cast<std::size_t>(env_index) % set.size()),
        stride_(static_cast<std::size_t>(n_envs)),
        variant_(variant),
        reward_(reward),
        max_steps_(max_episode_steps) {
    reset();
  }

  const PreparedEpisode& prepared() const { return *pe_; }
  const Eigen::VectorXd& goal_vec() const { return *goal_vec_; }
  const AgentPose& pose() const { return pose_; }
  const StepSnapshot& snapshot() const { return snap_; }
  bool pending_reset() const { return pending_reset_; }
  int episode_steps() const { return t_; }

  Observation observe() const { return render(*pe_->cache, pose_, set_->fov()); }

  struct StepOutcome {
    double reward = 0.0;
    bool done = false;
    bool success = false;
    bool truncated = false;
    double path_length_m = 0.0;    // filled at episode end
    double optimal_length_m = 0.0; // filled at episode end
  };

  // Advance by one action; on episode end the stream resets itself and the
  // next observe() starts the following episode.
  StepOutcome act(Action a) {
    pending_reset_ = false;
    StepOutcome out;
    const int omega = set_->fov().omega;
    if (a == Action::Stop) {
      out.reward = train_step_reward(snap_, snap_, true, reward_);
      out.done = true;
      out.success = success_test(snap_, true, reward_);
    } else {
      const AgentPose before = pose_;
      pose_ = step(*pe_->scene, pose_, a, omega).pose;
      if (a == Action::MoveForward && (pose_.x != before.x || pose_.y != before.y)) {
        path_m_ += kCellMeters;
      }
      const StepSnapshot next = make_snapshot(*pe_, pose_, goal_view(), omega);
      out.reward = train_step_reward(snap_, next, false, reward_);
      snap_ = next;
      ++t_;
      if (t_ >= max_steps_) {
        out.done = true;
        out.truncated = true;
      }
    }
    if (out.done) {
      out.path_length_m = path_m_;
      out.optimal_length_m = pe_->ep->optimal_length_m;
      reset();
      pending_reset_ = true;
    }
    return out;
  }

 private:
  const ViewCandidate& goal_view() const {
    return pe_->ep->all_candidates.at(
        static_cast<std::size_t>(pe_->ep->goal_views.at(static_cast<std::size_t>(goal_slot_))));
  }

  void reset() {
    pe_ = &set_->prepared(cursor_);
    cursor_ = (cursor_ + stride_) % set_->size();
    goal_slot_ = rng_.uniform_index(static_cast<int>(pe_->goal_embeddings.size()));
    goal_vec_ = variant_ == Variant::LO ? &pe_->goal_layouts[static_cast<std::size_t>(goal_slot_)]
                                        : &pe_->goal_embeddings[static_cast<std::size_t>(goal_slot_)];
    pose_ = pe_->ep->start;
    snap_ = make_snapshot(*pe_, pose_, goal_view(), set_->fov().omega);
    t_ = 0;
    path_m_ = 0.0;
  }

  const EpisodeSet* set_;
  Rng rng_;
  std::size_t cursor_;
  std::size_t stride_;
  Variant variant_;
  RewardConfig reward_;
  int max_steps_;

  const PreparedEpisode* pe_ = nullptr;
  int goal_slot_ = 0;
  const Eigen::VectorXd* goal_vec_ = nullptr;
  AgentPose pose_;
  StepSnapshot snap_;
  int t_ = 0;
  double path_m_ = 0.0;
  bool pending_reset_ = true;
};

// --- rollout storage ------------------------------------------------------------

struct Transition {
  StepInput input;  // observation, goal, previous action, reset flag
  int action = 0;
  double logp = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

struct EpisodeStats {
  int episodes = 0;
  int successes = 0;
  double sum_return = 0.0;
  double sum_spl = 0.0;
  double sum_steps = 0.0;

  double sr() const { return episodes > 0 ? static_cast<double>(successes) / episodes : 0.0; }
  double spl() const { return episodes > 0 ? sum_spl / episodes : 0.0; }
};

struct RolloutBuffer {
  int n_envs = 0;
  int horizon = 0;
  std::vector<std::vector<Transition>> env;  // [n_envs][horizon]
  std::vector<Eigen::VectorXd> h0;           // recurrent state at buffer start
  std::vector<double> bootstrap_value;       // V(s_T) per env
  std::vector<std::vector<double>> adv, ret; // filled by compute_gae
  EpisodeStats stats;

  long long total_steps() const { return static_cast<long long>(n_envs) * horizon; }
};

namespace detail {

// map an env-parallel body over [0, n) with a fixed per-env partition; the
// per-env work never shares mutable state, so thread count cannot change
// results
template <typename F>
void parallel_envs(int n, int threads, F&& body) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Roll every env forward `horizon` steps under the sampling policy.
// `states` carries the recurrent state across successive calls.
inline RolloutBuffer collect_rollouts(std::vector<EnvStream>& envs, std::vector<PolicyState>& states,
                                      std::vector<Rng>& action_rngs, const AgentParams& params,
                                      const PPOConfig& cfg) {
  const int n = static_cast<int>(envs.size());
  RolloutBuffer buf;
  buf.n_envs = n;
  buf.horizon = cfg.horizon;
  buf.env.resize(static_cast<std::size_t>(n));
  buf.h0.resize(static_cast<std::size_t>(n));
  buf.bootstrap_value.resize(static_cast<std::size_t>(n));
  std::vector<EpisodeStats> env_stats(static_cast<std::size_t>(n));
  std::vector<double> episode_return(static_cast<std::size_t>(n), 0.0);

  detail::parallel_envs(n, cfg.threads, [&](int e) {
    EnvStream& env = envs[static_cast<std::size_t>(e)];
    PolicyState& st = states[static_cast<std::size_t>(e)];
    Rng& arng = action_rngs[static_cast<std::size_t>(e)];
    auto& steps = buf.env[static_cast<std::size_t>(e)];
    steps.reserve(static_cast<std::size_t>(cfg.horizon));
    buf.h0[static_cast<std::size_t>(e)] = st.hidden;

    for (int t = 0; t < cfg.horizon; ++t) {
      Transition tr;
      tr.input.reset_hidden = env.pending_reset();
      if (tr.input.reset_hidden) {
        st.hidden.setZero();
        st.prev_action.setZero();
      }
      const Observation obs = env.observe();
      tr.input.layout = obs.layout;
      tr.input.semantic = obs.semantic;
      tr.input.goal = env.goal_vec();
      tr.input.prev_action = st.prev_action;

      const PolicyOutput out = policy_step(params, obs, tr.input.goal, st);
      tr.action = sample_action(out.logits, arng);
      tr.logp = action_log_prob(out.logits, tr.action);
      tr.value = out.value;
      st.prev_action = one_hot_action(tr.action);

      const EnvStream::StepOutcome res = env.act(static_cast<Action>(tr.action));
      tr.reward = res.reward;
      tr.done = res.done;
      episode_return[static_cast<std::size_t>(e)] += res.reward;
      if (res.done) {
        EpisodeStats& s = env_stats[static_cast<std::size_t>(e)];
        s.episodes += 1;
        s.successes += res.success ? 1 : 0;
        s.sum_return += episode_return[static_cast<std::size_t>(e)];
        s.sum_steps += env.episode_steps();
        if (res.success) {
          const double l = std::max(res.path_length_m, res.optimal_length_m);
          s.sum_spl += res.optimal_length_m <= 0.0 ? 1.0 : res.optimal_length_m / std::max(l, 1e-9);
        }
        episode_return[static_cast<std::size_t>(e)] = 0.0;
      }
      steps.push_back(std::move(tr));
    }

    // bootstrap for GAE: value of the state after the last stored step
    if (env.pending_reset()) {
      buf.bootstrap_value[static_cast<std::size_t>(e)] = 0.0;  // fresh episode; last step was terminal
    } else {
      PolicyState peek = st;
      const Observation obs = env.observe();
      buf.bootstrap_value[static_cast<std::size_t>(e)] = policy_step(params, obs, env.goal_vec(), peek).value;
    }
  });

  for (const EpisodeStats& s : env_stats) {
    buf.stats.episodes += s.episodes;
    buf.stats.successes += s.successes;
    buf.stats.sum_return += s.sum_return;
    buf.stats.sum_spl += s.sum_spl;
    buf.stats.sum_steps += s.sum_steps;
  }
  return buf;
}

// Generalized advantage estimation, computed per env stream.
inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  buf.adv.assign(static_cast<std::size_t>(buf.n_envs), {});
  buf.ret.assign(static_cast<std::size_t>(buf.n_envs), {});
  for (int e = 0; e < buf.n_envs; ++e) {
    const auto& steps = buf.env[static_cast<std::size_t>(e)];
    auto& adv = buf.adv[static_cast<std::size_t>(e)];
    auto& ret = buf.ret[static_cast<std::size_t>(e)];
    adv.assign(steps.size(), 0.0);
    ret.assign(steps.size(), 0.0);
    double carry = 0.0;
    for (int t = static_cast<int>(steps.size()) - 1; t >= 0; --t) {
      const Transition& tr = steps[static_cast<std::size_t>(t)];
      const double nonterminal = tr.done ? 0.0 : 1.0;
      const double next_value = t + 1 < static_cast<int>(steps.size())
                                    ? steps[static_cast<std::size_t>(t + 1)].value
                                    : buf.bootstrap_value[static_cast<std::size_t>(e)];
      const double delta = tr.reward + gamma * next_value * nonterminal - tr.value;
      carry = delta + gamma * lambda * nonterminal * carry;
      adv[static_cast<std::size_t>(t)] = carry;
      ret[static_cast<std::size_t>(t)] = carry + tr.value;
    }
  }
}

// --- optimization -----------------------------------------------------------------

struct AdamState {
  std::map<std::string, std::pair<Eigen::VectorXd, Eigen::VectorXd>> slots;  // first/second moments
  long long step_count = 0;
};

namespace detail {

struct ParamView {
  std::string name;
  double* data;
  Eigen::Index size;
};

template <typename Params>
std::vector<ParamView> param_views(Params& p) {
  std::vector<ParamView> out;
  for_each_param(p, [&](const std::string& name, auto& m) {
    out.push_back(ParamView{name, m.data(), m.size()});
  });
  return out;
}

}  // namespace detail

inline double global_grad_norm(AgentParams& grads) {
  double sq = 0.0;
  for_each_param(grads, [&](const std::string&, auto& m) { sq += m.squaredNorm(); });
  return std::sqrt(sq);
}

inline void clip_grad_norm(AgentParams& grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for_each_param(grads, [&](const std::string&, auto& m) { m *= scale; });
  }
}

inline void adam_step(AgentParams& params, AgentParams& grads, AdamState& state, const PPOConfig& cfg) {
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step_count));
  auto pv = detail::param_views(params);
  auto gv = detail::param_views(grads);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    auto& slot = state.slots[pv[i].name];
    Eigen::Map<Eigen::VectorXd> p(pv[i].data, pv[i].size);
    Eigen::Map<const Eigen::VectorXd> g(gv[i].data, gv[i].size);
    if (slot.first.size() != pv[i].size) {
      slot.first = Eigen::VectorXd::Zero(pv[i].size);
      slot.second = Eigen::VectorXd::Zero(pv[i].size);
    }
    slot.first = cfg.adam_beta1 * slot.first + (1.0 - cfg.adam_beta1) * g;
    slot.second = cfg.adam_beta2 * slot.second.array().matrix() +
                  (1.0 - cfg.adam_beta2) * g.array().square().matrix();
    const Eigen::ArrayXd mhat = slot.first.array() / bc1;
    const Eigen::ArrayXd vhat = slot.second.array() / bc2;
    p.array() -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
  }
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;  // pre-clip, averaged over minibatches
};

// Clipped-surrogate objective for one transition: min(ratio*adv, clip(ratio)*adv)
// and its derivative in the ratio, which vanishes when the clipped branch is
// active because clip() is flat there.
struct Surrogate {
  double objective = 0.0;
  double dratio = 0.0;
  bool clipped = false;  // ratio outside [1-eps, 1+eps]
};

inline Surrogate clipped_surrogate(double ratio, double advantage, double clip_epsilon) {
  const double surr1 = ratio * advantage;
  const double surr2 = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage;
  Surrogate s;
  s.objective = std::min(surr1, surr2);
  s.dratio = surr1 <= surr2 ? advantage : 0.0;
  s.clipped = std::abs(ratio - 1.0) > clip_epsilon;
  return s;
}

// One PPO update over the buffer: `epochs` passes, each pass visiting every
// env sequence once in shuffled minibatch groups. Advantages are normalized
// across the whole buffer.
inline UpdateStats ppo_update(const RolloutBuffer& buf, AgentParams& params, AdamState& adam,
                              const PPOConfig& cfg, Rng& rng) {
  double adv_mean = 0.0;
  double adv_sq = 0.0;
  const double n_total = static_cast<double>(buf.total_steps());
  for (const auto& a : buf.adv) {
    for (double v : a) {
      adv_mean += v;
      adv_sq += v * v;
    }
  }
  adv_mean /= n_total;
  const double adv_std = std::sqrt(std::max(adv_sq / n_total - adv_mean * adv_mean, 0.0));

  UpdateStats stats;
  int stat_count = 0;
  const int group = buf.n_envs / cfg.minibatches;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(buf.n_envs));
    for (int i = 0; i < buf.n_envs; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);

    for (int mb = 0; mb < cfg.minibatches; ++mb) {
      AgentParams grads = zeros_like(params);
      const double inv_n = 1.0 / (static_cast<double>(group) * buf.horizon);
      double mb_pg = 0.0, mb_v = 0.0, mb_ent = 0.0, mb_clip = 0.0, mb_kl = 0.0;

      for (int gi = 0; gi < group; ++gi) {
        const int e = order[static_cast<std::size_t>(mb * group + gi)];
        const auto& steps = buf.env[static_cast<std::size_t>(e)];
        std::vector<StepInput> inputs;
        inputs.reserve(steps.size());
        for (const Transition& tr : steps) inputs.push_back(tr.input);
        const std::vector<StepTrace> traces =
            forward_sequence(params, inputs, buf.h0[static_cast<std::size_t>(e)]);

        std::vector<Eigen::VectorXd> dlogits(steps.size());
        std::vector<double> dvalue(steps.size());
        for (std::size_t t = 0; t < steps.size(); ++t) {
          const Transition& tr = steps[t];
          const Eigen::VectorXd logp_all = log_softmax(traces[t].logits);
          const Eigen::ArrayXd probs = logp_all.array().exp();
          const double logp_new = logp_all[tr.action];
          const double adv_raw = buf.adv[static_cast<std::size_t>(e)][t];
          const double adv = (adv_raw - adv_mean) / (adv_std + 1e-8);
          const double ratio = std::exp(logp_new - tr.logp);
          const Surrogate surr = clipped_surrogate(ratio, adv, cfg.clip_epsilon);

          // d(-objective)/d logp_new = -dratio * ratio (d ratio/d logp = ratio)
          const double pg_coeff = surr.dratio * ratio;
          Eigen::VectorXd dl = Eigen::VectorXd::Zero(params.config.n_actions);
          dl -= pg_coeff * (one_hot_action(tr.action) - probs.matrix());

          // entropy bonus: d(-c*H)/d logits
          const double ent = -(probs * logp_all.array()).sum();
          dl += cfg.entropy_coef * (probs * (logp_all.array() + ent)).matrix();

          dlogits[t] = dl * inv_n;
          const double v_err = traces[t].value - buf.ret[static_cast<std::size_t>(e)][t];
          dvalue[t] = cfg.value_coef * v_err * inv_n;  // from 0.5 * c * (V - R)^2

          mb_pg += -surr.objective;
          mb_v += 0.5 * v_err * v_err;
          mb_ent += ent;
          mb_clip += surr.clipped ? 1.0 : 0.0;
          mb_kl += tr.logp - logp_new;
        }
        backward_sequence(params, inputs, traces, dlogits, dvalue, grads);
      }

      stats.grad_norm += global_grad_norm(grads);
      clip_grad_norm(grads, cfg.max_grad_norm);
      adam_step(params, grads, adam, cfg);

      const double inv = inv_n;
      stats.policy_loss += mb_pg * inv;
      stats.value_loss += mb_v * inv;
      stats.entropy += mb_ent * inv;
      stats.clip_fraction += mb_clip * inv;
      stats.approx_kl += mb_kl * inv;
      ++stat_count;
    }
  }

  const double inv_mb = 1.0 / std::max(stat_count, 1);
  stats.policy_loss *= inv_mb;
  stats.value_loss *= inv_mb;
  stats.entropy *= inv_mb;
  stats.clip_fraction *= inv_mb;
  stats.approx_kl *= inv_mb;
  stats.grad_norm *= inv_mb;
  check_finite(params);
  return stats;
}

// --- full training loop --------------------------------------------------------------

struct ProgressRow {
  long long env_steps = 0;
  int update = 0;
  int episodes = 0;
  double sr = 0.0;
  double spl = 0.0;
  double mean_return = 0.0;
  double mean_steps = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

struct TrainResult {
  AgentParams params;
  std::vector<ProgressRow> progress;
  long long env_steps = 0;
};

inline TrainResult train_agent(const EpisodeSet& set, const AgentConfig& acfg, const PPOConfig& cfg,
                               const RewardConfig& reward,
                               const std::function<void(const ProgressRow&)>& on_progress = {}) {
  acfg.validate();
  cfg.validate();
  TrainResult result;
  result.params = init_agent(acfg, cfg.seed);

  std::vector<EnvStream> envs;
  std::vector<PolicyState> states;
  std::vector<Rng> action_rngs;
  envs.reserve(static_cast<std::size_t>(cfg.n_envs));
  for (int e = 0; e < cfg.n_envs; ++e) {
    envs.emplace_back(set, e, cfg.n_envs, cfg.seed, acfg.variant, reward, cfg.max_episode_steps);
    states.push_back(initial_policy_state(acfg));
    action_rngs.emplace_back(derive_seed(cfg.seed, "actions:" + std::to_string(e)));
  }
  Rng update_rng(derive_seed(cfg.seed, "ppo-update"));
  AdamState adam;

  const long long steps_per_round = static_cast<long long>(cfg.n_envs) * cfg.horizon;
  const long long rounds = (cfg.total_env_steps + steps_per_round - 1) / steps_per_round;
  for (long long round = 0; round < rounds; ++round) {
    RolloutBuffer buf = collect_rollouts(envs, states, action_rngs, result.params, cfg);
    compute_gae(buf, cfg.discount, cfg.gae_lambda);
    const UpdateStats st = ppo_update(buf, result.params, adam, cfg, update_rng);
    result.env_steps += steps_per_round;

    ProgressRow row;
    row.env_steps = result.env_steps;
    row.update = static_cast<int>(round) + 1;
    row.episodes = buf.stats.episodes;
    row.sr = buf.stats.sr();
    row.spl = buf.stats.spl();
    row.mean_return = buf.stats.episodes > 0 ? buf.stats.sum_return / buf.stats.episodes : 0.0;
    row.mean_steps = buf.stats.episodes > 0 ? buf.stats.sum_steps / buf.stats.episodes : 0.0;
    row.policy_loss = st.policy_loss;
    row.value_loss = st.value_loss;
    row.entropy = st.entropy;
    row.clip_fraction = st.clip_fraction;
    row.grad_norm = st.grad_norm;
    result.progress.push_back(row);
    if (on_progress) on_progress(row);
  }
  return result;
}

}  // namespace psl
