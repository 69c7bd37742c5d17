#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "psl/rng.hpp"
#include "psl/world.hpp"

// Recurrent actor-critic over gridworld observations, written directly in
// Eigen with hand-derived gradients (double precision everywhere, so the
// finite-difference checks in the tests are meaningful).
//
// Four agent variants share the same recurrent core and heads; they differ in
// what feeds the core:
//   PSL   observation encoder on layout+semantic, goal passed through a
//         bottleneck MLP together with the current semantic embedding
//   ZSON  same observation encoder, goal passed through unchanged
//   LO    layout-only: encoder sees just the depth scan, goal is the goal
//         view's depth scan
//   SO    semantic-only: no encoder, the raw semantic embedding is the
//         observation code (frozen path), goal passed through unchanged

namespace psl {

enum class Variant { PSL, ZSON, LO, SO };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::PSL: return "psl";
    case Variant::ZSON: return "zson";
    case Variant::LO: return "lo";
    case Variant::SO: return "so";
  }
  throw std::invalid_argument("unknown variant");
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "psl") return Variant::PSL;
  if (s == "zson") return Variant::ZSON;
  if (s == "lo") return Variant::LO;
  if (s == "so") return Variant::SO;
  throw std::invalid_argument("unknown variant '" + s + "' (expected psl|zson|lo|so)");
}

struct AgentConfig {
  Variant variant = Variant::PSL;
  int embed_dim = 64;   // C1: semantic embedding width
  int spm_dim = 64;     // C2: bottleneck output width, must stay < 2*C1
  int spm_hidden = 64;  // bottleneck MLP hidden width
  std::vector<int> obs_encoder_dims = {64, 64};
  int hidden_dim = 128;  // recurrent state width
  int n_rays = 16;       // depth-scan width
  int n_actions = kNumActions;

  bool uses_encoder() const { return variant != Variant::SO; }
  bool uses_spm() const { return variant == Variant::PSL; }

  int obs_input_dim() const {
    switch (variant) {
      case Variant::LO: return n_rays;
      case Variant::SO: return 0;
      default: return n_rays + embed_dim;
    }
  }
  int obs_output_dim() const {
    return variant == Variant::SO ? embed_dim : obs_encoder_dims.back();
  }
  // width of the goal vector handed to the agent
  int goal_input_dim() const { return variant == Variant::LO ? n_rays : embed_dim; }
  // width of the goal code after the (possible) bottleneck
  int goal_dim() const { return uses_spm() ? spm_dim : goal_input_dim(); }
  int spm_input_dim() const { return 2 * embed_dim; }
  int core_input_dim() const { return goal_dim() + obs_output_dim() + n_actions; }

  void validate() const {
    if (embed_dim < 1) throw std::invalid_argument("agent: embed_dim must be >= 1");
    if (n_rays < 1) throw std::invalid_argument("agent: n_rays must be >= 1");
    if (hidden_dim < 1) throw std::invalid_argument("agent: hidden_dim must be >= 1");
    if (n_actions != kNumActions) throw std::invalid_argument("agent: n_actions must be 6");
    if (uses_encoder() && obs_encoder_dims.empty()) {
      throw std::invalid_argument("agent: obs_encoder_dims must not be empty");
    }
    for (int d : obs_encoder_dims) {
      if (d < 1) throw std::invalid_argument("agent: encoder widths must be >= 1");
    }
    if (uses_spm()) {
      if (spm_hidden < 1) throw std::invalid_argument("agent: spm_hidden must be >= 1");
      if (spm_dim < 1) throw std::invalid_argument("agent: spm_dim must be >= 1");
      if (spm_dim >= 2 * embed_dim) {
        throw std::invalid_argument("agent: spm_dim must be < 2*embed_dim (bottleneck)");
      }
    }
  }
};

struct AgentParams {
  AgentConfig config;

  std::vector<Eigen::MatrixXd> enc_w;
  std::vector<Eigen::VectorXd> enc_b;

  Eigen::MatrixXd spm_w0, spm_w1;
  Eigen::VectorXd spm_b0, spm_b1;

  Eigen::MatrixXd gru_wz, gru_wr, gru_wn;  // input -> gates
  Eigen::MatrixXd gru_uz, gru_ur, gru_un;  // hidden -> gates
  Eigen::VectorXd gru_bz, gru_br, gru_bn;

  Eigen::MatrixXd actor_w, critic_w;
  Eigen::VectorXd actor_b, critic_b;
};

// Visit every active parameter array in a fixed order; the single source of
// truth for init, Adam, serialization, and gradient checks.
template <typename Params, typename F>
void for_each_param(Params& p, F&& f) {
  const AgentConfig& c = p.config;
  if (c.uses_encoder()) {
    for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
      f("enc_w" + std::to_string(l), p.enc_w[l]);
      f("enc_b" + std::to_string(l), p.enc_b[l]);
    }
  }
  if (c.uses_spm()) {
    f("spm_w0", p.spm_w0);
    f("spm_b0", p.spm_b0);
    f("spm_w1", p.spm_w1);
    f("spm_b1", p.spm_b1);
  }
  f("gru_wz", p.gru_wz);
  f("gru_uz", p.gru_uz);
  f("gru_bz", p.gru_bz);
  f("gru_wr", p.gru_wr);
  f("gru_ur", p.gru_ur);
  f("gru_br", p.gru_br);
  f("gru_wn", p.gru_wn);
  f("gru_un", p.gru_un);
  f("gru_bn", p.gru_bn);
  f("actor_w", p.actor_w);
  f("actor_b", p.actor_b);
  f("critic_w", p.critic_w);
  f("critic_b", p.critic_b);
}

namespace detail {

inline void alloc_params(AgentParams& p) {
  const AgentConfig& c = p.config;
  if (c.uses_encoder()) {
    int in = c.obs_input_dim();
    for (int width : c.obs_encoder_dims) {
      p.enc_w.emplace_back(width, in);
      p.enc_b.emplace_back(width);
      in = width;
    }
  }
  if (c.uses_spm()) {
    p.spm_w0.resize(c.spm_hidden, c.spm_input_dim());
    p.spm_b0.resize(c.spm_hidden);
    p.spm_w1.resize(c.spm_dim, c.spm_hidden);
    p.spm_b1.resize(c.spm_dim);
  }
  const int u = c.core_input_dim();
  const int h = c.hidden_dim;
  for (auto* m : {&p.gru_wz, &p.gru_wr, &p.gru_wn}) m->resize(h, u);
  for (auto* m : {&p.gru_uz, &p.gru_ur, &p.gru_un}) m->resize(h, h);
  for (auto* v : {&p.gru_bz, &p.gru_br, &p.gru_bn}) v->resize(h);
  p.actor_w.resize(c.n_actions, h);
  p.actor_b.resize(c.n_actions);
  p.critic_w.resize(1, h);
  p.critic_b.resize(1);
}

}  // namespace detail

inline AgentParams zeros_like(const AgentParams& other) {
  AgentParams p;
  p.config = other.config;
  detail::alloc_params(p);
  for_each_param(p, [](const std::string&, auto& m) { m.setZero(); });
  return p;
}

// Fan-in scaled normal init; actor head starts near-uniform so early
// exploration is unbiased.
inline AgentParams init_agent(const AgentConfig& config, std::uint64_t seed) {
  config.validate();
  AgentParams p;
  p.config = config;
  detail::alloc_params(p);
  Rng rng(derive_seed(seed, "agent-init"));
  for_each_param(p, [&](const std::string& name, auto& m) {
    const bool is_bias = name.find("_b") != std::string::npos;
    if (is_bias) {
      m.setZero();
      return;
    }
    const double scale = name == "actor_w" ? 0.01 : 1.0 / std::sqrt(static_cast<double>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.normal();
    }
  });
  return p;
}

inline void check_finite(const AgentParams& p) {
  for_each_param(const_cast<AgentParams&>(p), [](const std::string& name, auto& m) {
    if (!m.allFinite()) throw std::runtime_error("agent: non-finite values in parameter '" + name + "'");
  });
}

// --- forward ----------------------------------------------------------------

inline Eigen::VectorXd one_hot_action(int action, int n_actions = kNumActions) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n_actions);
  if (action >= 0) v[action] = 1.0;  // negative = "no previous action"
  return v;
}

// Per-step record of every intermediate needed by the backward pass.
struct StepTrace {
  Eigen::VectorXd enc_in;
  std::vector<Eigen::VectorXd> enc_acts;  // post-tanh, one per layer
  Eigen::VectorXd spm_in, spm_act;        // bottleneck input and hidden activation
  Eigen::VectorXd z_o, z_sp;
  Eigen::VectorXd u;  // core input [z_sp; z_o; prev_action]
  Eigen::VectorXd h_prev, zg, rg, ng, un_h, h;
  Eigen::VectorXd logits;
  double value = 0.0;
};

struct StepInput {
  Eigen::VectorXd layout;
  Eigen::VectorXd semantic;
  Eigen::VectorXd goal;
  Eigen::VectorXd prev_action;
  bool reset_hidden = false;  // episode boundary inside the sequence
};

inline void forward_step(const AgentParams& p, const StepInput& in, const Eigen::VectorXd& h_prev,
                         StepTrace& t) {
  const AgentConfig& c = p.config;

  // observation code
  if (c.uses_encoder()) {
    if (c.variant == Variant::LO) {
      t.enc_in = in.layout;
    } else {
      t.enc_in.resize(c.obs_input_dim());
      t.enc_in << in.layout, in.semantic;
    }
    Eigen::VectorXd z = t.enc_in;
    t.enc_acts.clear();
    for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
      z = (p.enc_w[l] * z + p.enc_b[l]).array().tanh();
      t.enc_acts.push_back(z);
    }
    t.z_o = z;
  } else {
    t.z_o = in.semantic;
  }

  // goal code
  if (c.uses_spm()) {
    t.spm_in.resize(c.spm_input_dim());
    t.spm_in << in.goal, in.semantic;
    t.spm_act = (p.spm_w0 * t.spm_in + p.spm_b0).array().tanh();
    t.z_sp = p.spm_w1 * t.spm_act + p.spm_b1;
  } else {
    t.z_sp = in.goal;
  }

  t.u.resize(c.core_input_dim());
  t.u << t.z_sp, t.z_o, in.prev_action;

  // GRU cell
  t.h_prev = h_prev;
  t.zg = (-(p.gru_wz * t.u + p.gru_uz * h_prev + p.gru_bz).array()).exp();
  t.zg = (1.0 + t.zg.array()).inverse();
  t.rg = (-(p.gru_wr * t.u + p.gru_ur * h_prev + p.gru_br).array()).exp();
  t.rg = (1.0 + t.rg.array()).inverse();
  t.un_h = p.gru_un * h_prev;
  t.ng = (p.gru_wn * t.u + p.gru_bn + (t.rg.array() * t.un_h.array()).matrix()).array().tanh();
  t.h = ((1.0 - t.zg.array()) * t.ng.array() + t.zg.array() * t.h_prev.array()).matrix();

  t.logits = p.actor_w * t.h + p.actor_b;
  t.value = (p.critic_w * t.h)(0) + p.critic_b(0);
}

inline std::vector<StepTrace> forward_sequence(const AgentParams& p, const std::vector<StepInput>& inputs,
                                               const Eigen::VectorXd& h0) {
  std::vector<StepTrace> traces(inputs.size());
  Eigen::VectorXd h = h0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const Eigen::VectorXd& h_in =
        inputs[t].reset_hidden ? Eigen::VectorXd::Zero(p.config.hidden_dim).eval() : h;
    forward_step(p, inputs[t], h_in, traces[t]);
    h = traces[t].h;
  }
  return traces;
}

// Backward through the whole sequence. dlogits[t] and dvalue[t] are the loss
// gradients at each step; gradients accumulate into `grads` (caller zeroes).
inline void backward_sequence(const AgentParams& p, const std::vector<StepInput>& inputs,
                              const std::vector<StepTrace>& traces,
                              const std::vector<Eigen::VectorXd>& dlogits,
                              const std::vector<double>& dvalue, AgentParams& grads) {
  const AgentConfig& c = p.config;
  const int T = static_cast<int>(inputs.size());
  Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(c.hidden_dim);

  for (int t = T - 1; t >= 0; --t) {
    const StepTrace& tr = traces[static_cast<std::size_t>(t)];

    Eigen::VectorXd dh = dh_carry;
    dh.noalias() += p.actor_w.transpose() * dlogits[static_cast<std::size_t>(t)];
    dh.noalias() += p.critic_w.transpose() * Eigen::VectorXd::Constant(1, dvalue[static_cast<std::size_t>(t)]);
    grads.actor_w.noalias() += dlogits[static_cast<std::size_t>(t)] * tr.h.transpose();
    grads.actor_b += dlogits[static_cast<std::size_t>(t)];
    grads.critic_w.noalias() += dvalue[static_cast<std::size_t>(t)] * tr.h.transpose();
    grads.critic_b(0) += dvalue[static_cast<std::size_t>(t)];

    // GRU cell backward: h = (1-z)*n + z*h_prev
    const Eigen::ArrayXd z = tr.zg.array();
    const Eigen::ArrayXd r = tr.rg.array();
    const Eigen::ArrayXd n = tr.ng.array();
    const Eigen::ArrayXd dz = dh.array() * (tr.h_prev.array() - n);
    const Eigen::ArrayXd dn = dh.array() * (1.0 - z);
    const Eigen::VectorXd da_n = (dn * (1.0 - n.square())).matrix();
    const Eigen::VectorXd da_z = (dz * z * (1.0 - z)).matrix();
    const Eigen::VectorXd dr = (da_n.array() * tr.un_h.array()).matrix();
    const Eigen::VectorXd da_r = (dr.array() * r * (1.0 - r)).matrix();
    const Eigen::VectorXd dun_h = (da_n.array() * r).matrix();

    grads.gru_wn.noalias() += da_n * tr.u.transpose();
    grads.gru_bn += da_n;
    grads.gru_un.noalias() += dun_h * tr.h_prev.transpose();
    grads.gru_wr.noalias() += da_r * tr.u.transpose();
    grads.gru_br += da_r;
    grads.gru_ur.noalias() += da_r * tr.h_prev.transpose();
    grads.gru_wz.noalias() += da_z * tr.u.transpose();
    grads.gru_bz += da_z;
    grads.gru_uz.noalias() += da_z * tr.h_prev.transpose();

    Eigen::VectorXd dh_prev = (dh.array() * z).matrix();
    dh_prev.noalias() += p.gru_un.transpose() * dun_h;
    dh_prev.noalias() += p.gru_ur.transpose() * da_r;
    dh_prev.noalias() += p.gru_uz.transpose() * da_z;

    Eigen::VectorXd du = p.gru_wn.transpose() * da_n;
    du.noalias() += p.gru_wr.transpose() * da_r;
    du.noalias() += p.gru_wz.transpose() * da_z;

    const int g = c.goal_dim();
    const int o = c.obs_output_dim();
    const Eigen::VectorXd dz_sp = du.head(g);
    const Eigen::VectorXd dz_o = du.segment(g, o);

    if (c.uses_spm()) {
      grads.spm_w1.noalias() += dz_sp * tr.spm_act.transpose();
      grads.spm_b1 += dz_sp;
      const Eigen::VectorXd da0 =
          ((p.spm_w1.transpose() * dz_sp).array() * (1.0 - tr.spm_act.array().square())).matrix();
      grads.spm_w0.noalias() += da0 * tr.spm_in.transpose();
      grads.spm_b0 += da0;
    }

    if (c.uses_encoder()) {
      Eigen::VectorXd d = dz_o;
      for (int l = static_cast<int>(p.enc_w.size()) - 1; l >= 0; --l) {
        const Eigen::VectorXd& act = tr.enc_acts[static_cast<std::size_t>(l)];
        const Eigen::VectorXd da = (d.array() * (1.0 - act.array().square())).matrix();
        const Eigen::VectorXd& in_l = l == 0 ? tr.enc_in : tr.enc_acts[static_cast<std::size_t>(l - 1)];
        grads.enc_w[static_cast<std::size_t>(l)].noalias() += da * in_l.transpose();
        grads.enc_b[static_cast<std::size_t>(l)] += da;
        d = p.enc_w[static_cast<std::size_t>(l)].transpose() * da;
      }
    }

    // hidden state at an episode boundary was zeroed, so nothing flows back
    dh_carry = inputs[static_cast<std::size_t>(t)].reset_hidden ? Eigen::VectorXd::Zero(c.hidden_dim).eval()
                                                                : dh_prev;
  }
}

// --- action selection --------------------------------------------------------

inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

inline double action_log_prob(const Eigen::VectorXd& logits, int action) {
  return log_softmax(logits)[action];
}

inline double policy_entropy(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd logp = log_softmax(logits);
  const Eigen::ArrayXd pa = logp.array().exp();
  return -(pa * logp.array()).sum();
}

// first maximum wins, so ties resolve to the lower action index
inline int greedy_action(const Eigen::VectorXd& logits) {
  int best = 0;
  for (int i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

inline int sample_action(const Eigen::VectorXd& logits, Rng& rng) {
  const Eigen::VectorXd logp = log_softmax(logits);
  const double u = rng.uniform();
  double cum = 0.0;
  for (int i = 0; i < logp.size(); ++i) {
    cum += std::exp(logp[i]);
    if (u < cum) return i;
  }
  return static_cast<int>(logp.size()) - 1;  // numerical slack
}

// --- single-step inference API ----------------------------------------------

struct PolicyState {
  Eigen::VectorXd hidden;
  Eigen::VectorXd prev_action;
};

inline PolicyState initial_policy_state(const AgentConfig& c) {
  return PolicyState{Eigen::VectorXd::Zero(c.hidden_dim), Eigen::VectorXd::Zero(c.n_actions)};
}

struct PolicyOutput {
  Eigen::VectorXd logits;
  double value = 0.0;
};

// Runs one step and advances state.hidden; the caller records the chosen
// action into state.prev_action before the next call.
inline PolicyOutput policy_step(const AgentParams& p, const Observation& obs, const Eigen::VectorXd& goal,
                                PolicyState& state) {
  StepInput in;
  in.layout = obs.layout;
  in.semantic = obs.semantic;
  in.goal = goal;
  in.prev_action = state.prev_action;
  StepTrace tr;
  forward_step(p, in, state.hidden, tr);
  state.hidden = tr.h;
  return PolicyOutput{tr.logits, tr.value};
}

}  // namespace psl
