// Command-line front end for the navigation testbed: scene generation,
// episode generation, support-set construction, training, evaluation, and
// diagnostics. Every stage reads/writes the JSON formats in serialize.hpp and
// is deterministic given (--config, --seed, --threads 1).

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psl/config.hpp"
#include "psl/infer.hpp"
#include "psl/serialize.hpp"
#include "psl/train.hpp"
#include "psl/version.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("PSL_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

psl::RunConfig load_run_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  psl::RunConfig rc;
  if (!path.empty()) rc = psl::run_config_from_json(psl::parse_json_file(path));
  if (seed) {
    rc.seed = *seed;
    rc.ppo.seed = *seed;
    rc.semspace.seed = psl::derive_seed(*seed, "semspace");
  }
  rc.validate();
  return rc;
}

// Scenes + episodes + the codebook/fov they were generated under.
struct Bundle {
  std::vector<psl::Scene> scenes;
  psl::EpisodeFile file;
  psl::Codebook codebook;
  psl::FovConfig fov;
};

Bundle load_bundle(const std::string& episodes_path) {
  Bundle b;
  b.file = psl::episodes_from_json(psl::parse_json_file(episodes_path));
  fs::path scenes_path(b.file.scenes_file);
  if (!fs::exists(scenes_path)) {
    const fs::path alt = fs::path(episodes_path).parent_path() / scenes_path;
    if (fs::exists(alt)) scenes_path = alt;
  }
  b.scenes = psl::load_scenes_file(scenes_path.string());
  b.codebook = psl::build_codebook(b.file.semspace);
  b.fov = psl::fov_config_from_json(b.file.fov);
  return b;
}

int cmd_scene_gen(const std::string& config_path, std::optional<std::uint64_t> seed, int count,
                  const std::string& out_dir) {
  const psl::RunConfig rc = load_run_config(config_path, seed);
  if (count < 0) throw std::invalid_argument("scene-gen: --count must be >= 0");
  const fs::path dir(out_dir);
  std::vector<std::string> files;
  files.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    psl::SceneGenConfig gen = rc.scene_gen;
    char id[32];
    std::snprintf(id, sizeof(id), "scene-%04d", i);
    gen.id = id;
    const psl::Scene scene =
        psl::generate_scene(psl::derive_seed(rc.seed, "scene:" + std::to_string(i)), gen);
    const std::string name = std::string(id) + ".json";
    psl::write_text_file((dir / name).string(), psl::dump_json(psl::scene_to_json(scene)));
    files.push_back(name);
  }
  psl::write_text_file((dir / "manifest.json").string(),
                       psl::dump_json(psl::scene_manifest_to_json(files)));
  std::printf("wrote %d scenes to %s\n", count, (dir / "manifest.json").string().c_str());
  return 0;
}

int cmd_episodes(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const std::string& scenes_path, int count, const std::string& out,
                 const std::string& select, std::optional<int> views, std::optional<int> pitch,
                 const std::string& prefix) {
  psl::RunConfig rc;
  if (!config_path.empty()) rc = psl::run_config_from_json(psl::parse_json_file(config_path));
  if (seed) {
    rc.seed = *seed;
    rc.ppo.seed = *seed;
    rc.semspace.seed = psl::derive_seed(*seed, "semspace");
  }
  if (count < 0) throw std::invalid_argument("episodes: --count must be >= 0");
  if (!select.empty()) {
    if (select == "entropy") {
      rc.episodes.selection = psl::GoalSelection::Entropy;
    } else if (select == "random") {
      rc.episodes.selection = psl::GoalSelection::Random;
    } else {
      throw std::invalid_argument("episodes: --select must be entropy|random");
    }
  }
  if (views) {
    if (*views < 4) throw std::invalid_argument("episodes: --views must be >= 4");
    rc.episodes.yaw_divisions = *views;
    rc.fov.omega = *views;
  }
  if (pitch) {
    if (*pitch < 1) throw std::invalid_argument("episodes: --pitch must be >= 1");
    rc.episodes.pitch_levels = *pitch;
  }
  rc.validate();
  const std::vector<psl::Scene> scenes = psl::load_scenes_file(scenes_path);
  if (scenes.empty() && count > 0) throw std::invalid_argument("episodes: scenes file is empty");
  const psl::Codebook cb = psl::build_codebook(rc.semspace);

  std::vector<psl::Episode> episodes;
  episodes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const psl::Scene& scene = scenes[static_cast<std::size_t>(i) % scenes.size()];
    psl::Rng rng(psl::derive_seed(rc.seed, "episode:" + std::to_string(i)));
    char id[48];
    std::snprintf(id, sizeof(id), "%s-%05d", prefix.c_str(), i);
    episodes.push_back(psl::generate_episode(scene, cb, rng, rc.episodes, rc.fov, id));
  }
  psl::write_text_file(out, psl::dump_json(psl::episodes_to_json(episodes, scenes_path, rc.semspace,
                                                                 psl::fov_config_to_json(rc.fov))));

  // Class distribution of the selected goal views, next to the episode file.
  const std::map<std::string, int> dist =
      psl::goal_distribution_report(episodes, cb, rc.episodes.ambiguous_entropy);
  std::string csv = "category,count\n";
  for (const auto& [k, v] : dist) csv += k + "," + std::to_string(v) + "\n";
  fs::path dist_path(out);
  dist_path.replace_extension();
  dist_path += "_goal_dist.csv";
  psl::write_text_file(dist_path.string(), csv);

  std::printf("wrote %d episodes to %s\n", count, out.c_str());
  return 0;
}

int cmd_support(const std::string& episodes_path, double lambda, const std::string& out) {
  const psl::EpisodeFile file = psl::episodes_from_json(psl::parse_json_file(episodes_path));
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("support: --lambda must be in [0, 1]");
  const psl::SupportSet set = psl::build_support_set(file.episodes, lambda);
  psl::write_text_file(out, psl::dump_json(psl::support_to_json(set)));
  std::printf("support set: %zu vectors (lambda=%g) -> %s\n", set.vectors.size(), lambda, out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& episodes_path, const std::string& variant, const std::string& out_dir,
              std::optional<long long> steps, int threads, bool quiet) {
  psl::RunConfig rc = load_run_config(config_path, seed);
  Bundle b = load_bundle(episodes_path);

  psl::AgentConfig acfg = rc.agent;
  if (!variant.empty()) acfg.variant = psl::variant_from_string(variant);
  if (acfg.embed_dim != b.file.semspace.dim) {
    throw std::invalid_argument("train: agent.embed_dim (" + std::to_string(acfg.embed_dim) +
                                ") does not match the episodes' embedding dim (" +
                                std::to_string(b.file.semspace.dim) + ")");
  }
  if (acfg.n_rays != b.fov.n_rays) {
    throw std::invalid_argument("train: agent.n_rays does not match the episodes' n_rays");
  }
  psl::PPOConfig ppo = rc.ppo;
  if (steps) ppo.total_env_steps = *steps;
  ppo.threads = threads;

  const fs::path dir(out_dir);
  psl::EpisodeSet set(std::move(b.scenes), std::move(b.file.episodes), b.codebook, b.fov);
  std::vector<psl::ProgressRow> progress;
  psl::TrainResult result;
  try {
    result = psl::train_agent(set, acfg, ppo, rc.reward, [&](const psl::ProgressRow& row) {
      progress.push_back(row);
      if (!quiet) {
        std::fprintf(stderr, "update %d  steps %lld  episodes %d  sr %.3f  return %.2f  ent %.3f\n",
                     row.update, static_cast<long long>(row.env_steps), row.episodes, row.sr,
                     row.mean_return, row.entropy);
      }
    });
  } catch (const std::exception& e) {
    // Leave a diagnostic trail for non-finite losses and other mid-run aborts.
    psl::write_text_file((dir / "progress_partial.csv").string(), psl::progress_csv(progress));
    throw std::runtime_error(std::string("train aborted after ") + std::to_string(progress.size()) +
                             " updates (partial progress in " +
                             (dir / "progress_partial.csv").string() + "): " + e.what());
  }

  psl::write_text_file((dir / "checkpoint.json").string(),
                       psl::dump_json(psl::checkpoint_to_json(result.params)));
  psl::write_text_file((dir / "progress.csv").string(), psl::progress_csv(result.progress));
  std::printf("trained %s for %lld env steps -> %s\n", psl::variant_name(acfg.variant),
              static_cast<long long>(result.env_steps), (dir / "checkpoint.json").string().c_str());
  return 0;
}

int cmd_eval(const std::string& config_path, std::optional<std::uint64_t> seed,
             const std::string& episodes_path, const std::string& ckpt, const std::string& mode_str,
             const std::string& support_path, const std::string& out_dir, bool sample,
             bool nn_retrieval) {
  const psl::RunConfig rc = load_run_config(config_path, seed);
  Bundle b = load_bundle(episodes_path);
  const psl::GoalMode mode = psl::goal_mode_from_string(mode_str);

  std::optional<psl::SupportSet> support;
  if (!support_path.empty()) support = psl::support_from_json(psl::parse_json_file(support_path));

  psl::EvalConfig ecfg;
  ecfg.mode = mode;
  ecfg.max_episode_steps = rc.ppo.max_episode_steps;
  ecfg.greedy = !sample;
  ecfg.nn_retrieval = nn_retrieval;
  ecfg.seed = rc.seed;

  // --ckpt is either a checkpoint file or a scripted-policy sentinel.
  std::unique_ptr<psl::EvalPolicy> policy;
  psl::Variant variant = psl::Variant::PSL;
  bool learned = false;
  std::string policy_name;
  if (ckpt == "random_walk") {
    policy = std::make_unique<psl::RandomWalkPolicy>(rc.seed);
    policy_name = "random_walk";
  } else if (ckpt == "bfs_oracle") {
    policy = std::make_unique<psl::BfsOraclePolicy>();
    policy_name = "bfs_oracle";
  } else {
    if (ckpt.empty()) {
      throw std::invalid_argument("eval: --ckpt needs a checkpoint file or bfs_oracle|random_walk");
    }
    const psl::AgentParams params = psl::checkpoint_from_json(psl::parse_json_file(ckpt));
    variant = params.config.variant;
    learned = true;
    policy_name = "agent";
    if (params.config.embed_dim != b.file.semspace.dim || params.config.n_rays != b.fov.n_rays) {
      throw std::invalid_argument("eval: checkpoint dimensions do not match the episodes file");
    }
    if (variant != psl::Variant::LO && mode == psl::GoalMode::TextExpanded && !support) {
      throw std::invalid_argument(
          "eval: --goal-mode text-expanded needs --support-set <support.json> "
          "(build one with the support command)");
    }
    policy = std::make_unique<psl::AgentEvalPolicy>(params, ecfg.greedy, rc.seed);
  }

  psl::EpisodeSet set(std::move(b.scenes), std::move(b.file.episodes), b.codebook, b.fov);
  const psl::EvalReport report =
      psl::evaluate(set, *policy, ecfg, variant, support ? &*support : nullptr, learned);

  const std::string tag = policy_name + "_" + psl::goal_mode_name(mode);
  const fs::path dir(out_dir);
  psl::write_text_file((dir / ("eval_" + tag + ".csv")).string(), psl::eval_report_csv(report, mode));
  const psl::json summary = psl::eval_summary_json(report, mode, policy_name);
  psl::write_text_file((dir / ("summary_" + tag + ".json")).string(), psl::dump_json(summary));
  std::printf("%s\n", summary.dump().c_str());
  return 0;
}

int cmd_diagnose_gap(const std::string& episodes_path, const std::string& support_path) {
  Bundle b = load_bundle(episodes_path);
  const psl::SupportSet support = psl::support_from_json(psl::parse_json_file(support_path));
  psl::EpisodeSet set(std::move(b.scenes), std::move(b.file.episodes), b.codebook, b.fov);
  const psl::GapClosureStats stats = psl::gap_closure_stats(set, support);
  const psl::json out{{"mean_cos_text", psl::num(stats.mean_cos_text)},
                      {"mean_cos_expanded", psl::num(stats.mean_cos_expanded)},
                      {"closure", psl::num(stats.closure())}};
  std::printf("%s\n", out.dump().c_str());
  return 0;
}

int cmd_diagnose_goals(const std::string& episodes_path, double threshold) {
  const psl::EpisodeFile file = psl::episodes_from_json(psl::parse_json_file(episodes_path));
  const psl::Codebook cb = psl::build_codebook(file.semspace);
  const std::map<std::string, int> report = psl::goal_distribution_report(file.episodes, cb, threshold);
  psl::json out = psl::json::object();
  for (const auto& [k, v] : report) out[k] = v;
  std::printf("%s\n", out.dump().c_str());
  return 0;
}

// One JSON object per goal view, for external embedding-space visualization.
int cmd_diagnose_embeddings(const std::string& episodes_path, const std::string& out) {
  const psl::EpisodeFile file = psl::episodes_from_json(psl::parse_json_file(episodes_path));
  std::string lines;
  for (const psl::Episode& ep : file.episodes) {
    for (int idx : ep.goal_views) {
      const psl::ViewCandidate& v = ep.all_candidates.at(static_cast<std::size_t>(idx));
      psl::json row{{"episode_id", ep.episode_id},
                    {"view_index", v.index},
                    {"category", ep.text_goal.category},
                    {"entropy", psl::num(v.entropy)},
                    {"embedding", psl::vec_to_json(v.embedding)}};
      lines += row.dump() + "\n";
    }
  }
  psl::write_text_file(out, lines);
  std::printf("wrote %zu embedding rows to %s\n",
              static_cast<std::size_t>(std::count(lines.begin(), lines.end(), '\n')), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridworld instance-navigation testbed"};
  app.set_version_flag("--version", std::string("psl ") + psl::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string episodes_path, scenes_path, out_path, out_dir = default_out_dir();
  std::string ckpt, support_path;
  std::string select, variant, mode = "image", prefix = "ep";
  int count = 10;
  double lambda = 0.8;
  double ambiguous = 0.9;
  std::optional<int> views, pitch;
  std::optional<long long> steps;
  int threads = 1;
  bool sample = false;
  bool nn_retrieval = false;
  bool quiet = false;

  auto* sg = app.add_subcommand("scene-gen", "generate scene files and a manifest");
  sg->add_option("--config", config_path, "run config JSON");
  sg->add_option("--seed", seed, "override the run seed");
  sg->add_option("--count", count, "number of scenes")->default_val(10);
  sg->add_option("--out", out_dir, "output directory (default $PSL_OUT_DIR or .)");

  auto* eg = app.add_subcommand("episodes", "generate an episode file + goal-distribution CSV");
  eg->add_option("--config", config_path, "run config JSON");
  eg->add_option("--seed", seed, "override the run seed");
  eg->add_option("--scenes", scenes_path, "scene manifest (or inline scenes JSON)")->required();
  eg->add_option("--count", count, "number of episodes")->default_val(100);
  eg->add_option("--select", select, "goal view selection: entropy|random");
  eg->add_option("--views", views, "yaw divisions of the candidate view grid");
  eg->add_option("--pitch", pitch, "pitch levels of the candidate view grid");
  eg->add_option("--prefix", prefix, "episode id prefix")->default_val("ep");
  eg->add_option("--out", out_path, "output episodes JSON")->required();

  auto* sup = app.add_subcommand("support", "build the retrieval support set from episodes");
  sup->add_option("--episodes", episodes_path, "episodes file")->required();
  sup->add_option("--lambda", lambda, "diversity threshold in [0, 1]")->default_val(0.8);
  sup->add_option("--out", out_path, "output support JSON")->required();

  auto* tr = app.add_subcommand("train", "train an agent on an episode file");
  tr->add_option("--config", config_path, "run config JSON");
  tr->add_option("--seed", seed, "override the run seed");
  tr->add_option("--episodes", episodes_path, "training episodes file")->required();
  tr->add_option("--variant", variant, "agent variant: psl|zson|lo|so");
  tr->add_option("--steps", steps, "override total env steps");
  tr->add_option("--threads", threads, "rollout worker threads")->default_val(1);
  tr->add_option("--out", out_dir, "output directory (default $PSL_OUT_DIR or .)");
  tr->add_flag("--quiet", quiet, "suppress per-update progress lines");

  auto* ev = app.add_subcommand("eval", "evaluate a policy on an episode file");
  ev->add_option("--config", config_path, "run config JSON");
  ev->add_option("--seed", seed, "override the run seed");
  ev->add_option("--episodes", episodes_path, "evaluation episodes file")->required();
  ev->add_option("--ckpt", ckpt, "checkpoint JSON, or a scripted policy: bfs_oracle|random_walk")
      ->required();
  ev->add_option("--goal-mode", mode, "image|text|text-expanded")->default_val("image");
  ev->add_option("--support-set", support_path, "support set JSON (for text-expanded)");
  ev->add_option("--out", out_dir, "output directory (default $PSL_OUT_DIR or .)");
  ev->add_flag("--sample", sample, "sample actions instead of greedy");
  ev->add_flag("--nn-retrieval", nn_retrieval,
               "ablation: expand text goals with the nearest support vector only");

  auto* diag = app.add_subcommand("diagnose", "diagnostics");
  auto* dg = diag->add_subcommand("gap-closure", "text-image gap closure through retrieval");
  dg->add_option("--episodes", episodes_path, "episodes file")->required();
  dg->add_option("--support-set", support_path, "support set JSON")->required();
  auto* dgo = diag->add_subcommand("goal-dist", "class distribution of selected goal views");
  dgo->add_option("--episodes", episodes_path, "episodes file")->required();
  dgo->add_option("--ambiguous", ambiguous, "ambiguity entropy threshold")->default_val(0.9);
  auto* dem = diag->add_subcommand("embeddings", "dump goal-view embeddings as JSONL");
  dem->add_option("--episodes", episodes_path, "episodes file")->required();
  dem->add_option("--out", out_path, "output JSONL path")->required();
  diag->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\nrun with --help for usage\n", e.what());
    return 1;
  }

  try {
    if (app.got_subcommand(sg)) return cmd_scene_gen(config_path, seed, count, out_dir);
    if (app.got_subcommand(eg)) {
      return cmd_episodes(config_path, seed, scenes_path, count, out_path, select, views, pitch,
                          prefix);
    }
    if (app.got_subcommand(sup)) return cmd_support(episodes_path, lambda, out_path);
    if (app.got_subcommand(tr)) {
      return cmd_train(config_path, seed, episodes_path, variant, out_dir, steps, threads, quiet);
    }
    if (app.got_subcommand(ev)) {
      return cmd_eval(config_path, seed, episodes_path, ckpt, mode, support_path, out_dir, sample,
                      nn_retrieval);
    }
    if (app.got_subcommand(diag)) {
      if (diag->got_subcommand(dg)) return cmd_diagnose_gap(episodes_path, support_path);
      if (diag->got_subcommand(dgo)) return cmd_diagnose_goals(episodes_path, ambiguous);
      if (diag->got_subcommand(dem)) return cmd_diagnose_embeddings(episodes_path, out_path);
    }
    std::fprintf(stderr, "no command selected; run with --help\n");
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
