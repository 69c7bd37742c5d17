#include "psl/serialize.hpp"

#include <cstdlib>
#include <filesystem>

#include <gtest/gtest.h>

namespace psl {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "psl-serialize-test";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Scene demo_scene() {
  SceneGenConfig cfg;
  cfg.rooms = 2;
  cfg.min_size = 12;
  cfg.max_size = 14;
  cfg.objects_per_room = 1;
  return generate_scene(55, cfg);
}

Episode demo_episode(const Scene& scene, const Codebook& cb) {
  EpisodeConfig cfg;
  cfg.min_optimal_m = 0.5;
  Rng rng(9);
  return generate_episode(scene, cb, rng, cfg, FovConfig{}, "demo-ep");
}

TEST(Round9, StableUnderReprinting) {
  EXPECT_DOUBLE_EQ(round9(0.5), 0.5);
  EXPECT_DOUBLE_EQ(round9(1.0 / 3.0), 0.333333333);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform_index(13) - 6);
    const double once = round9(v);
    EXPECT_EQ(round9(once), once);  // projection: a second pass changes nothing
    EXPECT_NEAR(once, v, std::abs(v) * 1e-8 + 1e-300);
  }
  EXPECT_EQ(csv_num(0.25), "0.25");
  EXPECT_EQ(csv_num(123456789.0), "123456789");
}

TEST(JsonVectors, RoundTripAndRejectNonArrays) {
  Eigen::VectorXd v(3);
  v << 0.1, -2.5, 1e-11;
  const Eigen::VectorXd back = vec_from_json(vec_to_json(v));
  ASSERT_EQ(back.size(), 3);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(back[i], round9(v[i]));
  EXPECT_THROW(vec_from_json(json{{"a", 1}}), std::runtime_error);
}

TEST(ExpectKeys, UnknownKeysFailLoudly) {
  const json j{{"dim", 16}, {"dmi", 16}};
  EXPECT_THROW(expect_keys(j, {"dim"}, "cfg"), std::runtime_error);
  EXPECT_NO_THROW(expect_keys(json{{"dim", 16}}, {"dim", "seed"}, "cfg"));
  EXPECT_THROW(expect_keys(json::array(), {"dim"}, "cfg"), std::runtime_error);
}

TEST(SemspaceConfig, RoundTripsIncludingVocab) {
  SemanticSpaceConfig c;
  c.dim = 24;
  c.categories = {"sofa", "bed", "lamp"};
  c.attribute_vocab = {{"color", {"red", "blue"}}, {"material", {"wood"}}};
  c.temperature = 50.0;
  c.gap_magnitude = 0.3;
  c.noise_scale = 0.01;
  c.seed = 77;

  const SemanticSpaceConfig back = semspace_config_from_json(semspace_config_to_json(c));
  EXPECT_EQ(back.dim, 24);
  EXPECT_EQ(back.categories, c.categories);
  EXPECT_EQ(back.attribute_vocab, c.attribute_vocab);
  EXPECT_DOUBLE_EQ(back.temperature, 50.0);
  EXPECT_DOUBLE_EQ(back.gap_magnitude, 0.3);
  EXPECT_DOUBLE_EQ(back.noise_scale, 0.01);
  EXPECT_EQ(back.seed, 77u);

  json j = semspace_config_to_json(c);
  j["extra"] = 1;
  EXPECT_THROW(semspace_config_from_json(j), std::runtime_error);
}

TEST(CodebookFile, ConfigIsEnoughToRebuildEveryDirection) {
  SemanticSpaceConfig c;
  c.dim = 16;
  c.seed = 12;
  const Codebook cb = build_codebook(c);

  const json j = codebook_to_json(cb);
  EXPECT_EQ(j.at("schema"), "codebook/1");
  const Codebook back = codebook_from_json(j);
  for (const std::string& cat : back.config().categories) {
    EXPECT_TRUE(back.category_dir(cat) == cb.category_dir(cat));
  }
  EXPECT_TRUE(back.gap_dir() == cb.gap_dir());

  json bad = j;
  bad["schema"] = "codebook/2";
  EXPECT_THROW(codebook_from_json(bad), std::runtime_error);
}

TEST(SceneFile, ByteStableRoundTripAndTamperChecks) {
  const Scene scene = demo_scene();
  const json j = scene_to_json(scene);
  const Scene back = scene_from_json(j);
  EXPECT_EQ(dump_json(scene_to_json(back)), dump_json(j));
  EXPECT_EQ(back.cells, scene.cells);
  EXPECT_EQ(back.objects.size(), scene.objects.size());
  EXPECT_EQ(back.viewpoints.size(), scene.viewpoints.size());

  json bad = j;
  bad["rows"][0] = bad["rows"][0].get<std::string>() + "#";
  EXPECT_THROW(scene_from_json(bad), std::runtime_error);  // row width mismatch

  bad = j;
  bad["rows"][0] = std::string(static_cast<std::size_t>(scene.width), 'x');
  EXPECT_THROW(scene_from_json(bad), std::runtime_error);  // invalid cell char

  bad = j;
  bad["objects"][0]["pos"] = json::array({0, 0});
  EXPECT_THROW(scene_from_json(bad), std::runtime_error);  // object inside a wall

  bad = j;
  bad["viewpoints"].erase(scene.objects[0].desc.instance_id);
  EXPECT_THROW(scene_from_json(bad), std::runtime_error);  // object without viewpoints

  bad = j;
  bad["surprise"] = true;
  EXPECT_THROW(scene_from_json(bad), std::runtime_error);
}

TEST(SceneFile, CollectionSchemaAndManifestResolution) {
  const Scene a = demo_scene();
  SceneGenConfig cfg;
  cfg.rooms = 2;
  cfg.min_size = 12;
  cfg.max_size = 14;
  cfg.objects_per_room = 1;
  const Scene b = generate_scene(56, cfg);

  const json inline_file = scenes_to_json({a, b});
  const std::vector<Scene> loaded = scenes_from_json(inline_file);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].id, a.id);
  EXPECT_EQ(loaded[1].id, b.id);

  json bad = inline_file;
  bad["schema"] = "scenes/9";
  EXPECT_THROW(scenes_from_json(bad), std::runtime_error);

  // manifest referencing one file per scene, relative to the manifest itself
  const fs::path dir = temp_dir();
  write_text_file((dir / "scene-a.json").string(), dump_json(scene_to_json(a)));
  write_text_file((dir / "scene-b.json").string(), dump_json(scene_to_json(b)));
  write_text_file((dir / "manifest.json").string(),
                  dump_json(scene_manifest_to_json({"scene-a.json", "scene-b.json"})));
  write_text_file((dir / "inline.json").string(), dump_json(inline_file));

  const std::vector<Scene> via_manifest = load_scenes_file((dir / "manifest.json").string());
  const std::vector<Scene> via_inline = load_scenes_file((dir / "inline.json").string());
  ASSERT_EQ(via_manifest.size(), via_inline.size());
  for (std::size_t i = 0; i < via_manifest.size(); ++i) {
    EXPECT_EQ(dump_json(scene_to_json(via_manifest[i])), dump_json(scene_to_json(via_inline[i])));
  }

  write_text_file((dir / "odd.json").string(), dump_json(json{{"schema", "nope/1"}}));
  EXPECT_THROW(load_scenes_file((dir / "odd.json").string()), std::runtime_error);
  EXPECT_THROW(load_scenes_file((dir / "missing.json").string()), std::runtime_error);
}

TEST(EpisodeFileFormat, ByteStableRoundTripWithPinnedContext) {
  SemanticSpaceConfig scfg;
  scfg.dim = 16;
  scfg.seed = 4;
  const Codebook cb = build_codebook(scfg);
  const Scene scene = demo_scene();
  const Episode ep = demo_episode(scene, cb);

  const json fov = json{{"n_rays", 16}, {"max_range_m", 4.0}, {"omega", 12}};
  const json j = episodes_to_json({ep}, "scenes.json", scfg, fov);
  EXPECT_EQ(j.at("schema"), "episodes/1");

  const EpisodeFile back = episodes_from_json(j);
  EXPECT_EQ(back.scenes_file, "scenes.json");
  EXPECT_EQ(back.semspace.dim, 16);
  EXPECT_EQ(back.fov, fov);
  ASSERT_EQ(back.episodes.size(), 1u);
  const json again = episodes_to_json(back.episodes, back.scenes_file, back.semspace, back.fov);
  EXPECT_EQ(dump_json(again), dump_json(j));

  const Episode& b = back.episodes[0];
  EXPECT_EQ(b.episode_id, ep.episode_id);
  EXPECT_EQ(b.goal_views, ep.goal_views);
  EXPECT_EQ(b.all_candidates.size(), ep.all_candidates.size());
  EXPECT_DOUBLE_EQ(b.optimal_length_m, round9(ep.optimal_length_m));

  json bad = episode_to_json(ep);
  bad["goal_views"] = std::vector<int>{9999};
  EXPECT_THROW(episode_from_json(bad), std::runtime_error);
  bad["goal_views"] = std::vector<int>{};
  EXPECT_THROW(episode_from_json(bad), std::runtime_error);

  json wrong = j;
  wrong["schema"] = "episodes/2";
  EXPECT_THROW(episodes_from_json(wrong), std::runtime_error);
}

TEST(SupportFile, RoundTripsAndValidatesParallelArrays) {
  SupportSet set;
  Embedding v = Embedding::Zero(6);
  v[0] = 1.0;
  support_insert(set, v, "ep/3");
  Embedding u = Embedding::Zero(6);
  u[1] = 1.0;
  support_insert(set, u, "ep/7");

  const json j = support_to_json(set);
  const SupportSet back = support_from_json(j);
  EXPECT_DOUBLE_EQ(back.lambda, set.lambda);
  EXPECT_EQ(back.provenance, set.provenance);
  ASSERT_EQ(back.vectors.size(), 2u);
  EXPECT_TRUE(back.vectors[0] == set.vectors[0]);
  EXPECT_EQ(dump_json(support_to_json(back)), dump_json(j));

  json bad = j;
  bad["provenance"] = std::vector<std::string>{"only-one"};
  EXPECT_THROW(support_from_json(bad), std::runtime_error);
  bad = j;
  bad["schema"] = "support/0";
  EXPECT_THROW(support_from_json(bad), std::runtime_error);
}

TEST(CheckpointFile, ByteStableRoundTripAcrossVariants) {
  for (Variant v : {Variant::PSL, Variant::ZSON, Variant::LO, Variant::SO}) {
    AgentConfig c;
    c.variant = v;
    c.embed_dim = 12;
    c.spm_dim = 10;
    c.spm_hidden = 12;
    c.obs_encoder_dims = {12};
    c.hidden_dim = 12;
    c.n_rays = 8;
    const AgentParams params = init_agent(c, 31);

    const json j = checkpoint_to_json(params);
    AgentParams back = checkpoint_from_json(j);
    EXPECT_EQ(back.config.variant, v);
    EXPECT_EQ(dump_json(checkpoint_to_json(back)), dump_json(j));

    // loaded weights match the originals to print precision
    double worst = 0.0;
    for_each_param(back, [&](const std::string& name, auto& m) {
      for_each_param(const_cast<AgentParams&>(params), [&](const std::string& name2, auto& m2) {
        if (name == name2) {
          for (Eigen::Index i = 0; i < m.size(); ++i) {
            worst = std::max(worst, std::abs(*(m.data() + i) - round9(*(m2.data() + i))));
          }
        }
      });
    });
    EXPECT_EQ(worst, 0.0);
  }
}

TEST(CheckpointFile, RejectsShapeAndNameMismatches) {
  AgentConfig c;
  c.variant = Variant::SO;
  c.embed_dim = 12;
  c.spm_dim = 10;
  c.spm_hidden = 12;
  c.obs_encoder_dims = {12};
  c.hidden_dim = 12;
  c.n_rays = 8;
  const json j = checkpoint_to_json(init_agent(c, 1));

  json bad = j;
  bad["params"]["actor_b"]["rows"] = 7;
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);

  bad = j;
  bad["params"].erase("actor_w");
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);

  bad = j;
  bad["params"]["ghost_w"] = bad["params"]["actor_b"];
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);

  bad = j;
  bad["params"]["actor_b"]["values"].push_back(0.0);
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);

  bad = j;
  bad["schema"] = "checkpoint/9";
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);
}

TEST(EvalCsv, GoldenReport) {
  EvalReport rep;
  rep.records.push_back({"ep-a", true, 10.0, 5.0, 40, true, 0.0});
  rep.records.push_back({"ep-b", false, 2.0, 5.0, 200, false, 3.0});

  const std::string expected =
      "episode_id,mode,success,l,l_star,steps,stopped,final_dist_m,spl\n"
      "ep-a,image,1,10,5,40,1,0,0.5\n"
      "ep-b,image,0,2,5,200,0,3,0\n"
      "summary,image,SR=0.5,SPL=0.25,,,,,\n";
  EXPECT_EQ(eval_report_csv(rep, GoalMode::Image), expected);

  const json summary = eval_summary_json(rep, GoalMode::Text, "agent");
  EXPECT_EQ(summary.at("policy"), "agent");
  EXPECT_EQ(summary.at("goal_mode"), "text");
  EXPECT_EQ(summary.at("episodes"), 2);
  EXPECT_DOUBLE_EQ(summary.at("sr").get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(summary.at("spl").get<double>(), 0.25);
}

TEST(ProgressCsv, GoldenRow) {
  ProgressRow r;
  r.env_steps = 2048;
  r.update = 2;
  r.episodes = 17;
  r.sr = 0.25;
  r.spl = 0.125;
  r.mean_return = -1.5;
  r.mean_steps = 60.5;
  r.policy_loss = 0.0125;
  r.value_loss = 2.5;
  r.entropy = 1.75;
  r.clip_fraction = 0.0625;
  r.grad_norm = 0.5;

  const std::string expected =
      "env_steps,update,episodes,sr,spl,mean_return,mean_steps,policy_loss,value_loss,entropy,"
      "clip_fraction,grad_norm\n"
      "2048,2,17,0.25,0.125,-1.5,60.5,0.0125,2.5,1.75,0.0625,0.5\n";
  EXPECT_EQ(progress_csv({r}), expected);
}

}  // namespace
}  // namespace psl
