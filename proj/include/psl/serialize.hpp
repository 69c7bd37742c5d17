#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "psl/agent.hpp"
#include "psl/episodes.hpp"
#include "psl/infer.hpp"
#include "psl/semspace.hpp"
#include "psl/train.hpp"
#include "psl/world.hpp"

// File formats. Everything is ordered JSON (or CSV) with doubles rounded to 9
// significant digits before serialization, so write -> read -> write is
// byte-identical and diffs stay meaningful.

namespace psl {

using json = nlohmann::ordered_json;

// Round through the serialized form so parsing the printed value reproduces
// the stored double exactly.
inline double round9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

inline json num(double v) { return json(round9(v)); }

inline json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

inline Eigen::VectorXd vec_from_json(const json& a) {
  if (!a.is_array()) throw std::runtime_error("expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

// Reject unknown keys so config typos fail loudly instead of silently using
// defaults.
inline void expect_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::runtime_error(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::runtime_error(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void maybe_get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

// --- file IO ---------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error("cannot parse '" + path + "': " + e.what());
  }
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// --- semantic space --------------------------------------------------------

inline json semspace_config_to_json(const SemanticSpaceConfig& c) {
  json vocab = json::object();
  for (const auto& [facet, values] : c.attribute_vocab) vocab[facet] = values;
  return json{{"dim", c.dim},
              {"categories", c.categories},
              {"attribute_vocab", vocab},
              {"temperature", num(c.temperature)},
              {"gap_magnitude", num(c.gap_magnitude)},
              {"noise_scale", num(c.noise_scale)},
              {"seed", c.seed}};
}

inline SemanticSpaceConfig semspace_config_from_json(const json& j) {
  expect_keys(j, {"dim", "categories", "attribute_vocab", "temperature", "gap_magnitude", "noise_scale", "seed"},
              "semspace config");
  SemanticSpaceConfig c;
  maybe_get(j, "dim", c.dim);
  maybe_get(j, "categories", c.categories);
  if (j.contains("attribute_vocab")) {
    c.attribute_vocab.clear();
    for (const auto& [facet, values] : j.at("attribute_vocab").items()) {
      c.attribute_vocab[facet] = values.get<std::vector<std::string>>();
    }
  }
  maybe_get(j, "temperature", c.temperature);
  maybe_get(j, "gap_magnitude", c.gap_magnitude);
  maybe_get(j, "noise_scale", c.noise_scale);
  maybe_get(j, "seed", c.seed);
  return c;
}

// The codebook is a pure function of its config, so persisting the config is
// enough to reproduce every direction bit-for-bit.
inline json codebook_to_json(const Codebook& cb) {
  return json{{"schema", "codebook/1"}, {"config", semspace_config_to_json(cb.config())}};
}

inline Codebook codebook_from_json(const json& j) {
  expect_keys(j, {"schema", "config"}, "codebook");
  if (j.value("schema", "") != "codebook/1") throw std::runtime_error("codebook: unsupported schema");
  return build_codebook(semspace_config_from_json(j.at("config")));
}

// --- descriptors, poses, scenes ---------------------------------------------

inline json descriptor_to_json(const InstanceDescriptor& d) {
  json attrs = json::object();
  for (const auto& [facet, value] : d.attributes) attrs[facet] = value;
  return json{{"instance_id", d.instance_id},
              {"category", d.category},
              {"attributes", attrs},
              {"context_tags", d.context_tags}};
}

inline InstanceDescriptor descriptor_from_json(const json& j) {
  expect_keys(j, {"instance_id", "category", "attributes", "context_tags"}, "instance descriptor");
  InstanceDescriptor d;
  d.instance_id = j.at("instance_id").get<std::string>();
  d.category = j.at("category").get<std::string>();
  for (const auto& [facet, value] : j.at("attributes").items()) d.attributes[facet] = value.get<std::string>();
  maybe_get(j, "context_tags", d.context_tags);
  return d;
}

inline json pose_to_json(const AgentPose& p) {
  return json{{"x", num(p.x)}, {"y", num(p.y)}, {"yaw", p.yaw}, {"pitch", p.pitch}};
}

inline AgentPose pose_from_json(const json& j) {
  expect_keys(j, {"x", "y", "yaw", "pitch"}, "pose");
  return AgentPose{j.at("x").get<double>(), j.at("y").get<double>(), j.at("yaw").get<int>(),
                   j.at("pitch").get<int>()};
}

inline json cell_to_json(const Cell& c) { return json::array({c.x, c.y}); }

inline Cell cell_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::runtime_error("cell: expected [x, y]");
  return Cell{j[0].get<int>(), j[1].get<int>()};
}

inline json scene_to_json(const Scene& s) {
  std::vector<std::string> rows;
  rows.reserve(static_cast<std::size_t>(s.height));
  for (int y = 0; y < s.height; ++y) {
    rows.emplace_back(s.cells.begin() + static_cast<std::ptrdiff_t>(y) * s.width,
                      s.cells.begin() + static_cast<std::ptrdiff_t>(y + 1) * s.width);
  }
  json objects = json::array();
  for (const SceneObject& o : s.objects) {
    objects.push_back(json{{"desc", descriptor_to_json(o.desc)}, {"pos", cell_to_json(o.pos)}});
  }
  json viewpoints = json::object();
  for (const auto& [id, cells] : s.viewpoints) {
    json arr = json::array();
    for (const Cell& c : cells) arr.push_back(cell_to_json(c));
    viewpoints[id] = arr;
  }
  return json{{"id", s.id},       {"width", s.width},        {"height", s.height},
              {"rows", rows},     {"objects", objects},      {"viewpoints", viewpoints}};
}

inline Scene scene_from_json(const json& j) {
  expect_keys(j, {"id", "width", "height", "rows", "objects", "viewpoints"}, "scene");
  Scene s;
  s.id = j.at("id").get<std::string>();
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  const auto rows = j.at("rows").get<std::vector<std::string>>();
  if (static_cast<int>(rows.size()) != s.height) throw std::runtime_error("scene: row count != height");
  s.cells.reserve(static_cast<std::size_t>(s.width) * s.height);
  for (const std::string& row : rows) {
    if (static_cast<int>(row.size()) != s.width) throw std::runtime_error("scene: row width mismatch");
    for (char c : row) {
      if (c != '.' && c != '#') throw std::runtime_error("scene: invalid cell character");
      s.cells.push_back(c);
    }
  }
  for (const json& oj : j.at("objects")) {
    expect_keys(oj, {"desc", "pos"}, "scene object");
    SceneObject o;
    o.desc = descriptor_from_json(oj.at("desc"));
    o.pos = cell_from_json(oj.at("pos"));
    if (!s.is_floor(o.pos)) throw std::runtime_error("scene: object '" + o.desc.instance_id + "' not on floor");
    s.objects.push_back(std::move(o));
  }
  for (const auto& [id, arr] : j.at("viewpoints").items()) {
    std::vector<Cell> cells;
    for (const json& cj : arr) {
      Cell c = cell_from_json(cj);
      if (!s.is_floor(c)) throw std::runtime_error("scene: viewpoint off floor for '" + id + "'");
      cells.push_back(c);
    }
    if (cells.empty()) throw std::runtime_error("scene: instance '" + id + "' has no viewpoints");
    s.viewpoints[id] = std::move(cells);
  }
  for (const SceneObject& o : s.objects) {
    if (!s.viewpoints.count(o.desc.instance_id)) {
      throw std::runtime_error("scene: missing viewpoints for '" + o.desc.instance_id + "'");
    }
  }
  return s;
}

inline json scenes_to_json(const std::vector<Scene>& scenes) {
  json arr = json::array();
  for (const Scene& s : scenes) arr.push_back(scene_to_json(s));
  return json{{"schema", "scenes/1"}, {"scenes", arr}};
}

inline std::vector<Scene> scenes_from_json(const json& j) {
  expect_keys(j, {"schema", "scenes"}, "scenes file");
  if (j.value("schema", "") != "scenes/1") throw std::runtime_error("scenes file: unsupported schema");
  std::vector<Scene> out;
  for (const json& sj : j.at("scenes")) out.push_back(scene_from_json(sj));
  return out;
}

inline json scene_manifest_to_json(const std::vector<std::string>& files) {
  return json{{"schema", "scene-manifest/1"}, {"files", files}};
}

// Accepts either an inline scenes file or a manifest referencing one file per
// scene (paths relative to the manifest).
inline std::vector<Scene> load_scenes_file(const std::string& path) {
  const json j = parse_json_file(path);
  const std::string schema = j.is_object() ? j.value("schema", "") : "";
  if (schema == "scenes/1") return scenes_from_json(j);
  if (schema == "scene-manifest/1") {
    expect_keys(j, {"schema", "files"}, "scene manifest");
    const auto files = j.at("files").get<std::vector<std::string>>();
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    std::vector<Scene> out;
    out.reserve(files.size());
    for (const std::string& f : files) {
      const std::filesystem::path fp(f);
      out.push_back(scene_from_json(parse_json_file(fp.is_absolute() ? f : (base / fp).string())));
    }
    return out;
  }
  throw std::runtime_error("cannot read scenes from '" + path + "': unknown schema '" + schema + "'");
}

// --- episodes ----------------------------------------------------------------

inline json candidate_to_json(const ViewCandidate& v) {
  return json{{"index", v.index},
              {"pose", pose_to_json(v.pose)},
              {"embedding", vec_to_json(v.embedding)},
              {"class_probs", vec_to_json(v.class_probs)},
              {"entropy", num(v.entropy)}};
}

inline ViewCandidate candidate_from_json(const json& j) {
  expect_keys(j, {"index", "pose", "embedding", "class_probs", "entropy"}, "view candidate");
  ViewCandidate v;
  v.index = j.at("index").get<int>();
  v.pose = pose_from_json(j.at("pose"));
  v.embedding = vec_from_json(j.at("embedding"));
  v.class_probs = vec_from_json(j.at("class_probs"));
  v.entropy = j.at("entropy").get<double>();
  return v;
}

inline json episode_to_json(const Episode& ep) {
  json candidates = json::array();
  for (const ViewCandidate& v : ep.all_candidates) candidates.push_back(candidate_to_json(v));
  return json{{"episode_id", ep.episode_id},
              {"scene_id", ep.scene_id},
              {"start", pose_to_json(ep.start)},
              {"goal_instance", ep.goal_instance},
              {"goal_views", ep.goal_views},
              {"optimal_length_m", num(ep.optimal_length_m)},
              {"text_goal", descriptor_to_json(ep.text_goal)},
              {"candidates", candidates}};
}

inline Episode episode_from_json(const json& j) {
  expect_keys(j,
              {"episode_id", "scene_id", "start", "goal_instance", "goal_views", "optimal_length_m",
               "text_goal", "candidates"},
              "episode");
  Episode ep;
  ep.episode_id = j.at("episode_id").get<std::string>();
  ep.scene_id = j.at("scene_id").get<std::string>();
  ep.start = pose_from_json(j.at("start"));
  ep.goal_instance = j.at("goal_instance").get<std::string>();
  ep.goal_views = j.at("goal_views").get<std::vector<int>>();
  ep.optimal_length_m = j.at("optimal_length_m").get<double>();
  ep.text_goal = descriptor_from_json(j.at("text_goal"));
  for (const json& cj : j.at("candidates")) ep.all_candidates.push_back(candidate_from_json(cj));
  for (int idx : ep.goal_views) {
    if (idx < 0 || idx >= static_cast<int>(ep.all_candidates.size())) {
      throw std::runtime_error("episode '" + ep.episode_id + "': goal view index out of range");
    }
  }
  if (ep.goal_views.empty()) throw std::runtime_error("episode '" + ep.episode_id + "': no goal views");
  return ep;
}

// The manifest pins the semantic-space config and camera model used when the
// candidates were rendered, so later stages rebuild the exact same codebook.
inline json episodes_to_json(const std::vector<Episode>& episodes, const std::string& scenes_path,
                             const SemanticSpaceConfig& semspace, const json& fov) {
  json arr = json::array();
  for (const Episode& ep : episodes) arr.push_back(episode_to_json(ep));
  return json{{"schema", "episodes/1"},
              {"scenes_file", scenes_path},
              {"semspace", semspace_config_to_json(semspace)},
              {"fov", fov},
              {"episodes", arr}};
}

struct EpisodeFile {
  std::string scenes_file;
  SemanticSpaceConfig semspace;
  json fov;  // decoded by config.hpp to avoid a dependency cycle
  std::vector<Episode> episodes;
};

inline EpisodeFile episodes_from_json(const json& j) {
  expect_keys(j, {"schema", "scenes_file", "semspace", "fov", "episodes"}, "episodes file");
  if (j.value("schema", "") != "episodes/1") throw std::runtime_error("episodes file: unsupported schema");
  EpisodeFile out;
  out.scenes_file = j.at("scenes_file").get<std::string>();
  out.semspace = semspace_config_from_json(j.at("semspace"));
  out.fov = j.at("fov");
  for (const json& ej : j.at("episodes")) out.episodes.push_back(episode_from_json(ej));
  return out;
}

// --- support set ----------------------------------------------------------------

inline json support_to_json(const SupportSet& set) {
  json vectors = json::array();
  for (const Embedding& v : set.vectors) vectors.push_back(vec_to_json(v));
  return json{{"schema", "support/1"},
              {"lambda", num(set.lambda)},
              {"provenance", set.provenance},
              {"vectors", vectors}};
}

inline SupportSet support_from_json(const json& j) {
  expect_keys(j, {"schema", "lambda", "provenance", "vectors"}, "support file");
  if (j.value("schema", "") != "support/1") throw std::runtime_error("support file: unsupported schema");
  SupportSet set;
  set.lambda = j.at("lambda").get<double>();
  maybe_get(j, "provenance", set.provenance);
  for (const json& vj : j.at("vectors")) set.vectors.push_back(vec_from_json(vj));
  if (set.provenance.size() != set.vectors.size()) {
    throw std::runtime_error("support file: provenance/vectors length mismatch");
  }
  return set;
}

// --- agent checkpoints -------------------------------------------------------------

inline json agent_config_to_json(const AgentConfig& c) {
  return json{{"variant", variant_name(c.variant)},
              {"embed_dim", c.embed_dim},
              {"spm_dim", c.spm_dim},
              {"spm_hidden", c.spm_hidden},
              {"obs_encoder_dims", c.obs_encoder_dims},
              {"hidden_dim", c.hidden_dim},
              {"n_rays", c.n_rays},
              {"n_actions", c.n_actions}};
}

inline AgentConfig agent_config_from_json(const json& j) {
  expect_keys(j,
              {"variant", "embed_dim", "spm_dim", "spm_hidden", "obs_encoder_dims", "hidden_dim", "n_rays",
               "n_actions"},
              "agent config");
  AgentConfig c;
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
  maybe_get(j, "embed_dim", c.embed_dim);
  maybe_get(j, "spm_dim", c.spm_dim);
  maybe_get(j, "spm_hidden", c.spm_hidden);
  maybe_get(j, "obs_encoder_dims", c.obs_encoder_dims);
  maybe_get(j, "hidden_dim", c.hidden_dim);
  maybe_get(j, "n_rays", c.n_rays);
  maybe_get(j, "n_actions", c.n_actions);
  c.validate();
  return c;
}

inline json checkpoint_to_json(const AgentParams& params) {
  json arrays = json::object();
  for_each_param(const_cast<AgentParams&>(params), [&](const std::string& name, auto& m) {
    json values = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(num(m(r, c)));
    }
    arrays[name] = json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", values}};
  });
  return json{{"schema", "checkpoint/1"}, {"agent", agent_config_to_json(params.config)}, {"params", arrays}};
}

inline AgentParams checkpoint_from_json(const json& j) {
  expect_keys(j, {"schema", "agent", "params"}, "checkpoint");
  if (j.value("schema", "") != "checkpoint/1") throw std::runtime_error("checkpoint: unsupported schema");
  AgentParams p = zeros_like(init_agent(agent_config_from_json(j.at("agent")), 0));
  const json& arrays = j.at("params");
  for_each_param(p, [&](const std::string& name, auto& m) {
    if (!arrays.contains(name)) throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    const json& aj = arrays.at(name);
    if (aj.at("rows").get<Eigen::Index>() != m.rows() || aj.at("cols").get<Eigen::Index>() != m.cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    }
    const json& values = aj.at("values");
    if (static_cast<Eigen::Index>(values.size()) != m.size()) {
      throw std::runtime_error("checkpoint: value count mismatch for '" + name + "'");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = values[k++].get<double>();
    }
  });
  for (const auto& [name, value] : arrays.items()) {
    bool known = false;
    for_each_param(p, [&](const std::string& pname, auto&) { known = known || pname == name; });
    if (!known) throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
  }
  return p;
}

// --- CSV reports -------------------------------------------------------------------

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::string eval_report_csv(const EvalReport& report, GoalMode mode) {
  const std::string mode_name = goal_mode_name(mode);
  std::string out = "episode_id,mode,success,l,l_star,steps,stopped,final_dist_m,spl\n";
  for (const EvalEpisodeRecord& r : report.records) {
    out += r.episode_id + "," + mode_name + "," + (r.success ? "1" : "0") + "," +
           csv_num(r.path_length_m) + "," + csv_num(r.optimal_length_m) + "," +
           std::to_string(r.steps) + "," + (r.stopped ? "1" : "0") + "," + csv_num(r.final_dist_m) +
           "," + csv_num(spl_summand(r.success, r.path_length_m, r.optimal_length_m)) + "\n";
  }
  char summary[96];
  std::snprintf(summary, sizeof(summary), "summary,%s,SR=%s,SPL=%s,,,,,\n", mode_name.c_str(),
                csv_num(report.sr()).c_str(), csv_num(report.spl()).c_str());
  return out + summary;
}

inline json eval_summary_json(const EvalReport& report, GoalMode mode, const std::string& policy_name) {
  return json{{"policy", policy_name},
              {"goal_mode", goal_mode_name(mode)},
              {"episodes", report.records.size()},
              {"sr", num(report.sr())},
              {"spl", num(report.spl())}};
}

inline std::string progress_csv(const std::vector<ProgressRow>& rows) {
  std::string out =
      "env_steps,update,episodes,sr,spl,mean_return,mean_steps,policy_loss,value_loss,entropy,"
      "clip_fraction,grad_norm\n";
  for (const ProgressRow& r : rows) {
    out += std::to_string(r.env_steps) + "," + std::to_string(r.update) + "," + std::to_string(r.episodes) +
           "," + csv_num(r.sr) + "," + csv_num(r.spl) + "," + csv_num(r.mean_return) + "," +
           csv_num(r.mean_steps) + "," + csv_num(r.policy_loss) + "," + csv_num(r.value_loss) + "," +
           csv_num(r.entropy) + "," + csv_num(r.clip_fraction) + "," + csv_num(r.grad_norm) + "\n";
  }
  return out;
}

}  // namespace psl
