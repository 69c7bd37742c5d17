#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "psl/rng.hpp"
#include "psl/semspace.hpp"

// Procedural multi-room gridworld. Cells are 0.25 m squares, '.' floor and
// '#' wall. The agent holds a continuous position inside a floor cell, a
// discrete yaw (Omega steps around the circle) and a discrete pitch in
// {-1, 0, +1}. Observations are a 1-D depth scan plus the semantic embedding
// of whatever objects the scan hits.

namespace psl {

inline constexpr double kCellMeters = 0.25;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell& a, const Cell& b) { return a.x == b.x && a.y == b.y; }
  friend bool operator<(const Cell& a, const Cell& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; }
};

struct SceneObject {
  InstanceDescriptor desc;
  Cell pos;
};

struct Scene {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<char> cells;  // row-major, '.' or '#'
  std::vector<SceneObject> objects;
  std::map<std::string, std::vector<Cell>> viewpoints;  // instance_id -> floor cells

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  char at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x]; }
  char& at(int x, int y) { return cells[static_cast<std::size_t>(y) * width + x]; }
  bool is_floor(int x, int y) const { return in_bounds(x, y) && at(x, y) == '.'; }
  bool is_floor(const Cell& c) const { return is_floor(c.x, c.y); }

  const SceneObject& object(const std::string& instance_id) const {
    for (const SceneObject& o : objects) {
      if (o.desc.instance_id == instance_id) return o;
    }
    throw std::invalid_argument("scene: unknown instance '" + instance_id + "'");
  }
};

struct AgentPose {
  double x = 0.0;  // cell units; cell (i,j) spans [i,i+1) x [j,j+1)
  double y = 0.0;
  int yaw = 0;   // heading index in [0, omega)
  int pitch = 0;  // -1 down, 0 level, +1 up
};

inline Cell cell_of(const AgentPose& p) {
  return Cell{static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y))};
}

enum class Action : int {
  MoveForward = 0,
  TurnLeft = 1,
  TurnRight = 2,
  LookUp = 3,
  LookDown = 4,
  Stop = 5,
};
inline constexpr int kNumActions = 6;

inline const char* action_name(Action a) {
  switch (a) {
    case Action::MoveForward: return "move_forward";
    case Action::TurnLeft: return "turn_left";
    case Action::TurnRight: return "turn_right";
    case Action::LookUp: return "look_up";
    case Action::LookDown: return "look_down";
    case Action::Stop: return "stop";
  }
  throw std::invalid_argument("unknown action");
}

struct StepResult {
  AgentPose pose;
  bool stopped = false;
};

// Minimum yaw-index distance on the Omega-cycle, in [0, omega/2].
inline int yaw_index_distance(int a, int b, int omega) {
  int d = std::abs(a - b) % omega;
  return std::min(d, omega - d);
}

inline double yaw_angle(int yaw, int omega) { return 2.0 * std::numbers::pi * yaw / omega; }

// Pitch steps are 30 degrees apart.
inline constexpr double kPitchStepRad = std::numbers::pi / 6.0;

inline StepResult step(const Scene& scene, const AgentPose& pose, Action action, int omega = 12) {
  if (omega < 4) throw std::invalid_argument("step: omega must be >= 4");
  if (!scene.is_floor(cell_of(pose))) throw std::invalid_argument("step: pose is not in a floor cell");
  StepResult res{pose, false};
  switch (action) {
    case Action::MoveForward: {
      const double th = yaw_angle(pose.yaw, omega);
      const double nx = pose.x + std::cos(th);
      const double ny = pose.y + std::sin(th);
      // Require both the midpoint and the destination to be walkable so a
      // step can never tunnel through a wall corner.
      const Cell mid{static_cast<int>(std::floor(pose.x + 0.5 * std::cos(th))),
                     static_cast<int>(std::floor(pose.y + 0.5 * std::sin(th)))};
      const Cell dst{static_cast<int>(std::floor(nx)), static_cast<int>(std::floor(ny))};
      if (scene.is_floor(mid) && scene.is_floor(dst)) {
        res.pose.x = nx;
        res.pose.y = ny;
      }
      break;
    }
    case Action::TurnLeft:
      res.pose.yaw = (pose.yaw + 1) % omega;
      break;
    case Action::TurnRight:
      res.pose.yaw = (pose.yaw + omega - 1) % omega;
      break;
    case Action::LookUp:
      res.pose.pitch = std::min(pose.pitch + 1, 1);
      break;
    case Action::LookDown:
      res.pose.pitch = std::max(pose.pitch - 1, -1);
      break;
    case Action::Stop:
      res.stopped = true;
      break;
  }
  return res;
}

struct FovConfig {
  int n_rays = 16;
  double fov_rad = std::numbers::pi / 2.0;  // horizontal field of view
  double max_range_m = 4.0;
  int omega = 12;  // yaw divisions; shared with step()
};

struct Observation {
  Eigen::VectorXd layout;  // per-ray free distance, normalized to [0, 1]
  Embedding semantic;
};

// Per-scene render cache: instance embeddings are pure functions of the
// codebook, so compute them once instead of per frame.
struct RenderCache {
  const Scene* scene = nullptr;
  const Codebook* codebook = nullptr;
  std::vector<Embedding> instance_dirs;  // aligned with scene.objects
};

inline RenderCache build_render_cache(const Scene& scene, const Codebook& cb) {
  RenderCache cache;
  cache.scene = &scene;
  cache.codebook = &cb;
  cache.instance_dirs.reserve(scene.objects.size());
  for (const SceneObject& o : scene.objects) cache.instance_dirs.push_back(cb.instance_embedding(o.desc));
  return cache;
}

inline Observation render(const RenderCache& cache, const AgentPose& pose, const FovConfig& fov) {
  const Scene& scene = *cache.scene;
  if (fov.n_rays < 1) throw std::invalid_argument("render: n_rays must be >= 1");
  if (!scene.is_floor(cell_of(pose))) throw std::invalid_argument("render: pose is not in a floor cell");

  const double max_range_cells = fov.max_range_m / kCellMeters;
  Eigen::VectorXd layout(fov.n_rays);
  // nearest hit distance (meters) per object; only the closest sighting counts
  std::vector<double> best(scene.objects.size(), kInf);

  for (int r = 0; r < fov.n_rays; ++r) {
    const double ang = yaw_angle(pose.yaw, fov.omega) + fov.fov_rad * ((r + 0.5) / fov.n_rays - 0.5);
    const double dx = std::cos(ang);
    const double dy = std::sin(ang);
    int cx = static_cast<int>(std::floor(pose.x));
    int cy = static_cast<int>(std::floor(pose.y));

    // grid DDA setup
    const int sx = dx > 0 ? 1 : -1;
    const int sy = dy > 0 ? 1 : -1;
    const double tdx = dx != 0.0 ? std::abs(1.0 / dx) : kInf;
    const double tdy = dy != 0.0 ? std::abs(1.0 / dy) : kInf;
    double tmx = dx != 0.0 ? ((dx > 0 ? (cx + 1 - pose.x) : (pose.x - cx)) * tdx) : kInf;
    double tmy = dy != 0.0 ? ((dy > 0 ? (cy + 1 - pose.y) : (pose.y - cy)) * tdy) : kInf;

    auto visit_objects = [&](int x, int y) {
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const Cell& p = scene.objects[i].pos;
        if (p.x == x && p.y == y) {
          const double ox = p.x + 0.5;
          const double oy = p.y + 0.5;
          const double d = std::hypot(ox - pose.x, oy - pose.y) * kCellMeters;
          best[i] = std::min(best[i], d);
        }
      }
    };

    visit_objects(cx, cy);  // the agent's own cell is always seen
    double free_cells = max_range_cells;
    while (true) {
      const double t = std::min(tmx, tmy);
      if (t >= max_range_cells) break;
      if (tmx <= tmy) {
        cx += sx;
        tmx += tdx;
      } else {
        cy += sy;
        tmy += tdy;
      }
      if (!scene.is_floor(cx, cy)) {  // out of bounds counts as wall
        free_cells = t;
        break;
      }
      visit_objects(cx, cy);
    }
    layout[r] = std::min(free_cells, max_range_cells) / max_range_cells;
  }

  std::vector<std::pair<const Embedding*, double>> visible;
  for (std::size_t i = 0; i < best.size(); ++i) {
    if (best[i] < kInf) {
      double w = 1.0 / (1.0 + best[i]);
      if (pose.pitch != 0) w *= 0.5;  // tilted views see everything attenuated
      visible.emplace_back(&cache.instance_dirs[i], w);
    }
  }

  Observation obs;
  obs.layout = std::move(layout);
  obs.semantic = image_embed_from_dirs(*cache.codebook, visible);
  return obs;
}

inline Observation render(const Scene& scene, const AgentPose& pose, const Codebook& cb,
                          const FovConfig& fov = {}) {
  const RenderCache cache = build_render_cache(scene, cb);
  return render(cache, pose, fov);
}

// --- distances ------------------------------------------------------------

// Multi-source BFS over floor cells, 4-connected; result in meters, walls and
// unreachable cells get +inf.
inline std::vector<double> distance_field(const Scene& scene, const std::vector<Cell>& sources) {
  if (sources.empty()) throw std::invalid_argument("distance_field: no source cells");
  std::vector<double> dist(static_cast<std::size_t>(scene.width) * scene.height, kInf);
  std::deque<Cell> queue;
  for (const Cell& s : sources) {
    if (!scene.is_floor(s)) throw std::invalid_argument("distance_field: source is not a floor cell");
    double& d = dist[static_cast<std::size_t>(s.y) * scene.width + s.x];
    if (d == kInf) {
      d = 0.0;
      queue.push_back(s);
    }
  }
  const int dx[4] = {1, -1, 0, 0};
  const int dy[4] = {0, 0, 1, -1};
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    const double d = dist[static_cast<std::size_t>(c.y) * scene.width + c.x];
    for (int k = 0; k < 4; ++k) {
      const int nx = c.x + dx[k];
      const int ny = c.y + dy[k];
      if (!scene.is_floor(nx, ny)) continue;
      double& nd = dist[static_cast<std::size_t>(ny) * scene.width + nx];
      if (nd == kInf) {
        nd = d + kCellMeters;
        queue.push_back(Cell{nx, ny});
      }
    }
  }
  return dist;
}

inline double geodesic_distance(const Scene& scene, const Cell& a, const Cell& b) {
  if (!scene.is_floor(a) || !scene.is_floor(b)) {
    throw std::invalid_argument("geodesic_distance: endpoint is not a floor cell");
  }
  const std::vector<double> dist = distance_field(scene, {a});
  return dist[static_cast<std::size_t>(b.y) * scene.width + b.x];
}

// Bresenham line between cell centers; true when no intermediate wall blocks.
inline bool line_of_sight(const Scene& scene, const Cell& a, const Cell& b) {
  int x0 = a.x, y0 = a.y;
  const int x1 = b.x, y1 = b.y;
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (!(x0 == x1 && y0 == y1)) {
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
    if (x0 == x1 && y0 == y1) break;
    if (!scene.is_floor(x0, y0)) return false;
  }
  return true;
}

// --- generation -------------------------------------------------------------

struct SceneGenConfig {
  int rooms = 3;
  int min_size = 14;  // grid side length range, >= 8
  int max_size = 18;
  int objects_per_room = 2;
  int min_duplicate_categories = 1;  // force repeated categories for ambiguity
  double viewpoint_radius_m = 0.75;
  double context_radius_m = 2.0;  // neighbors inside this range become context tags
  std::string id;                 // empty -> derived from seed
};

namespace detail {

struct RoomRect {
  int x, y, w, h;
  Cell center() const { return Cell{x + w / 2, y + h / 2}; }
};

inline bool rects_overlap(const RoomRect& a, const RoomRect& b) {
  return a.x - 1 <= b.x + b.w && b.x - 1 <= a.x + a.w && a.y - 1 <= b.y + b.h && b.y - 1 <= a.y + a.h;
}

inline bool floor_connected(const Scene& scene) {
  Cell start{-1, -1};
  int floor_count = 0;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      if (scene.at(x, y) == '.') {
        ++floor_count;
        if (start.x < 0) start = Cell{x, y};
      }
    }
  }
  if (floor_count == 0) return false;
  const std::vector<double> dist = distance_field(scene, {start});
  int reached = 0;
  for (double d : dist) {
    if (d < kInf) ++reached;
  }
  return reached == floor_count;
}

}  // namespace detail

inline std::vector<Cell> compute_viewpoints(const Scene& scene, const Cell& obj, double radius_m) {
  std::vector<Cell> out;
  const double radius_cells = radius_m / kCellMeters;
  const int r = static_cast<int>(std::ceil(radius_cells));
  for (int y = obj.y - r; y <= obj.y + r; ++y) {
    for (int x = obj.x - r; x <= obj.x + r; ++x) {
      if (!scene.is_floor(x, y)) continue;
      const double d = std::hypot(x - obj.x, y - obj.y);
      if (d > radius_cells + 1e-9) continue;
      if (!line_of_sight(scene, Cell{x, y}, obj)) continue;
      out.push_back(Cell{x, y});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline Scene generate_scene(std::uint64_t seed, const SceneGenConfig& cfg = {}) {
  if (cfg.rooms < 1) throw std::invalid_argument("generate_scene: rooms must be >= 1");
  if (cfg.min_size < 8) throw std::invalid_argument("generate_scene: min_size must be >= 8");
  if (cfg.max_size < cfg.min_size) throw std::invalid_argument("generate_scene: max_size < min_size");
  if (cfg.objects_per_room < 0) throw std::invalid_argument("generate_scene: objects_per_room must be >= 0");
  if (cfg.viewpoint_radius_m <= 0.0) throw std::invalid_argument("generate_scene: viewpoint_radius_m must be > 0");

  static const std::vector<std::string> kCategories = SemanticSpaceConfig{}.categories;
  static const auto kVocab = SemanticSpaceConfig{}.attribute_vocab;

  Rng rng(derive_seed(seed, "scene-layout"));

  for (int attempt = 0; attempt < 64; ++attempt) {
    Scene scene;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(seed));
      scene.id = cfg.id.empty() ? std::string("scene-") + buf : cfg.id;
    }
    scene.width = cfg.min_size + rng.uniform_index(cfg.max_size - cfg.min_size + 1);
    scene.height = cfg.min_size + rng.uniform_index(cfg.max_size - cfg.min_size + 1);
    scene.cells.assign(static_cast<std::size_t>(scene.width) * scene.height, '#');

    // place non-overlapping rooms, then connect consecutive centers with
    // L-shaped corridors; corridors carve through anything so the floor
    // stays connected
    std::vector<detail::RoomRect> rooms;
    for (int i = 0; i < cfg.rooms; ++i) {
      for (int t = 0; t < 60; ++t) {
        const int maxw = std::max(3, scene.width / 2 - 2);
        const int maxh = std::max(3, scene.height / 2 - 2);
        detail::RoomRect rect{};
        rect.w = 3 + rng.uniform_index(std::max(1, maxw - 2));
        rect.h = 3 + rng.uniform_index(std::max(1, maxh - 2));
        rect.x = 1 + rng.uniform_index(std::max(1, scene.width - rect.w - 2));
        rect.y = 1 + rng.uniform_index(std::max(1, scene.height - rect.h - 2));
        bool ok = true;
        for (const auto& other : rooms) {
          if (detail::rects_overlap(rect, other)) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        rooms.push_back(rect);
        break;
      }
    }
    if (rooms.empty()) continue;
    for (const auto& room : rooms) {
      for (int y = room.y; y < room.y + room.h; ++y) {
        for (int x = room.x; x < room.x + room.w; ++x) scene.at(x, y) = '.';
      }
    }
    for (std::size_t i = 1; i < rooms.size(); ++i) {
      Cell a = rooms[i - 1].center();
      Cell b = rooms[i].center();
      if (rng.uniform_int(2) == 0) std::swap(a, b);
      for (int x = std::min(a.x, b.x); x <= std::max(a.x, b.x); ++x) scene.at(x, a.y) = '.';
      for (int y = std::min(a.y, b.y); y <= std::max(a.y, b.y); ++y) scene.at(b.x, y) = '.';
    }

    // objects: uniform floor cell inside each room, one instance per cell
    int obj_counter = 0;
    bool placement_failed = false;
    for (const auto& room : rooms) {
      for (int k = 0; k < cfg.objects_per_room && !placement_failed; ++k) {
        Cell pos{};
        bool found = false;
        for (int t = 0; t < 40; ++t) {
          pos = Cell{room.x + rng.uniform_index(room.w), room.y + rng.uniform_index(room.h)};
          bool taken = false;
          for (const SceneObject& o : scene.objects) {
            if (o.pos == pos) {
              taken = true;
              break;
            }
          }
          if (!taken && scene.is_floor(pos)) {
            found = true;
            break;
          }
        }
        if (!found) {
          placement_failed = true;
          break;
        }
        SceneObject obj;
        obj.pos = pos;
        obj.desc.instance_id = scene.id + "-obj" + std::to_string(obj_counter++);
        obj.desc.category = kCategories[static_cast<std::size_t>(rng.uniform_index(static_cast<int>(kCategories.size())))];
        for (const auto& [facet, values] : kVocab) {
          obj.desc.attributes[facet] = values[static_cast<std::size_t>(rng.uniform_index(static_cast<int>(values.size())))];
        }
        scene.objects.push_back(std::move(obj));
      }
    }
    if (placement_failed) continue;

    // make sure the scene carries category ambiguity: at least
    // min_duplicate_categories objects share a category with another object
    if (cfg.min_duplicate_categories > 0 && scene.objects.size() >= 2) {
      std::map<std::string, int> counts;
      for (const SceneObject& o : scene.objects) counts[o.desc.category]++;
      int dup_pairs = 0;
      for (const auto& [cat, n] : counts) dup_pairs += n - 1;
      for (std::size_t i = 1; i < scene.objects.size() && dup_pairs < cfg.min_duplicate_categories; ++i) {
        if (scene.objects[i].desc.category == scene.objects[0].desc.category) continue;
        scene.objects[i].desc.category = scene.objects[0].desc.category;
        // keep the duplicate distinguishable through its attributes
        for (int t = 0; t < 20 && scene.objects[i].desc.attributes == scene.objects[0].desc.attributes; ++t) {
          for (const auto& [facet, values] : kVocab) {
            scene.objects[i].desc.attributes[facet] =
                values[static_cast<std::size_t>(rng.uniform_index(static_cast<int>(values.size())))];
          }
        }
        ++dup_pairs;
      }
    }

    // context tags: categories of other objects nearby
    const double ctx_cells = cfg.context_radius_m / kCellMeters;
    for (SceneObject& o : scene.objects) {
      std::vector<std::string> tags;
      for (const SceneObject& other : scene.objects) {
        if (other.desc.instance_id == o.desc.instance_id) continue;
        const double d = std::hypot(other.pos.x - o.pos.x, other.pos.y - o.pos.y);
        if (d <= ctx_cells) tags.push_back(other.desc.category);
      }
      std::sort(tags.begin(), tags.end());
      tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
      o.desc.context_tags = std::move(tags);
    }

    for (const SceneObject& o : scene.objects) {
      scene.viewpoints[o.desc.instance_id] = compute_viewpoints(scene, o.pos, cfg.viewpoint_radius_m);
    }

    bool viewpoints_ok = true;
    for (const auto& [id, vps] : scene.viewpoints) {
      if (vps.empty()) {
        viewpoints_ok = false;
        break;
      }
    }
    if (!viewpoints_ok) continue;
    if (!detail::floor_connected(scene)) continue;
    return scene;
  }
  throw std::runtime_error("generate_scene: no valid layout after 64 attempts");
}

}  // namespace psl
