#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "psl/rng.hpp"

// Synthetic stand-in for a joint image/text embedding space. Category and
// attribute concepts get fixed random unit directions; an image embedding is a
// weighted sum of the visible instances' directions, a text embedding is the
// described concept's directions plus a controlled offset along a dedicated
// "modality gap" direction. The gap direction is kept orthogonal to the
// concept directions so the image-text mismatch is tunable via one scalar.

namespace psl {

using Embedding = Eigen::VectorXd;

struct SemanticSpaceConfig {
  int dim = 64;
  std::vector<std::string> categories = {"chair", "bed", "plant", "toilet", "tv", "sofa"};
  // facet -> allowed values; ordered map keeps serialization stable
  std::map<std::string, std::vector<std::string>> attribute_vocab = {
      {"color", {"black", "blue", "green", "red", "white"}},
      {"material", {"fabric", "glass", "metal", "wood"}},
      {"shape", {"flat", "round", "square", "tall"}},
  };
  double temperature = 100.0;    // scale for similarity logits
  double gap_magnitude = 0.15;   // text offset along the gap direction
  double noise_scale = 0.05;     // per-instance identity jitter
  std::uint64_t seed = 0;
};

struct InstanceDescriptor {
  std::string instance_id;
  std::string category;
  std::map<std::string, std::string> attributes;  // facet -> value
  std::vector<std::string> context_tags;          // categories of nearby objects
};

struct WeightedInstance {
  InstanceDescriptor desc;
  double weight = 1.0;
};

namespace detail {

inline Embedding random_unit(Rng& rng, int dim) {
  Embedding v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  const double n = v.norm();
  if (n < 1e-12) return random_unit(rng, dim);  // astronomically unlikely
  return v / n;
}

// Orthonormal basis builder capped at dim-1 vectors so there is always a
// leftover direction to draw from.
inline void extend_basis(std::vector<Embedding>& basis, const Embedding& v) {
  if (static_cast<int>(basis.size()) >= v.size() - 1) return;
  Embedding r = v;
  for (const Embedding& b : basis) r -= b.dot(r) * b;
  const double n = r.norm();
  if (n > 1e-8) basis.push_back(r / n);
}

inline Embedding draw_orthogonal(Rng& rng, int dim, const std::vector<Embedding>& basis) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Embedding v = random_unit(rng, dim);
    for (const Embedding& b : basis) v -= b.dot(v) * b;
    const double n = v.norm();
    if (n > 1e-8) return v / n;
  }
  throw std::runtime_error("semspace: embedding dim too small to draw an orthogonal direction");
}

}  // namespace detail

class Codebook {
 public:
  const SemanticSpaceConfig& config() const { return config_; }

  bool has_category(const std::string& name) const { return categories_.count(name) > 0; }

  const Embedding& category_dir(const std::string& name) const {
    auto it = categories_.find(name);
    if (it == categories_.end()) throw std::invalid_argument("semspace: unknown category '" + name + "'");
    return it->second;
  }

  const Embedding& attribute_dir(const std::string& facet, const std::string& value) const {
    auto it = attributes_.find(facet + "/" + value);
    if (it == attributes_.end()) {
      throw std::invalid_argument("semspace: unknown attribute '" + facet + "/" + value + "'");
    }
    return it->second;
  }

  const Embedding& gap_dir() const { return gap_dir_; }
  const Embedding& null_dir() const { return null_dir_; }

  // Identity jitter for one instance; orthogonal to the gap and null
  // directions so it cannot shift class logits systematically.
  Embedding instance_noise_dir(const std::string& instance_id) const {
    Rng rng(derive_seed(config_.seed, "instance-noise:" + instance_id));
    Embedding v = detail::random_unit(rng, config_.dim);
    v -= gap_dir_.dot(v) * gap_dir_;
    v -= null_dir_.dot(v) * null_dir_;
    const double n = v.norm();
    if (n < 1e-8) throw std::runtime_error("semspace: degenerate instance noise direction");
    return v / n;
  }

  // What a view of exactly this instance looks like (unit norm).
  Embedding instance_embedding(const InstanceDescriptor& desc) const {
    Embedding v = category_dir(desc.category);
    for (const auto& [facet, value] : desc.attributes) v += attribute_dir(facet, value);
    if (config_.noise_scale != 0.0) v += config_.noise_scale * instance_noise_dir(desc.instance_id);
    const double n = v.norm();
    if (n < 1e-12) throw std::runtime_error("semspace: degenerate instance embedding");
    return v / n;
  }

  const std::map<std::string, Embedding>& category_dirs() const { return categories_; }
  const std::map<std::string, Embedding>& attribute_dirs() const { return attributes_; }

  friend Codebook build_codebook(const SemanticSpaceConfig& config);

 private:
  SemanticSpaceConfig config_;
  std::map<std::string, Embedding> categories_;
  std::map<std::string, Embedding> attributes_;  // key "facet/value"
  Embedding gap_dir_;
  Embedding null_dir_;
};

inline Codebook build_codebook(const SemanticSpaceConfig& config) {
  if (config.dim < 8) throw std::invalid_argument("semspace: dim must be >= 8");
  if (config.categories.size() < 2) throw std::invalid_argument("semspace: need at least 2 categories");
  if (config.gap_magnitude < 0.0) throw std::invalid_argument("semspace: gap_magnitude must be >= 0");
  if (config.noise_scale < 0.0) throw std::invalid_argument("semspace: noise_scale must be >= 0");
  if (config.temperature <= 0.0) throw std::invalid_argument("semspace: temperature must be > 0");

  Codebook cb;
  cb.config_ = config;
  Rng rng(derive_seed(config.seed, "codebook"));

  std::vector<Embedding> basis;  // span of all concept directions (capped)
  for (const std::string& name : config.categories) {
    if (cb.categories_.count(name)) throw std::invalid_argument("semspace: duplicate category '" + name + "'");
    Embedding d = detail::random_unit(rng, config.dim);
    detail::extend_basis(basis, d);
    cb.categories_.emplace(name, std::move(d));
  }
  for (const auto& [facet, values] : config.attribute_vocab) {
    for (const std::string& value : values) {
      const std::string key = facet + "/" + value;
      if (cb.attributes_.count(key)) throw std::invalid_argument("semspace: duplicate attribute '" + key + "'");
      Embedding d = detail::random_unit(rng, config.dim);
      detail::extend_basis(basis, d);
      cb.attributes_.emplace(key, std::move(d));
    }
  }

  // Gap direction lives outside the concept span, so adding it to a text
  // embedding only ever rotates it away from image embeddings.
  cb.gap_dir_ = detail::draw_orthogonal(rng, config.dim, basis);

  // Empty views map here; orthogonal to categories and gap so an empty view
  // scores all classes equally.
  std::vector<Embedding> null_basis;
  for (const auto& [name, d] : cb.categories_) detail::extend_basis(null_basis, d);
  detail::extend_basis(null_basis, cb.gap_dir_);
  cb.null_dir_ = detail::draw_orthogonal(rng, config.dim, null_basis);

  return cb;
}

// Core of image_embed, on precomputed per-instance embeddings (hot path).
inline Embedding image_embed_from_dirs(const Codebook& cb,
                                       const std::vector<std::pair<const Embedding*, double>>& visible) {
  Embedding v = Embedding::Zero(cb.config().dim);
  double total = 0.0;
  for (const auto& [dir, w] : visible) {
    if (w < 0.0) throw std::invalid_argument("semspace: negative visibility weight");
    if (w == 0.0) continue;
    v += w * (*dir);
    total += w;
  }
  if (total <= 0.0 || v.norm() < 1e-12) return cb.null_dir();
  return v.normalized();
}

// Embedding of a view: visibility-weighted blend of the visible instances,
// or the null direction when nothing is visible.
inline Embedding image_embed(const Codebook& cb, const std::vector<WeightedInstance>& visible) {
  std::vector<Embedding> dirs;
  dirs.reserve(visible.size());
  std::vector<std::pair<const Embedding*, double>> refs;
  refs.reserve(visible.size());
  for (const WeightedInstance& wi : visible) {
    dirs.push_back(cb.instance_embedding(wi.desc));
    refs.emplace_back(&dirs.back(), wi.weight);
  }
  return image_embed_from_dirs(cb, refs);
}

// Embedding of a phrase like "red fabric sofa near a tv": category plus
// attribute and context directions, displaced along the modality gap.
inline Embedding text_embed(const Codebook& cb, const std::string& category,
                            const std::map<std::string, std::string>& attributes = {},
                            const std::vector<std::string>& context_tags = {}) {
  Embedding v = cb.category_dir(category);
  for (const auto& [facet, value] : attributes) v += cb.attribute_dir(facet, value);
  for (const std::string& tag : context_tags) v += cb.category_dir(tag);
  v += cb.config().gap_magnitude * cb.gap_dir();
  const double n = v.norm();
  if (n < 1e-12) throw std::runtime_error("semspace: degenerate text embedding");
  return v / n;
}

// Temperature-scaled cosine similarity; the comparison primitive used for
// classification, view scoring, and retrieval.
inline double scaled_cosine(const Embedding& a, const Embedding& b, double tau) {
  if (a.size() != b.size()) throw std::invalid_argument("scaled_cosine: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) throw std::invalid_argument("scaled_cosine: zero-norm input");
  return tau * a.dot(b) / (na * nb);
}

}  // namespace psl
