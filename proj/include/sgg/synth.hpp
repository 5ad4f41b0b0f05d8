#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgg/matrix.hpp"
#include "sgg/rng.hpp"
#include "sgg/scene.hpp"

namespace sgg::synth {

struct SizeRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Places count_min..count_max instances of one class.
//   uniform      scatter anywhere in the image
//   edge_strip   centers along one image edge (docks, runways)
//   near_anchor  at a distance band around a previously placed anchor object
//   chain        one or more polyline chains with regular spacing (towers)
struct PlacementRule {
  std::string object_class;
  std::string mode = "uniform";
  int count_min = 0;
  int count_max = 0;
  SizeRange width;
  SizeRange height;
  std::string angle_mode = "any";  // any | axis | along
  std::string anchor_class;        // near_anchor
  double anchor_dist_min = 0.0;
  double anchor_dist_max = 0.0;
  std::string edge = "south";  // edge_strip: north | south | east | west
  double edge_margin = 0.0;
  int chain_count = 1;  // chain
  double spacing_min = 0.0;
  double spacing_max = 0.0;
  double jitter = 0.0;
};

// Emits `relation` on every ordered (subject, object) pair whose geometry
// satisfies the predicate. Several rules may fire on one pair (multi-label).
//   distance_lt       center distance < dist_a
//   distance_between  dist_a <= center distance < dist_b
//   overlaps          rotated IoU > 0
//   contains_center   subject center inside object box
//   aligned           |angle difference| <= angle_tol (and distance < dist_b
//                     when dist_b > 0)
//   shared_anchor     both endpoints within dist_a of an anchor_class object;
//                     same_anchor selects a common anchor vs. disjoint ones
//   same_component    endpoints in one connected component of the
//                     link-distance graph over their classes; with
//                     exclude_linked only multi-hop pairs fire
struct RelationRule {
  std::string name;
  std::string relation;
  std::string subject_class;
  std::string object_class;
  std::string predicate;
  double dist_a = 0.0;
  double dist_b = 0.0;
  double angle_tol = 0.0;
  std::string anchor_class;
  bool same_anchor = true;
  double link_dist = 0.0;
  bool exclude_linked = false;
};

struct SceneRecipe {
  uint64_t seed = 0;
  double image_width = 0.0;
  double image_height = 0.0;
  int feature_dim = 64;
  double feature_noise = 0.25;
  std::vector<PlacementRule> placements;
  std::vector<RelationRule> rules;

  static SceneRecipe parse(const std::string& json_text);
  static SceneRecipe load(const std::string& path);
  std::string serialize() const;
  void validate(const scene::CategoryVocabulary& vocab) const;
};

struct SceneSample {
  scene::SceneGraph graph;
  Mat features;  // one row per object, graph.objects order
};

// Deterministic and exhaustive over all ordered pairs; output is deduplicated
// per (subject, relation, object) and sorted by (subject, object, relation).
std::vector<scene::Triplet> relationship_oracle(const std::vector<scene::ObjectInstance>& objects,
                                                const std::vector<RelationRule>& rules,
                                                const scene::CategoryVocabulary& vocab);

// Bit-reproducible for a given (recipe.seed, scene_index).
SceneSample generate_scene(const SceneRecipe& recipe, const scene::CategoryVocabulary& vocab,
                           uint64_t scene_index = 0);

// Class-conditioned Gaussian stand-ins for backbone features: a deterministic
// per-class mean derived from the class name plus per-instance noise.
std::vector<double> class_mean_feature(const std::string& class_name, int dim);
Mat instance_features(const std::vector<scene::ObjectInstance>& objects,
                      const scene::CategoryVocabulary& vocab, int dim, double noise, Rng& rng);

std::string serialize_features(const Mat& features);
Mat parse_features(const std::string& text);

}  // namespace sgg::synth
