#pragma once

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "sgg/obb.hpp"

namespace sgg::scene {

// Ordered object/relation class lists plus the set of admissible
// (subject class, relation, object class) combinations. Indices are the
// line order of the vocabulary file and are stable across save/load.
struct CategoryVocabulary {
  std::vector<std::string> object_classes;
  std::vector<std::string> relation_classes;
  std::set<std::tuple<int, int, int>> interactions;

  int object_index(const std::string& name) const;    // -1 when unknown
  int relation_index(const std::string& name) const;  // -1 when unknown
  bool admissible(int subject_class, int relation, int object_class) const;
  int num_objects() const { return static_cast<int>(object_classes.size()); }
  int num_relations() const { return static_cast<int>(relation_classes.size()); }

  void add_interaction(const std::string& s, const std::string& r, const std::string& o);

  // line-oriented text format with [objects] / [relations] / [interactions]
  static CategoryVocabulary parse(const std::string& text);
  static CategoryVocabulary load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;
};

struct ObjectInstance {
  int id = 0;  // unique within a scene; equals list position in parsed scenes
  int class_index = 0;
  geom::OrientedBox box;
};

struct Triplet {
  int subject_id = 0;
  int object_id = 0;
  int relation_index = 0;
  double score = 1.0;  // 1.0 for ground truth
};

struct SceneGraph {
  double image_width = 0.0;
  double image_height = 0.0;
  std::vector<ObjectInstance> objects;
  std::vector<Triplet> triplets;

  const ObjectInstance* find_object(int id) const;
};

struct Violation {
  enum class Level { structural, admissibility };
  Level level = Level::structural;
  std::string rule;
  std::string detail;
};

// Plain-text annotation pair: object lines `x1 y1 ... y4 class_name`,
// triplet lines `subject_index relation_name object_index` (0-based list
// positions). Image dimensions are not part of the text format; pass them
// when known, otherwise they are inferred from the corner extent.
SceneGraph parse_annotation_file(const std::string& object_text, const std::string& triplet_text,
                                 const CategoryVocabulary& vocab, double image_width = 0.0,
                                 double image_height = 0.0);

std::string serialize_objects(const SceneGraph& g, const CategoryVocabulary& vocab);
std::string serialize_triplets(const SceneGraph& g, const CategoryVocabulary& vocab);

// One record per violated invariant; empty means the graph satisfies every
// structural rule and every triplet is admissible under the interaction map.
std::vector<Violation> validate_scene_graph(const SceneGraph& g, const CategoryVocabulary& vocab);

// Stable-key structured-text document (JSON) used for golden files and as the
// on-disk scene format; carries the image dimensions the annotation pair
// cannot.
std::string to_document(const SceneGraph& g, const CategoryVocabulary& vocab);
SceneGraph from_document(const std::string& text, const CategoryVocabulary& vocab);

}  // namespace sgg::scene
