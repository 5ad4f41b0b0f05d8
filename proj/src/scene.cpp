#include "sgg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "nlohmann/json.hpp"
#include "sgg/text.hpp"

namespace sgg::scene {

namespace {

using ordered_json = nlohmann::ordered_json;

int index_of(const std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

}  // namespace

int CategoryVocabulary::object_index(const std::string& name) const {
  return index_of(object_classes, name);
}

int CategoryVocabulary::relation_index(const std::string& name) const {
  return index_of(relation_classes, name);
}

bool CategoryVocabulary::admissible(int s, int r, int o) const {
  return interactions.count({s, r, o}) > 0;
}

void CategoryVocabulary::add_interaction(const std::string& s, const std::string& r,
                                         const std::string& o) {
  int si = object_index(s), ri = relation_index(r), oi = object_index(o);
  if (si < 0) throw VocabularyError("interaction references unknown object class: " + s);
  if (ri < 0) throw VocabularyError("interaction references unknown relation class: " + r);
  if (oi < 0) throw VocabularyError("interaction references unknown object class: " + o);
  interactions.insert({si, ri, oi});
}

CategoryVocabulary CategoryVocabulary::parse(const std::string& text) {
  CategoryVocabulary v;
  enum class Section { none, objects, relations, interactions } section = Section::none;
  int line_no = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line == "[objects]") {
      section = Section::objects;
      continue;
    }
    if (line == "[relations]") {
      section = Section::relations;
      continue;
    }
    if (line == "[interactions]") {
      section = Section::interactions;
      continue;
    }
    switch (section) {
      case Section::none:
        throw VocabularyError("vocabulary line " + std::to_string(line_no) +
                              ": content before any section header");
      case Section::objects:
        if (v.object_index(line) >= 0)
          throw VocabularyError("vocabulary line " + std::to_string(line_no) +
                                ": duplicate object class '" + line + "'");
        v.object_classes.push_back(line);
        break;
      case Section::relations:
        if (v.relation_index(line) >= 0)
          throw VocabularyError("vocabulary line " + std::to_string(line_no) +
                                ": duplicate relation class '" + line + "'");
        v.relation_classes.push_back(line);
        break;
      case Section::interactions: {
        auto tok = split_ws(line);
        if (tok.size() != 3)
          throw VocabularyError("vocabulary line " + std::to_string(line_no) +
                                ": interaction needs `subject relation object`");
        try {
          v.add_interaction(tok[0], tok[1], tok[2]);
        } catch (const VocabularyError& e) {
          throw VocabularyError("vocabulary line " + std::to_string(line_no) + ": " + e.what());
        }
        break;
      }
    }
  }
  return v;
}

CategoryVocabulary CategoryVocabulary::load(const std::string& path) {
  try {
    return parse(read_file(path));
  } catch (const VocabularyError& e) {
    throw VocabularyError(path + ": " + e.what());
  }
}

std::string CategoryVocabulary::serialize() const {
  std::string out = "[objects]\n";
  for (const std::string& s : object_classes) out += s + "\n";
  out += "[relations]\n";
  for (const std::string& s : relation_classes) out += s + "\n";
  out += "[interactions]\n";
  for (const auto& [s, r, o] : interactions)
    out += object_classes[static_cast<size_t>(s)] + " " + relation_classes[static_cast<size_t>(r)] +
           " " + object_classes[static_cast<size_t>(o)] + "\n";
  return out;
}

void CategoryVocabulary::save(const std::string& path) const { write_file(path, serialize()); }

const ObjectInstance* SceneGraph::find_object(int id) const {
  for (const ObjectInstance& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

SceneGraph parse_annotation_file(const std::string& object_text, const std::string& triplet_text,
                                 const CategoryVocabulary& vocab, double image_width,
                                 double image_height) {
  SceneGraph g;
  int line_no = 0;
  for (const std::string& raw : split_lines(object_text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto tok = split_ws(line);
    if (tok.size() != 9)
      throw ParseError("objects line " + std::to_string(line_no) +
                       ": expected 8 coordinates and a class name, got " +
                       std::to_string(tok.size()) + " fields");
    std::array<geom::Vec2, 4> pts;
    for (int i = 0; i < 4; ++i) {
      if (!parse_double(tok[static_cast<size_t>(2 * i)], pts[static_cast<size_t>(i)].x) ||
          !parse_double(tok[static_cast<size_t>(2 * i + 1)], pts[static_cast<size_t>(i)].y))
        throw ParseError("objects line " + std::to_string(line_no) + ": malformed coordinates");
    }
    int cls = vocab.object_index(tok[8]);
    if (cls < 0)
      throw VocabularyError("objects line " + std::to_string(line_no) + ": unknown object class '" +
                            tok[8] + "'");
    ObjectInstance obj;
    obj.id = static_cast<int>(g.objects.size());
    obj.class_index = cls;
    try {
      obj.box = geom::OrientedBox::from_corners(pts);
    } catch (const GeometryError& e) {
      throw ParseError("objects line " + std::to_string(line_no) + ": " + e.what());
    }
    g.objects.push_back(obj);
  }

  line_no = 0;
  for (const std::string& raw : split_lines(triplet_text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto tok = split_ws(line);
    if (tok.size() != 3)
      throw ParseError("triplets line " + std::to_string(line_no) +
                       ": expected `subject_index relation_name object_index`");
    Triplet t;
    if (!parse_int(tok[0], t.subject_id) || !parse_int(tok[2], t.object_id))
      throw ParseError("triplets line " + std::to_string(line_no) + ": malformed object index");
    t.relation_index = vocab.relation_index(tok[1]);
    if (t.relation_index < 0)
      throw VocabularyError("triplets line " + std::to_string(line_no) +
                            ": unknown relation class '" + tok[1] + "'");
    int n = static_cast<int>(g.objects.size());
    if (t.subject_id < 0 || t.subject_id >= n || t.object_id < 0 || t.object_id >= n)
      throw ParseError("triplets line " + std::to_string(line_no) + ": object index out of range");
    if (t.subject_id == t.object_id)
      throw ParseError("triplets line " + std::to_string(line_no) + ": self-loop triplet");
    for (const Triplet& prev : g.triplets)
      if (prev.subject_id == t.subject_id && prev.object_id == t.object_id &&
          prev.relation_index == t.relation_index)
        throw ParseError("triplets line " + std::to_string(line_no) + ": duplicate triplet");
    g.triplets.push_back(t);
  }

  if (image_width > 0.0 && image_height > 0.0) {
    g.image_width = image_width;
    g.image_height = image_height;
  } else {
    double w = 0.0, h = 0.0;
    for (const ObjectInstance& o : g.objects)
      for (const geom::Vec2& p : o.box.corners) {
        w = std::max(w, p.x);
        h = std::max(h, p.y);
      }
    g.image_width = std::ceil(w);
    g.image_height = std::ceil(h);
  }

  for (const Violation& v : validate_scene_graph(g, vocab))
    if (v.level == Violation::Level::structural)
      throw ParseError("annotation violates '" + v.rule + "': " + v.detail);
  return g;
}

std::string serialize_objects(const SceneGraph& g, const CategoryVocabulary& vocab) {
  std::string out;
  for (const ObjectInstance& o : g.objects) {
    for (const geom::Vec2& p : o.box.corners) out += fmt_double(p.x) + " " + fmt_double(p.y) + " ";
    out += vocab.object_classes.at(static_cast<size_t>(o.class_index)) + "\n";
  }
  return out;
}

std::string serialize_triplets(const SceneGraph& g, const CategoryVocabulary& vocab) {
  // triplet files reference objects by list position
  std::map<int, int> pos;
  for (size_t i = 0; i < g.objects.size(); ++i) pos[g.objects[i].id] = static_cast<int>(i);
  std::string out;
  for (const Triplet& t : g.triplets)
    out += std::to_string(pos.at(t.subject_id)) + " " +
           vocab.relation_classes.at(static_cast<size_t>(t.relation_index)) + " " +
           std::to_string(pos.at(t.object_id)) + "\n";
  return out;
}

std::vector<Violation> validate_scene_graph(const SceneGraph& g, const CategoryVocabulary& vocab) {
  std::vector<Violation> out;
  auto structural = [&](const std::string& rule, const std::string& detail) {
    out.push_back({Violation::Level::structural, rule, detail});
  };

  std::set<int> ids;
  for (const ObjectInstance& o : g.objects) {
    std::string tag = "object " + std::to_string(o.id);
    if (o.id < 0) structural("non-negative id", tag);
    if (!ids.insert(o.id).second) structural("unique id", tag + " appears twice");
    if (o.class_index < 0 || o.class_index >= vocab.num_objects())
      structural("valid class index", tag);
    if (g.image_width > 0.0 && g.image_height > 0.0) {
      // 5% slack for edge-clipped annotations
      double sx = 0.05 * g.image_width, sy = 0.05 * g.image_height;
      for (const geom::Vec2& p : o.box.corners)
        if (p.x < -sx || p.x > g.image_width + sx || p.y < -sy || p.y > g.image_height + sy) {
          structural("corners within image bounds", tag);
          break;
        }
    }
  }

  std::set<std::tuple<int, int, int>> seen;
  for (size_t i = 0; i < g.triplets.size(); ++i) {
    const Triplet& t = g.triplets[i];
    std::string tag = "triplet " + std::to_string(i);
    if (t.subject_id == t.object_id) structural("self-loop", tag);
    const ObjectInstance* s = g.find_object(t.subject_id);
    const ObjectInstance* o = g.find_object(t.object_id);
    if (!s) structural("resolvable subject id", tag);
    if (!o) structural("resolvable object id", tag);
    if (t.relation_index < 0 || t.relation_index >= vocab.num_relations())
      structural("valid relation index", tag);
    if (t.score < 0.0 || t.score > 1.0) structural("score in [0,1]", tag);
    if (!seen.insert({t.subject_id, t.relation_index, t.object_id}).second)
      structural("no duplicate triplets", tag);
    if (s && o && t.relation_index >= 0 && t.relation_index < vocab.num_relations() &&
        !vocab.admissible(s->class_index, t.relation_index, o->class_index))
      out.push_back({Violation::Level::admissibility, "inadmissible combination",
                     tag + ": <" + vocab.object_classes.at(static_cast<size_t>(s->class_index)) +
                         ", " + vocab.relation_classes.at(static_cast<size_t>(t.relation_index)) +
                         ", " + vocab.object_classes.at(static_cast<size_t>(o->class_index)) + ">"});
  }
  return out;
}

std::string to_document(const SceneGraph& g, const CategoryVocabulary& vocab) {
  ordered_json doc;
  doc["image_width"] = g.image_width;
  doc["image_height"] = g.image_height;
  doc["objects"] = ordered_json::array();
  for (const ObjectInstance& o : g.objects) {
    ordered_json jo;
    jo["id"] = o.id;
    jo["class"] = vocab.object_classes.at(static_cast<size_t>(o.class_index));
    ordered_json pts = ordered_json::array();
    for (const geom::Vec2& p : o.box.corners) {
      pts.push_back(p.x);
      pts.push_back(p.y);
    }
    jo["corners"] = pts;
    doc["objects"].push_back(jo);
  }
  doc["triplets"] = ordered_json::array();
  for (const Triplet& t : g.triplets) {
    ordered_json jt;
    jt["subject"] = t.subject_id;
    jt["relation"] = vocab.relation_classes.at(static_cast<size_t>(t.relation_index));
    jt["object"] = t.object_id;
    jt["score"] = t.score;
    doc["triplets"].push_back(jt);
  }
  return doc.dump(2) + "\n";
}

SceneGraph from_document(const std::string& text, const CategoryVocabulary& vocab) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene document: ") + e.what());
  }
  SceneGraph g;
  try {
    g.image_width = doc.at("image_width").get<double>();
    g.image_height = doc.at("image_height").get<double>();
    for (const auto& jo : doc.at("objects")) {
      ObjectInstance o;
      o.id = jo.at("id").get<int>();
      std::string cls = jo.at("class").get<std::string>();
      o.class_index = vocab.object_index(cls);
      if (o.class_index < 0) throw VocabularyError("unknown object class '" + cls + "'");
      const auto& pts = jo.at("corners");
      if (pts.size() != 8) throw ParseError("object corners need 8 values");
      std::array<geom::Vec2, 4> c;
      for (int i = 0; i < 4; ++i) {
        c[static_cast<size_t>(i)].x = pts.at(static_cast<size_t>(2 * i)).get<double>();
        c[static_cast<size_t>(i)].y = pts.at(static_cast<size_t>(2 * i + 1)).get<double>();
      }
      o.box = geom::OrientedBox::from_corners(c);
      g.objects.push_back(o);
    }
    for (const auto& jt : doc.at("triplets")) {
      Triplet t;
      t.subject_id = jt.at("subject").get<int>();
      std::string rel = jt.at("relation").get<std::string>();
      t.relation_index = vocab.relation_index(rel);
      if (t.relation_index < 0) throw VocabularyError("unknown relation class '" + rel + "'");
      t.object_id = jt.at("object").get<int>();
      t.score = jt.at("score").get<double>();
      g.triplets.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene document: ") + e.what());
  }
  for (const Violation& v : validate_scene_graph(g, vocab))
    if (v.level == Violation::Level::structural)
      throw ParseError("scene document violates '" + v.rule + "': " + v.detail);
  return g;
}

}  // namespace sgg::scene
