#include "sgg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "nlohmann/json.hpp"
#include "sgg/text.hpp"

namespace sgg::synth {

namespace {

using nlohmann::ordered_json;

constexpr double kPi = 3.14159265358979323846;
constexpr int kPlacementRetries = 200;

double center_dist(const scene::ObjectInstance& a, const scene::ObjectInstance& b) {
  geom::Vec2 d = a.box.center() - b.box.center();
  return std::sqrt(geom::dot(d, d));
}

SizeRange parse_range(const ordered_json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("recipe: size range must be [lo, hi]");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

ordered_json range_json(const SizeRange& r) { return ordered_json::array({r.lo, r.hi}); }

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(static_cast<size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) { parent[static_cast<size_t>(find(a))] = find(b); }
};

}  // namespace

SceneRecipe SceneRecipe::parse(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("recipe: ") + e.what());
  }
  SceneRecipe r;
  try {
    r.seed = j.at("seed").get<uint64_t>();
    r.image_width = j.at("image_width").get<double>();
    r.image_height = j.at("image_height").get<double>();
    r.feature_dim = j.value("feature_dim", 64);
    r.feature_noise = j.value("feature_noise", 0.25);
    for (const auto& jp : j.at("placements")) {
      PlacementRule p;
      p.object_class = jp.at("class").get<std::string>();
      p.mode = jp.value("mode", std::string("uniform"));
      const auto& cnt = jp.at("count");
      p.count_min = cnt.at(0).get<int>();
      p.count_max = cnt.at(1).get<int>();
      p.width = parse_range(jp.at("width"));
      p.height = parse_range(jp.at("height"));
      p.angle_mode = jp.value("angle_mode", std::string("any"));
      p.anchor_class = jp.value("anchor_class", std::string());
      p.anchor_dist_min = jp.value("anchor_dist_min", 0.0);
      p.anchor_dist_max = jp.value("anchor_dist_max", 0.0);
      p.edge = jp.value("edge", std::string("south"));
      p.edge_margin = jp.value("edge_margin", 0.0);
      p.chain_count = jp.value("chain_count", 1);
      p.spacing_min = jp.value("spacing_min", 0.0);
      p.spacing_max = jp.value("spacing_max", 0.0);
      p.jitter = jp.value("jitter", 0.0);
      r.placements.push_back(p);
    }
    for (const auto& jr : j.at("rules")) {
      RelationRule rule;
      rule.name = jr.value("name", jr.at("relation").get<std::string>());
      rule.relation = jr.at("relation").get<std::string>();
      rule.subject_class = jr.at("subject_class").get<std::string>();
      rule.object_class = jr.at("object_class").get<std::string>();
      rule.predicate = jr.at("predicate").get<std::string>();
      rule.dist_a = jr.value("dist_a", 0.0);
      rule.dist_b = jr.value("dist_b", 0.0);
      rule.angle_tol = jr.value("angle_tol", 0.0);
      rule.anchor_class = jr.value("anchor_class", std::string());
      rule.same_anchor = jr.value("same_anchor", true);
      rule.link_dist = jr.value("link_dist", 0.0);
      rule.exclude_linked = jr.value("exclude_linked", false);
      r.rules.push_back(rule);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("recipe: ") + e.what());
  }
  return r;
}

SceneRecipe SceneRecipe::load(const std::string& path) {
  try {
    return parse(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string SceneRecipe::serialize() const {
  ordered_json j;
  j["seed"] = seed;
  j["image_width"] = image_width;
  j["image_height"] = image_height;
  j["feature_dim"] = feature_dim;
  j["feature_noise"] = feature_noise;
  j["placements"] = ordered_json::array();
  for (const PlacementRule& p : placements) {
    ordered_json jp;
    jp["class"] = p.object_class;
    jp["mode"] = p.mode;
    jp["count"] = ordered_json::array({p.count_min, p.count_max});
    jp["width"] = range_json(p.width);
    jp["height"] = range_json(p.height);
    jp["angle_mode"] = p.angle_mode;
    if (!p.anchor_class.empty()) {
      jp["anchor_class"] = p.anchor_class;
      jp["anchor_dist_min"] = p.anchor_dist_min;
      jp["anchor_dist_max"] = p.anchor_dist_max;
    }
    if (p.mode == "edge_strip") {
      jp["edge"] = p.edge;
      jp["edge_margin"] = p.edge_margin;
    }
    if (p.mode == "chain") {
      jp["chain_count"] = p.chain_count;
      jp["spacing_min"] = p.spacing_min;
      jp["spacing_max"] = p.spacing_max;
      jp["jitter"] = p.jitter;
    }
    j["placements"].push_back(jp);
  }
  j["rules"] = ordered_json::array();
  for (const RelationRule& r : rules) {
    ordered_json jr;
    jr["name"] = r.name;
    jr["relation"] = r.relation;
    jr["subject_class"] = r.subject_class;
    jr["object_class"] = r.object_class;
    jr["predicate"] = r.predicate;
    if (r.dist_a != 0.0) jr["dist_a"] = r.dist_a;
    if (r.dist_b != 0.0) jr["dist_b"] = r.dist_b;
    if (r.angle_tol != 0.0) jr["angle_tol"] = r.angle_tol;
    if (!r.anchor_class.empty()) {
      jr["anchor_class"] = r.anchor_class;
      jr["same_anchor"] = r.same_anchor;
    }
    if (r.link_dist != 0.0) {
      jr["link_dist"] = r.link_dist;
      jr["exclude_linked"] = r.exclude_linked;
    }
    j["rules"].push_back(jr);
  }
  return j.dump(2) + "\n";
}

void SceneRecipe::validate(const scene::CategoryVocabulary& vocab) const {
  if (!(image_width > 0.0) || !(image_height > 0.0))
    throw ConfigError("recipe: image dimensions must be positive");
  if (feature_dim <= 0) throw ConfigError("recipe: feature_dim must be positive");
  for (const PlacementRule& p : placements) {
    if (vocab.object_index(p.object_class) < 0)
      throw ConfigError("recipe placement: unknown object class '" + p.object_class + "'");
    if (p.count_min < 0 || p.count_max < p.count_min)
      throw ConfigError("recipe placement '" + p.object_class + "': bad count range");
    if (p.count_max > 0 && (!(p.width.lo > 0.0) || !(p.height.lo > 0.0) || p.width.hi < p.width.lo ||
                            p.height.hi < p.height.lo))
      throw ConfigError("recipe placement '" + p.object_class + "': sizes must be positive");
    if (p.mode == "near_anchor" && vocab.object_index(p.anchor_class) < 0)
      throw ConfigError("recipe placement '" + p.object_class + "': unknown anchor class");
    if (p.mode != "uniform" && p.mode != "edge_strip" && p.mode != "near_anchor" && p.mode != "chain")
      throw ConfigError("recipe placement '" + p.object_class + "': unknown mode '" + p.mode + "'");
  }
  for (const RelationRule& r : rules) {
    int s = vocab.object_index(r.subject_class);
    int rel = vocab.relation_index(r.relation);
    int o = vocab.object_index(r.object_class);
    if (s < 0 || rel < 0 || o < 0)
      throw ConfigError("recipe rule '" + r.name + "': unknown class or relation");
    if (!vocab.admissible(s, rel, o))
      throw ConfigError("recipe rule '" + r.name + "': combination not in the interaction map");
    if (r.predicate == "distance_lt" && !(r.dist_a > 0.0))
      throw ConfigError("recipe rule '" + r.name + "': dist_a must be positive");
    if (r.predicate == "distance_between" && !(r.dist_b > r.dist_a))
      throw ConfigError("recipe rule '" + r.name + "': need dist_a < dist_b");
    if (r.predicate == "shared_anchor" &&
        (vocab.object_index(r.anchor_class) < 0 || !(r.dist_a > 0.0)))
      throw ConfigError("recipe rule '" + r.name + "': shared_anchor needs anchor_class and dist_a");
    if (r.predicate == "same_component" && !(r.link_dist > 0.0))
      throw ConfigError("recipe rule '" + r.name + "': same_component needs link_dist");
    if (r.predicate == "aligned" && !(r.angle_tol > 0.0))
      throw ConfigError("recipe rule '" + r.name + "': aligned needs angle_tol");
    static const std::set<std::string> kKnown = {"distance_lt",     "distance_between", "overlaps",
                                                 "contains_center", "aligned",          "shared_anchor",
                                                 "same_component"};
    if (!kKnown.count(r.predicate))
      throw ConfigError("recipe rule '" + r.name + "': unknown predicate '" + r.predicate + "'");
  }
}

std::vector<scene::Triplet> relationship_oracle(const std::vector<scene::ObjectInstance>& objects,
                                                const std::vector<RelationRule>& rules,
                                                const scene::CategoryVocabulary& vocab) {
  const int n = static_cast<int>(objects.size());

  // per-rule component labels for same_component predicates
  std::vector<std::vector<int>> components(rules.size());
  for (size_t ri = 0; ri < rules.size(); ++ri) {
    const RelationRule& r = rules[ri];
    if (r.predicate != "same_component") continue;
    DisjointSet ds(n);
    for (int i = 0; i < n; ++i) {
      const std::string& ci = vocab.object_classes.at(static_cast<size_t>(objects[static_cast<size_t>(i)].class_index));
      if (ci != r.subject_class && ci != r.object_class) continue;
      for (int j = i + 1; j < n; ++j) {
        const std::string& cj =
            vocab.object_classes.at(static_cast<size_t>(objects[static_cast<size_t>(j)].class_index));
        if (cj != r.subject_class && cj != r.object_class) continue;
        if (center_dist(objects[static_cast<size_t>(i)], objects[static_cast<size_t>(j)]) <= r.link_dist)
          ds.unite(i, j);
      }
    }
    components[ri].resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) components[ri][static_cast<size_t>(i)] = ds.find(i);
  }

  auto anchors_in_range = [&](const scene::ObjectInstance& obj, const RelationRule& r) {
    std::vector<int> out;
    for (int k = 0; k < n; ++k) {
      const scene::ObjectInstance& a = objects[static_cast<size_t>(k)];
      if (vocab.object_classes.at(static_cast<size_t>(a.class_index)) != r.anchor_class) continue;
      if (a.id == obj.id) continue;
      if (center_dist(obj, a) <= r.dist_a) out.push_back(a.id);
    }
    return out;
  };

  std::set<std::tuple<int, int, int>> emitted;
  std::vector<scene::Triplet> out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const scene::ObjectInstance& s = objects[static_cast<size_t>(i)];
      const scene::ObjectInstance& o = objects[static_cast<size_t>(j)];
      const std::string& cs = vocab.object_classes.at(static_cast<size_t>(s.class_index));
      const std::string& co = vocab.object_classes.at(static_cast<size_t>(o.class_index));
      for (size_t ri = 0; ri < rules.size(); ++ri) {
        const RelationRule& r = rules[ri];
        if (cs != r.subject_class || co != r.object_class) continue;
        bool fires = false;
        double dist = center_dist(s, o);
        if (r.predicate == "distance_lt") {
          fires = dist < r.dist_a;
        } else if (r.predicate == "distance_between") {
          fires = dist >= r.dist_a && dist < r.dist_b;
        } else if (r.predicate == "overlaps") {
          fires = geom::rotated_iou(s.box, o.box) > 0.0;
        } else if (r.predicate == "contains_center") {
          fires = geom::contains_point(o.box, s.box.center());
        } else if (r.predicate == "aligned") {
          double da = std::fabs(geom::wrap_angle_halfpi(s.box.angle() - o.box.angle()));
          fires = da <= r.angle_tol && (r.dist_b <= 0.0 || dist < r.dist_b);
        } else if (r.predicate == "shared_anchor") {
          std::vector<int> as = anchors_in_range(s, r);
          std::vector<int> ao = anchors_in_range(o, r);
          if (!as.empty() && !ao.empty()) {
            bool common = false;
            for (int x : as)
              if (std::find(ao.begin(), ao.end(), x) != ao.end()) common = true;
            fires = r.same_anchor ? common : !common;
          }
        } else if (r.predicate == "same_component") {
          fires = components[ri][static_cast<size_t>(i)] == components[ri][static_cast<size_t>(j)] &&
                  (!r.exclude_linked || dist > r.link_dist);
        }
        if (!fires) continue;
        int rel = vocab.relation_index(r.relation);
        if (emitted.insert({s.id, rel, o.id}).second) {
          scene::Triplet t;
          t.subject_id = s.id;
          t.object_id = o.id;
          t.relation_index = rel;
          t.score = 1.0;
          out.push_back(t);
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const scene::Triplet& a, const scene::Triplet& b) {
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    if (a.object_id != b.object_id) return a.object_id < b.object_id;
    return a.relation_index < b.relation_index;
  });
  return out;
}

namespace {

struct Placer {
  const SceneRecipe& recipe;
  const scene::CategoryVocabulary& vocab;
  Rng& rng;
  std::vector<scene::ObjectInstance>& objects;

  bool inside_image(const geom::OrientedBox& b) const {
    geom::AxisAlignedBox h = geom::obb_to_hbb(b);
    return h.x_min >= 0.0 && h.y_min >= 0.0 && h.x_max <= recipe.image_width &&
           h.y_max <= recipe.image_height;
  }

  void emit(const PlacementRule& rule, double cx, double cy, double w, double h, double theta) {
    scene::ObjectInstance obj;
    obj.id = static_cast<int>(objects.size());
    obj.class_index = vocab.object_index(rule.object_class);
    obj.box = geom::OrientedBox::from_center(cx, cy, w, h, theta);
    objects.push_back(obj);
  }

  double pick_angle(const PlacementRule& rule, double along) {
    if (rule.angle_mode == "axis") return 0.0;
    if (rule.angle_mode == "along") return along + rng.normal(0.0, 0.05);
    return rng.uniform(-kPi / 2, kPi / 2);
  }

  void place(const PlacementRule& rule) {
    int count = rule.count_min == rule.count_max ? rule.count_min
                                                 : rng.uniform_int(rule.count_min, rule.count_max);
    if (count == 0) return;
    if (rule.mode == "chain") {
      place_chain(rule, count);
      return;
    }
    for (int k = 0; k < count; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
        double w = rng.uniform(rule.width.lo, rule.width.hi);
        double h = rng.uniform(rule.height.lo, rule.height.hi);
        double cx = 0.0, cy = 0.0, along = 0.0;
        if (rule.mode == "uniform") {
          cx = rng.uniform(0.0, recipe.image_width);
          cy = rng.uniform(0.0, recipe.image_height);
        } else if (rule.mode == "edge_strip") {
          double m = rule.edge_margin > 0.0 ? rule.edge_margin : std::max(w, h);
          if (rule.edge == "south") {
            cx = rng.uniform(0.0, recipe.image_width);
            cy = recipe.image_height - m;
          } else if (rule.edge == "north") {
            cx = rng.uniform(0.0, recipe.image_width);
            cy = m;
          } else if (rule.edge == "east") {
            cx = recipe.image_width - m;
            cy = rng.uniform(0.0, recipe.image_height);
            along = kPi / 2;
          } else {
            cx = m;
            cy = rng.uniform(0.0, recipe.image_height);
            along = kPi / 2;
          }
        } else if (rule.mode == "near_anchor") {
          std::vector<const scene::ObjectInstance*> anchors;
          for (const scene::ObjectInstance& o : objects)
            if (vocab.object_classes.at(static_cast<size_t>(o.class_index)) == rule.anchor_class)
              anchors.push_back(&o);
          if (anchors.empty())
            throw GenerationError("placement rule '" + rule.object_class +
                                  "': no anchor of class '" + rule.anchor_class + "' placed yet");
          const scene::ObjectInstance* anchor =
              anchors[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(anchors.size()) - 1))];
          double d = rng.uniform(rule.anchor_dist_min, rule.anchor_dist_max);
          double phi = rng.uniform(0.0, 2.0 * kPi);
          geom::Vec2 c = anchor->box.center();
          cx = c.x + d * std::cos(phi);
          cy = c.y + d * std::sin(phi);
          along = anchor->box.angle();
        }
        double theta = pick_angle(rule, along);
        if (cx < 0.0 || cy < 0.0 || cx > recipe.image_width || cy > recipe.image_height) continue;
        geom::OrientedBox box = geom::OrientedBox::from_center(cx, cy, w, h, theta);
        if (!inside_image(box)) continue;
        emit(rule, cx, cy, w, h, theta);
        placed = true;
      }
      if (!placed)
        throw GenerationError("placement rule '" + rule.object_class + "' (" + rule.mode +
                              "): no feasible position after " +
                              std::to_string(kPlacementRetries) + " attempts");
    }
  }

  void place_chain(const PlacementRule& rule, int count) {
    int chains = std::max(1, rule.chain_count);
    int base = count / chains, rem = count % chains;
    for (int c = 0; c < chains; ++c) {
      int len = base + (c < rem ? 1 : 0);
      if (len == 0) continue;
      bool ok = false;
      for (int attempt = 0; attempt < kPlacementRetries && !ok; ++attempt) {
        double dir = rng.uniform(0.0, 2.0 * kPi);
        double spacing = rng.uniform(rule.spacing_min, rule.spacing_max);
        double span = spacing * (len - 1);
        double sx = rng.uniform(0.0, recipe.image_width);
        double sy = rng.uniform(0.0, recipe.image_height);
        double ex = sx + span * std::cos(dir);
        double ey = sy + span * std::sin(dir);
        if (ex < 0.0 || ey < 0.0 || ex > recipe.image_width || ey > recipe.image_height) continue;
        std::vector<std::array<double, 5>> staged;
        bool feasible = true;
        for (int k = 0; k < len && feasible; ++k) {
          double w = rng.uniform(rule.width.lo, rule.width.hi);
          double h = rng.uniform(rule.height.lo, rule.height.hi);
          double jx = rule.jitter > 0.0 ? rng.normal(0.0, rule.jitter) : 0.0;
          double jy = rule.jitter > 0.0 ? rng.normal(0.0, rule.jitter) : 0.0;
          double cx = sx + spacing * k * std::cos(dir) + jx;
          double cy = sy + spacing * k * std::sin(dir) + jy;
          double theta = pick_angle(rule, geom::wrap_angle_halfpi(dir));
          geom::OrientedBox box = geom::OrientedBox::from_center(cx, cy, w, h, theta);
          if (!inside_image(box)) feasible = false;
          staged.push_back({cx, cy, w, h, theta});
        }
        if (!feasible) continue;
        for (const auto& s : staged) emit(rule, s[0], s[1], s[2], s[3], s[4]);
        ok = true;
      }
      if (!ok)
        throw GenerationError("placement rule '" + rule.object_class +
                              "' (chain): no feasible chain after " +
                              std::to_string(kPlacementRetries) + " attempts");
    }
  }
};

}  // namespace

std::vector<double> class_mean_feature(const std::string& class_name, int dim) {
  Rng rng(mix_seed(fnv1a64(class_name), 0x5eedbeef));
  std::vector<double> v(static_cast<size_t>(dim));
  for (double& x : v) x = rng.normal();
  return v;
}

Mat instance_features(const std::vector<scene::ObjectInstance>& objects,
                      const scene::CategoryVocabulary& vocab, int dim, double noise, Rng& rng) {
  Mat f(static_cast<int>(objects.size()), dim);
  for (size_t i = 0; i < objects.size(); ++i) {
    std::vector<double> mean = class_mean_feature(
        vocab.object_classes.at(static_cast<size_t>(objects[i].class_index)), dim);
    for (int c = 0; c < dim; ++c)
      f.at(static_cast<int>(i), c) = mean[static_cast<size_t>(c)] + noise * rng.normal();
  }
  return f;
}

SceneSample generate_scene(const SceneRecipe& recipe, const scene::CategoryVocabulary& vocab,
                           uint64_t scene_index) {
  recipe.validate(vocab);
  Rng rng(mix_seed(recipe.seed, scene_index));

  SceneSample sample;
  sample.graph.image_width = recipe.image_width;
  sample.graph.image_height = recipe.image_height;

  Placer placer{recipe, vocab, rng, sample.graph.objects};
  for (const PlacementRule& rule : recipe.placements) placer.place(rule);

  sample.graph.triplets = relationship_oracle(sample.graph.objects, recipe.rules, vocab);

  Rng feature_rng = rng.fork(0xfea7);
  sample.features =
      instance_features(sample.graph.objects, vocab, recipe.feature_dim, recipe.feature_noise,
                        feature_rng);
  return sample;
}

std::string serialize_features(const Mat& features) {
  std::string out;
  for (int r = 0; r < features.rows; ++r) {
    out += std::to_string(r);
    for (int c = 0; c < features.cols; ++c) out += " " + fmt_double(features.at(r, c));
    out += "\n";
  }
  return out;
}

Mat parse_features(const std::string& text) {
  std::vector<std::vector<double>> rows;
  int line_no = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty()) continue;
    auto tok = split_ws(line);
    if (tok.size() < 2) throw ParseError("features line " + std::to_string(line_no) + ": too short");
    std::vector<double> vals;
    for (size_t i = 1; i < tok.size(); ++i) {
      double x;
      if (!parse_double(tok[i], x))
        throw ParseError("features line " + std::to_string(line_no) + ": malformed value");
      vals.push_back(x);
    }
    if (!rows.empty() && vals.size() != rows.front().size())
      throw ParseError("features line " + std::to_string(line_no) + ": inconsistent dimension");
    rows.push_back(std::move(vals));
  }
  Mat m(static_cast<int>(rows.size()), rows.empty() ? 0 : static_cast<int>(rows.front().size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) m.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return m;
}

}  // namespace sgg::synth
