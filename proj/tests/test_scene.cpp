#include "sgg/scene.hpp"

#include "doctest.h"
#include "sgg/errors.hpp"

using namespace sgg;
using scene::CategoryVocabulary;
using scene::SceneGraph;
using scene::Violation;

namespace {

CategoryVocabulary toy_vocab() {
  return CategoryVocabulary::parse(
      "[objects]\n"
      "gravity_dam\n"
      "ship\n"
      "dock\n"
      "[relations]\n"
      "docked_at\n"
      "near\n"
      "away_from\n"
      "[interactions]\n"
      "ship docked_at dock\n"
      "ship near dock\n"
      "ship away_from dock\n");
}

}  // namespace

TEST_CASE("vocabulary parse and index stability") {
  CategoryVocabulary v = toy_vocab();
  CHECK(v.num_objects() == 3);
  CHECK(v.num_relations() == 3);
  CHECK(v.object_index("ship") == 1);
  CHECK(v.relation_index("near") == 1);
  CHECK(v.object_index("unknown") == -1);
  CHECK(v.admissible(1, 0, 2));
  CHECK_FALSE(v.admissible(0, 0, 2));

  CategoryVocabulary round = CategoryVocabulary::parse(v.serialize());
  CHECK(round.object_classes == v.object_classes);
  CHECK(round.relation_classes == v.relation_classes);
  CHECK(round.interactions == v.interactions);
}

TEST_CASE("vocabulary rejects duplicates and unknown references") {
  CHECK_THROWS_AS(CategoryVocabulary::parse("[objects]\nship\nship\n"), VocabularyError);
  CHECK_THROWS_AS(
      CategoryVocabulary::parse("[objects]\nship\n[relations]\nnear\n[interactions]\nship near x\n"),
      VocabularyError);
}

TEST_CASE("parse: empty input gives an empty scene") {
  SceneGraph g = scene::parse_annotation_file("", "", toy_vocab());
  CHECK(g.objects.empty());
  CHECK(g.triplets.empty());
}

TEST_CASE("parse: one object line") {
  SceneGraph g = scene::parse_annotation_file("0 0 10 0 10 4 0 4 gravity_dam", "", toy_vocab());
  REQUIRE(g.objects.size() == 1);
  CHECK(g.objects[0].class_index == 0);
  CHECK(geom::obb_area(g.objects[0].box) == doctest::Approx(40.0));
}

TEST_CASE("parse errors name the offending line") {
  CategoryVocabulary v = toy_vocab();
  std::string ok = "0 0 10 0 10 4 0 4 ship\n20 0 30 0 30 4 20 4 dock\n";

  SUBCASE("unknown class") {
    try {
      scene::parse_annotation_file("0 0 10 0 10 4 0 4 zeppelin", "", v);
      FAIL("expected VocabularyError");
    } catch (const VocabularyError& e) {
      CHECK(std::string(e.what()).find("line 1") != std::string::npos);
      CHECK(std::string(e.what()).find("zeppelin") != std::string::npos);
    }
  }
  SUBCASE("malformed coordinates") {
    try {
      scene::parse_annotation_file(ok + "0 0 10 xx 10 4 0 4 ship", "", v);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("unknown relation") {
    CHECK_THROWS_AS(scene::parse_annotation_file(ok, "0 orbits 1", v), VocabularyError);
  }
  SUBCASE("self loop") {
    CHECK_THROWS_AS(scene::parse_annotation_file(ok, "0 near 0", v), ParseError);
  }
  SUBCASE("index out of range") {
    CHECK_THROWS_AS(scene::parse_annotation_file(ok, "0 near 7", v), ParseError);
  }
  SUBCASE("duplicate triplet") {
    CHECK_THROWS_AS(scene::parse_annotation_file(ok, "0 near 1\n0 near 1", v), ParseError);
  }
}

TEST_CASE("multi-label: same pair under two relations yields two triplets") {
  std::string objects = "0 0 10 0 10 4 0 4 ship\n20 0 30 0 30 4 20 4 dock\n";
  SceneGraph g = scene::parse_annotation_file(objects, "0 docked_at 1\n0 near 1\n", toy_vocab());
  REQUIRE(g.triplets.size() == 2);
  CHECK(g.triplets[0].subject_id == g.triplets[1].subject_id);
  CHECK(g.triplets[0].object_id == g.triplets[1].object_id);
  CHECK(g.triplets[0].relation_index != g.triplets[1].relation_index);
}

TEST_CASE("serialize then parse is the identity") {
  CategoryVocabulary v = toy_vocab();
  std::string objects =
      "0.125 0.25 10.5 0.25 10.5 4.75 0.125 4.75 ship\n"
      "20 1 30 1 30 5 20 5 dock\n"
      "40.5 2.5 44.5 0.5 46 3.5 42 5.5 gravity_dam\n";
  SceneGraph g = scene::parse_annotation_file(objects, "0 docked_at 1\n0 near 1\n2 near 1\n", v);

  SceneGraph round = scene::parse_annotation_file(scene::serialize_objects(g, v),
                                                  scene::serialize_triplets(g, v), v);
  REQUIRE(round.objects.size() == g.objects.size());
  REQUIRE(round.triplets.size() == g.triplets.size());
  for (size_t i = 0; i < g.objects.size(); ++i) {
    CHECK(round.objects[i].id == g.objects[i].id);
    CHECK(round.objects[i].class_index == g.objects[i].class_index);
    for (int k = 0; k < 4; ++k) {
      CHECK(round.objects[i].box.corners[static_cast<size_t>(k)].x ==
            g.objects[i].box.corners[static_cast<size_t>(k)].x);
      CHECK(round.objects[i].box.corners[static_cast<size_t>(k)].y ==
            g.objects[i].box.corners[static_cast<size_t>(k)].y);
    }
  }
  for (size_t i = 0; i < g.triplets.size(); ++i) {
    CHECK(round.triplets[i].subject_id == g.triplets[i].subject_id);
    CHECK(round.triplets[i].object_id == g.triplets[i].object_id);
    CHECK(round.triplets[i].relation_index == g.triplets[i].relation_index);
  }
}

TEST_CASE("validate_scene_graph") {
  CategoryVocabulary v = toy_vocab();
  std::string objects = "0 0 10 0 10 4 0 4 ship\n20 0 30 0 30 4 20 4 dock\n";
  SceneGraph g = scene::parse_annotation_file(objects, "0 docked_at 1", v);

  SUBCASE("valid graph has no violations") {
    CHECK(scene::validate_scene_graph(g, v).empty());
  }

  SUBCASE("self loop is reported") {
    g.triplets.push_back({0, 0, 1, 1.0});
    auto violations = scene::validate_scene_graph(g, v);
    bool found = false;
    for (const Violation& viol : violations) found |= viol.rule == "self-loop";
    CHECK(found);
  }

  SUBCASE("inadmissible combination is a warning-level violation") {
    // dock docked_at ship is not in the 3-entry interaction map
    g.triplets.push_back({1, 0, 0, 1.0});
    auto violations = scene::validate_scene_graph(g, v);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].rule == "inadmissible combination");
    CHECK(violations[0].level == Violation::Level::admissibility);
  }

  SUBCASE("unresolvable ids and bad indices are structural") {
    g.triplets.push_back({0, 99, 1, 1.0});
    auto violations = scene::validate_scene_graph(g, v);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].level == Violation::Level::structural);
  }

  SUBCASE("out-of-bounds corners beyond the slack are structural") {
    g.image_width = 20;  // second object now far outside +5% slack
    auto violations = scene::validate_scene_graph(g, v);
    bool found = false;
    for (const Violation& viol : violations) found |= viol.rule == "corners within image bounds";
    CHECK(found);
  }
}

TEST_CASE("admissibility violations do not fail parsing") {
  // parse accepts combinations outside the interaction map; they surface as
  // warning-level violations instead
  std::string objects = "0 0 10 0 10 4 0 4 dock\n20 0 30 0 30 4 20 4 ship\n";
  SceneGraph g = scene::parse_annotation_file(objects, "0 docked_at 1", toy_vocab());
  auto violations = scene::validate_scene_graph(g, toy_vocab());
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].level == Violation::Level::admissibility);
}

TEST_CASE("bundled full-scale vocabulary has 48 objects and 58 relations") {
  CategoryVocabulary v =
      CategoryVocabulary::load(std::string(SGG_SOURCE_DIR) + "/data/full_vocabulary.txt");
  CHECK(v.num_objects() == 48);
  CHECK(v.num_relations() == 58);
  // every relation class appears in at least one admissible combination
  std::set<int> covered;
  for (const auto& [s, r, o] : v.interactions) {
    (void)s;
    (void)o;
    covered.insert(r);
  }
  CHECK(static_cast<int>(covered.size()) == v.num_relations());
  // indices survive a save/load cycle
  CategoryVocabulary round = CategoryVocabulary::parse(v.serialize());
  CHECK(round.object_classes == v.object_classes);
  CHECK(round.relation_classes == v.relation_classes);
}

TEST_CASE("structured document round trip with stable keys") {
  CategoryVocabulary v = toy_vocab();
  std::string objects = "0 0 10 0 10 4 0 4 ship\n20 0 30 0 30 4 20 4 dock\n";
  SceneGraph g = scene::parse_annotation_file(objects, "0 docked_at 1\n0 near 1\n", v, 64, 32);

  std::string doc = scene::to_document(g, v);
  SceneGraph back = scene::from_document(doc, v);
  CHECK(scene::to_document(back, v) == doc);  // stable byte-for-byte
  CHECK(back.image_width == 64);
  CHECK(back.image_height == 32);
  REQUIRE(back.triplets.size() == 2);
  CHECK(back.triplets[1].relation_index == g.triplets[1].relation_index);

  // golden shape: keys appear in a fixed order
  CHECK(doc.find("\"image_width\"") < doc.find("\"image_height\""));
  CHECK(doc.find("\"image_height\"") < doc.find("\"objects\""));
  CHECK(doc.find("\"objects\"") < doc.find("\"triplets\""));
}
