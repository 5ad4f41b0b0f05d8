#include "sgg/pipeline.hpp"

#include <filesystem>

#include "doctest.h"
#include "sgg/checkpoint.hpp"
#include "sgg/errors.hpp"
#include "sgg/text.hpp"

using namespace sgg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::path("test_tmp") / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_toy_vocab(const fs::path& dir) {
  std::string path = (dir / "vocab.txt").string();
  write_file(path,
             "[objects]\ndock\nship\nboat\n"
             "[relations]\ndocked_at\nnear\naway_from\n"
             "[interactions]\n"
             "ship docked_at dock\nboat near ship\nship away_from dock\n");
  return path;
}

std::string write_toy_recipe(const fs::path& dir) {
  synth::SceneRecipe r;
  r.seed = 3;
  r.image_width = r.image_height = 500;
  r.feature_dim = 12;
  synth::PlacementRule dock;
  dock.object_class = "dock";
  dock.mode = "edge_strip";
  dock.edge = "south";
  dock.edge_margin = 50;
  dock.count_min = dock.count_max = 2;
  dock.width = {70, 90};
  dock.height = {20, 26};
  dock.angle_mode = "axis";
  r.placements.push_back(dock);
  synth::PlacementRule ship;
  ship.object_class = "ship";
  ship.mode = "near_anchor";
  ship.anchor_class = "dock";
  ship.anchor_dist_min = 15;
  ship.anchor_dist_max = 150;
  ship.count_min = 3;
  ship.count_max = 5;
  ship.width = {16, 26};
  ship.height = {6, 10};
  r.placements.push_back(ship);
  synth::RelationRule docked;
  docked.name = "docked";
  docked.relation = "docked_at";
  docked.subject_class = "ship";
  docked.object_class = "dock";
  docked.predicate = "distance_lt";
  docked.dist_a = 60;
  r.rules.push_back(docked);
  synth::RelationRule away;
  away.name = "away";
  away.relation = "away_from";
  away.subject_class = "ship";
  away.object_class = "dock";
  away.predicate = "distance_between";
  away.dist_a = 60;
  away.dist_b = 300;
  r.rules.push_back(away);
  std::string path = (dir / "recipe.json").string();
  write_file(path, r.serialize());
  return path;
}

RunConfig toy_config(const fs::path& dir) {
  RunConfig cfg;
  cfg.seed = 21;
  cfg.paths.data_dir = (dir / "dataset").string();
  cfg.paths.checkpoint_dir = (dir / "ckpt").string();
  cfg.paths.report_dir = (dir / "reports").string();
  cfg.vocabulary = write_toy_vocab(dir);
  cfg.recipe = write_toy_recipe(dir);
  cfg.num_scenes = 10;
  cfg.ppg.epochs = 2;
  cfg.ppg.top_k = 40;
  cfg.rpcm.epochs = 2;
  cfg.rpcm.iterations = 2;
  cfg.rpcm.hidden_dim = 16;
  cfg.rpcm.joint_dim = 16;
  cfg.eval.k_values = {5, 50};
  return cfg;
}

}  // namespace

TEST_CASE("split counts follow the floor-then-remainder rule") {
  RunConfig::Splits s;  // 0.6 / 0.2 / 0.2
  pipeline::SplitCounts c = pipeline::split_counts(100, s);
  CHECK(c.train == 60);
  CHECK(c.val == 20);
  CHECK(c.test == 20);
  c = pipeline::split_counts(5, s);
  CHECK(c.train == 3);
  CHECK(c.val == 1);
  CHECK(c.test == 1);
  c = pipeline::split_counts(0, s);
  CHECK(c.train + c.val + c.test == 0);
}

TEST_CASE("run config json round trip, overrides and deviations") {
  RunConfig cfg;
  RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());

  cfg.apply_override("rpcm.iterations", "2");
  CHECK(cfg.rpcm.iterations == 2);
  cfg.apply_override("eval.k_values", "[5,20]");
  CHECK(cfg.eval.k_values == std::vector<int>{5, 20});
  cfg.apply_override("paths.report_dir", "elsewhere");
  CHECK(cfg.paths.report_dir == "elsewhere");
  CHECK_THROWS_AS(cfg.apply_override("nope.key", "1"), ConfigError);

  std::vector<std::string> dev = cfg.protocol_deviations();
  REQUIRE(dev.size() == 2);
  CHECK(dev[0].find("rpcm.iterations=2") != std::string::npos);
  CHECK(dev[1].find("eval.k_values=5/20") != std::string::npos);
  CHECK(RunConfig().protocol_deviations().empty());
}

TEST_CASE("run config validation") {
  RunConfig cfg;
  cfg.validate(false);
  SUBCASE("split fractions must sum to one") {
    cfg.splits.train = 0.5;
    CHECK_THROWS_AS(cfg.validate(false), ConfigError);
  }
  SUBCASE("referenced files must exist") {
    cfg.vocabulary = "does/not/exist.txt";
    CHECK_THROWS_AS(cfg.validate(true), ConfigError);
  }
  SUBCASE("unknown json keys are rejected") {
    CHECK_THROWS_AS(RunConfig::from_json("{\"sedd\": 1}"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json("{\"rpcm\": {\"iters\": 2}}"), ConfigError);
  }
}

TEST_CASE("named tensor archive round trip and version guard") {
  fs::path dir = fresh_dir("archive");
  io::NamedTensorArchive a;
  Mat m(2, 3);
  m.v = {1, 2, 3, 4, 5, 0.1234567890123456789};
  a.tensors["w"] = m;
  a.blobs["meta"] = "{\"stage\":\"x\"}";
  std::string path = (dir / "t.ckpt").string();
  a.save(path);

  io::NamedTensorArchive b = io::NamedTensorArchive::load(path);
  CHECK(b.tensor("w").v == m.v);
  CHECK(b.blob("meta") == a.blobs["meta"]);
  CHECK_THROWS_AS(b.tensor("missing"), IoError);

  write_file(path, "JUNKJUNKJUNK");
  CHECK_THROWS_AS(io::NamedTensorArchive::load(path), IoError);
}

TEST_CASE("dataset generation is deterministic and loads back identically") {
  fs::path dir = fresh_dir("dataset");
  RunConfig cfg = toy_config(dir);

  pipeline::Dataset ds = pipeline::generate_dataset(cfg);
  CHECK(static_cast<int>(ds.train.size()) == 6);
  CHECK(static_cast<int>(ds.val.size()) == 2);
  CHECK(static_cast<int>(ds.test.size()) == 2);
  pipeline::write_dataset(ds, cfg);
  std::string manifest1 = read_file((fs::path(cfg.paths.data_dir) / "manifest.json").string());

  // regenerate into the same tree: identical manifest (checksums included)
  pipeline::Dataset ds2 = pipeline::generate_dataset(cfg);
  pipeline::write_dataset(ds2, cfg);
  std::string manifest2 = read_file((fs::path(cfg.paths.data_dir) / "manifest.json").string());
  CHECK(manifest1 == manifest2);

  pipeline::Dataset loaded = pipeline::load_dataset(cfg);
  REQUIRE(loaded.train.size() == ds.train.size());
  for (size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(scene::to_document(loaded.train[i].graph, loaded.vocab) ==
          scene::to_document(ds.train[i].graph, ds.vocab));
    CHECK(loaded.train[i].features.v == ds.train[i].features.v);
  }
}

TEST_CASE("zero scenes still produce a manifest") {
  fs::path dir = fresh_dir("dataset0");
  RunConfig cfg = toy_config(dir);
  cfg.num_scenes = 0;
  pipeline::cmd_generate(cfg);
  std::string manifest = read_file((fs::path(cfg.paths.data_dir) / "manifest.json").string());
  CHECK(manifest.find("\"train\": 0") != std::string::npos);
  CHECK(manifest.find("\"test\": 0") != std::string::npos);
}

TEST_CASE("ppg checkpoint round trip preserves every tensor") {
  fs::path dir = fresh_dir("ppg_ckpt");
  RunConfig cfg = toy_config(dir);
  ppg::PpgModel model = pipeline::make_ppg_model(cfg, 33);
  std::string path = (dir / "ppg.ckpt").string();
  pipeline::save_ppg_checkpoint(model, 4, path);
  int epoch = 0;
  ppg::PpgModel back = pipeline::load_ppg_checkpoint(path, &epoch);
  CHECK(epoch == 4);
  CHECK(back.input_dim == model.input_dim);
  CHECK(back.latent_dim == model.latent_dim);
  CHECK(back.enc1.w1.v == model.enc1.w1.v);
  CHECK(back.dec2.b2.v == model.dec2.b2.v);
}

TEST_CASE("rpcm checkpoint round trip preserves every tensor") {
  fs::path dir = fresh_dir("rpcm_ckpt");
  RunConfig cfg = toy_config(dir);
  pipeline::Dataset ds = pipeline::generate_dataset(cfg);
  rpcm::RpcmModel model = pipeline::make_rpcm_model(cfg, ds);
  std::string path = (dir / "rpcm.ckpt").string();
  pipeline::save_rpcm_checkpoint(model, 2, path);
  int epoch = 0;
  rpcm::RpcmModel back = pipeline::load_rpcm_checkpoint(path, &epoch);
  CHECK(epoch == 2);
  CHECK(back.num_classes == model.num_classes);
  CHECK(back.messaging.w_rs.v == model.messaging.w_rs.v);
  CHECK(back.messaging.a_sr_send.v == model.messaging.a_sr_send.v);
  CHECK(back.class_prototypes.v == model.class_prototypes.v);
  CHECK(back.background_prototype.v == model.background_prototype.v);
  CHECK(back.map_p.w2.v == model.map_p.w2.v);
  CHECK(back.cfg.tau == model.cfg.tau);
}

TEST_CASE("stage checkpoints reject the wrong stage") {
  fs::path dir = fresh_dir("stage_mismatch");
  RunConfig cfg = toy_config(dir);
  ppg::PpgModel model = pipeline::make_ppg_model(cfg, 20);
  std::string path = (dir / "x.ckpt").string();
  pipeline::save_ppg_checkpoint(model, 1, path);
  CHECK_THROWS_AS(pipeline::load_rpcm_checkpoint(path), ConfigError);
}

TEST_CASE("cmd_train: epochs=0 writes the initialization and an empty log") {
  fs::path dir = fresh_dir("train0");
  RunConfig cfg = toy_config(dir);
  cfg.ppg.epochs = 0;
  pipeline::cmd_generate(cfg);
  pipeline::cmd_train(cfg, "ppg");
  int epoch = -1;
  ppg::PpgModel trained =
      pipeline::load_ppg_checkpoint((fs::path(cfg.paths.checkpoint_dir) / "ppg.ckpt").string(),
                                    &epoch);
  CHECK(epoch == 0);
  ppg::PpgModel init = pipeline::make_ppg_model(cfg, trained.input_dim);
  CHECK(trained.enc1.w1.v == init.enc1.w1.v);
  CHECK(read_file((fs::path(cfg.paths.checkpoint_dir) / "ppg_train.log").string()).empty());
}

TEST_CASE("cmd_train: interrupted run resumes to an identical checkpoint") {
  fs::path dir_a = fresh_dir("train_full");
  fs::path dir_b = fresh_dir("train_resume");
  RunConfig a = toy_config(dir_a);
  RunConfig b = toy_config(dir_b);
  a.ppg.epochs = 4;
  a.rpcm.epochs = 3;
  pipeline::cmd_generate(a);
  pipeline::cmd_train(a, "ppg");
  pipeline::cmd_train(a, "rpcm");

  b.ppg.epochs = 2;  // "interrupt" after epoch 2
  b.rpcm.epochs = 1;
  pipeline::cmd_generate(b);
  pipeline::cmd_train(b, "ppg");
  pipeline::cmd_train(b, "rpcm");
  b.ppg.epochs = 4;  // resume to the full schedule
  b.rpcm.epochs = 3;
  pipeline::cmd_train(b, "ppg");
  pipeline::cmd_train(b, "rpcm");

  std::string full = read_file((fs::path(a.paths.checkpoint_dir) / "ppg.ckpt").string());
  std::string resumed = read_file((fs::path(b.paths.checkpoint_dir) / "ppg.ckpt").string());
  CHECK(full == resumed);
  std::string full_r = read_file((fs::path(a.paths.checkpoint_dir) / "rpcm.ckpt").string());
  std::string resumed_r = read_file((fs::path(b.paths.checkpoint_dir) / "rpcm.ckpt").string());
  CHECK(full_r == resumed_r);

  // per-epoch loss logs agree line for line
  CHECK(read_file((fs::path(a.paths.checkpoint_dir) / "ppg_train.log").string()) ==
        read_file((fs::path(b.paths.checkpoint_dir) / "ppg_train.log").string()));
}

TEST_CASE("ppg training loss decreases over the toy dataset") {
  fs::path dir = fresh_dir("ppg_descent");
  RunConfig cfg = toy_config(dir);
  cfg.ppg.epochs = 5;
  pipeline::Dataset ds = pipeline::generate_dataset(cfg);
  ppg::PpgModel model = pipeline::make_ppg_model(
      cfg, geom::PairSpatialFeature::kDim + 2 * ds.train[0].features.cols);
  std::vector<double> losses;
  pipeline::train_ppg(model, ds.train, cfg, 1, 0, &losses);
  REQUIRE(losses.size() == 5);
  CHECK(losses.back() < losses.front());
}

TEST_CASE("frequency baseline normalizes per class pair") {
  fs::path dir = fresh_dir("freq");
  RunConfig cfg = toy_config(dir);
  pipeline::Dataset ds = pipeline::generate_dataset(cfg);
  pipeline::FrequencyBaseline base =
      pipeline::FrequencyBaseline::fit(ds.train, ds.vocab.num_relations());
  CHECK(!base.relation_given_classes.empty());
  for (const auto& [key, probs] : base.relation_given_classes) {
    double sum = 0;
    for (double p : probs) sum += p;
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("cmd_evaluate with the oracle predictor reports 100 at covering K") {
  fs::path dir = fresh_dir("eval_oracle");
  RunConfig cfg = toy_config(dir);
  cfg.eval.predictor = "oracle";
  cfg.eval.k_values = {5, 2000};  // 2000 exceeds any toy scene's GT count
  pipeline::cmd_generate(cfg);
  eval::EvalReport rep = pipeline::cmd_evaluate(cfg, "predcls");
  CHECK(rep.at_k[0].mr <= 100.0);  // K=5 may cut off some of the GT list
  CHECK(rep.at_k[1].mr == 100.0);
  CHECK(rep.at_k[1].mmr == 100.0);
  CHECK(rep.at_k[1].hmr == 100.0);
  CHECK(fs::exists(fs::path(cfg.paths.report_dir) / "report_predcls.csv"));
  CHECK(fs::exists(fs::path(cfg.paths.report_dir) / "report_predcls.txt"));
}

TEST_CASE("cmd_evaluate without a checkpoint names the missing stage") {
  fs::path dir = fresh_dir("eval_missing");
  RunConfig cfg = toy_config(dir);
  pipeline::cmd_generate(cfg);
  try {
    pipeline::cmd_evaluate(cfg, "predcls");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("rpcm") != std::string::npos);
  }
}

TEST_CASE("full toy pipeline: train, evaluate all three tasks, report") {
  fs::path dir = fresh_dir("full");
  RunConfig cfg = toy_config(dir);
  pipeline::cmd_generate(cfg);
  pipeline::cmd_train(cfg, "ppg");
  pipeline::cmd_train(cfg, "rpcm");

  eval::EvalReport predcls = pipeline::cmd_evaluate(cfg, "predcls");
  CHECK(predcls.at_k.back().mr > 0.0);

  eval::EvalReport sgcls = pipeline::cmd_evaluate(cfg, "sgcls");
  CHECK(sgcls.at_k.back().mr >= 0.0);

  eval::EvalReport sgdet = pipeline::cmd_evaluate(cfg, "sgdet");
  CHECK(sgdet.at_k.back().mr >= 0.0);
  CHECK(fs::exists(fs::path(cfg.paths.report_dir) / "detections_sgdet" / "scene_00000.txt"));

  // ppg-selected candidate pairs also work end to end
  RunConfig ppg_cfg = cfg;
  ppg_cfg.eval.pair_source = "ppg";
  eval::EvalReport via_ppg = pipeline::cmd_evaluate(ppg_cfg, "predcls");
  CHECK(via_ppg.at_k.back().mr >= 0.0);

  pipeline::cmd_report({(fs::path(cfg.paths.report_dir) / "report_predcls.csv").string(),
                        (fs::path(cfg.paths.report_dir) / "report_sgcls.csv").string(),
                        (fs::path(cfg.paths.report_dir) / "report_sgdet.csv").string()},
                       (fs::path(cfg.paths.report_dir) / "merged").string());
  std::string table =
      read_file((fs::path(cfg.paths.report_dir) / "merged" / "report_table.csv").string());
  CHECK(table.find("run,task,MR@5/50") == 0);
  CHECK(table.find("PredCls") != std::string::npos);
  CHECK(table.find("SGDet") != std::string::npos);
  CHECK(fs::exists(fs::path(cfg.paths.report_dir) / "merged" / "report_predcls_PredCls_recall.svg"));
}

TEST_CASE("simulated detections mostly align with ground truth") {
  fs::path dir = fresh_dir("simdet");
  RunConfig cfg = toy_config(dir);
  pipeline::Dataset ds = pipeline::generate_dataset(cfg);
  detect::TinyScorer scorer = pipeline::train_scorer(ds.train, cfg, ds.vocab.num_objects());
  pipeline::SimulatedDetections sim = pipeline::simulate_detections(ds.test[0], scorer, cfg, 0);
  REQUIRE(!sim.detections.empty());
  CHECK(sim.detections.size() <= ds.test[0].graph.objects.size());
  int good = 0;
  for (size_t i = 0; i < sim.detections.size(); ++i) {
    const scene::ObjectInstance& src =
        ds.test[0].graph.objects[static_cast<size_t>(sim.source_object[i])];
    if (geom::rotated_iou(sim.detections[i].box, src.box) >= 0.5 &&
        sim.detections[i].class_index == src.class_index)
      ++good;
  }
  CHECK(good >= static_cast<int>(sim.detections.size() * 3 / 4));
}
