// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Each check pins its tolerance in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "sgg/detect.hpp"
#include "sgg/eval.hpp"
#include "sgg/obb.hpp"
#include "sgg/pipeline.hpp"
#include "sgg/ppg.hpp"
#include "sgg/rpcm.hpp"
#include "sgg/text.hpp"
#include "test_util.hpp"

using namespace sgg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Harness {
  int failed = 0;
  Clock::time_point started = Clock::now();

  void criterion(int n, const std::string& what, bool ok, const std::string& detail) {
    double secs = std::chrono::duration<double>(Clock::now() - started).count();
    std::printf("%s criterion %d: %s [%s] (%.1f s elapsed)\n", ok ? "PASS" : "FAIL", n,
                what.c_str(), detail.c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++failed;
  }
};

std::string source_path(const std::string& rel) { return std::string(SGG_SOURCE_DIR) + "/" + rel; }

std::string fmt2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

// ---- criterion 1: HMR identity on the published benchmark tables ----

struct TableTriple {
  const char* row;
  double mr, mmr, hmr;
};

// (MR, mMR, HMR) triples transcribed from the published benchmark tables:
// every method/task/K cell of the SGG results table, the pair-pruning
// comparison table and the messaging-iterations table.
const std::vector<TableTriple> kPublishedTriples = {
    {"hbb imp predcls k1", 49.90, 18.51, 27.00},   {"hbb imp predcls k2", 51.62, 19.40, 28.20},
    {"hbb imp sgcls k1", 42.48, 16.46, 23.73},     {"hbb imp sgcls k2", 43.63, 17.02, 24.49},
    {"hbb imp sgdet k1", 23.01, 8.25, 12.15},      {"hbb imp sgdet k2", 23.72, 8.60, 12.62},
    {"hbb motif predcls k1", 61.81, 31.33, 41.58}, {"hbb motif predcls k2", 63.78, 32.66, 43.20},
    {"hbb motif sgcls k1", 45.13, 21.46, 29.09},   {"hbb motif sgcls k2", 46.19, 22.57, 30.32},
    {"hbb motif sgdet k1", 28.36, 11.49, 16.35},   {"hbb motif sgdet k2", 29.32, 11.95, 16.98},
    {"hbb gpsnet predcls k1", 65.68, 34.92, 45.60}, {"hbb gpsnet predcls k2", 67.10, 36.11, 46.95},
    {"hbb gpsnet sgcls k1", 31.99, 14.61, 20.06},  {"hbb gpsnet sgcls k2", 33.16, 15.40, 21.03},
    {"hbb gpsnet sgdet k1", 30.83, 12.71, 18.00},  {"hbb gpsnet sgdet k2", 31.58, 13.10, 18.52},
    {"hbb sha predcls k1", 64.03, 31.98, 42.66},   {"hbb sha predcls k2", 65.77, 33.16, 44.10},
    {"hbb sha sgcls k1", 48.08, 21.60, 29.81},     {"hbb sha sgcls k2", 49.54, 22.46, 30.91},
    {"hbb sha sgdet k1", 30.21, 13.24, 18.41},     {"hbb sha sgdet k2", 31.04, 13.65, 18.96},
    {"hbb hetsgg predcls k1", 63.83, 28.70, 39.60}, {"hbb hetsgg predcls k2", 65.26, 29.72, 40.84},
    {"hbb hetsgg sgcls k1", 30.03, 10.50, 15.56},  {"hbb hetsgg sgcls k2", 31.08, 11.05, 16.30},
    {"hbb hetsgg sgdet k1", 25.19, 8.17, 12.34},   {"hbb hetsgg sgdet k2", 25.82, 8.50, 12.79},
    {"hbb penet predcls k1", 63.21, 35.94, 45.82}, {"hbb penet predcls k2", 65.11, 37.10, 47.27},
    {"hbb penet sgcls k1", 38.84, 19.46, 25.93},   {"hbb penet sgcls k2", 40.05, 20.20, 26.86},
    {"hbb penet sgdet k1", 28.11, 12.80, 17.59},   {"hbb penet sgdet k2", 29.22, 13.40, 18.37},
    {"hbb rpcm predcls k1", 64.27, 38.73, 48.33},  {"hbb rpcm predcls k2", 65.67, 39.70, 49.48},
    {"hbb rpcm sgcls k1", 46.28, 25.32, 32.73},    {"hbb rpcm sgcls k2", 47.55, 26.12, 33.72},
    {"hbb rpcm sgdet k1", 30.33, 14.09, 19.24},    {"hbb rpcm sgdet k2", 31.36, 14.78, 20.09},
    {"obb imp predcls k1", 51.52, 21.47, 30.31},   {"obb imp predcls k2", 53.19, 22.31, 31.43},
    {"obb imp sgcls k1", 46.08, 18.57, 26.47},     {"obb imp sgcls k2", 47.50, 19.38, 27.53},
    {"obb imp sgdet k1", 18.13, 5.60, 8.56},       {"obb imp sgdet k2", 19.03, 5.99, 9.11},
    {"obb motif predcls k1", 62.02, 29.40, 39.89}, {"obb motif predcls k2", 64.00, 30.64, 41.44},
    {"obb motif sgcls k1", 50.44, 24.21, 32.72},   {"obb motif sgcls k2", 52.29, 25.36, 34.16},
    {"obb motif sgdet k1", 20.63, 7.78, 11.30},    {"obb motif sgdet k2", 21.60, 8.22, 11.91},
    {"obb gpsnet sgcls k1", 29.17, 14.28, 19.17},  {"obb gpsnet sgcls k2", 30.36, 14.90, 19.99},
    {"obb gpsnet sgdet k1", 24.18, 9.54, 13.68},   {"obb gpsnet sgdet k2", 25.04, 10.09, 14.38},
    {"obb sha predcls k1", 65.00, 33.26, 44.00},   {"obb sha predcls k2", 67.04, 34.78, 45.80},
    {"obb sha sgcls k1", 51.01, 23.30, 31.99},     {"obb sha sgcls k2", 52.63, 24.15, 33.11},
    {"obb sha sgdet k1", 28.01, 10.18, 14.93},     {"obb sha sgdet k2", 29.06, 10.79, 15.74},
    {"obb hetsgg predcls k1", 63.81, 29.74, 40.57}, {"obb hetsgg predcls k2", 65.37, 30.98, 42.04},
    {"obb hetsgg sgcls k1", 27.64, 12.18, 16.91},  {"obb hetsgg sgcls k2", 28.96, 12.78, 17.73},
    {"obb hetsgg sgdet k1", 19.45, 5.44, 8.50},    {"obb hetsgg sgdet k2", 20.32, 5.73, 8.94},
    {"obb penet predcls k1", 62.87, 36.99, 46.58}, {"obb penet predcls k2", 64.98, 38.29, 48.19},
    {"obb penet sgcls k1", 41.79, 20.64, 27.63},   {"obb penet sgcls k2", 43.45, 21.60, 28.86},
    {"obb penet sgdet k1", 21.26, 8.75, 12.40},    {"obb penet sgdet k2", 22.50, 9.30, 13.16},
    {"obb rpcm predcls k1", 64.23, 41.24, 50.23},  {"obb rpcm predcls k2", 65.86, 42.30, 51.51},
    {"obb rpcm sgcls k1", 51.29, 30.04, 37.89},    {"obb rpcm sgcls k2", 52.72, 30.85, 38.92},
    {"obb rpcm sgdet k1", 27.23, 11.53, 16.20},    {"obb rpcm sgdet k2", 28.50, 12.07, 16.96},
    {"pairs random predcls k1", 51.49, 31.96, 39.44}, {"pairs random predcls k2", 52.62, 32.46, 40.15},
    {"pairs random sgcls k1", 43.12, 26.02, 32.46},   {"pairs random sgcls k2", 43.54, 26.28, 32.78},
    {"pairs random sgdet k1", 16.31, 6.66, 9.46},     {"pairs random sgdet k2", 16.57, 6.76, 9.60},
    {"pairs abbs predcls k1", 53.32, 33.45, 41.11},   {"pairs abbs predcls k2", 53.92, 33.75, 41.51},
    {"pairs abbs sgcls k1", 44.04, 26.16, 32.82},     {"pairs abbs sgcls k2", 44.58, 26.41, 33.17},
    {"pairs abbs sgdet k1", 17.02, 7.02, 9.94},       {"pairs abbs sgdet k2", 17.49, 7.68, 10.67},
    {"pairs ours predcls k1", 64.23, 41.24, 50.23},   {"pairs ours predcls k2", 65.86, 42.30, 51.51},
    {"pairs ours sgcls k1", 51.29, 30.04, 37.89},     {"pairs ours sgcls k2", 52.72, 30.85, 38.92},
    {"pairs ours sgdet k1", 27.23, 11.53, 16.20},     {"pairs ours sgdet k2", 28.50, 12.07, 16.96},
    {"iters L1 k1", 63.56, 39.12, 48.43}, {"iters L1 k2", 65.44, 40.54, 50.06},
    {"iters L2 k1", 64.14, 40.10, 49.35}, {"iters L2 k2", 65.79, 41.18, 50.65},
    {"iters L3 k1", 63.90, 40.79, 49.79}, {"iters L3 k2", 65.54, 41.88, 51.10},
    {"iters L4 k1", 64.23, 41.24, 50.23}, {"iters L4 k2", 65.86, 42.30, 51.51},
    {"iters L5 k1", 62.14, 39.92, 48.61}, {"iters L5 k2", 64.09, 41.09, 50.08},
};

// The oriented-box GPS-Net PredCls cells are arithmetically inconsistent in
// the source publication (the printed HMR differs from the harmonic mean of
// the printed MR/mMR by >1 point); they are asserted as known deviations
// instead of being silently dropped.
const std::vector<TableTriple> kKnownInconsistent = {
    {"obb gpsnet predcls k1", 65.38, 32.52, 44.80},
    {"obb gpsnet predcls k2", 66.87, 34.08, 46.22},
};

bool criterion1(std::string& detail) {
  int bad = 0;
  double worst = 0.0;
  for (const TableTriple& t : kPublishedTriples) {
    double dev = std::fabs(eval::hmr_at_k(t.mr, t.mmr) - t.hmr);
    worst = std::max(worst, dev);
    if (dev > 0.0100001) {
      ++bad;
      std::printf("  identity violated at %s: |%.4f - %.2f|\n", t.row, eval::hmr_at_k(t.mr, t.mmr),
                  t.hmr);
    }
  }
  int confirmed_inconsistent = 0;
  for (const TableTriple& t : kKnownInconsistent)
    if (std::fabs(eval::hmr_at_k(t.mr, t.mmr) - t.hmr) > 1.0) ++confirmed_inconsistent;
  detail = std::to_string(kPublishedTriples.size()) + " triples within 0.01 (worst " +
           fmt2(worst) + "); " + std::to_string(confirmed_inconsistent) +
           "/2 published inconsistencies confirmed";
  return bad == 0 && confirmed_inconsistent == 2;
}

// ---- criterion 2: metric oracle equivalence ----

bool criterion2(std::string& detail) {
  auto vocab = scene::CategoryVocabulary::load(source_path("data/toy_vocabulary.txt"));
  auto recipe = synth::SceneRecipe::load(source_path("data/recipes/harbor.json"));

  std::vector<synth::SceneSample> scenes;
  for (uint64_t i = 0; i < 10; ++i) scenes.push_back(synth::generate_scene(recipe, vocab, i));
  for (const synth::SceneSample& s : scenes)
    if (s.graph.objects.size() > 30) {
      detail = "scene exceeds 30 objects";
      return false;
    }

  // noisy synthetic predictor: jittered oracle hits plus junk, seeded
  Rng rng(424242);
  std::vector<eval::ImagePredictions> preds;
  std::vector<const scene::SceneGraph*> gt;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const scene::SceneGraph& g = scenes[i].graph;
    gt.push_back(&g);
    eval::ImagePredictions p;
    p.image_id = "scene_" + std::to_string(i);
    for (const scene::Triplet& t : g.triplets) {
      if (rng.uniform() < 0.35) continue;  // drop a re-findable fraction
      const scene::ObjectInstance* s = g.find_object(t.subject_id);
      const scene::ObjectInstance* o = g.find_object(t.object_id);
      eval::ScoredTriplet st;
      st.subject_id = t.subject_id;
      st.object_id = t.object_id;
      st.relation_index = rng.uniform() < 0.8 ? t.relation_index
                                              : rng.uniform_int(0, vocab.num_relations() - 1);
      st.score = rng.uniform(0.05, 1.0);
      st.subject_class = s->class_index;
      st.object_class = o->class_index;
      geom::Vec2 c = s->box.center();
      st.subject_box = rng.uniform() < 0.5
                           ? s->box
                           : geom::OrientedBox::from_center(c.x + rng.uniform(0.0, s->box.width()),
                                                            c.y, s->box.width(), s->box.height(),
                                                            s->box.angle());
      st.object_box = o->box;
      p.triplets.push_back(st);
    }
    // junk predictions on random pairs
    int n = static_cast<int>(g.objects.size());
    for (int j = 0; j < 40 && n >= 2; ++j) {
      int a = rng.uniform_int(0, n - 1), b = rng.uniform_int(0, n - 1);
      if (a == b) continue;
      eval::ScoredTriplet st;
      st.subject_id = g.objects[static_cast<size_t>(a)].id;
      st.object_id = g.objects[static_cast<size_t>(b)].id;
      st.relation_index = rng.uniform_int(0, vocab.num_relations() - 1);
      st.score = rng.uniform(0.05, 1.0);
      st.subject_class = g.objects[static_cast<size_t>(a)].class_index;
      st.object_class = g.objects[static_cast<size_t>(b)].class_index;
      st.subject_box = g.objects[static_cast<size_t>(a)].box;
      st.object_box = g.objects[static_cast<size_t>(b)].box;
      p.triplets.push_back(st);
    }
    preds.push_back(std::move(p));
  }

  for (int K : {5, 20, 1500}) {
    eval::EvalConfig cfg;
    cfg.k_values = {K};
    eval::EvalReport rep = eval::evaluate(preds, gt, cfg, vocab.num_relations(), Exec::parallel);
    testutil::NaiveMetrics naive =
        testutil::naive_eval(preds, gt, K, cfg.iou_threshold, vocab.num_relations());
    if (rep.at_k[0].mr != naive.mr || rep.at_k[0].mmr != naive.mmr ||
        rep.at_k[0].hmr != naive.hmr) {
      detail = "mismatch at K=" + std::to_string(K);
      return false;
    }
  }
  detail = "MR/mMR/HMR equal the brute-force evaluator exactly at K=5,20,1500";
  return true;
}

// ---- criterion 3: rotated IoU against both oracles ----

bool criterion3(std::string& detail) {
  Rng rng(31337);
  double worst_mc = 0.0, worst_sh = 0.0;
  for (int i = 0; i < 200; ++i) {
    geom::OrientedBox a = testutil::random_box(rng);
    geom::OrientedBox b = rng.uniform() < 0.3
                              ? testutil::random_box(rng)
                              : geom::OrientedBox::from_center(
                                    a.center().x + rng.uniform(-20.0, 20.0),
                                    a.center().y + rng.uniform(-20.0, 20.0),
                                    rng.uniform(2.0, 40.0), rng.uniform(2.0, 40.0),
                                    rng.uniform(-1.5707, 1.5707));
    double impl = geom::rotated_iou(a, b);
    worst_sh = std::max(worst_sh, std::fabs(impl - testutil::sh_iou(a, b)));
    worst_mc = std::max(worst_mc,
                        std::fabs(impl - testutil::mc_iou(a, b, 1000000, 1000 + static_cast<uint64_t>(i))));
  }
  geom::OrientedBox unit = geom::OrientedBox::from_corners({geom::Vec2{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  geom::OrientedBox shifted =
      geom::OrientedBox::from_corners({geom::Vec2{0.5, 0}, {1.5, 0}, {1.5, 1}, {0.5, 1}});
  double third = std::fabs(geom::rotated_iou(unit, shifted) - 1.0 / 3.0);
  detail = "200 pairs: |impl-clip| <= " + fmt2(worst_sh * 1e12) + "e-12, |impl-mc| <= " +
           fmt2(worst_mc * 1e3) + "e-3, shifted square off by " + fmt2(third * 1e12) + "e-12";
  return worst_sh < 1e-9 && worst_mc < 1e-2 && third < 1e-9;
}

// ---- criterion 4: finite-difference gradient checks ----

struct GradCheck {
  int points = 0;
  double worst = 0.0;
  bool note(double analytic, double fd) {
    worst = std::max(worst, testutil::rel_err(analytic, fd));
    ++points;
    return true;
  }
  bool ok() const { return points >= 20 && worst < 1e-4; }
};

bool criterion4(std::string& detail) {
  std::string parts;
  bool all_ok = true;
  auto finish = [&](const char* name, const GradCheck& g) {
    parts += std::string(name) + " " + fmt2(g.worst * 1e6) + "e-6 (" + std::to_string(g.points) +
             " pts); ";
    all_ok = all_ok && g.ok();
  };

  {  // hierarchical classification loss, d/dPhi and d/dw
    GradCheck g;
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      int classes = rng.uniform_int(2, 6);
      Mat conf(1, classes), w(1, classes);
      for (double& x : conf.v) x = rng.normal();
      for (double& x : w.v) x = std::exp(0.3 * rng.normal());
      int truth = rng.uniform_int(0, classes - 1);
      std::vector<double> dc(static_cast<size_t>(classes)), dw(static_cast<size_t>(classes));
      detect::hierarchical_cls_loss_grad(conf.v, w.v, truth, dc, dw);
      auto value = [&] { return detect::hierarchical_cls_loss(conf.v, w.v, truth); };
      int c = rng.uniform_int(0, classes - 1);
      g.note(dc[static_cast<size_t>(c)], testutil::central_diff(conf, 0, c, value, 1e-6));
      g.note(dw[static_cast<size_t>(c)], testutil::central_diff(w, 0, c, value, 1e-6));
    }
    finish("cls", g);
  }

  {  // pair autoencoder loss, every parameter tensor
    GradCheck g;
    Rng rng(13);
    ppg::PpgModel model = ppg::PpgModel::init(6, 2, 5, rng);
    std::vector<ppg::PairFeatureX> batch;
    for (int i = 0; i < 4; ++i) {
      ppg::PairFeatureX x;
      for (int c = 0; c < 6; ++c) x.v.push_back(rng.normal());
      batch.push_back(std::move(x));
    }
    Mat xm(4, 6);
    for (int i = 0; i < 4; ++i)
      std::copy(batch[static_cast<size_t>(i)].v.begin(), batch[static_cast<size_t>(i)].v.end(),
                xm.row(i));
    nn::Tape t;
    nn::Binder bind(t);
    nn::Var loss = ppg::build_ped_loss(t, bind, model, t.input(xm), 3, true, true);
    t.backward(loss);
    auto value = [&] { return ppg::ped_loss(model, batch, 3); };
    Rng pick(17);
    for (int probe = 0; probe < 24; ++probe) {
      const auto& entry = bind.entries()[static_cast<size_t>(
          pick.uniform_int(0, static_cast<int>(bind.entries().size()) - 1))];
      int r = pick.uniform_int(0, entry.storage->rows - 1);
      int c = pick.uniform_int(0, entry.storage->cols - 1);
      g.note(t.grad(entry.var).at(r, c), testutil::central_diff(*entry.storage, r, c, value, 1e-6));
    }
    finish("ped", g);
  }

  // prototype losses on a tiny seeded scene; the tape composite for each term
  // is checked against the standalone loss recomputed at perturbed values
  Rng rng(47);
  rpcm::RpcmConfig rc;
  rc.feature_dim = 6;
  rc.hidden_dim = 5;
  rc.joint_dim = 5;
  rc.embed_dim = 4;
  rc.iterations = 2;
  rc.proto_k = 3;
  Mat protos(3, 4);
  for (double& x : protos.v) x = 0.5 * rng.normal();
  rpcm::RpcmModel model = rpcm::RpcmModel::init(rc, 3, protos, rng);
  scene::SceneGraph graph;
  graph.image_width = graph.image_height = 100;
  for (int i = 0; i < 4; ++i) {
    scene::ObjectInstance o;
    o.id = i;
    o.class_index = i % 2;
    o.box = geom::OrientedBox::from_center(20.0 + 18 * i, 30.0 + 6 * i, 12, 6, 0.1 * i);
    graph.objects.push_back(o);
  }
  Mat feats(4, 6);
  for (double& x : feats.v) x = rng.normal();
  std::vector<ppg::PairKey> pairs{{0, 1}, {1, 2}, {2, 3}, {0, 3}, {3, 1}};
  rpcm::SceneBatch batch = rpcm::make_scene_batch(graph, feats, pairs, model.cfg);
  std::vector<std::pair<int, int>> instances{{0, 0}, {1, 1}, {2, 0}, {3, 2}, {4, 1}};

  auto check_component = [&](const char* name, int which) {
    GradCheck g;
    nn::Tape t;
    nn::Binder bind(t);
    rpcm::SceneLoss loss = rpcm::build_scene_loss(t, bind, model, batch, instances);
    nn::Var target = which == 0   ? loss.ic
                     : which == 1 ? loss.id
                     : which == 2 ? loss.pc
                     : which == 3 ? loss.pd
                                  : loss.total;
    t.backward(target);
    auto value = [&] {
      nn::Tape t2;
      nn::Binder b2(t2);
      rpcm::SceneLoss l2 = rpcm::build_scene_loss(t2, b2, model, batch, instances);
      nn::Var v = which == 0   ? l2.ic
                  : which == 1 ? l2.id
                  : which == 2 ? l2.pc
                  : which == 3 ? l2.pd
                               : l2.total;
      return t2.scalar(v);
    };
    Rng pick(1000 + static_cast<uint64_t>(which));
    for (int probe = 0; probe < 22; ++probe) {
      const auto& entry = bind.entries()[static_cast<size_t>(
          pick.uniform_int(0, static_cast<int>(bind.entries().size()) - 1))];
      int r = pick.uniform_int(0, entry.storage->rows - 1);
      int c = pick.uniform_int(0, entry.storage->cols - 1);
      g.note(t.grad(entry.var).at(r, c), testutil::central_diff(*entry.storage, r, c, value, 1e-6));
    }
    finish(name, g);
  };
  check_component("ic", 0);
  check_component("id", 1);
  check_component("pc", 2);
  check_component("pd", 3);
  check_component("total", 4);

  detail = "worst rel err: " + parts;
  return all_ok;
}

// ---- criterion 5: messaging structure ----

bool criterion5(std::string& detail) {
  Rng rng(2025);
  int n = 7, dim = 6;
  rpcm::GraphState s;
  s.adj.num_entities = n;
  for (auto [a, b] : std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {0, 6}, {2, 5}}) {
    s.adj.subject_of.push_back(a);
    s.adj.object_of.push_back(b);
  }
  auto randm = [&](int r, int c) {
    Mat m(r, c);
    for (double& x : m.v) x = rng.normal();
    return m;
  };
  s.entity_feats = randm(n, dim);
  s.relation_feats = randm(s.adj.num_relations(), dim);
  s.entity_local = s.entity_feats;
  s.relation_local = s.relation_feats;
  rpcm::MessagingParams params = rpcm::MessagingParams::init(dim, rng);

  // permutation equivariance
  std::vector<int> perm = {4, 2, 6, 0, 5, 1, 3};
  rpcm::GraphState p = s;
  p.entity_feats = Mat(n, dim);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < dim; ++c)
      p.entity_feats.at(perm[static_cast<size_t>(i)], c) = s.entity_feats.at(i, c);
  p.entity_local = p.entity_feats;
  for (size_t r = 0; r < p.adj.subject_of.size(); ++r) {
    p.adj.subject_of[r] = perm[static_cast<size_t>(s.adj.subject_of[r])];
    p.adj.object_of[r] = perm[static_cast<size_t>(s.adj.object_of[r])];
  }
  Mat base = rpcm::pba_run(s, params, 3);
  Mat permuted = rpcm::pba_run(p, params, 3);
  double worst_perm = 0.0;
  for (size_t i = 0; i < base.v.size(); ++i)
    worst_perm = std::max(worst_perm, std::fabs(base.v[i] - permuted.v[i]));

  // attention normalization per receiver and message type
  double worst_alpha = 0.0;
  for (const rpcm::AttentionRecord& rec : rpcm::attention_coefficients(s, params)) {
    std::map<int, double> sums;
    for (size_t e = 0; e < rec.edges.size(); ++e) sums[rec.edges[e].first] += rec.alpha[e];
    for (const auto& [recv, sum] : sums) worst_alpha = std::max(worst_alpha, std::fabs(sum - 1.0));
  }

  // iteration decomposition, exact
  rpcm::GraphState carried = s;
  for (int i = 0; i < 2; ++i) carried = rpcm::pba_step(carried, params);
  Mat split = rpcm::pba_run(carried, params, 2);
  Mat whole = rpcm::pba_run(s, params, 4);
  bool exact = split.v == whole.v;

  detail = "perm dev " + fmt2(worst_perm * 1e9) + "e-9, alpha dev " + fmt2(worst_alpha * 1e9) +
           "e-9, L-split exact: " + (exact ? "yes" : "no");
  return worst_perm < 1e-6 && worst_alpha < 1e-6 && exact;
}

// ---- criterion 6: pair scoring separation ----

bool criterion6(std::string& detail) {
  Rng rng(606);
  const int dim = 24;
  auto sample = [&](double shift) {
    ppg::PairFeatureX x;
    x.v.resize(dim);
    for (double& v : x.v) v = shift + rng.normal();
    return x;
  };

  std::vector<ppg::PairFeatureX> train;
  for (int i = 0; i < 500; ++i) train.push_back(sample(0.0));

  Rng mrng(607);
  ppg::PpgModel model = ppg::PpgModel::init(dim, dim / 4, 32, mrng);
  for (int epoch = 1; epoch <= 10; ++epoch) ppg::ppg_training_step(model, train, epoch, 0.02);

  std::vector<std::pair<ppg::PairKey, ppg::PairFeatureX>> test;
  for (int i = 0; i < 200; ++i) test.push_back({{i, 0}, sample(0.0)});        // positive cluster
  for (int i = 0; i < 200; ++i) test.push_back({{i, 1}, sample(4.0)});        // far cluster
  auto scores = ppg::score_pairs(model, test, Exec::parallel);

  // rank-based AUC of positive-vs-far separation
  long long wins = 0, ties = 0;
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 200; ++j) {
      double sp = scores[static_cast<size_t>(i)].score;
      double sn = scores[static_cast<size_t>(200 + j)].score;
      if (sp > sn) ++wins;
      else if (sp == sn) ++ties;
    }
  double auc = (wins + 0.5 * ties) / (200.0 * 200.0);
  detail = "AUC " + fmt2(auc) + " (threshold 0.90)";
  return auc >= 0.9;
}

// ---- criterion 7: end-to-end toy PredCls ----

bool criterion7(std::string& detail) {
  RunConfig cfg = RunConfig::load(source_path("data/configs/toy_predcls.json"));
  cfg.vocabulary = source_path("data/toy_vocabulary.txt");
  cfg.recipe = source_path("data/recipes/composite.json");
  cfg.embeddings = source_path("data/toy_embeddings.txt");
  cfg.paths.data_dir = "acceptance_tmp/toy/dataset";
  cfg.paths.checkpoint_dir = "acceptance_tmp/toy/ckpt";
  cfg.paths.report_dir = "acceptance_tmp/toy/reports";
  cfg.validate(true);

  pipeline::Dataset ds = pipeline::generate_dataset(cfg);
  int scenes = static_cast<int>(ds.train.size() + ds.val.size() + ds.test.size());
  if (scenes != 200) {
    detail = "corpus has " + std::to_string(scenes) + " scenes";
    return false;
  }

  int input_dim = geom::PairSpatialFeature::kDim + 2 * ds.train[0].features.cols;
  ppg::PpgModel pair_model = pipeline::make_ppg_model(cfg, input_dim);
  std::vector<double> ppg_losses;
  pipeline::train_ppg(pair_model, ds.train, cfg, 1, 0, &ppg_losses);

  eval::EvalConfig ecfg;
  ecfg.k_values = {20};
  ecfg.iou_threshold = cfg.eval.iou_threshold;
  std::vector<const scene::SceneGraph*> gt;
  for (const synth::SceneSample& s : ds.test) gt.push_back(&s.graph);

  pipeline::FrequencyBaseline baseline =
      pipeline::FrequencyBaseline::fit(ds.train, ds.vocab.num_relations());
  eval::EvalReport base_rep =
      eval::evaluate(pipeline::predict_frequency(baseline, ds.test, cfg, &pair_model), gt, ecfg,
                     ds.vocab.num_relations(), Exec::parallel);

  double hmr_by_L[2] = {0.0, 0.0};
  double mr_trained = 0.0;
  for (int li = 0; li < 2; ++li) {
    RunConfig c = cfg;
    c.rpcm.iterations = li == 0 ? 1 : 4;
    rpcm::RpcmModel model = pipeline::make_rpcm_model(c, ds);
    pipeline::train_rpcm_validated(model, ds.train, ds.val, c, &pair_model, 5);
    eval::EvalReport rep =
        eval::evaluate(pipeline::predict_rpcm(model, ds.test, c, eval::Task::predcls, &pair_model),
                       gt, ecfg, ds.vocab.num_relations(), Exec::parallel);
    hmr_by_L[li] = rep.at_k[0].hmr;
    if (li == 1) mr_trained = rep.at_k[0].mr;
  }

  bool beats_baseline = mr_trained >= base_rep.at_k[0].mr + 10.0;
  bool depth_helps = hmr_by_L[1] >= hmr_by_L[0];
  detail = "MR@20 trained " + fmt2(mr_trained) + " vs baseline " + fmt2(base_rep.at_k[0].mr) +
           " (need +10); HMR@20 L=4 " + fmt2(hmr_by_L[1]) + " vs L=1 " + fmt2(hmr_by_L[0]);
  return beats_baseline && depth_helps;
}

// ---- criterion 8: prediction invariances ----

bool criterion8(std::string& detail) {
  Rng rng(808);
  int cases = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int classes = rng.uniform_int(2, 9);
    int dim = rng.uniform_int(3, 8);
    Mat p(classes, dim);
    for (double& x : p.v) x = rng.normal();
    for (int i = 0; i < classes; ++i) {
      double norm = 0;
      for (int c = 0; c < dim; ++c) norm += p.at(i, c) * p.at(i, c);
      norm = std::sqrt(norm);
      for (int c = 0; c < dim; ++c) p.at(i, c) /= norm;
    }
    std::vector<double> r(static_cast<size_t>(dim));
    for (double& x : r) x = rng.normal();

    int base = rpcm::predict_relation(r, p, 1.0).predicted_class;
    for (double tau : {0.01, 0.1, 0.5, 2.0, 50.0})
      if (rpcm::predict_relation(r, p, tau).predicted_class != base) {
        detail = "argmax changed under tau";
        return false;
      }
    for (double scale : {1e-3, 0.7, 13.0, 2.5e4}) {
      std::vector<double> scaled = r;
      for (double& x : scaled) x *= scale;
      if (rpcm::predict_relation(scaled, p, 1.0).predicted_class != base) {
        detail = "argmax changed under positive rescaling";
        return false;
      }
    }
    ++cases;
  }
  detail = std::to_string(cases) + " seeded cases, argmax invariant exactly";
  return cases == 100;
}

// ---- criterion 9: selftest determinism ----

bool criterion9(std::string& detail) {
  fs::remove_all("acceptance_tmp/selftest_a");
  fs::remove_all("acceptance_tmp/selftest_b");
  pipeline::cmd_selftest("acceptance_tmp/selftest_a");
  pipeline::cmd_selftest("acceptance_tmp/selftest_b");

  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator("acceptance_tmp/selftest_a")) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), "acceptance_tmp/selftest_a");
    fs::path other = fs::path("acceptance_tmp/selftest_b") / rel;
    if (!fs::exists(other)) {
      detail = "missing in second run: " + rel.string();
      return false;
    }
    if (read_file(entry.path().string()) != read_file(other.string())) {
      detail = "byte difference in " + rel.string();
      return false;
    }
    ++compared;
  }
  detail = std::to_string(compared) + " files byte-identical across two selftest runs";
  return compared > 0;
}

}  // namespace

int main() {
  Harness h;
  std::string detail;

  detail.clear();
  h.criterion(1, "HMR identity on the published tables", criterion1(detail), detail);
  detail.clear();
  h.criterion(2, "metric equivalence with an independent evaluator", criterion2(detail), detail);
  detail.clear();
  h.criterion(3, "rotated IoU vs clipping and Monte Carlo oracles", criterion3(detail), detail);
  detail.clear();
  h.criterion(4, "finite-difference gradient checks on every loss", criterion4(detail), detail);
  detail.clear();
  h.criterion(5, "messaging equivariance, attention normalization, L-split", criterion5(detail),
              detail);
  detail.clear();
  h.criterion(6, "pair-scoring separation AUC", criterion6(detail), detail);
  detail.clear();
  h.criterion(7, "end-to-end toy PredCls vs frequency baseline and depth", criterion7(detail),
              detail);
  detail.clear();
  h.criterion(8, "prediction argmax invariances", criterion8(detail), detail);
  detail.clear();
  h.criterion(9, "byte-identical selftest reports", criterion9(detail), detail);

  if (h.failed == 0) {
    std::printf("all 9 acceptance criteria passed\n");
  } else {
    std::printf("%d acceptance criteria FAILED\n", h.failed);
  }
  return h.failed;
}
