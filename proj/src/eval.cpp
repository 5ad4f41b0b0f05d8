#include "sgg/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "sgg/errors.hpp"

namespace sgg::eval {

namespace {

double box_iou(const geom::OrientedBox& a, const geom::OrientedBox& b, detect::BoxMode mode) {
  if (mode == detect::BoxMode::obb) return geom::rotated_iou(a, b);
  return geom::hbb_iou(geom::obb_to_hbb(a), geom::obb_to_hbb(b));
}

bool rank_less(const ScoredTriplet& a, const ScoredTriplet& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
  if (a.object_id != b.object_id) return a.object_id < b.object_id;
  return a.relation_index < b.relation_index;
}

std::string fmt_pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

// Per image: the rank (1-based) at which each GT triplet is recalled by the
// greedy one-to-one assignment, or 0 when never recalled. Because matching
// walks predictions in rank order, the prefix of length K yields the
// assignment at K for every K at once.
std::vector<int> match_ranks(const ImagePredictions& preds, const std::vector<GtTriplet>& gts,
                             const EvalConfig& cfg, int max_k) {
  std::vector<ScoredTriplet> ordered = preds.triplets;
  std::sort(ordered.begin(), ordered.end(), rank_less);
  if (static_cast<int>(ordered.size()) > max_k) ordered.resize(static_cast<size_t>(max_k));

  std::vector<int> rank_of(gts.size(), 0);
  std::vector<bool> taken(gts.size(), false);
  for (size_t p = 0; p < ordered.size(); ++p) {
    for (size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      if (match_triplet(ordered[p], gts[g], cfg.iou_threshold, cfg.box_mode)) {
        taken[g] = true;
        rank_of[g] = static_cast<int>(p) + 1;
        break;
      }
    }
  }
  return rank_of;
}

}  // namespace

std::string task_name(Task t) {
  switch (t) {
    case Task::predcls:
      return "PredCls";
    case Task::sgcls:
      return "SGCls";
    case Task::sgdet:
      return "SGDet";
  }
  return "?";
}

Task task_from_name(const std::string& name) {
  std::string n;
  for (char c : name) n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (n == "predcls") return Task::predcls;
  if (n == "sgcls") return Task::sgcls;
  if (n == "sgdet") return Task::sgdet;
  throw ConfigError("unknown task '" + name + "' (expected predcls, sgcls or sgdet)");
}

bool match_triplet(const ScoredTriplet& pred, const GtTriplet& gt, double iou_threshold,
                   detect::BoxMode mode) {
  if (pred.relation_index != gt.relation_index) return false;
  if (pred.subject_class != gt.subject_class || pred.object_class != gt.object_class) return false;
  if (box_iou(pred.subject_box, gt.subject_box, mode) < iou_threshold) return false;
  return box_iou(pred.object_box, gt.object_box, mode) >= iou_threshold;
}

std::vector<GtTriplet> gt_triplets(const scene::SceneGraph& g) {
  std::vector<GtTriplet> out;
  out.reserve(g.triplets.size());
  for (const scene::Triplet& t : g.triplets) {
    const scene::ObjectInstance* s = g.find_object(t.subject_id);
    const scene::ObjectInstance* o = g.find_object(t.object_id);
    if (!s || !o) throw ConfigError("ground truth scene has unresolved triplet ids");
    GtTriplet gt;
    gt.relation_index = t.relation_index;
    gt.subject_class = s->class_index;
    gt.object_class = o->class_index;
    gt.subject_box = s->box;
    gt.object_box = o->box;
    out.push_back(gt);
  }
  return out;
}

EvalReport evaluate(const std::vector<ImagePredictions>& predictions,
                    const std::vector<const scene::SceneGraph*>& ground_truth,
                    const EvalConfig& config, int num_relation_classes, Exec exec) {
  if (predictions.size() != ground_truth.size())
    throw ConfigError("evaluate: prediction and ground-truth counts differ");
  for (int k : config.k_values)
    if (k < 1) throw ConfigError("evaluate: K values must be >= 1");
  if (config.k_values.empty()) throw ConfigError("evaluate: no K values");

  int max_k = *std::max_element(config.k_values.begin(), config.k_values.end());
  const int n_img = static_cast<int>(predictions.size());

  std::vector<std::vector<GtTriplet>> gts(static_cast<size_t>(n_img));
  std::vector<std::vector<int>> ranks(static_cast<size_t>(n_img));
  parallel_for(n_img, exec, [&](int i) {
    gts[static_cast<size_t>(i)] = gt_triplets(*ground_truth[static_cast<size_t>(i)]);
    ranks[static_cast<size_t>(i)] =
        match_ranks(predictions[static_cast<size_t>(i)], gts[static_cast<size_t>(i)], config, max_k);
  });

  EvalReport rep;
  rep.config = config;
  rep.num_relation_classes = num_relation_classes;
  rep.gt_per_class.assign(static_cast<size_t>(num_relation_classes), 0);
  for (int i = 0; i < n_img; ++i) {
    rep.total_gt += static_cast<int>(gts[static_cast<size_t>(i)].size());
    for (const GtTriplet& g : gts[static_cast<size_t>(i)]) {
      if (g.relation_index < 0 || g.relation_index >= num_relation_classes)
        throw ConfigError("evaluate: GT relation index outside the class count");
      ++rep.gt_per_class[static_cast<size_t>(g.relation_index)];
    }
  }

  for (int k : config.k_values) {
    MetricsAtK m;
    m.k = k;

    // micro (default) or per-image macro multi-label recall
    long long recalled = 0;
    double macro_sum = 0.0;
    int macro_images = 0;
    std::vector<int> recalled_per_class(static_cast<size_t>(num_relation_classes), 0);
    for (int i = 0; i < n_img; ++i) {
      int img_recalled = 0;
      for (size_t g = 0; g < gts[static_cast<size_t>(i)].size(); ++g) {
        int r = ranks[static_cast<size_t>(i)][g];
        if (r > 0 && r <= k) {
          ++img_recalled;
          ++recalled_per_class[static_cast<size_t>(gts[static_cast<size_t>(i)][g].relation_index)];
        }
      }
      recalled += img_recalled;
      if (!gts[static_cast<size_t>(i)].empty()) {
        macro_sum += 100.0 * img_recalled / static_cast<double>(gts[static_cast<size_t>(i)].size());
        ++macro_images;
      }
    }
    if (config.macro_average)
      m.mr = macro_images > 0 ? macro_sum / macro_images : 0.0;
    else
      m.mr = rep.total_gt > 0 ? 100.0 * static_cast<double>(recalled) / rep.total_gt : 0.0;

    double class_sum = 0.0;
    int classes_with_gt = 0;
    m.per_class_recall.assign(static_cast<size_t>(num_relation_classes), -1.0);
    for (int c = 0; c < num_relation_classes; ++c) {
      if (rep.gt_per_class[static_cast<size_t>(c)] == 0) continue;
      double r = 100.0 * recalled_per_class[static_cast<size_t>(c)] /
                 static_cast<double>(rep.gt_per_class[static_cast<size_t>(c)]);
      m.per_class_recall[static_cast<size_t>(c)] = r;
      class_sum += r;
      ++classes_with_gt;
    }
    m.mmr = classes_with_gt > 0 ? class_sum / classes_with_gt : 0.0;
    m.hmr = hmr_at_k(m.mr, m.mmr);
    rep.at_k.push_back(std::move(m));
  }

  for (int i = 0; i < n_img; ++i) {
    PerImageResult pi;
    pi.image_id = predictions[static_cast<size_t>(i)].image_id;
    pi.gt_count = static_cast<int>(gts[static_cast<size_t>(i)].size());
    for (int k : config.k_values) {
      int cnt = 0;
      for (int r : ranks[static_cast<size_t>(i)])
        if (r > 0 && r <= k) ++cnt;
      pi.recalled_at_k.push_back(cnt);
    }
    rep.per_image.push_back(std::move(pi));
  }
  return rep;
}

double mr_at_k(const std::vector<ImagePredictions>& predictions,
               const std::vector<const scene::SceneGraph*>& ground_truth, int k,
               const EvalConfig& config) {
  if (k < 1) throw ConfigError("mr_at_k: K must be >= 1");
  EvalConfig cfg = config;
  cfg.k_values = {k};
  int max_rel = 1;
  for (const scene::SceneGraph* g : ground_truth)
    for (const scene::Triplet& t : g->triplets) max_rel = std::max(max_rel, t.relation_index + 1);
  return evaluate(predictions, ground_truth, cfg, max_rel).at_k.front().mr;
}

double mmr_at_k(const std::vector<ImagePredictions>& predictions,
                const std::vector<const scene::SceneGraph*>& ground_truth, int k,
                const EvalConfig& config, int num_relation_classes) {
  if (k < 1) throw ConfigError("mmr_at_k: K must be >= 1");
  EvalConfig cfg = config;
  cfg.k_values = {k};
  return evaluate(predictions, ground_truth, cfg, num_relation_classes).at_k.front().mmr;
}

double hmr_at_k(double mr, double mmr) {
  if (mr < 0.0 || mr > 100.0 || mmr < 0.0 || mmr > 100.0)
    throw ConfigError("hmr_at_k: inputs must be percentages in [0, 100]");
  if (mr + mmr == 0.0) return 0.0;
  return 2.0 * mr * mmr / (mr + mmr);
}

std::string report_text(const EvalReport& rep, const scene::CategoryVocabulary& vocab) {
  std::string out;
  out += "task: " + task_name(rep.config.task) + "\n";
  out += "box_mode: " + std::string(rep.config.box_mode == detect::BoxMode::obb ? "OBB" : "HBB") +
         "\n";
  out += "iou_threshold: " + fmt_pct(rep.config.iou_threshold) + "\n";
  out += "mr_averaging: " + std::string(rep.config.macro_average ? "macro" : "micro") + "\n";
  for (const std::string& d : rep.deviations) out += "deviation: " + d + "\n";
  out += "total_gt: " + std::to_string(rep.total_gt) + "\n";
  for (const MetricsAtK& m : rep.at_k)
    out += "K=" + std::to_string(m.k) + " MR=" + fmt_pct(m.mr) + " mMR=" + fmt_pct(m.mmr) +
           " HMR=" + fmt_pct(m.hmr) + "\n";
  out += "[per_class]\n";
  for (int c = 0; c < rep.num_relation_classes; ++c) {
    if (rep.gt_per_class[static_cast<size_t>(c)] == 0) continue;
    out += vocab.relation_classes.at(static_cast<size_t>(c)) + " gt=" +
           std::to_string(rep.gt_per_class[static_cast<size_t>(c)]);
    for (const MetricsAtK& m : rep.at_k)
      out += " recall@" + std::to_string(m.k) + "=" +
             fmt_pct(m.per_class_recall[static_cast<size_t>(c)]);
    out += "\n";
  }
  out += "[per_image]\n";
  for (const PerImageResult& pi : rep.per_image) {
    out += pi.image_id + " gt=" + std::to_string(pi.gt_count);
    for (size_t i = 0; i < rep.at_k.size(); ++i)
      out += " recalled@" + std::to_string(rep.at_k[i].k) + "=" +
             std::to_string(pi.recalled_at_k[i]);
    out += "\n";
  }
  return out;
}

std::string report_csv(const EvalReport& rep) {
  std::string ks;
  for (size_t i = 0; i < rep.at_k.size(); ++i)
    ks += (i ? "/" : "") + std::to_string(rep.at_k[i].k);
  std::string out = "task,MR@" + ks + ",mMR@" + ks + ",HMR@" + ks + "\n";
  std::string mr, mmr, hmr;
  for (size_t i = 0; i < rep.at_k.size(); ++i) {
    mr += (i ? "/" : "") + fmt_pct(rep.at_k[i].mr);
    mmr += (i ? "/" : "") + fmt_pct(rep.at_k[i].mmr);
    hmr += (i ? "/" : "") + fmt_pct(rep.at_k[i].hmr);
  }
  out += task_name(rep.config.task) + "," + mr + "," + mmr + "," + hmr + "\n";
  return out;
}

}  // namespace sgg::eval
