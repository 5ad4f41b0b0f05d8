#pragma once

#include <string>
#include <vector>

#include "sgg/detect.hpp"
#include "sgg/obb.hpp"
#include "sgg/parallel.hpp"
#include "sgg/scene.hpp"

namespace sgg::eval {

enum class Task { predcls, sgcls, sgdet };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

struct EvalConfig {
  Task task = Task::predcls;
  std::vector<int> k_values{1500, 2000};
  double iou_threshold = 0.5;
  detect::BoxMode box_mode = detect::BoxMode::obb;
  bool macro_average = false;  // multi-label recall averaging over the corpus
};

// One ranked prediction: labels and boxes come from the task protocol
// (ground truth for PredCls, predicted labels for SGCls, detections for
// SGDet); ids are scene-local.
struct ScoredTriplet {
  int subject_id = 0;
  int object_id = 0;
  int relation_index = 0;
  double score = 0.0;
  int subject_class = 0;
  int object_class = 0;
  geom::OrientedBox subject_box;
  geom::OrientedBox object_box;
};

struct GtTriplet {
  int relation_index = 0;
  int subject_class = 0;
  int object_class = 0;
  geom::OrientedBox subject_box;
  geom::OrientedBox object_box;
};

struct ImagePredictions {
  std::string image_id;
  std::vector<ScoredTriplet> triplets;
};

// True when subject class, object class and relation all match and both box
// pairs overlap at or above the threshold in the configured box mode.
bool match_triplet(const ScoredTriplet& pred, const GtTriplet& gt, double iou_threshold,
                   detect::BoxMode mode);

std::vector<GtTriplet> gt_triplets(const scene::SceneGraph& g);

struct PerImageResult {
  std::string image_id;
  int gt_count = 0;
  std::vector<int> recalled_at_k;
};

struct MetricsAtK {
  int k = 0;
  double mr = 0.0;
  double mmr = 0.0;
  double hmr = 0.0;
  std::vector<double> per_class_recall;  // percent, -1 for classes without GT
};

struct EvalReport {
  EvalConfig config;
  int num_relation_classes = 0;
  int total_gt = 0;
  std::vector<int> gt_per_class;
  std::vector<MetricsAtK> at_k;
  std::vector<PerImageResult> per_image;
  std::vector<std::string> deviations;  // settings that differ from defaults
};

// Rank order is (score desc, subject id, object id, relation index); matching
// is greedy one-to-one in rank order so a prediction recalls at most one GT
// triplet and duplicates never double-count.
EvalReport evaluate(const std::vector<ImagePredictions>& predictions,
                    const std::vector<const scene::SceneGraph*>& ground_truth,
                    const EvalConfig& config, int num_relation_classes,
                    Exec exec = Exec::serial);

// Multi-label recall at K, micro-averaged over the corpus (or per-image macro
// with config.macro_average); percent in [0, 100].
double mr_at_k(const std::vector<ImagePredictions>& predictions,
               const std::vector<const scene::SceneGraph*>& ground_truth, int k,
               const EvalConfig& config);

// Mean over relation classes (with at least one GT instance) of the
// class-restricted corpus-wide recall.
double mmr_at_k(const std::vector<ImagePredictions>& predictions,
                const std::vector<const scene::SceneGraph*>& ground_truth, int k,
                const EvalConfig& config, int num_relation_classes);

// Harmonic mean of the two recalls; 0 when both are 0.
double hmr_at_k(double mr, double mmr);

std::string report_text(const EvalReport& report, const scene::CategoryVocabulary& vocab);
std::string report_csv(const EvalReport& report);

}  // namespace sgg::eval
