#pragma once

#include <span>
#include <string>
#include <vector>

#include "sgg/matrix.hpp"
#include "sgg/obb.hpp"
#include "sgg/rng.hpp"
#include "sgg/scene.hpp"
#include "sgg/tape.hpp"

namespace sgg::detect {

enum class BoxMode { obb, hbb };

// Image pyramid plan: layer m has dimensions ceil(dim / scale^(m-1)) and owns
// the band of object sizes (max dimension, original pixels) in
// [size_interval[m].first, size_interval[m].second). Layer 1 owns the
// smallest objects, the last layer everything above the top threshold.
struct DipSpec {
  int layers = 1;
  double scale_factor = 2.0;
  double window = 0.0;
  double stride = 0.0;
  std::vector<double> layer_width;
  std::vector<double> layer_height;
  std::vector<std::pair<double, double>> size_interval;

  int layer_for_size(double max_dim) const;  // 0-based layer index
};

DipSpec build_dip(double image_width, double image_height, int layers, double window,
                  double stride = 0.0, double min_size = 32.0);

// Weighted-softmax cross-entropy: -log softmax(w .* confidences)[true_class].
double hierarchical_cls_loss(std::span<const double> confidences,
                             std::span<const double> class_weights, int true_class);
void hierarchical_cls_loss_grad(std::span<const double> confidences,
                                std::span<const double> class_weights, int true_class,
                                std::span<double> d_confidences, std::span<double> d_weights);

double smooth_l1(double x);  // knee at 1

struct ClassificationSample {
  std::vector<double> confidences;
  int true_class = 0;
};

// Residuals are regression offsets for one positive sample; weight is the
// caller-supplied per-sample regression weight (default 1) that only the
// oriented-box loss applies.
struct RegressionSample {
  std::vector<double> residuals;
  double weight = 1.0;
};

struct LayerBatch {
  int layer = 1;
  std::vector<double> class_weights;  // learnable, > 0, one per class
  std::vector<ClassificationSample> samples;
  std::vector<RegressionSample> positives;
};

// Sum over layers of mean classification loss plus mean (weighted, in obb
// mode) smooth-L1 regression loss; layers without positives contribute the
// classification term only.
double detection_total_loss(std::span<const LayerBatch> batches, BoxMode mode);

struct Detection {
  int id = 0;  // stable tie-break key, assigned in input order
  geom::OrientedBox box;
  int class_index = 0;
  double confidence = 0.0;
  int window_id = -1;
};

// Per-class greedy NMS over global-coordinate detections; descending
// confidence, lower id wins exact ties, overlap at IoU >= threshold
// suppresses. Output order: class, then confidence, then id.
std::vector<Detection> merge_window_detections(std::vector<Detection> dets, double iou_threshold,
                                               BoxMode mode = BoxMode::obb,
                                               Exec exec = Exec::serial);

struct Window {
  int id = 0;
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

std::vector<Window> tile_windows(double image_width, double image_height, double window,
                                 double stride);

// Text export `class score x1 y1 ... y4`, one detection per line.
std::string serialize_detections(const std::vector<Detection>& dets,
                                 const scene::CategoryVocabulary& vocab);
std::vector<Detection> parse_detections(const std::string& text,
                                        const scene::CategoryVocabulary& vocab);

// Minimal pluggable detector head for tests and the toy pipeline: a two-layer
// scorer over synthetic features trained with the hierarchical loss.
struct TinyScorer {
  int input_dim = 0;
  int hidden_dim = 0;
  int num_classes = 0;
  Mat w1, b1, w2, b2;
  Mat class_weights;  // 1 x classes, clamped to [0.1, 10]

  static TinyScorer init(int input_dim, int hidden_dim, int num_classes, Rng& rng);
  std::vector<double> confidences(std::span<const double> feature) const;
  int predict(std::span<const double> feature) const;
  // one SGD pass over the batch; returns the mean loss before the update
  double train_epoch(const Mat& features, const std::vector<int>& labels, double lr);
};

}  // namespace sgg::detect
