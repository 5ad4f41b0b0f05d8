#include "sgg/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sgg/text.hpp"

namespace sgg::detect {

int DipSpec::layer_for_size(double max_dim) const {
  for (int m = 0; m < layers; ++m)
    if (max_dim >= size_interval[static_cast<size_t>(m)].first &&
        max_dim < size_interval[static_cast<size_t>(m)].second)
      return m;
  return layers - 1;
}

DipSpec build_dip(double image_width, double image_height, int layers, double window, double stride,
                  double min_size) {
  if (layers < 1) throw ConfigError("build_dip: need at least one layer");
  if (!(window > 0.0)) throw ConfigError("build_dip: window must be positive");
  if (stride <= 0.0) stride = window;
  if (stride > window) throw ConfigError("build_dip: stride must not exceed window");
  if (!(min_size > 0.0)) throw ConfigError("build_dip: min_size must be positive");

  DipSpec d;
  d.layers = layers;
  d.scale_factor = 2.0;
  d.window = window;
  d.stride = stride;
  for (int m = 0; m < layers; ++m) {
    double f = std::pow(2.0, m);
    double w = std::ceil(image_width / f);
    double h = std::ceil(image_height / f);
    if (w < 8.0 || h < 8.0)
      throw ConfigError("build_dip: layer " + std::to_string(m + 1) + " smaller than 8 px (" +
                        std::to_string(layers) + " layers on " + fmt_double(image_width) + "x" +
                        fmt_double(image_height) + ")");
    d.layer_width.push_back(w);
    d.layer_height.push_back(h);
  }
  // geometric size thresholds: layer m (1-based, m >= 2) starts at
  // min_size * 2^(m-1); layer 1 owns everything below, the last layer is open
  for (int m = 1; m <= layers; ++m) {
    double lo = m == 1 ? 0.0 : min_size * std::pow(2.0, m - 1);
    double hi = m == layers ? std::numeric_limits<double>::infinity()
                            : min_size * std::pow(2.0, m);
    d.size_interval.emplace_back(lo, hi);
  }
  return d;
}

double hierarchical_cls_loss(std::span<const double> confidences,
                             std::span<const double> class_weights, int true_class) {
  const size_t c = confidences.size();
  if (class_weights.size() != c)
    throw ConfigError("hierarchical_cls_loss: confidence/weight dimension mismatch");
  if (true_class < 0 || static_cast<size_t>(true_class) >= c)
    throw ConfigError("hierarchical_cls_loss: true class out of range");
  for (double w : class_weights)
    if (!(w > 0.0)) throw ConfigError("hierarchical_cls_loss: class weights must be positive");

  // stable log-sum-exp of the class-weighted scores
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < c; ++i) mx = std::max(mx, class_weights[i] * confidences[i]);
  double lse = 0.0;
  for (size_t i = 0; i < c; ++i) lse += std::exp(class_weights[i] * confidences[i] - mx);
  lse = mx + std::log(lse);
  return lse - class_weights[static_cast<size_t>(true_class)] *
                   confidences[static_cast<size_t>(true_class)];
}

void hierarchical_cls_loss_grad(std::span<const double> confidences,
                                std::span<const double> class_weights, int true_class,
                                std::span<double> d_confidences, std::span<double> d_weights) {
  const size_t c = confidences.size();
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < c; ++i) mx = std::max(mx, class_weights[i] * confidences[i]);
  double denom = 0.0;
  for (size_t i = 0; i < c; ++i) denom += std::exp(class_weights[i] * confidences[i] - mx);
  for (size_t i = 0; i < c; ++i) {
    double p = std::exp(class_weights[i] * confidences[i] - mx) / denom;
    double delta = p - (static_cast<int>(i) == true_class ? 1.0 : 0.0);
    // dL/dPsi_i = p_i - t_i with Psi = w .* conf
    d_confidences[i] = delta * class_weights[i];
    d_weights[i] = delta * confidences[i];
  }
}

double smooth_l1(double x) {
  double a = std::fabs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double detection_total_loss(std::span<const LayerBatch> batches, BoxMode mode) {
  double total = 0.0;
  for (const LayerBatch& b : batches) {
    if (!b.samples.empty()) {
      double cls = 0.0;
      for (const ClassificationSample& s : b.samples)
        cls += hierarchical_cls_loss(s.confidences, b.class_weights, s.true_class);
      total += cls / static_cast<double>(b.samples.size());
    }
    if (!b.positives.empty()) {
      double reg = 0.0;
      for (const RegressionSample& s : b.positives) {
        double term = 0.0;
        for (double r : s.residuals) term += smooth_l1(r);
        reg += mode == BoxMode::obb ? s.weight * term : term;
      }
      total += reg / static_cast<double>(b.positives.size());
    }
  }
  return total;
}

std::vector<Detection> merge_window_detections(std::vector<Detection> dets, double iou_threshold,
                                               BoxMode mode, Exec exec) {
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.class_index != b.class_index) return a.class_index < b.class_index;
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.id < b.id;
  });

  std::vector<Detection> kept;
  size_t i = 0;
  while (i < dets.size()) {
    size_t j = i;
    while (j < dets.size() && dets[j].class_index == dets[i].class_index) ++j;
    // greedy suppression within one class group [i, j)
    std::vector<geom::OrientedBox> boxes;
    for (size_t k = i; k < j; ++k) boxes.push_back(dets[k].box);
    Mat iou;
    if (mode == BoxMode::obb) {
      iou = geom::iou_matrix(boxes, boxes, exec);
    } else {
      std::vector<geom::AxisAlignedBox> hbbs;
      for (const geom::OrientedBox& b : boxes) hbbs.push_back(geom::obb_to_hbb(b));
      iou = geom::hbb_iou_matrix(hbbs, hbbs, exec);
    }
    std::vector<bool> suppressed(j - i, false);
    for (size_t k = 0; k < j - i; ++k) {
      if (suppressed[k]) continue;
      kept.push_back(dets[i + k]);
      for (size_t l = k + 1; l < j - i; ++l)
        if (!suppressed[l] && iou.at(static_cast<int>(k), static_cast<int>(l)) >= iou_threshold)
          suppressed[l] = true;
    }
    i = j;
  }
  return kept;
}

std::vector<Window> tile_windows(double image_width, double image_height, double window,
                                 double stride) {
  if (!(window > 0.0) || !(stride > 0.0)) throw ConfigError("tile_windows: bad window/stride");
  std::vector<Window> out;
  int id = 0;
  for (double y = 0.0;; y += stride) {
    double y0 = std::min(y, std::max(0.0, image_height - window));
    for (double x = 0.0;; x += stride) {
      double x0 = std::min(x, std::max(0.0, image_width - window));
      out.push_back({id++, x0, y0, std::min(x0 + window, image_width), std::min(y0 + window, image_height)});
      if (x0 + window >= image_width) break;
    }
    if (y0 + window >= image_height) break;
  }
  return out;
}

std::string serialize_detections(const std::vector<Detection>& dets,
                                 const scene::CategoryVocabulary& vocab) {
  std::string out;
  for (const Detection& d : dets) {
    out += vocab.object_classes.at(static_cast<size_t>(d.class_index)) + " " +
           fmt_double(d.confidence);
    for (const geom::Vec2& p : d.box.corners) out += " " + fmt_double(p.x) + " " + fmt_double(p.y);
    out += "\n";
  }
  return out;
}

std::vector<Detection> parse_detections(const std::string& text,
                                        const scene::CategoryVocabulary& vocab) {
  std::vector<Detection> out;
  int line_no = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty()) continue;
    auto tok = split_ws(line);
    if (tok.size() != 10)
      throw ParseError("detections line " + std::to_string(line_no) +
                       ": expected `class score x1 y1 ... y4`");
    Detection d;
    d.id = static_cast<int>(out.size());
    d.class_index = vocab.object_index(tok[0]);
    if (d.class_index < 0)
      throw VocabularyError("detections line " + std::to_string(line_no) + ": unknown class '" +
                            tok[0] + "'");
    if (!parse_double(tok[1], d.confidence))
      throw ParseError("detections line " + std::to_string(line_no) + ": malformed score");
    std::array<geom::Vec2, 4> pts;
    for (int i = 0; i < 4; ++i)
      if (!parse_double(tok[static_cast<size_t>(2 + 2 * i)], pts[static_cast<size_t>(i)].x) ||
          !parse_double(tok[static_cast<size_t>(3 + 2 * i)], pts[static_cast<size_t>(i)].y))
        throw ParseError("detections line " + std::to_string(line_no) + ": malformed coordinates");
    d.box = geom::OrientedBox::from_corners(pts);
    out.push_back(d);
  }
  return out;
}

TinyScorer TinyScorer::init(int input_dim, int hidden_dim, int num_classes, Rng& rng) {
  TinyScorer s;
  s.input_dim = input_dim;
  s.hidden_dim = hidden_dim;
  s.num_classes = num_classes;
  auto randn = [&](int r, int c, double scale) {
    Mat m(r, c);
    for (double& x : m.v) x = scale * rng.normal();
    return m;
  };
  s.w1 = randn(input_dim, hidden_dim, 1.0 / std::sqrt(input_dim));
  s.b1 = Mat(1, hidden_dim);
  s.w2 = randn(hidden_dim, num_classes, 1.0 / std::sqrt(hidden_dim));
  s.b2 = Mat(1, num_classes);
  s.class_weights = Mat(1, num_classes, 1.0);
  return s;
}

std::vector<double> TinyScorer::confidences(std::span<const double> feature) const {
  Mat x(1, input_dim);
  std::copy(feature.begin(), feature.end(), x.v.begin());
  Mat h = matmul(x, w1);
  for (int c = 0; c < hidden_dim; ++c) h.at(0, c) = std::tanh(h.at(0, c) + b1.at(0, c));
  Mat o = matmul(h, w2);
  std::vector<double> conf(static_cast<size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) conf[static_cast<size_t>(c)] = o.at(0, c) + b2.at(0, c);
  return conf;
}

int TinyScorer::predict(std::span<const double> feature) const {
  std::vector<double> conf = confidences(feature);
  return static_cast<int>(std::max_element(conf.begin(), conf.end()) - conf.begin());
}

double TinyScorer::train_epoch(const Mat& features, const std::vector<int>& labels, double lr) {
  if (features.rows != static_cast<int>(labels.size()))
    throw ConfigError("TinyScorer: feature/label count mismatch");
  nn::Tape tape;
  nn::Binder bind(tape);
  nn::Var vw1 = bind(w1), vb1 = bind(b1), vw2 = bind(w2), vb2 = bind(b2);
  nn::Var vcw = bind(class_weights);
  nn::Var x = tape.input(features);
  nn::Var h = tape.tanh(tape.add(tape.matmul(x, vw1), vb1));
  nn::Var conf = tape.add(tape.matmul(h, vw2), vb2);
  nn::Var psi = tape.mul(conf, vcw);
  nn::Var lse = tape.lse_rows(psi);
  std::vector<std::pair<int, int>> true_elems;
  for (size_t i = 0; i < labels.size(); ++i) true_elems.emplace_back(static_cast<int>(i), labels[i]);
  nn::Var truth = tape.gather_elems(psi, std::move(true_elems));
  nn::Var loss = tape.mean(tape.sub(lse, truth));
  double value = tape.scalar(loss);
  tape.backward(loss);
  bind.sgd_step(lr);
  // learnable class weights stay positive and bounded
  for (double& w : class_weights.v) w = std::clamp(w, 0.1, 10.0);
  return value;
}

}  // namespace sgg::detect
