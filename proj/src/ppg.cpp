#include "sgg/ppg.hpp"

#include <algorithm>
#include <cmath>

#include "sgg/errors.hpp"

namespace sgg::ppg {

namespace {

// margin for the hinged adversarial objective of the second autoencoder
constexpr double kAdvMargin = 1.0;

Mat batch_matrix(const std::vector<PairFeatureX>& batch) {
  Mat x(static_cast<int>(batch.size()), static_cast<int>(batch.front().v.size()));
  for (size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].v.size() != batch.front().v.size())
      throw ConfigError("pair feature batch: inconsistent dimension");
    std::copy(batch[i].v.begin(), batch[i].v.end(), x.row(static_cast<int>(i)));
  }
  return x;
}

nn::Var apply_act(nn::Tape& t, Activation act, nn::Var x) {
  switch (act) {
    case Activation::tanh:
      return t.tanh(x);
    case Activation::relu:
      return t.relu(x);
    case Activation::identity:
      return x;
  }
  return x;
}

// mean over rows of the Euclidean norm of each row
nn::Var mean_row_norm(nn::Tape& t, nn::Var residual) {
  return t.mean(t.sqrt(t.row_sum(t.square(residual))));
}

}  // namespace

PairFeatureX make_pair_feature(const geom::PairSpatialFeature& spatial,
                               std::span<const double> subject_semantic,
                               std::span<const double> object_semantic) {
  PairFeatureX x;
  x.v.reserve(geom::PairSpatialFeature::kDim + subject_semantic.size() + object_semantic.size());
  x.v.insert(x.v.end(), spatial.v.begin(), spatial.v.end());
  x.v.insert(x.v.end(), subject_semantic.begin(), subject_semantic.end());
  x.v.insert(x.v.end(), object_semantic.begin(), object_semantic.end());
  return x;
}

Mlp2 Mlp2::init(int in, int hidden, int out, Activation act, Rng& rng) {
  Mlp2 m;
  m.act = act;
  auto randn = [&](int r, int c, double scale) {
    Mat mm(r, c);
    for (double& x : mm.v) x = scale * rng.normal();
    return mm;
  };
  m.w1 = randn(in, hidden, 1.0 / std::sqrt(in));
  m.b1 = Mat(1, hidden);
  m.w2 = randn(hidden, out, 1.0 / std::sqrt(hidden));
  m.b2 = Mat(1, out);
  return m;
}

Mlp2 Mlp2::identity_map(int dim) {
  Mlp2 m;
  m.act = Activation::identity;
  m.w1 = Mat::eye(dim);
  m.b1 = Mat(1, dim);
  m.w2 = Mat::eye(dim);
  m.b2 = Mat(1, dim);
  return m;
}

std::vector<double> Mlp2::forward(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != w1.rows) throw ConfigError("Mlp2: input dimension mismatch");
  std::vector<double> h(static_cast<size_t>(w1.cols));
  for (int c = 0; c < w1.cols; ++c) {
    double s = b1.at(0, c);
    for (int r = 0; r < w1.rows; ++r) s += x[static_cast<size_t>(r)] * w1.at(r, c);
    if (act == Activation::tanh) s = std::tanh(s);
    if (act == Activation::relu) s = s > 0.0 ? s : 0.0;
    h[static_cast<size_t>(c)] = s;
  }
  std::vector<double> out(static_cast<size_t>(w2.cols));
  for (int c = 0; c < w2.cols; ++c) {
    double s = b2.at(0, c);
    for (int r = 0; r < w2.rows; ++r) s += h[static_cast<size_t>(r)] * w2.at(r, c);
    out[static_cast<size_t>(c)] = s;
  }
  return out;
}

nn::Var Mlp2::build(nn::Tape& t, nn::Binder& bind, nn::Var x) {
  nn::Var h = apply_act(t, act, t.add(t.matmul(x, bind(w1)), bind(b1)));
  return t.add(t.matmul(h, bind(w2)), bind(b2));
}

nn::Var Mlp2::build_fixed(nn::Tape& t, nn::Var x) const {
  nn::Var h = apply_act(t, act, t.add(t.matmul(x, t.input(w1)), t.input(b1)));
  return t.add(t.matmul(h, t.input(w2)), t.input(b2));
}

PpgModel PpgModel::init(int input_dim, int latent_dim, int hidden_dim, Rng& rng, Activation act) {
  if (latent_dim > input_dim)
    throw ConfigError("ppg: latent dimension must not exceed the input dimension");
  PpgModel m;
  m.input_dim = input_dim;
  m.latent_dim = latent_dim;
  m.hidden_dim = hidden_dim;
  m.act = act;
  m.enc1 = Mlp2::init(input_dim, hidden_dim, latent_dim, act, rng);
  m.dec1 = Mlp2::init(latent_dim, hidden_dim, input_dim, act, rng);
  m.enc2 = Mlp2::init(input_dim, hidden_dim, latent_dim, act, rng);
  m.dec2 = Mlp2::init(latent_dim, hidden_dim, input_dim, act, rng);
  return m;
}

PpgModel PpgModel::identity(int dim) {
  PpgModel m;
  m.input_dim = dim;
  m.latent_dim = dim;
  m.hidden_dim = dim;
  m.act = Activation::identity;
  m.enc1 = Mlp2::identity_map(dim);
  m.dec1 = Mlp2::identity_map(dim);
  m.enc2 = Mlp2::identity_map(dim);
  m.dec2 = Mlp2::identity_map(dim);
  return m;
}

PedForward ped_forward(const PpgModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.input_dim)
    throw ConfigError("ped_forward: input dimension mismatch");
  PedForward f;
  f.x1 = model.dec1.forward(model.enc1.forward(x));
  f.x2 = model.dec2.forward(model.enc2.forward(f.x1));
  return f;
}

double ped_loss(const PpgModel& model, const std::vector<PairFeatureX>& batch, int n) {
  if (batch.empty()) throw ConfigError("ped_loss: empty batch");
  if (n < 1) throw ConfigError("ped_loss: n must be >= 1");
  double w1 = 1.0 / n;
  double w2 = 1.0 - w1;
  double acc = 0.0;
  for (const PairFeatureX& x : batch) {
    PedForward f = ped_forward(model, x.v);
    double d1 = 0.0, d2 = 0.0;
    for (size_t i = 0; i < x.v.size(); ++i) {
      double r1 = x.v[i] - f.x1[i];
      double r2 = x.v[i] - f.x2[i];
      d1 += r1 * r1;
      d2 += r2 * r2;
    }
    acc += w1 * std::sqrt(d1) + w2 * std::sqrt(d2);
  }
  return acc / static_cast<double>(batch.size());
}

nn::Var build_ped_loss(nn::Tape& t, nn::Binder& bind, PpgModel& model, nn::Var x, int n,
                       bool train_ped1, bool train_ped2) {
  nn::Var x1 = train_ped1 ? model.dec1.build(t, bind, model.enc1.build(t, bind, x))
                          : model.dec1.build_fixed(t, model.enc1.build_fixed(t, x));
  nn::Var x2 = train_ped2 ? model.dec2.build(t, bind, model.enc2.build(t, bind, x1))
                          : model.dec2.build_fixed(t, model.enc2.build_fixed(t, x1));
  double w1 = 1.0 / n;
  nn::Var term1 = mean_row_norm(t, t.sub(x, x1));
  nn::Var term2 = mean_row_norm(t, t.sub(x, x2));
  return t.add(t.scale(term1, w1), t.scale(term2, 1.0 - w1));
}

double ppg_training_step(PpgModel& model, const std::vector<PairFeatureX>& batch, int n, double lr,
                         double adv_weight) {
  if (batch.empty()) throw ConfigError("ppg_training_step: empty batch");
  if (n < 1) throw ConfigError("ppg_training_step: n must be >= 1");
  Mat xm = batch_matrix(batch);

  // first autoencoder: descend the full iteration-n loss
  double loss_value;
  {
    nn::Tape t;
    nn::Binder bind(t);
    nn::Var x = t.input(xm);
    nn::Var loss = build_ped_loss(t, bind, model, x, n, /*train_ped1=*/true, /*train_ped2=*/false);
    loss_value = t.scalar(loss);
    if (!std::isfinite(loss_value))
      throw TrainingError("ppg training diverged: non-finite loss at n=" + std::to_string(n));
    t.backward(loss);
    if (!bind.grads_finite()) throw TrainingError("ppg training diverged: non-finite gradient");
    bind.sgd_step(lr);
  }

  // second autoencoder: reconstruct true inputs, push reconstructions of the
  // first's outputs away from them
  {
    Mat x1m(xm.rows, xm.cols);
    for (int i = 0; i < xm.rows; ++i) {
      std::vector<double> row(xm.row(i), xm.row(i) + xm.cols);
      std::vector<double> x1 = model.dec1.forward(model.enc1.forward(row));
      std::copy(x1.begin(), x1.end(), x1m.row(i));
    }
    nn::Tape t;
    nn::Binder bind(t);
    nn::Var x = t.input(xm);
    nn::Var x1 = t.input(x1m);
    // the second autoencoder's parameters are bound twice (true and fake
    // branch); the two gradient contributions sum through sgd_step
    nn::Var rec_true = model.dec2.build(t, bind, model.enc2.build(t, bind, x));
    nn::Var rec_fake = model.dec2.build(t, bind, model.enc2.build(t, bind, x1));
    nn::Var err_true = mean_row_norm(t, t.sub(x, rec_true));
    nn::Var err_fake = mean_row_norm(t, t.sub(x, rec_fake));
    // hinged maximization: push the error on reconstructed inputs above the
    // error on true inputs by a margin, not to infinity
    nn::Var gap = t.relu(t.add_const(t.sub(err_true, err_fake), kAdvMargin));
    nn::Var obj = t.add(err_true, t.scale(gap, adv_weight));
    t.backward(obj);
    if (!bind.grads_finite()) throw TrainingError("ppg training diverged: non-finite gradient");
    bind.sgd_step(lr);
  }
  return loss_value;
}

std::vector<PairScore> score_pairs(const PpgModel& model,
                                   const std::vector<std::pair<PairKey, PairFeatureX>>& candidates,
                                   Exec mode) {
  std::vector<PairScore> out(candidates.size());
  parallel_for(static_cast<int>(candidates.size()), mode, [&](int i) {
    const auto& [key, x] = candidates[static_cast<size_t>(i)];
    PedForward f = ped_forward(model, x.v);
    double d1 = 0.0, d2 = 0.0;
    for (size_t k = 0; k < x.v.size(); ++k) {
      double r1 = x.v[k] - f.x1[k];
      double r2 = x.v[k] - f.x2[k];
      d1 += r1 * r1;
      d2 += r2 * r2;
    }
    out[static_cast<size_t>(i)] = {key, -(0.5 * std::sqrt(d1) + 0.5 * std::sqrt(d2))};
  });
  return out;
}

std::vector<PairKey> select_top_k(std::vector<PairScore> scores, int k) {
  if (k < 1) throw ConfigError("select_top_k: k must be >= 1");
  std::sort(scores.begin(), scores.end(), [](const PairScore& a, const PairScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.pair < b.pair;
  });
  size_t take = std::min(static_cast<size_t>(k), scores.size());
  std::vector<PairKey> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) out.push_back(scores[i].pair);
  return out;
}

}  // namespace sgg::ppg
