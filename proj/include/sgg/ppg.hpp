#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgg/matrix.hpp"
#include "sgg/obb.hpp"
#include "sgg/parallel.hpp"
#include "sgg/rng.hpp"
#include "sgg/tape.hpp"

namespace sgg::ppg {

struct PairKey {
  int subject_id = 0;
  int object_id = 0;
  friend bool operator<(const PairKey& a, const PairKey& b) {
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    return a.object_id < b.object_id;
  }
  friend bool operator==(const PairKey& a, const PairKey& b) {
    return a.subject_id == b.subject_id && a.object_id == b.object_id;
  }
};

// Union of spatial and semantic features for one candidate pair.
struct PairFeatureX {
  std::vector<double> v;
};

PairFeatureX make_pair_feature(const geom::PairSpatialFeature& spatial,
                               std::span<const double> subject_semantic,
                               std::span<const double> object_semantic);

enum class Activation { tanh, relu, identity };

// Two-layer affine map with a nonlinearity between the layers.
struct Mlp2 {
  Mat w1, b1, w2, b2;
  Activation act = Activation::tanh;

  static Mlp2 init(int in, int hidden, int out, Activation act, Rng& rng);
  static Mlp2 identity_map(int dim);  // exact identity (identity activation)
  std::vector<double> forward(std::span<const double> x) const;
  nn::Var build(nn::Tape& t, nn::Binder& bind, nn::Var x);       // trainable
  nn::Var build_fixed(nn::Tape& t, nn::Var x) const;             // frozen weights
};

// Two autoencoders trained adversarially on annotated pairs only. There is
// deliberately no negative-batch input anywhere in this interface.
struct PpgModel {
  int input_dim = 0;
  int latent_dim = 0;
  int hidden_dim = 0;
  Activation act = Activation::tanh;
  Mlp2 enc1, dec1, enc2, dec2;
  int iteration = 1;  // n, advanced per training epoch

  static PpgModel init(int input_dim, int latent_dim, int hidden_dim, Rng& rng,
                       Activation act = Activation::tanh);
  static PpgModel identity(int dim);
};

struct PedForward {
  std::vector<double> x1;  // dec1(enc1(x))
  std::vector<double> x2;  // dec2(enc2(x1))
};

PedForward ped_forward(const PpgModel& model, std::span<const double> x);

// Mean over the batch of (1/n)|x - x1| + (1 - 1/n)|x - x2| (Euclidean norms).
double ped_loss(const PpgModel& model, const std::vector<PairFeatureX>& batch, int n);

// Tape form of the same loss; `x` is the stacked batch, one row per pair.
// Parameters of autoencoders whose train flag is set are bound trainable.
nn::Var build_ped_loss(nn::Tape& t, nn::Binder& bind, PpgModel& model, nn::Var x, int n,
                       bool train_ped1, bool train_ped2);

// One alternating update: the first autoencoder descends the full loss (its
// reconstruction term plus the term that deceives the second), then the
// second descends its reconstruction of true inputs while pushing its
// reconstruction of the first's outputs away. Returns the loss at iteration n
// before the update. Throws TrainingError on a non-finite loss.
double ppg_training_step(PpgModel& model, const std::vector<PairFeatureX>& batch, int n, double lr,
                         double adv_weight = 1.0);

struct PairScore {
  PairKey pair;
  double score = 0.0;  // higher = more likely a high-value pair
};

// score = -(0.5|x - x1| + 0.5|x - x2|), the inference-time loss at n = 2.
std::vector<PairScore> score_pairs(const PpgModel& model,
                                   const std::vector<std::pair<PairKey, PairFeatureX>>& candidates,
                                   Exec mode = Exec::serial);

// Highest k scores; exact ties broken by (subject_id, object_id) order.
std::vector<PairKey> select_top_k(std::vector<PairScore> scores, int k);

}  // namespace sgg::ppg
