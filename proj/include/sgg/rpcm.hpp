#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgg/matrix.hpp"
#include "sgg/ppg.hpp"
#include "sgg/rng.hpp"
#include "sgg/scene.hpp"
#include "sgg/tape.hpp"

namespace sgg::rpcm {

// Sparse pair graph: one entity row per object, one relation row per selected
// pair, plus the subject/object entity row of every relation.
struct GraphAdjacency {
  int num_entities = 0;
  std::vector<int> subject_of;  // per relation
  std::vector<int> object_of;   // per relation
  int num_relations() const { return static_cast<int>(subject_of.size()); }
};

struct GraphState {
  Mat entity_feats;    // current iteration features, one row per entity
  Mat relation_feats;  // one row per relation
  Mat entity_local;    // the iteration-0 local features kept for fusion
  Mat relation_local;
  GraphAdjacency adj;
};

// Weight matrices and attention parameters for the six message types:
// entity->entity, relation->subject, relation->object (entity update) and
// relation->relation, subject->relation, object->relation (relation update).
// Attention is a learned scalar compatibility of receiver and sender
// features, softmax-normalized over each receiver's contributors.
struct MessagingParams {
  Mat w_ee, w_rs, w_ro;
  Mat w_rr, w_sr, w_or;
  Mat a_ee_recv, a_ee_send;  // 1 x dim compatibility vectors
  Mat a_rs_recv, a_rs_send;
  Mat a_ro_recv, a_ro_send;
  Mat a_rr_recv, a_rr_send;
  Mat a_sr_recv, a_sr_send;
  Mat a_or_recv, a_or_send;
  Mat entity_gate, relation_gate;  // 1 x dim, pre-sigmoid; 0 gives gate 0.5

  static MessagingParams init(int dim, Rng& rng);
  static MessagingParams zeros(int dim);
};

// One entity refresh: sigmoid of the attention-weighted sums of the three
// entity-directed message types. Entities with no contributors of a type get
// a zero contribution from it.
Mat entity_message_update(const GraphState& state, const MessagingParams& params);
Mat relation_message_update(const GraphState& state, const MessagingParams& params);

// gate elementwise in [0,1]: gate * global + (1 - gate) * local.
Mat global_local_fuse(const Mat& global_feats, const Mat& local_feats, const Mat& gate);

// One full iteration: both updates from the same input state, then fusion
// with the iteration-0 locals.
GraphState pba_step(GraphState state, const MessagingParams& params);
// L iterations; returns the final relation features.
Mat pba_run(const GraphState& state, const MessagingParams& params, int iterations);

struct AttentionRecord {
  std::string type;                         // "ee", "rs", ...
  std::vector<std::pair<int, int>> edges;   // (receiver row, sender row)
  std::vector<double> alpha;                // per edge, sums to 1 per receiver
};
std::vector<AttentionRecord> attention_coefficients(const GraphState& state,
                                                    const MessagingParams& params);

// --- prototype-guided relationship learning ---

// Word-embedding lookup with an optional deterministic hash fallback for
// out-of-table tokens, so toy vocabularies never need a network fetch.
struct EmbeddingTable {
  int dim = 0;
  std::map<std::string, std::vector<double>> vectors;
  bool hash_fallback = true;

  static EmbeddingTable parse(const std::string& text);
  static EmbeddingTable load(const std::string& path);
  bool has(const std::string& token) const { return vectors.count(token) > 0; }
  std::vector<double> token_vector(const std::string& token) const;
};

std::vector<std::string> tokenize_label(const std::string& label);

// Initial class prototypes: mean of the label's token embeddings. Errors when
// no token of a label resolves (all unknown with fallback disabled).
Mat init_prototypes(const std::vector<std::string>& labels, const EmbeddingTable& table);

double loss_instance_contrastive(std::span<const double> r_bar, const Mat& p_bar_all, int true_row,
                                 double tau);
double loss_instance_distance(std::span<const double> r_true, std::span<const double> r_neg,
                              std::span<const double> p_bar, double gamma1);
// L2,1 norm of the prototype cosine-similarity matrix (diagonal included).
double loss_prototype_contrast(const Mat& p_bar);
// Hinge on the k smallest off-diagonal squared distances, averaged (or
// summed with mean_reduce = false).
double loss_prototype_distance(const Mat& p_bar, int k, double gamma2, bool mean_reduce = true);
double rpcm_total_loss(double ic, double id, double pc, double pd);

struct RelationPrediction {
  std::vector<double> similarities;  // scaled cosine per class
  std::vector<double> calibrated;    // softmax of similarities
  int predicted_class = 0;           // argmax, lowest index wins ties
};

RelationPrediction predict_relation(std::span<const double> r_bar, const Mat& p_bar_classes,
                                    double tau);

// --- full trainable model ---

struct RpcmConfig {
  int feature_dim = 64;  // entity semantic feature dimension
  int hidden_dim = 64;
  int joint_dim = 64;
  int embed_dim = 50;
  int iterations = 4;
  double tau = 0.1;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  int proto_k = 5;
  bool background_prototype = true;
  bool share_map_heads = false;
  bool pd_mean = true;

  int entity_input_dim() const { return feature_dim + 5; }  // + geometry summary
  int relation_input_dim() const { return 9 + 2 * entity_input_dim(); }
};

struct RpcmModel {
  RpcmConfig cfg;
  int num_classes = 0;
  Mat ent_in_w, ent_in_b;
  Mat rel_in_w, rel_in_b;
  MessagingParams messaging;
  ppg::Mlp2 map_r;            // relation features -> joint space
  Mat enc_w, enc_b;           // prototype encoder (affine + tanh)
  ppg::Mlp2 map_p;            // encoded prototypes -> joint space
  Mat class_prototypes;       // C x embed_dim, fixed word-embedding means
  Mat background_prototype;   // 1 x embed_dim, learned; row 0 when enabled
  bool background = true;

  static RpcmModel init(const RpcmConfig& cfg, int num_classes, const Mat& initial_prototypes,
                        Rng& rng);
  int prototype_rows() const { return num_classes + (background ? 1 : 0); }
  int class_row(int class_index) const { return class_index + (background ? 1 : 0); }
};

// Inputs for one scene: raw entity rows [semantic, geometry summary], raw
// relation rows [spatial pair feature, subject raw, object raw].
struct SceneBatch {
  Mat entity_raw;
  Mat relation_raw;
  GraphAdjacency adj;
  std::vector<ppg::PairKey> pairs;
};

SceneBatch make_scene_batch(const scene::SceneGraph& graph, const Mat& features,
                            const std::vector<ppg::PairKey>& pairs, const RpcmConfig& cfg);

struct SceneForward {
  nn::Var relation_embeddings;  // r-bar rows, one per pair
  nn::Var prototype_embeddings; // p-bar rows (background first when enabled)
};

SceneForward build_scene_forward(nn::Tape& t, nn::Binder& bind, RpcmModel& model,
                                 const SceneBatch& batch, int iterations);

struct SceneLoss {
  nn::Var total, ic, id, pc, pd;
};

// instances: (relation row, true class index) per ground-truth triplet.
SceneLoss build_scene_loss(nn::Tape& t, nn::Binder& bind, RpcmModel& model, const SceneBatch& batch,
                           const std::vector<std::pair<int, int>>& instances);

// value-only forwards (no gradients)
Mat scene_relation_embeddings(RpcmModel& model, const SceneBatch& batch, int iterations = 0);
Mat projected_prototypes(RpcmModel& model);  // p-bar, all rows
Mat projected_class_prototypes(RpcmModel& model);

// Joint-space projection of relation features and prototypes: r = MAP_r(Rel),
// p = MAP_p(Enc_p(T)), bars are the L2-normalized rows used for matching.
struct JointSpace {
  Mat r, p;
  Mat r_bar, p_bar;
};
JointSpace project_to_joint_space(const RpcmModel& model, const Mat& relation_features);

std::string serialize_prototypes(RpcmModel& model, const std::vector<std::string>& labels);

}  // namespace sgg::rpcm
