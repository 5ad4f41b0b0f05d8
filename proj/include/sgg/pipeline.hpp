#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sgg/config.hpp"
#include "sgg/detect.hpp"
#include "sgg/eval.hpp"
#include "sgg/ppg.hpp"
#include "sgg/rpcm.hpp"
#include "sgg/synth.hpp"

namespace sgg::pipeline {

struct Dataset {
  scene::CategoryVocabulary vocab;
  rpcm::EmbeddingTable embeddings;
  std::vector<synth::SceneSample> train, val, test;
};

struct SplitCounts {
  int train = 0, val = 0, test = 0;
};
// floor(n * fraction) for train and val, remainder to test
SplitCounts split_counts(int total, const RunConfig::Splits& splits);

Dataset generate_dataset(const RunConfig& cfg);
void write_dataset(const Dataset& ds, const RunConfig& cfg);  // scenes + manifest
Dataset load_dataset(const RunConfig& cfg);

// --- pair candidates ---
std::vector<ppg::PairKey> gt_pairs(const scene::SceneGraph& g);
std::vector<ppg::PairKey> all_ordered_pairs(const scene::SceneGraph& g);
std::vector<std::pair<ppg::PairKey, ppg::PairFeatureX>> pair_candidates(
    const synth::SceneSample& sample, const std::vector<ppg::PairKey>& pairs);

// --- training ---
ppg::PpgModel make_ppg_model(const RunConfig& cfg, int input_dim);
// trains in place over epochs [start_epoch, end_epoch] (1-based, inclusive;
// end_epoch <= 0 means cfg.ppg.epochs); one mean loss per epoch run
void train_ppg(ppg::PpgModel& model, const std::vector<synth::SceneSample>& scenes,
               const RunConfig& cfg, int start_epoch, int end_epoch,
               std::vector<double>* epoch_losses);

rpcm::RpcmModel make_rpcm_model(const RunConfig& cfg, const Dataset& ds);
void train_rpcm(rpcm::RpcmModel& model, const std::vector<synth::SceneSample>& scenes,
                const RunConfig& cfg, int start_epoch, int end_epoch,
                std::vector<double>* epoch_losses, const ppg::PpgModel* pair_model = nullptr);

// Trains for cfg.rpcm.epochs and keeps the per-epoch snapshot with the best
// validation HMR@K (first configured K; epochs before min_select_epoch only
// train). Ties go to the later epoch. Returns the selected epoch.
int train_rpcm_validated(rpcm::RpcmModel& model, const std::vector<synth::SceneSample>& train_scenes,
                         const std::vector<synth::SceneSample>& val_scenes, const RunConfig& cfg,
                         const ppg::PpgModel* pair_model = nullptr, int min_select_epoch = 1);

// --- checkpoints (shared named-tensor archive format) ---
void save_ppg_checkpoint(const ppg::PpgModel& model, int epoch, const std::string& path);
ppg::PpgModel load_ppg_checkpoint(const std::string& path, int* epoch = nullptr);
void save_rpcm_checkpoint(const rpcm::RpcmModel& model, int epoch, const std::string& path);
rpcm::RpcmModel load_rpcm_checkpoint(const std::string& path, int* epoch = nullptr);

// --- predictors ---
std::vector<eval::ImagePredictions> predict_oracle(const std::vector<synth::SceneSample>& scenes);

struct FrequencyBaseline {
  int num_relations = 0;
  std::map<std::pair<int, int>, std::vector<double>> relation_given_classes;
  static FrequencyBaseline fit(const std::vector<synth::SceneSample>& train_scenes,
                               int num_relations);
};
std::vector<eval::ImagePredictions> predict_frequency(
    const FrequencyBaseline& baseline, const std::vector<synth::SceneSample>& scenes,
    const RunConfig& cfg, const ppg::PpgModel* pair_model = nullptr);

std::vector<eval::ImagePredictions> predict_rpcm(rpcm::RpcmModel& model,
                                                 const std::vector<synth::SceneSample>& scenes,
                                                 const RunConfig& cfg, eval::Task task,
                                                 const ppg::PpgModel* pair_model = nullptr,
                                                 const detect::TinyScorer* scorer = nullptr);

// toy SGDet front end: tiled windows over the scene, per-window detections
// from jittered ground-truth geometry classified by the tiny scorer, merged
// with per-class NMS; source[i] is the object row behind detection i
struct SimulatedDetections {
  std::vector<detect::Detection> detections;
  std::vector<int> source_object;
};
SimulatedDetections simulate_detections(const synth::SceneSample& sample,
                                        const detect::TinyScorer& scorer, const RunConfig& cfg,
                                        uint64_t scene_index);

detect::TinyScorer train_scorer(const std::vector<synth::SceneSample>& train_scenes,
                                const RunConfig& cfg, int num_classes);

// --- commands (CLI surface) ---
void cmd_generate(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg, const std::string& stage);  // "ppg" | "rpcm"
eval::EvalReport cmd_evaluate(const RunConfig& cfg, const std::string& task);
void cmd_report(const std::vector<std::string>& report_csvs, const std::string& out_dir);
void cmd_selftest(const std::string& report_dir);

std::string recall_curve_svg(const std::vector<std::pair<int, double>>& mr_by_k,
                             const std::string& title);

}  // namespace sgg::pipeline
