#include "sgg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "nlohmann/json.hpp"
#include "sgg/checkpoint.hpp"
#include "sgg/text.hpp"

namespace sgg::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string scene_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05d", index);
  return buf;
}

std::string fnv_hex(const std::string& data) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data)));
  return buf;
}

void append_line(const std::string& path, const std::string& line) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw IoError("cannot append to " + path);
  f << line << "\n";
}

void mlp_to_archive(io::NamedTensorArchive& a, const std::string& prefix, const ppg::Mlp2& m) {
  a.tensors[prefix + ".w1"] = m.w1;
  a.tensors[prefix + ".b1"] = m.b1;
  a.tensors[prefix + ".w2"] = m.w2;
  a.tensors[prefix + ".b2"] = m.b2;
}

ppg::Mlp2 mlp_from_archive(const io::NamedTensorArchive& a, const std::string& prefix,
                           ppg::Activation act) {
  ppg::Mlp2 m;
  m.w1 = a.tensor(prefix + ".w1");
  m.b1 = a.tensor(prefix + ".b1");
  m.w2 = a.tensor(prefix + ".w2");
  m.b2 = a.tensor(prefix + ".b2");
  m.act = act;
  return m;
}

ppg::Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return ppg::Activation::tanh;
  if (name == "relu") return ppg::Activation::relu;
  if (name == "identity") return ppg::Activation::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string activation_name(ppg::Activation a) {
  switch (a) {
    case ppg::Activation::tanh:
      return "tanh";
    case ppg::Activation::relu:
      return "relu";
    case ppg::Activation::identity:
      return "identity";
  }
  return "tanh";
}

detect::BoxMode box_mode_from_name(const std::string& name) {
  return name == "hbb" ? detect::BoxMode::hbb : detect::BoxMode::obb;
}

// per-class NMS threshold for the SGDet front end, matching the protocol
constexpr double kNmsIou = 0.5;

}  // namespace

SplitCounts split_counts(int total, const RunConfig::Splits& splits) {
  SplitCounts c;
  c.train = static_cast<int>(std::floor(total * splits.train + 1e-9));
  c.val = static_cast<int>(std::floor(total * splits.val + 1e-9));
  c.test = total - c.train - c.val;
  return c;
}

Dataset generate_dataset(const RunConfig& cfg) {
  Dataset ds;
  ds.vocab = scene::CategoryVocabulary::load(cfg.vocabulary);
  ds.embeddings = cfg.embeddings.empty() ? rpcm::EmbeddingTable{50, {}, true}
                                         : rpcm::EmbeddingTable::load(cfg.embeddings);
  synth::SceneRecipe recipe = synth::SceneRecipe::load(cfg.recipe);
  recipe.seed = cfg.seed;
  recipe.validate(ds.vocab);

  SplitCounts n = split_counts(cfg.num_scenes, cfg.splits);
  int index = 0;
  for (int i = 0; i < n.train; ++i) ds.train.push_back(synth::generate_scene(recipe, ds.vocab, index++));
  for (int i = 0; i < n.val; ++i) ds.val.push_back(synth::generate_scene(recipe, ds.vocab, index++));
  for (int i = 0; i < n.test; ++i) ds.test.push_back(synth::generate_scene(recipe, ds.vocab, index++));
  return ds;
}

void write_dataset(const Dataset& ds, const RunConfig& cfg) {
  fs::create_directories(cfg.paths.data_dir);
  ordered_json manifest;
  manifest["seed"] = cfg.seed;
  // provenance by name and content hash; path prefixes are machine-local
  manifest["vocabulary"] = fs::path(cfg.vocabulary).filename().string();
  manifest["vocabulary_fnv64"] = fnv_hex(read_file(cfg.vocabulary));
  manifest["recipe"] = fs::path(cfg.recipe).filename().string();
  manifest["recipe_fnv64"] = fnv_hex(read_file(cfg.recipe));
  manifest["embeddings"] = fs::path(cfg.embeddings).filename().string();
  manifest["splits"] = {{"train", static_cast<int>(ds.train.size())},
                        {"val", static_cast<int>(ds.val.size())},
                        {"test", static_cast<int>(ds.test.size())}};
  manifest["files"] = ordered_json::array();

  auto write_split = [&](const std::string& name, const std::vector<synth::SceneSample>& scenes) {
    fs::create_directories(fs::path(cfg.paths.data_dir) / name);
    for (size_t i = 0; i < scenes.size(); ++i) {
      std::string stem = scene_stem(static_cast<int>(i));
      std::string doc = scene::to_document(scenes[i].graph, ds.vocab);
      std::string feats = synth::serialize_features(scenes[i].features);
      std::string rel_doc = name + "/" + stem + ".json";
      std::string rel_feat = name + "/" + stem + ".features.txt";
      write_file((fs::path(cfg.paths.data_dir) / rel_doc).string(), doc);
      write_file((fs::path(cfg.paths.data_dir) / rel_feat).string(), feats);
      manifest["files"].push_back({{"path", rel_doc}, {"fnv64", fnv_hex(doc)}});
      manifest["files"].push_back({{"path", rel_feat}, {"fnv64", fnv_hex(feats)}});
    }
  };
  write_split("train", ds.train);
  write_split("val", ds.val);
  write_split("test", ds.test);
  write_file((fs::path(cfg.paths.data_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

Dataset load_dataset(const RunConfig& cfg) {
  std::string manifest_path = (fs::path(cfg.paths.data_dir) / "manifest.json").string();
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path + ": " + e.what());
  }
  if (cfg.vocabulary.empty()) throw ConfigError("load_dataset: config key `vocabulary` is required");
  Dataset ds;
  ds.vocab = scene::CategoryVocabulary::load(cfg.vocabulary);
  ds.embeddings = cfg.embeddings.empty() ? rpcm::EmbeddingTable{50, {}, true}
                                         : rpcm::EmbeddingTable::load(cfg.embeddings);

  auto read_split = [&](const std::string& name, std::vector<synth::SceneSample>& out) {
    int count = manifest.at("splits").at(name).get<int>();
    for (int i = 0; i < count; ++i) {
      std::string stem = scene_stem(i);
      synth::SceneSample s;
      s.graph = scene::from_document(
          read_file((fs::path(cfg.paths.data_dir) / name / (stem + ".json")).string()), ds.vocab);
      s.features = synth::parse_features(
          read_file((fs::path(cfg.paths.data_dir) / name / (stem + ".features.txt")).string()));
      out.push_back(std::move(s));
    }
  };
  read_split("train", ds.train);
  read_split("val", ds.val);
  read_split("test", ds.test);
  return ds;
}

std::vector<ppg::PairKey> gt_pairs(const scene::SceneGraph& g) {
  std::set<ppg::PairKey> keys;
  for (const scene::Triplet& t : g.triplets) keys.insert({t.subject_id, t.object_id});
  return {keys.begin(), keys.end()};
}

std::vector<ppg::PairKey> all_ordered_pairs(const scene::SceneGraph& g) {
  std::vector<ppg::PairKey> out;
  for (const scene::ObjectInstance& s : g.objects)
    for (const scene::ObjectInstance& o : g.objects)
      if (s.id != o.id) out.push_back({s.id, o.id});
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<ppg::PairKey, ppg::PairFeatureX>> pair_candidates(
    const synth::SceneSample& sample, const std::vector<ppg::PairKey>& pairs) {
  std::map<int, int> row_of;
  for (size_t i = 0; i < sample.graph.objects.size(); ++i)
    row_of[sample.graph.objects[i].id] = static_cast<int>(i);
  std::vector<std::pair<ppg::PairKey, ppg::PairFeatureX>> out;
  out.reserve(pairs.size());
  for (const ppg::PairKey& key : pairs) {
    const scene::ObjectInstance& s =
        sample.graph.objects[static_cast<size_t>(row_of.at(key.subject_id))];
    const scene::ObjectInstance& o =
        sample.graph.objects[static_cast<size_t>(row_of.at(key.object_id))];
    geom::PairSpatialFeature spatial = geom::pair_spatial_feature(
        s.box, o.box, sample.graph.image_width, sample.graph.image_height);
    const double* fs = sample.features.row(row_of.at(key.subject_id));
    const double* fo = sample.features.row(row_of.at(key.object_id));
    out.emplace_back(key, ppg::make_pair_feature(
                              spatial, std::span<const double>(fs, static_cast<size_t>(sample.features.cols)),
                              std::span<const double>(fo, static_cast<size_t>(sample.features.cols))));
  }
  return out;
}

ppg::PpgModel make_ppg_model(const RunConfig& cfg, int input_dim) {
  int latent = cfg.ppg.latent_dim > 0 ? cfg.ppg.latent_dim : std::max(1, input_dim / 4);
  Rng rng(mix_seed(cfg.seed, 0x6762));
  return ppg::PpgModel::init(input_dim, latent, cfg.ppg.hidden_dim, rng);
}

void train_ppg(ppg::PpgModel& model, const std::vector<synth::SceneSample>& scenes,
               const RunConfig& cfg, int start_epoch, int end_epoch,
               std::vector<double>* epoch_losses) {
  if (end_epoch <= 0) end_epoch = cfg.ppg.epochs;
  std::vector<std::vector<ppg::PairFeatureX>> batches;
  for (const synth::SceneSample& s : scenes) {
    std::vector<ppg::PairFeatureX> batch;
    for (auto& [key, x] : pair_candidates(s, gt_pairs(s.graph))) batch.push_back(std::move(x));
    if (!batch.empty()) batches.push_back(std::move(batch));
  }
  for (int epoch = start_epoch; epoch <= end_epoch; ++epoch) {
    double sum = 0.0;
    int count = 0;
    for (std::vector<ppg::PairFeatureX>& batch : batches) {
      sum += ppg::ppg_training_step(model, batch, epoch, cfg.ppg.lr, cfg.ppg.adv_weight);
      ++count;
    }
    model.iteration = epoch;
    if (epoch_losses) epoch_losses->push_back(count > 0 ? sum / count : 0.0);
  }
}

rpcm::RpcmModel make_rpcm_model(const RunConfig& cfg, const Dataset& ds) {
  rpcm::RpcmConfig rc;
  int feature_dim = 64;
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    if (!split->empty()) {
      feature_dim = (*split)[0].features.cols;
      break;
    }
  rc.feature_dim = feature_dim;
  rc.hidden_dim = cfg.rpcm.hidden_dim;
  rc.joint_dim = cfg.rpcm.joint_dim;
  rc.embed_dim = ds.embeddings.dim > 0 ? ds.embeddings.dim : 50;
  rc.iterations = cfg.rpcm.iterations;
  rc.tau = cfg.rpcm.tau;
  rc.gamma1 = cfg.rpcm.gamma1;
  rc.gamma2 = cfg.rpcm.gamma2;
  rc.proto_k = cfg.rpcm.proto_k;
  rc.background_prototype = cfg.rpcm.background_prototype;
  rc.share_map_heads = cfg.rpcm.share_map_heads;
  Mat initial = rpcm::init_prototypes(ds.vocab.relation_classes, ds.embeddings);
  Rng rng(mix_seed(cfg.seed, 0x67c3));
  return rpcm::RpcmModel::init(rc, ds.vocab.num_relations(), initial, rng);
}

namespace {

struct TrainingScene {
  rpcm::SceneBatch batch;
  std::vector<std::pair<int, int>> instances;
};

std::vector<TrainingScene> rpcm_training_scenes(rpcm::RpcmModel& model,
                                                const std::vector<synth::SceneSample>& scenes,
                                                const RunConfig& cfg,
                                                const ppg::PpgModel* pair_model) {
  std::vector<TrainingScene> out;
  for (const synth::SceneSample& s : scenes) {
    std::vector<ppg::PairKey> pairs = gt_pairs(s.graph);
    if (cfg.rpcm.pair_source == "ppg") {
      if (!pair_model)
        throw ConfigError("rpcm training with pair_source=ppg needs a ppg checkpoint");
      auto cands = pair_candidates(s, all_ordered_pairs(s.graph));
      std::vector<ppg::PairKey> selected =
          ppg::select_top_k(ppg::score_pairs(*pair_model, cands), cfg.ppg.top_k);
      // keep the annotated pairs plus the highest-scoring unannotated ones,
      // capped at the annotated count; those train the background prototype
      std::set<ppg::PairKey> keep(pairs.begin(), pairs.end());
      size_t cap = pairs.size();
      size_t taken = 0;
      for (const ppg::PairKey& k : selected) {
        if (taken >= cap) break;
        if (keep.insert(k).second) ++taken;
      }
      pairs.assign(keep.begin(), keep.end());
    }
    if (pairs.empty()) continue;

    TrainingScene ts;
    ts.batch = rpcm::make_scene_batch(s.graph, s.features, pairs, model.cfg);
    std::map<ppg::PairKey, int> row_of;
    for (size_t i = 0; i < pairs.size(); ++i) row_of[pairs[i]] = static_cast<int>(i);
    std::set<int> labeled_rows;
    for (const scene::Triplet& t : s.graph.triplets) {
      auto it = row_of.find({t.subject_id, t.object_id});
      if (it == row_of.end()) continue;
      ts.instances.emplace_back(it->second, t.relation_index);
      labeled_rows.insert(it->second);
    }
    if (cfg.rpcm.pair_source == "ppg" && model.background) {
      // unannotated selected pairs train toward the background prototype
      for (size_t i = 0; i < pairs.size(); ++i)
        if (!labeled_rows.count(static_cast<int>(i)))
          ts.instances.emplace_back(static_cast<int>(i), -1);
    }
    if (!ts.instances.empty()) out.push_back(std::move(ts));
  }
  return out;
}

}  // namespace

void train_rpcm(rpcm::RpcmModel& model, const std::vector<synth::SceneSample>& scenes,
                const RunConfig& cfg, int start_epoch, int end_epoch,
                std::vector<double>* epoch_losses, const ppg::PpgModel* pair_model) {
  if (end_epoch <= 0) end_epoch = cfg.rpcm.epochs;
  std::vector<TrainingScene> prepared = rpcm_training_scenes(model, scenes, cfg, pair_model);
  for (int epoch = start_epoch; epoch <= end_epoch; ++epoch) {
    double sum = 0.0;
    int count = 0;
    for (TrainingScene& ts : prepared) {
      nn::Tape t;
      nn::Binder bind(t);
      rpcm::SceneLoss loss = rpcm::build_scene_loss(t, bind, model, ts.batch, ts.instances);
      double value = t.scalar(loss.total);
      if (!std::isfinite(value))
        throw TrainingError("rpcm training diverged: non-finite loss at epoch " +
                            std::to_string(epoch));
      t.backward(loss.total);
      if (!bind.grads_finite())
        throw TrainingError("rpcm training diverged: non-finite gradient at epoch " +
                            std::to_string(epoch));
      bind.sgd_step(cfg.rpcm.lr);
      sum += value;
      ++count;
    }
    if (epoch_losses) epoch_losses->push_back(count > 0 ? sum / count : 0.0);
  }
}

int train_rpcm_validated(rpcm::RpcmModel& model, const std::vector<synth::SceneSample>& train_scenes,
                         const std::vector<synth::SceneSample>& val_scenes, const RunConfig& cfg,
                         const ppg::PpgModel* pair_model, int min_select_epoch) {
  eval::EvalConfig ecfg;
  ecfg.task = eval::Task::predcls;
  ecfg.k_values = {cfg.eval.k_values.empty() ? 20 : cfg.eval.k_values.front()};
  ecfg.iou_threshold = cfg.eval.iou_threshold;
  ecfg.box_mode = box_mode_from_name(cfg.eval.box_mode);
  std::vector<const scene::SceneGraph*> gt;
  for (const synth::SceneSample& s : val_scenes) gt.push_back(&s.graph);

  rpcm::RpcmModel best = model;
  double best_hmr = -1.0;
  int best_epoch = 0;
  for (int epoch = 1; epoch <= cfg.rpcm.epochs; ++epoch) {
    std::vector<double> losses;
    train_rpcm(model, train_scenes, cfg, epoch, epoch, &losses, pair_model);
    if (epoch < min_select_epoch) continue;
    auto preds = predict_rpcm(model, val_scenes, cfg, eval::Task::predcls, pair_model);
    eval::EvalReport rep = eval::evaluate(preds, gt, ecfg, model.num_classes,
                                          cfg.workers > 1 ? Exec::parallel : Exec::serial);
    if (rep.at_k[0].hmr >= best_hmr) {
      best_hmr = rep.at_k[0].hmr;
      best = model;
      best_epoch = epoch;
    }
  }
  if (best_epoch > 0) model = std::move(best);
  return best_epoch;
}

void save_ppg_checkpoint(const ppg::PpgModel& model, int epoch, const std::string& path) {
  io::NamedTensorArchive a;
  ordered_json meta;
  meta["stage"] = "ppg";
  meta["input_dim"] = model.input_dim;
  meta["latent_dim"] = model.latent_dim;
  meta["hidden_dim"] = model.hidden_dim;
  meta["activation"] = activation_name(model.act);
  meta["iteration"] = model.iteration;
  meta["epoch"] = epoch;
  a.blobs["meta"] = meta.dump();
  mlp_to_archive(a, "enc1", model.enc1);
  mlp_to_archive(a, "dec1", model.dec1);
  mlp_to_archive(a, "enc2", model.enc2);
  mlp_to_archive(a, "dec2", model.dec2);
  a.save(path);
}

ppg::PpgModel load_ppg_checkpoint(const std::string& path, int* epoch) {
  io::NamedTensorArchive a = io::NamedTensorArchive::load(path);
  ordered_json meta = ordered_json::parse(a.blob("meta"));
  if (meta.at("stage").get<std::string>() != "ppg")
    throw ConfigError(path + ": checkpoint stage is not ppg");
  ppg::PpgModel m;
  m.input_dim = meta.at("input_dim").get<int>();
  m.latent_dim = meta.at("latent_dim").get<int>();
  m.hidden_dim = meta.at("hidden_dim").get<int>();
  m.act = activation_from_name(meta.at("activation").get<std::string>());
  m.iteration = meta.at("iteration").get<int>();
  m.enc1 = mlp_from_archive(a, "enc1", m.act);
  m.dec1 = mlp_from_archive(a, "dec1", m.act);
  m.enc2 = mlp_from_archive(a, "enc2", m.act);
  m.dec2 = mlp_from_archive(a, "dec2", m.act);
  if (epoch) *epoch = meta.at("epoch").get<int>();
  return m;
}

void save_rpcm_checkpoint(const rpcm::RpcmModel& model, int epoch, const std::string& path) {
  io::NamedTensorArchive a;
  ordered_json meta;
  meta["stage"] = "rpcm";
  meta["num_classes"] = model.num_classes;
  meta["feature_dim"] = model.cfg.feature_dim;
  meta["hidden_dim"] = model.cfg.hidden_dim;
  meta["joint_dim"] = model.cfg.joint_dim;
  meta["embed_dim"] = model.cfg.embed_dim;
  meta["iterations"] = model.cfg.iterations;
  meta["tau"] = model.cfg.tau;
  meta["gamma1"] = model.cfg.gamma1;
  meta["gamma2"] = model.cfg.gamma2;
  meta["proto_k"] = model.cfg.proto_k;
  meta["background_prototype"] = model.cfg.background_prototype;
  meta["share_map_heads"] = model.cfg.share_map_heads;
  meta["epoch"] = epoch;
  a.blobs["meta"] = meta.dump();
  a.tensors["ent_in.w"] = model.ent_in_w;
  a.tensors["ent_in.b"] = model.ent_in_b;
  a.tensors["rel_in.w"] = model.rel_in_w;
  a.tensors["rel_in.b"] = model.rel_in_b;
  const rpcm::MessagingParams& p = model.messaging;
  a.tensors["msg.w_ee"] = p.w_ee;
  a.tensors["msg.w_rs"] = p.w_rs;
  a.tensors["msg.w_ro"] = p.w_ro;
  a.tensors["msg.w_rr"] = p.w_rr;
  a.tensors["msg.w_sr"] = p.w_sr;
  a.tensors["msg.w_or"] = p.w_or;
  a.tensors["msg.a_ee_recv"] = p.a_ee_recv;
  a.tensors["msg.a_ee_send"] = p.a_ee_send;
  a.tensors["msg.a_rs_recv"] = p.a_rs_recv;
  a.tensors["msg.a_rs_send"] = p.a_rs_send;
  a.tensors["msg.a_ro_recv"] = p.a_ro_recv;
  a.tensors["msg.a_ro_send"] = p.a_ro_send;
  a.tensors["msg.a_rr_recv"] = p.a_rr_recv;
  a.tensors["msg.a_rr_send"] = p.a_rr_send;
  a.tensors["msg.a_sr_recv"] = p.a_sr_recv;
  a.tensors["msg.a_sr_send"] = p.a_sr_send;
  a.tensors["msg.a_or_recv"] = p.a_or_recv;
  a.tensors["msg.a_or_send"] = p.a_or_send;
  a.tensors["msg.entity_gate"] = p.entity_gate;
  a.tensors["msg.relation_gate"] = p.relation_gate;
  mlp_to_archive(a, "map_r", model.map_r);
  a.tensors["enc.w"] = model.enc_w;
  a.tensors["enc.b"] = model.enc_b;
  mlp_to_archive(a, "map_p", model.map_p);
  a.tensors["class_prototypes"] = model.class_prototypes;
  a.tensors["background_prototype"] = model.background_prototype;
  a.save(path);
}

rpcm::RpcmModel load_rpcm_checkpoint(const std::string& path, int* epoch) {
  io::NamedTensorArchive a = io::NamedTensorArchive::load(path);
  ordered_json meta = ordered_json::parse(a.blob("meta"));
  if (meta.at("stage").get<std::string>() != "rpcm")
    throw ConfigError(path + ": checkpoint stage is not rpcm");
  rpcm::RpcmModel m;
  m.num_classes = meta.at("num_classes").get<int>();
  m.cfg.feature_dim = meta.at("feature_dim").get<int>();
  m.cfg.hidden_dim = meta.at("hidden_dim").get<int>();
  m.cfg.joint_dim = meta.at("joint_dim").get<int>();
  m.cfg.embed_dim = meta.at("embed_dim").get<int>();
  m.cfg.iterations = meta.at("iterations").get<int>();
  m.cfg.tau = meta.at("tau").get<double>();
  m.cfg.gamma1 = meta.at("gamma1").get<double>();
  m.cfg.gamma2 = meta.at("gamma2").get<double>();
  m.cfg.proto_k = meta.at("proto_k").get<int>();
  m.cfg.background_prototype = meta.at("background_prototype").get<bool>();
  m.cfg.share_map_heads = meta.at("share_map_heads").get<bool>();
  m.background = m.cfg.background_prototype;
  m.ent_in_w = a.tensor("ent_in.w");
  m.ent_in_b = a.tensor("ent_in.b");
  m.rel_in_w = a.tensor("rel_in.w");
  m.rel_in_b = a.tensor("rel_in.b");
  rpcm::MessagingParams& p = m.messaging;
  p.w_ee = a.tensor("msg.w_ee");
  p.w_rs = a.tensor("msg.w_rs");
  p.w_ro = a.tensor("msg.w_ro");
  p.w_rr = a.tensor("msg.w_rr");
  p.w_sr = a.tensor("msg.w_sr");
  p.w_or = a.tensor("msg.w_or");
  p.a_ee_recv = a.tensor("msg.a_ee_recv");
  p.a_ee_send = a.tensor("msg.a_ee_send");
  p.a_rs_recv = a.tensor("msg.a_rs_recv");
  p.a_rs_send = a.tensor("msg.a_rs_send");
  p.a_ro_recv = a.tensor("msg.a_ro_recv");
  p.a_ro_send = a.tensor("msg.a_ro_send");
  p.a_rr_recv = a.tensor("msg.a_rr_recv");
  p.a_rr_send = a.tensor("msg.a_rr_send");
  p.a_sr_recv = a.tensor("msg.a_sr_recv");
  p.a_sr_send = a.tensor("msg.a_sr_send");
  p.a_or_recv = a.tensor("msg.a_or_recv");
  p.a_or_send = a.tensor("msg.a_or_send");
  p.entity_gate = a.tensor("msg.entity_gate");
  p.relation_gate = a.tensor("msg.relation_gate");
  m.map_r = mlp_from_archive(a, "map_r", ppg::Activation::tanh);
  m.enc_w = a.tensor("enc.w");
  m.enc_b = a.tensor("enc.b");
  m.map_p = mlp_from_archive(a, "map_p", ppg::Activation::tanh);
  m.class_prototypes = a.tensor("class_prototypes");
  m.background_prototype = a.tensor("background_prototype");
  if (epoch) *epoch = meta.at("epoch").get<int>();
  return m;
}

std::vector<eval::ImagePredictions> predict_oracle(const std::vector<synth::SceneSample>& scenes) {
  std::vector<eval::ImagePredictions> out;
  for (size_t i = 0; i < scenes.size(); ++i) {
    eval::ImagePredictions p;
    p.image_id = scene_stem(static_cast<int>(i));
    for (const scene::Triplet& t : scenes[i].graph.triplets) {
      const scene::ObjectInstance* s = scenes[i].graph.find_object(t.subject_id);
      const scene::ObjectInstance* o = scenes[i].graph.find_object(t.object_id);
      eval::ScoredTriplet st;
      st.subject_id = t.subject_id;
      st.object_id = t.object_id;
      st.relation_index = t.relation_index;
      st.score = 1.0;
      st.subject_class = s->class_index;
      st.object_class = o->class_index;
      st.subject_box = s->box;
      st.object_box = o->box;
      p.triplets.push_back(st);
    }
    out.push_back(std::move(p));
  }
  return out;
}

FrequencyBaseline FrequencyBaseline::fit(const std::vector<synth::SceneSample>& train_scenes,
                                         int num_relations) {
  FrequencyBaseline b;
  b.num_relations = num_relations;
  for (const synth::SceneSample& s : train_scenes) {
    for (const scene::Triplet& t : s.graph.triplets) {
      const scene::ObjectInstance* subj = s.graph.find_object(t.subject_id);
      const scene::ObjectInstance* obj = s.graph.find_object(t.object_id);
      auto& vec = b.relation_given_classes[{subj->class_index, obj->class_index}];
      if (vec.empty()) vec.assign(static_cast<size_t>(num_relations), 0.0);
      vec[static_cast<size_t>(t.relation_index)] += 1.0;
    }
  }
  for (auto& [key, vec] : b.relation_given_classes) {
    double total = 0.0;
    for (double v : vec) total += v;
    if (total > 0.0)
      for (double& v : vec) v /= total;
  }
  return b;
}

std::vector<eval::ImagePredictions> predict_frequency(const FrequencyBaseline& baseline,
                                                      const std::vector<synth::SceneSample>& scenes,
                                                      const RunConfig& cfg,
                                                      const ppg::PpgModel* pair_model) {
  std::vector<eval::ImagePredictions> out;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const synth::SceneSample& s = scenes[i];
    std::vector<ppg::PairKey> pairs;
    if (cfg.eval.pair_source == "gt") {
      pairs = gt_pairs(s.graph);
    } else if (cfg.eval.pair_source == "ppg") {
      if (!pair_model) throw ConfigError("eval.pair_source=ppg needs a ppg checkpoint");
      pairs = ppg::select_top_k(ppg::score_pairs(*pair_model, pair_candidates(s, all_ordered_pairs(s.graph))),
                                cfg.ppg.top_k);
    } else {
      pairs = all_ordered_pairs(s.graph);
    }
    eval::ImagePredictions p;
    p.image_id = scene_stem(static_cast<int>(i));
    for (const ppg::PairKey& key : pairs) {
      const scene::ObjectInstance* subj = s.graph.find_object(key.subject_id);
      const scene::ObjectInstance* obj = s.graph.find_object(key.object_id);
      auto it = baseline.relation_given_classes.find({subj->class_index, obj->class_index});
      if (it == baseline.relation_given_classes.end()) continue;
      for (int r = 0; r < baseline.num_relations; ++r) {
        double prob = it->second[static_cast<size_t>(r)];
        if (prob <= 0.0) continue;
        eval::ScoredTriplet st;
        st.subject_id = key.subject_id;
        st.object_id = key.object_id;
        st.relation_index = r;
        st.score = prob;
        st.subject_class = subj->class_index;
        st.object_class = obj->class_index;
        st.subject_box = subj->box;
        st.object_box = obj->box;
        p.triplets.push_back(st);
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

detect::TinyScorer train_scorer(const std::vector<synth::SceneSample>& train_scenes,
                                const RunConfig& cfg, int num_classes) {
  int feature_dim = 64;
  int rows = 0;
  for (const synth::SceneSample& s : train_scenes) {
    rows += s.features.rows;
    if (s.features.rows > 0) feature_dim = s.features.cols;
  }
  Mat features(rows, feature_dim);
  std::vector<int> labels;
  int r = 0;
  for (const synth::SceneSample& s : train_scenes)
    for (size_t i = 0; i < s.graph.objects.size(); ++i) {
      for (int c = 0; c < feature_dim; ++c) features.at(r, c) = s.features.at(static_cast<int>(i), c);
      labels.push_back(s.graph.objects[i].class_index);
      ++r;
    }
  Rng rng(mix_seed(cfg.seed, 0x5c0));
  detect::TinyScorer scorer = detect::TinyScorer::init(feature_dim, 32, num_classes, rng);
  for (int epoch = 0; epoch < 60; ++epoch) {
    double loss = scorer.train_epoch(features, labels, 0.5);
    if (loss < 0.05) break;
  }
  return scorer;
}

SimulatedDetections simulate_detections(const synth::SceneSample& sample,
                                        const detect::TinyScorer& scorer, const RunConfig& cfg,
                                        uint64_t scene_index) {
  const scene::SceneGraph& g = sample.graph;
  double window = std::min(cfg.dip.window, std::max(g.image_width, g.image_height));
  detect::DipSpec dip = detect::build_dip(g.image_width, g.image_height, cfg.dip.layers, window,
                                          std::min(cfg.dip.stride, window), cfg.dip.min_size);
  std::vector<detect::Window> windows =
      detect::tile_windows(g.image_width, g.image_height, dip.window, dip.stride);

  Rng rng(mix_seed(cfg.seed, mix_seed(0xde7ec7, scene_index)));
  std::vector<detect::Detection> dets;
  std::vector<int> source_by_id;
  for (const detect::Window& w : windows) {
    for (size_t i = 0; i < g.objects.size(); ++i) {
      const scene::ObjectInstance& o = g.objects[i];
      geom::Vec2 c = o.box.center();
      if (c.x < w.x0 || c.x >= w.x1 || c.y < w.y0 || c.y >= w.y1) continue;
      double dx = rng.normal(0.0, 1.0);
      double dy = rng.normal(0.0, 1.0);
      double ds = 1.0 + rng.normal(0.0, 0.01);
      double dth = rng.normal(0.0, 0.01);
      geom::OrientedBox box = geom::OrientedBox::from_center(
          c.x + dx, c.y + dy, std::max(1.0, o.box.width() * ds), std::max(1.0, o.box.height() * ds),
          o.box.angle() + dth);
      const double* f = sample.features.row(static_cast<int>(i));
      std::vector<double> conf =
          scorer.confidences(std::span<const double>(f, static_cast<size_t>(sample.features.cols)));
      int cls = 0;
      double mx = conf[0];
      for (size_t k = 1; k < conf.size(); ++k)
        if (conf[k] > mx) {
          mx = conf[k];
          cls = static_cast<int>(k);
        }
      double denom = 0.0;
      for (double v : conf) denom += std::exp(v - mx);
      detect::Detection d;
      d.id = static_cast<int>(dets.size());
      d.box = box;
      d.class_index = cls;
      d.confidence = 1.0 / denom;  // softmax probability of the argmax class
      d.window_id = w.id;
      dets.push_back(d);
      source_by_id.push_back(static_cast<int>(i));
    }
  }
  std::vector<detect::Detection> merged = detect::merge_window_detections(
      dets, kNmsIou, box_mode_from_name(cfg.eval.box_mode));
  SimulatedDetections out;
  for (detect::Detection& d : merged) {
    out.source_object.push_back(source_by_id[static_cast<size_t>(d.id)]);
    out.detections.push_back(std::move(d));
  }
  return out;
}

std::vector<eval::ImagePredictions> predict_rpcm(rpcm::RpcmModel& model,
                                                 const std::vector<synth::SceneSample>& scenes,
                                                 const RunConfig& cfg, eval::Task task,
                                                 const ppg::PpgModel* pair_model,
                                                 const detect::TinyScorer* scorer) {
  if (task != eval::Task::predcls && !scorer)
    throw ConfigError("SGCls/SGDet prediction needs a trained scorer");
  if (cfg.eval.pair_source == "ppg" && !pair_model)
    throw ConfigError("eval.pair_source=ppg needs a ppg checkpoint");
  if (cfg.eval.pair_source == "gt" && task == eval::Task::sgdet)
    throw ConfigError("eval.pair_source=gt is not available for sgdet");

  Mat p_bar_all = rpcm::projected_prototypes(model);
  std::vector<eval::ImagePredictions> out;

  for (size_t idx = 0; idx < scenes.size(); ++idx) {
    const synth::SceneSample& s = scenes[idx];

    // task protocol: boxes, labels and per-entity confidence
    synth::SceneSample view;  // scene as seen by the relation predictor
    std::vector<int> entity_class;
    std::vector<double> entity_conf;
    if (task == eval::Task::sgdet) {
      SimulatedDetections sim = simulate_detections(s, *scorer, cfg, idx);
      view.graph.image_width = s.graph.image_width;
      view.graph.image_height = s.graph.image_height;
      view.features = Mat(static_cast<int>(sim.detections.size()), s.features.cols);
      for (size_t d = 0; d < sim.detections.size(); ++d) {
        scene::ObjectInstance o;
        o.id = static_cast<int>(d);
        o.class_index = sim.detections[d].class_index;
        o.box = sim.detections[d].box;
        view.graph.objects.push_back(o);
        for (int c = 0; c < s.features.cols; ++c)
          view.features.at(static_cast<int>(d), c) =
              s.features.at(sim.source_object[d], c);
        entity_class.push_back(sim.detections[d].class_index);
        entity_conf.push_back(sim.detections[d].confidence);
      }
    } else {
      view = s;
      for (const scene::ObjectInstance& o : s.graph.objects) {
        if (task == eval::Task::sgcls) {
          const double* f = view.features.row(o.id);
          entity_class.push_back(scorer->predict(
              std::span<const double>(f, static_cast<size_t>(view.features.cols))));
        } else {
          entity_class.push_back(o.class_index);
        }
        entity_conf.push_back(1.0);
      }
    }

    std::vector<ppg::PairKey> pairs;
    if (cfg.eval.pair_source == "gt") {
      pairs = gt_pairs(s.graph);
    } else {
      pairs = all_ordered_pairs(view.graph);
      if (cfg.eval.pair_source == "ppg") {
        pairs = ppg::select_top_k(
            ppg::score_pairs(*pair_model, pair_candidates(view, pairs)), cfg.ppg.top_k);
      }
    }

    eval::ImagePredictions pred;
    pred.image_id = scene_stem(static_cast<int>(idx));
    if (!pairs.empty()) {
      rpcm::SceneBatch batch = rpcm::make_scene_batch(view.graph, view.features, pairs, model.cfg);
      Mat r_bar = rpcm::scene_relation_embeddings(model, batch, model.cfg.iterations);
      std::map<int, int> row_of;
      for (size_t i = 0; i < view.graph.objects.size(); ++i)
        row_of[view.graph.objects[i].id] = static_cast<int>(i);
      for (size_t p = 0; p < pairs.size(); ++p) {
        // calibration over every prototype row: the background row absorbs
        // probability mass on pairs that carry no relation, so their class
        // scores rank below genuinely related pairs
        std::vector<double> logits(static_cast<size_t>(p_bar_all.rows));
        double mx = -std::numeric_limits<double>::infinity();
        for (int r = 0; r < p_bar_all.rows; ++r) {
          double dot = 0.0;
          for (int c = 0; c < p_bar_all.cols; ++c)
            dot += r_bar.at(static_cast<int>(p), c) * p_bar_all.at(r, c);
          logits[static_cast<size_t>(r)] = dot / model.cfg.tau;
          mx = std::max(mx, logits[static_cast<size_t>(r)]);
        }
        double denom = 0.0;
        for (double l : logits) denom += std::exp(l - mx);
        int se = row_of.at(pairs[p].subject_id);
        int oe = row_of.at(pairs[p].object_id);
        for (int c = 0; c < model.num_classes; ++c) {
          eval::ScoredTriplet st;
          st.subject_id = pairs[p].subject_id;
          st.object_id = pairs[p].object_id;
          st.relation_index = c;
          st.score = std::exp(logits[static_cast<size_t>(model.class_row(c))] - mx) / denom *
                     entity_conf[static_cast<size_t>(se)] * entity_conf[static_cast<size_t>(oe)];
          st.subject_class = entity_class[static_cast<size_t>(se)];
          st.object_class = entity_class[static_cast<size_t>(oe)];
          st.subject_box = view.graph.objects[static_cast<size_t>(se)].box;
          st.object_box = view.graph.objects[static_cast<size_t>(oe)].box;
          pred.triplets.push_back(st);
        }
      }
    }
    out.push_back(std::move(pred));
  }
  return out;
}

void cmd_generate(const RunConfig& cfg) {
  cfg.validate(true);
  if (cfg.vocabulary.empty() || cfg.recipe.empty())
    throw ConfigError("generate needs config keys `vocabulary` and `recipe`");
  Dataset ds = generate_dataset(cfg);
  write_dataset(ds, cfg);
}

void cmd_train(const RunConfig& cfg, const std::string& stage) {
  cfg.validate(true);
  if (stage != "ppg" && stage != "rpcm")
    throw ConfigError("train stage must be ppg or rpcm, got '" + stage + "'");
  Dataset ds = load_dataset(cfg);
  fs::create_directories(cfg.paths.checkpoint_dir);
  std::string ckpt = (fs::path(cfg.paths.checkpoint_dir) / (stage + ".ckpt")).string();
  std::string log = (fs::path(cfg.paths.checkpoint_dir) / (stage + "_train.log")).string();

  if (stage == "ppg") {
    int feature_dim = 0;
    for (const synth::SceneSample& s : ds.train)
      if (s.features.rows > 0) {
        feature_dim = s.features.cols;
        break;
      }
    if (feature_dim == 0) throw ConfigError("train ppg: training split has no objects");
    int input_dim = geom::PairSpatialFeature::kDim + 2 * feature_dim;

    int start_epoch = 1;
    ppg::PpgModel model = make_ppg_model(cfg, input_dim);
    if (fs::exists(ckpt)) {
      int done = 0;
      ppg::PpgModel resumed = load_ppg_checkpoint(ckpt, &done);
      if (done >= cfg.ppg.epochs) return;  // already trained this far
      model = std::move(resumed);
      start_epoch = done + 1;
    }
    if (!fs::exists(log)) write_file(log, "");
    if (start_epoch == 1) save_ppg_checkpoint(model, 0, ckpt);  // epochs = 0: initialization
    for (int epoch = start_epoch; epoch <= cfg.ppg.epochs; ++epoch) {
      std::vector<double> losses;
      train_ppg(model, ds.train, cfg, epoch, epoch, &losses);
      append_line(log, "epoch " + std::to_string(epoch) + " loss " + fmt_double(losses.at(0)));
      save_ppg_checkpoint(model, epoch, ckpt);
    }
  } else {
    const ppg::PpgModel* pair_model = nullptr;
    ppg::PpgModel loaded;
    if (cfg.rpcm.pair_source == "ppg") {
      std::string pckpt = (fs::path(cfg.paths.checkpoint_dir) / "ppg.ckpt").string();
      if (!fs::exists(pckpt))
        throw ConfigError("train rpcm: missing prerequisite checkpoint for stage ppg (" + pckpt +
                          ")");
      loaded = load_ppg_checkpoint(pckpt);
      pair_model = &loaded;
    }
    int start_epoch = 1;
    rpcm::RpcmModel model = make_rpcm_model(cfg, ds);
    if (fs::exists(ckpt)) {
      int done = 0;
      rpcm::RpcmModel resumed = load_rpcm_checkpoint(ckpt, &done);
      if (done >= cfg.rpcm.epochs) return;
      model = std::move(resumed);
      start_epoch = done + 1;
    }
    if (!fs::exists(log)) write_file(log, "");
    if (start_epoch == 1) save_rpcm_checkpoint(model, 0, ckpt);
    for (int epoch = start_epoch; epoch <= cfg.rpcm.epochs; ++epoch) {
      std::vector<double> losses;
      train_rpcm(model, ds.train, cfg, epoch, epoch, &losses, pair_model);
      append_line(log, "epoch " + std::to_string(epoch) + " loss " + fmt_double(losses.at(0)));
      save_rpcm_checkpoint(model, epoch, ckpt);
    }
  }
}

eval::EvalReport cmd_evaluate(const RunConfig& cfg, const std::string& task_name_str) {
  cfg.validate(true);
  eval::Task task = eval::task_from_name(task_name_str);
  Dataset ds = load_dataset(cfg);

  eval::EvalConfig ecfg;
  ecfg.task = task;
  ecfg.k_values = cfg.eval.k_values;
  ecfg.iou_threshold = cfg.eval.iou_threshold;
  ecfg.box_mode = box_mode_from_name(cfg.eval.box_mode);
  ecfg.macro_average = cfg.eval.macro_average;

  ppg::PpgModel pair_model;
  const ppg::PpgModel* pair_ptr = nullptr;
  if (cfg.eval.pair_source == "ppg") {
    std::string pckpt = (fs::path(cfg.paths.checkpoint_dir) / "ppg.ckpt").string();
    if (!fs::exists(pckpt))
      throw ConfigError("evaluate: missing checkpoint for stage ppg (" + pckpt + ")");
    pair_model = load_ppg_checkpoint(pckpt);
    pair_ptr = &pair_model;
  }

  std::vector<eval::ImagePredictions> predictions;
  detect::TinyScorer scorer;
  if (cfg.eval.predictor == "oracle") {
    predictions = predict_oracle(ds.test);
  } else if (cfg.eval.predictor == "frequency") {
    FrequencyBaseline base = FrequencyBaseline::fit(ds.train, ds.vocab.num_relations());
    predictions = predict_frequency(base, ds.test, cfg, pair_ptr);
  } else {
    std::string rckpt = (fs::path(cfg.paths.checkpoint_dir) / "rpcm.ckpt").string();
    if (!fs::exists(rckpt))
      throw ConfigError("evaluate: missing checkpoint for stage rpcm (" + rckpt + ")");
    rpcm::RpcmModel model = load_rpcm_checkpoint(rckpt);
    if (task != eval::Task::predcls) scorer = train_scorer(ds.train, cfg, ds.vocab.num_objects());
    predictions = predict_rpcm(model, ds.test, cfg, task, pair_ptr,
                               task == eval::Task::predcls ? nullptr : &scorer);
  }

  std::vector<const scene::SceneGraph*> gt;
  for (const synth::SceneSample& s : ds.test) gt.push_back(&s.graph);
  eval::EvalReport report = eval::evaluate(predictions, gt, ecfg, ds.vocab.num_relations(),
                                           cfg.workers > 1 ? Exec::parallel : Exec::serial);
  report.deviations = cfg.protocol_deviations();

  fs::create_directories(cfg.paths.report_dir);
  std::string stem = "report_" + task_name_str;
  write_file((fs::path(cfg.paths.report_dir) / (stem + ".txt")).string(),
             eval::report_text(report, ds.vocab));
  write_file((fs::path(cfg.paths.report_dir) / (stem + ".csv")).string(), eval::report_csv(report));

  if (task == eval::Task::sgdet) {
    fs::path det_dir = fs::path(cfg.paths.report_dir) / "detections_sgdet";
    fs::create_directories(det_dir);
    detect::TinyScorer det_scorer = train_scorer(ds.train, cfg, ds.vocab.num_objects());
    for (size_t i = 0; i < ds.test.size(); ++i) {
      SimulatedDetections sim = simulate_detections(ds.test[i], det_scorer, cfg, i);
      write_file((det_dir / (scene_stem(static_cast<int>(i)) + ".txt")).string(),
                 detect::serialize_detections(sim.detections, ds.vocab));
    }
  }
  return report;
}

std::string recall_curve_svg(const std::vector<std::pair<int, double>>& mr_by_k,
                             const std::string& title) {
  const double width = 520, height = 320, ml = 60, mb = 40, mt = 30, mr_ = 20;
  double kmax = 1;
  for (const auto& [k, v] : mr_by_k) kmax = std::max(kmax, static_cast<double>(k));
  auto x_of = [&](double k) { return ml + (width - ml - mr_) * (k / kmax); };
  auto y_of = [&](double v) { return height - mb - (height - mb - mt) * (v / 100.0); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"520\" height=\"320\">\n";
  svg += "<rect width=\"520\" height=\"320\" fill=\"white\"/>\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", ml,
                height - mb, width - mr_, height - mb);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", ml, mt, ml,
                height - mb);
  svg += buf;
  std::snprintf(buf, sizeof(buf), "<text x=\"%g\" y=\"20\" font-size=\"14\">%s</text>\n", ml,
                title.c_str());
  svg += buf;
  std::string points;
  for (const auto& [k, v] : mr_by_k) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x_of(k), y_of(v));
    points += buf;
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"steelblue\"/>\n",
                  x_of(k), y_of(v));
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\">MR@%d=%.2f</text>\n", x_of(k) + 6,
                  y_of(v) - 6, k, v);
    svg += buf;
  }
  svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"steelblue\"/>\n";
  svg += "<text x=\"" + std::to_string(static_cast<int>(width / 2)) + "\" y=\"" +
         std::to_string(static_cast<int>(height - 8)) + "\" font-size=\"12\">K</text>\n";
  svg += "<text x=\"8\" y=\"" + std::to_string(static_cast<int>(height / 2)) +
         "\" font-size=\"12\">MR</text>\n";
  svg += "</svg>\n";
  return svg;
}

void cmd_report(const std::vector<std::string>& report_csvs, const std::string& out_dir) {
  if (report_csvs.empty()) throw ConfigError("report: need at least one report CSV");
  fs::create_directories(out_dir);

  struct Row {
    std::string run, task, mr, mmr, hmr;
  };
  std::vector<Row> rows;
  std::string header;
  for (const std::string& path : report_csvs) {
    std::vector<std::string> lines = split_lines(read_file(path));
    if (lines.size() < 2) throw ParseError(path + ": malformed report CSV");
    if (header.empty()) header = lines[0];
    if (lines[0] != header) throw ConfigError(path + ": report K columns differ across inputs");
    std::string run = fs::path(path).stem().string();
    for (size_t i = 1; i < lines.size(); ++i) {
      std::string line = trim(lines[i]);
      if (line.empty()) continue;
      std::vector<std::string> cells;
      size_t start = 0;
      for (size_t p = 0; p <= line.size(); ++p)
        if (p == line.size() || line[p] == ',') {
          cells.push_back(line.substr(start, p - start));
          start = p + 1;
        }
      if (cells.size() != 4) throw ParseError(path + ": malformed report row");
      rows.push_back({run, cells[0], cells[1], cells[2], cells[3]});
    }
  }
  auto task_order = [](const std::string& t) {
    if (t == "PredCls") return 0;
    if (t == "SGCls") return 1;
    return 2;
  };
  std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    if (a.run != b.run) return a.run < b.run;
    return task_order(a.task) < task_order(b.task);
  });
  std::string merged = "run," + header + "\n";
  for (const Row& r : rows) merged += r.run + "," + r.task + "," + r.mr + "," + r.mmr + "," + r.hmr + "\n";
  write_file((fs::path(out_dir) / "report_table.csv").string(), merged);

  // recall-vs-K plot per run row: K values parsed from the MR@... header cell
  std::vector<int> ks;
  {
    size_t at = header.find("MR@");
    std::string klist = header.substr(at + 3, header.find(',', at) - at - 3);
    size_t start = 0;
    for (size_t p = 0; p <= klist.size(); ++p)
      if (p == klist.size() || klist[p] == '/') {
        int k = 0;
        if (!parse_int(klist.substr(start, p - start), k))
          throw ParseError("report: cannot parse K from header '" + header + "'");
        ks.push_back(k);
        start = p + 1;
      }
  }
  for (const Row& r : rows) {
    std::vector<std::pair<int, double>> mr_by_k;
    size_t start = 0;
    size_t ki = 0;
    for (size_t p = 0; p <= r.mr.size(); ++p)
      if (p == r.mr.size() || r.mr[p] == '/') {
        double v = 0;
        if (!parse_double(r.mr.substr(start, p - start), v))
          throw ParseError("report: cannot parse MR cell '" + r.mr + "'");
        if (ki < ks.size()) mr_by_k.emplace_back(ks[ki++], v);
        start = p + 1;
      }
    write_file((fs::path(out_dir) / (r.run + "_" + r.task + "_recall.svg")).string(),
               recall_curve_svg(mr_by_k, r.run + " " + r.task));
  }
}

void cmd_selftest(const std::string& report_dir) {
  fs::create_directories(report_dir);
  fs::path base(report_dir);
  fs::path data_dir = base / "selftest_data";
  fs::create_directories(data_dir);

  std::string vocab_text =
      "[objects]\ndock\nship\nboat\n[relations]\ndocked_at\nnear\naway_from\n[interactions]\n"
      "ship docked_at dock\nboat near ship\nship away_from dock\n";
  write_file((data_dir / "vocab.txt").string(), vocab_text);

  synth::SceneRecipe recipe;
  recipe.seed = 7;
  recipe.image_width = 640;
  recipe.image_height = 640;
  recipe.feature_dim = 16;
  recipe.feature_noise = 0.2;
  {
    synth::PlacementRule dock;
    dock.object_class = "dock";
    dock.mode = "edge_strip";
    dock.edge = "south";
    dock.edge_margin = 60;
    dock.count_min = 2;
    dock.count_max = 3;
    dock.width = {80, 120};
    dock.height = {24, 36};
    dock.angle_mode = "axis";
    recipe.placements.push_back(dock);
    synth::PlacementRule ship;
    ship.object_class = "ship";
    ship.mode = "near_anchor";
    ship.anchor_class = "dock";
    ship.anchor_dist_min = 20;
    ship.anchor_dist_max = 200;
    ship.count_min = 4;
    ship.count_max = 6;
    ship.width = {20, 40};
    ship.height = {8, 14};
    ship.angle_mode = "along";
    recipe.placements.push_back(ship);
    synth::PlacementRule boat;
    boat.object_class = "boat";
    boat.mode = "uniform";
    boat.count_min = 2;
    boat.count_max = 4;
    boat.width = {8, 14};
    boat.height = {4, 7};
    recipe.placements.push_back(boat);
    synth::RelationRule docked;
    docked.name = "docked";
    docked.relation = "docked_at";
    docked.subject_class = "ship";
    docked.object_class = "dock";
    docked.predicate = "distance_lt";
    docked.dist_a = 70;
    recipe.rules.push_back(docked);
    synth::RelationRule away;
    away.name = "away";
    away.relation = "away_from";
    away.subject_class = "ship";
    away.object_class = "dock";
    away.predicate = "distance_between";
    away.dist_a = 120;
    away.dist_b = 400;
    recipe.rules.push_back(away);
    synth::RelationRule near;
    near.name = "near";
    near.relation = "near";
    near.subject_class = "boat";
    near.object_class = "ship";
    near.predicate = "distance_lt";
    near.dist_a = 150;
    recipe.rules.push_back(near);
  }
  write_file((data_dir / "recipe.json").string(), recipe.serialize());

  RunConfig cfg;
  cfg.seed = 7;
  cfg.paths.data_dir = (data_dir / "dataset").string();
  cfg.paths.checkpoint_dir = (data_dir / "checkpoints").string();
  cfg.paths.report_dir = report_dir;
  cfg.vocabulary = (data_dir / "vocab.txt").string();
  cfg.recipe = (data_dir / "recipe.json").string();
  cfg.num_scenes = 12;
  cfg.ppg.epochs = 2;
  cfg.ppg.top_k = 50;
  cfg.rpcm.epochs = 2;
  cfg.rpcm.iterations = 2;
  cfg.rpcm.hidden_dim = 24;
  cfg.rpcm.joint_dim = 24;
  cfg.eval.k_values = {5, 20};
  cfg.eval.predictor = "rpcm";
  cfg.eval.pair_source = "all";

  cmd_generate(cfg);
  cmd_train(cfg, "ppg");
  cmd_train(cfg, "rpcm");
  eval::EvalReport rpcm_report = cmd_evaluate(cfg, "predcls");

  RunConfig oracle_cfg = cfg;
  oracle_cfg.eval.predictor = "oracle";
  oracle_cfg.paths.report_dir = (base / "oracle").string();
  eval::EvalReport oracle_report = cmd_evaluate(oracle_cfg, "predcls");

  std::string summary;
  summary += "selftest\n";
  summary += "scenes: " + std::to_string(cfg.num_scenes) + "\n";
  for (const eval::MetricsAtK& m : rpcm_report.at_k) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "rpcm K=%d MR=%.4f mMR=%.4f HMR=%.4f\n", m.k, m.mr, m.mmr,
                  m.hmr);
    summary += buf;
  }
  for (const eval::MetricsAtK& m : oracle_report.at_k) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "oracle K=%d MR=%.4f mMR=%.4f HMR=%.4f\n", m.k, m.mr, m.mmr,
                  m.hmr);
    summary += buf;
  }
  write_file((base / "selftest_summary.txt").string(), summary);
}

}  // namespace sgg::pipeline
