#include "sgg/config.hpp"

#include <cmath>
#include <filesystem>
#include <set>

#include "nlohmann/json.hpp"
#include "sgg/text.hpp"

namespace sgg {

namespace {

using nlohmann::ordered_json;

void check_known_keys(const ordered_json& j, const std::set<std::string>& known,
                      const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key))
      throw ConfigError("config: unknown key '" + (scope.empty() ? key : scope + "." + key) + "'");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    check_known_keys(j, {"seed", "paths", "vocabulary", "recipe", "embeddings", "num_scenes",
                         "splits", "dip", "ppg", "rpcm", "eval", "workers"},
                     "");
    c.seed = j.value("seed", c.seed);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      check_known_keys(p, {"data_dir", "checkpoint_dir", "report_dir"}, "paths");
      c.paths.data_dir = p.value("data_dir", c.paths.data_dir);
      c.paths.checkpoint_dir = p.value("checkpoint_dir", c.paths.checkpoint_dir);
      c.paths.report_dir = p.value("report_dir", c.paths.report_dir);
    }
    c.vocabulary = j.value("vocabulary", c.vocabulary);
    c.recipe = j.value("recipe", c.recipe);
    c.embeddings = j.value("embeddings", c.embeddings);
    c.num_scenes = j.value("num_scenes", c.num_scenes);
    if (j.contains("splits")) {
      const auto& s = j.at("splits");
      check_known_keys(s, {"train", "val", "test"}, "splits");
      c.splits.train = s.value("train", c.splits.train);
      c.splits.val = s.value("val", c.splits.val);
      c.splits.test = s.value("test", c.splits.test);
    }
    if (j.contains("dip")) {
      const auto& d = j.at("dip");
      check_known_keys(d, {"layers", "window", "stride", "min_size"}, "dip");
      c.dip.layers = d.value("layers", c.dip.layers);
      c.dip.window = d.value("window", c.dip.window);
      c.dip.stride = d.value("stride", c.dip.stride);
      c.dip.min_size = d.value("min_size", c.dip.min_size);
    }
    if (j.contains("ppg")) {
      const auto& p = j.at("ppg");
      check_known_keys(p, {"latent_dim", "hidden_dim", "epochs", "lr", "top_k", "adv_weight"},
                       "ppg");
      c.ppg.latent_dim = p.value("latent_dim", c.ppg.latent_dim);
      c.ppg.hidden_dim = p.value("hidden_dim", c.ppg.hidden_dim);
      c.ppg.epochs = p.value("epochs", c.ppg.epochs);
      c.ppg.lr = p.value("lr", c.ppg.lr);
      c.ppg.top_k = p.value("top_k", c.ppg.top_k);
      c.ppg.adv_weight = p.value("adv_weight", c.ppg.adv_weight);
    }
    if (j.contains("rpcm")) {
      const auto& r = j.at("rpcm");
      check_known_keys(r,
                       {"iterations", "tau", "gamma1", "gamma2", "proto_k", "hidden_dim",
                        "joint_dim", "epochs", "lr", "background_prototype", "share_map_heads",
                        "pair_source"},
                       "rpcm");
      c.rpcm.iterations = r.value("iterations", c.rpcm.iterations);
      c.rpcm.tau = r.value("tau", c.rpcm.tau);
      c.rpcm.gamma1 = r.value("gamma1", c.rpcm.gamma1);
      c.rpcm.gamma2 = r.value("gamma2", c.rpcm.gamma2);
      c.rpcm.proto_k = r.value("proto_k", c.rpcm.proto_k);
      c.rpcm.hidden_dim = r.value("hidden_dim", c.rpcm.hidden_dim);
      c.rpcm.joint_dim = r.value("joint_dim", c.rpcm.joint_dim);
      c.rpcm.epochs = r.value("epochs", c.rpcm.epochs);
      c.rpcm.lr = r.value("lr", c.rpcm.lr);
      c.rpcm.background_prototype = r.value("background_prototype", c.rpcm.background_prototype);
      c.rpcm.share_map_heads = r.value("share_map_heads", c.rpcm.share_map_heads);
      c.rpcm.pair_source = r.value("pair_source", c.rpcm.pair_source);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      check_known_keys(e,
                       {"tasks", "k_values", "iou_threshold", "box_mode", "macro_average",
                        "predictor", "pair_source"},
                       "eval");
      if (e.contains("tasks")) c.eval.tasks = e.at("tasks").get<std::vector<std::string>>();
      if (e.contains("k_values")) c.eval.k_values = e.at("k_values").get<std::vector<int>>();
      c.eval.iou_threshold = e.value("iou_threshold", c.eval.iou_threshold);
      c.eval.box_mode = e.value("box_mode", c.eval.box_mode);
      c.eval.macro_average = e.value("macro_average", c.eval.macro_average);
      c.eval.predictor = e.value("predictor", c.eval.predictor);
      c.eval.pair_source = e.value("pair_source", c.eval.pair_source);
    }
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  try {
    return from_json(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["paths"] = {{"data_dir", paths.data_dir},
                {"checkpoint_dir", paths.checkpoint_dir},
                {"report_dir", paths.report_dir}};
  j["vocabulary"] = vocabulary;
  j["recipe"] = recipe;
  j["embeddings"] = embeddings;
  j["num_scenes"] = num_scenes;
  j["splits"] = {{"train", splits.train}, {"val", splits.val}, {"test", splits.test}};
  j["dip"] = {{"layers", dip.layers},
              {"window", dip.window},
              {"stride", dip.stride},
              {"min_size", dip.min_size}};
  j["ppg"] = {{"latent_dim", ppg.latent_dim}, {"hidden_dim", ppg.hidden_dim},
              {"epochs", ppg.epochs},         {"lr", ppg.lr},
              {"top_k", ppg.top_k},           {"adv_weight", ppg.adv_weight}};
  j["rpcm"] = {{"iterations", rpcm.iterations},
               {"tau", rpcm.tau},
               {"gamma1", rpcm.gamma1},
               {"gamma2", rpcm.gamma2},
               {"proto_k", rpcm.proto_k},
               {"hidden_dim", rpcm.hidden_dim},
               {"joint_dim", rpcm.joint_dim},
               {"epochs", rpcm.epochs},
               {"lr", rpcm.lr},
               {"background_prototype", rpcm.background_prototype},
               {"share_map_heads", rpcm.share_map_heads},
               {"pair_source", rpcm.pair_source}};
  j["eval"] = {{"tasks", eval.tasks},
               {"k_values", eval.k_values},
               {"iou_threshold", eval.iou_threshold},
               {"box_mode", eval.box_mode},
               {"macro_average", eval.macro_average},
               {"predictor", eval.predictor},
               {"pair_source", eval.pair_source}};
  j["workers"] = workers;
  return j.dump(2) + "\n";
}

void RunConfig::apply_override(const std::string& dotted_key, const std::string& value) {
  ordered_json j = ordered_json::parse(to_json());
  ordered_json* node = &j;
  std::string rest = dotted_key;
  for (size_t dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
    std::string head = rest.substr(0, dot);
    rest = rest.substr(dot + 1);
    if (!node->contains(head)) throw ConfigError("config override: unknown key '" + dotted_key + "'");
    node = &(*node)[head];
  }
  if (!node->contains(rest)) throw ConfigError("config override: unknown key '" + dotted_key + "'");
  ordered_json parsed = ordered_json::parse(value, nullptr, false);
  (*node)[rest] = parsed.is_discarded() ? ordered_json(value) : parsed;
  *this = from_json(j.dump());
}

void RunConfig::validate(bool check_files) const {
  double sum = splits.train + splits.val + splits.test;
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError("config: split fractions must sum to 1 (got " + fmt_double(sum) + ")");
  if (splits.train < 0.0 || splits.val < 0.0 || splits.test < 0.0)
    throw ConfigError("config: split fractions must be non-negative");
  if (num_scenes < 0) throw ConfigError("config: num_scenes must be >= 0");
  if (ppg.epochs < 0 || rpcm.epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (ppg.top_k < 1) throw ConfigError("config: ppg.top_k must be >= 1");
  if (!(rpcm.tau > 0.0)) throw ConfigError("config: rpcm.tau must be positive");
  if (rpcm.gamma1 < 0.0 || rpcm.gamma2 < 0.0) throw ConfigError("config: margins must be >= 0");
  if (rpcm.iterations < 1) throw ConfigError("config: rpcm.iterations must be >= 1");
  if (eval.box_mode != "obb" && eval.box_mode != "hbb")
    throw ConfigError("config: eval.box_mode must be obb or hbb");
  if (eval.predictor != "rpcm" && eval.predictor != "frequency" && eval.predictor != "oracle")
    throw ConfigError("config: eval.predictor must be rpcm, frequency or oracle");
  if (eval.pair_source != "all" && eval.pair_source != "ppg" && eval.pair_source != "gt")
    throw ConfigError("config: eval.pair_source must be all, ppg or gt");
  if (rpcm.pair_source != "gt" && rpcm.pair_source != "ppg")
    throw ConfigError("config: rpcm.pair_source must be gt or ppg");
  for (int k : eval.k_values)
    if (k < 1) throw ConfigError("config: eval.k_values must be >= 1");
  if (!(eval.iou_threshold > 0.0) || eval.iou_threshold > 1.0)
    throw ConfigError("config: eval.iou_threshold must be in (0, 1]");
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
  if (check_files) {
    for (const std::string& p : {vocabulary, recipe, embeddings})
      if (!p.empty() && !std::filesystem::exists(p))
        throw ConfigError("config: referenced file does not exist: " + p);
  }
}

std::vector<std::string> RunConfig::protocol_deviations() const {
  std::vector<std::string> out;
  auto dev = [&](bool changed, const std::string& what) {
    if (changed) out.push_back(what);
  };
  dev(std::fabs(splits.train - 0.6) > 1e-12 || std::fabs(splits.val - 0.2) > 1e-12 ||
          std::fabs(splits.test - 0.2) > 1e-12,
      "splits=" + fmt_double(splits.train) + "/" + fmt_double(splits.val) + "/" +
          fmt_double(splits.test) + " (default 0.6/0.2/0.2)");
  dev(rpcm.iterations != 4, "rpcm.iterations=" + std::to_string(rpcm.iterations) + " (default 4)");
  dev(ppg.top_k != 10000, "ppg.top_k=" + std::to_string(ppg.top_k) + " (default 10000)");
  dev(eval.k_values != std::vector<int>{1500, 2000}, [&] {
    std::string s = "eval.k_values=";
    for (size_t i = 0; i < eval.k_values.size(); ++i)
      s += (i ? "/" : "") + std::to_string(eval.k_values[i]);
    return s + " (default 1500/2000)";
  }());
  dev(std::fabs(eval.iou_threshold - 0.5) > 1e-12,
      "eval.iou_threshold=" + fmt_double(eval.iou_threshold) + " (default 0.5)");
  return out;
}

}  // namespace sgg
