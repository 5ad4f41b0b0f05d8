#include "sgg/rpcm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include "sgg/text.hpp"

namespace sgg::rpcm {

namespace {

constexpr double kPi = 3.14159265358979323846;

Mat randn(int r, int c, double scale, Rng& rng) {
  Mat m(r, c);
  for (double& x : m.v) x = scale * rng.normal();
  return m;
}

struct EdgeLists {
  std::vector<std::pair<int, int>> ee, rs, ro, rr, sr, obj_r;
};

EdgeLists build_edges(const GraphAdjacency& adj) {
  EdgeLists e;
  std::set<std::pair<int, int>> ee_set, rr_set;
  std::vector<std::vector<int>> touching(static_cast<size_t>(adj.num_entities));
  for (int r = 0; r < adj.num_relations(); ++r) {
    int s = adj.subject_of[static_cast<size_t>(r)];
    int o = adj.object_of[static_cast<size_t>(r)];
    ee_set.insert({s, o});
    ee_set.insert({o, s});
    e.rs.emplace_back(s, r);
    e.ro.emplace_back(o, r);
    e.sr.emplace_back(r, s);
    e.obj_r.emplace_back(r, o);
    touching[static_cast<size_t>(s)].push_back(r);
    touching[static_cast<size_t>(o)].push_back(r);
  }
  for (const std::vector<int>& rels : touching)
    for (int a : rels)
      for (int b : rels)
        if (a != b) rr_set.insert({a, b});
  e.ee.assign(ee_set.begin(), ee_set.end());
  e.rr.assign(rr_set.begin(), rr_set.end());
  std::sort(e.rs.begin(), e.rs.end());
  std::sort(e.ro.begin(), e.ro.end());
  return e;
}

struct MessagingVars {
  nn::Var w_ee, w_rs, w_ro, w_rr, w_sr, w_or;
  nn::Var a_ee_recv, a_ee_send, a_rs_recv, a_rs_send, a_ro_recv, a_ro_send;
  nn::Var a_rr_recv, a_rr_send, a_sr_recv, a_sr_send, a_or_recv, a_or_send;
  nn::Var gate_e, gate_r;
};

MessagingVars as_inputs(nn::Tape& t, const MessagingParams& p) {
  MessagingVars v;
  v.w_ee = t.input(p.w_ee);
  v.w_rs = t.input(p.w_rs);
  v.w_ro = t.input(p.w_ro);
  v.w_rr = t.input(p.w_rr);
  v.w_sr = t.input(p.w_sr);
  v.w_or = t.input(p.w_or);
  v.a_ee_recv = t.input(p.a_ee_recv);
  v.a_ee_send = t.input(p.a_ee_send);
  v.a_rs_recv = t.input(p.a_rs_recv);
  v.a_rs_send = t.input(p.a_rs_send);
  v.a_ro_recv = t.input(p.a_ro_recv);
  v.a_ro_send = t.input(p.a_ro_send);
  v.a_rr_recv = t.input(p.a_rr_recv);
  v.a_rr_send = t.input(p.a_rr_send);
  v.a_sr_recv = t.input(p.a_sr_recv);
  v.a_sr_send = t.input(p.a_sr_send);
  v.a_or_recv = t.input(p.a_or_recv);
  v.a_or_send = t.input(p.a_or_send);
  v.gate_e = t.input(p.entity_gate);
  v.gate_r = t.input(p.relation_gate);
  return v;
}

MessagingVars as_params(nn::Tape& t, nn::Binder& bind, MessagingParams& p) {
  (void)t;
  MessagingVars v;
  v.w_ee = bind(p.w_ee);
  v.w_rs = bind(p.w_rs);
  v.w_ro = bind(p.w_ro);
  v.w_rr = bind(p.w_rr);
  v.w_sr = bind(p.w_sr);
  v.w_or = bind(p.w_or);
  v.a_ee_recv = bind(p.a_ee_recv);
  v.a_ee_send = bind(p.a_ee_send);
  v.a_rs_recv = bind(p.a_rs_recv);
  v.a_rs_send = bind(p.a_rs_send);
  v.a_ro_recv = bind(p.a_ro_recv);
  v.a_ro_send = bind(p.a_ro_send);
  v.a_rr_recv = bind(p.a_rr_recv);
  v.a_rr_send = bind(p.a_rr_send);
  v.a_sr_recv = bind(p.a_sr_recv);
  v.a_sr_send = bind(p.a_sr_send);
  v.a_or_recv = bind(p.a_or_recv);
  v.a_or_send = bind(p.a_or_send);
  v.gate_e = bind(p.entity_gate);
  v.gate_r = bind(p.relation_gate);
  return v;
}

// Attention-weighted sum of one message type into each receiver row.
nn::Var message_sum(nn::Tape& t, nn::Var recv_feats, nn::Var send_feats, nn::Var w, nn::Var a_recv,
                    nn::Var a_send, const std::vector<std::pair<int, int>>& edges, int num_recv,
                    std::vector<double>* alpha_out = nullptr) {
  int dim = t.val(w).cols;
  if (edges.empty()) {
    if (alpha_out) alpha_out->clear();
    return t.input(Mat(num_recv, dim));
  }
  std::vector<int> ridx, sidx;
  ridx.reserve(edges.size());
  sidx.reserve(edges.size());
  for (const auto& [r, s] : edges) {
    ridx.push_back(r);
    sidx.push_back(s);
  }
  nn::Var hr = t.gather_rows(recv_feats, ridx);
  nn::Var hs = t.gather_rows(send_feats, sidx);
  nn::Var compat = t.tanh(t.add(t.row_sum(t.mul(hr, a_recv)), t.row_sum(t.mul(hs, a_send))));
  nn::Var alpha = t.segment_softmax(compat, ridx, num_recv);
  if (alpha_out) {
    alpha_out->clear();
    for (int i = 0; i < t.val(alpha).rows; ++i) alpha_out->push_back(t.val(alpha).at(i, 0));
  }
  nn::Var weighted = t.mul(t.matmul(hs, w), alpha);
  return t.scatter_add_rows(weighted, ridx, num_recv);
}

nn::Var build_entity_update(nn::Tape& t, const MessagingVars& v, nn::Var fe, nn::Var fr,
                            const EdgeLists& edges, int num_entities) {
  nn::Var m_ee = message_sum(t, fe, fe, v.w_ee, v.a_ee_recv, v.a_ee_send, edges.ee, num_entities);
  nn::Var m_rs = message_sum(t, fe, fr, v.w_rs, v.a_rs_recv, v.a_rs_send, edges.rs, num_entities);
  nn::Var m_ro = message_sum(t, fe, fr, v.w_ro, v.a_ro_recv, v.a_ro_send, edges.ro, num_entities);
  return t.sigmoid(t.add(t.add(m_ee, m_rs), m_ro));
}

nn::Var build_relation_update(nn::Tape& t, const MessagingVars& v, nn::Var fe, nn::Var fr,
                              const EdgeLists& edges, int num_relations) {
  nn::Var m_rr = message_sum(t, fr, fr, v.w_rr, v.a_rr_recv, v.a_rr_send, edges.rr, num_relations);
  nn::Var m_sr = message_sum(t, fr, fe, v.w_sr, v.a_sr_recv, v.a_sr_send, edges.sr, num_relations);
  nn::Var m_or = message_sum(t, fr, fe, v.w_or, v.a_or_recv, v.a_or_send, edges.obj_r, num_relations);
  return t.sigmoid(t.add(t.add(m_rr, m_sr), m_or));
}

nn::Var build_fuse(nn::Tape& t, nn::Var global_feats, nn::Var local_feats, nn::Var gate_param) {
  nn::Var g = t.sigmoid(gate_param);
  nn::Var one_minus = t.add_const(t.scale(g, -1.0), 1.0);
  return t.add(t.mul(global_feats, g), t.mul(local_feats, one_minus));
}

struct PbaVars {
  nn::Var entities, relations;
};

PbaVars build_pba(nn::Tape& t, const MessagingVars& v, nn::Var fe0, nn::Var fr0,
                  const GraphAdjacency& adj, int iterations) {
  if (iterations < 1) throw ConfigError("pba: iterations must be >= 1");
  EdgeLists edges = build_edges(adj);
  nn::Var fe = fe0, fr = fr0;
  for (int i = 0; i < iterations; ++i) {
    nn::Var fe_hat = build_entity_update(t, v, fe, fr, edges, adj.num_entities);
    nn::Var fr_hat = build_relation_update(t, v, fe, fr, edges, adj.num_relations());
    fe = build_fuse(t, fe_hat, fe0, v.gate_e);
    fr = build_fuse(t, fr_hat, fr0, v.gate_r);
  }
  return {fe, fr};
}

void check_state(const GraphState& state) {
  if (state.adj.num_entities != state.entity_feats.rows ||
      state.adj.num_relations() != state.relation_feats.rows)
    throw ConfigError("graph state: adjacency and feature row counts disagree");
  for (int r = 0; r < state.adj.num_relations(); ++r) {
    int s = state.adj.subject_of[static_cast<size_t>(r)];
    int o = state.adj.object_of[static_cast<size_t>(r)];
    if (s < 0 || s >= state.adj.num_entities || o < 0 || o >= state.adj.num_entities)
      throw ConfigError("graph state: adjacency index out of range");
  }
}

}  // namespace

MessagingParams MessagingParams::init(int dim, Rng& rng) {
  MessagingParams p;
  double ws = 1.0 / std::sqrt(dim);
  p.w_ee = randn(dim, dim, ws, rng);
  p.w_rs = randn(dim, dim, ws, rng);
  p.w_ro = randn(dim, dim, ws, rng);
  p.w_rr = randn(dim, dim, ws, rng);
  p.w_sr = randn(dim, dim, ws, rng);
  p.w_or = randn(dim, dim, ws, rng);
  p.a_ee_recv = randn(1, dim, ws, rng);
  p.a_ee_send = randn(1, dim, ws, rng);
  p.a_rs_recv = randn(1, dim, ws, rng);
  p.a_rs_send = randn(1, dim, ws, rng);
  p.a_ro_recv = randn(1, dim, ws, rng);
  p.a_ro_send = randn(1, dim, ws, rng);
  p.a_rr_recv = randn(1, dim, ws, rng);
  p.a_rr_send = randn(1, dim, ws, rng);
  p.a_sr_recv = randn(1, dim, ws, rng);
  p.a_sr_send = randn(1, dim, ws, rng);
  p.a_or_recv = randn(1, dim, ws, rng);
  p.a_or_send = randn(1, dim, ws, rng);
  p.entity_gate = Mat(1, dim);    // sigmoid(0) = 0.5
  p.relation_gate = Mat(1, dim);
  return p;
}

MessagingParams MessagingParams::zeros(int dim) {
  MessagingParams p;
  p.w_ee = p.w_rs = p.w_ro = p.w_rr = p.w_sr = p.w_or = Mat(dim, dim);
  p.a_ee_recv = p.a_ee_send = p.a_rs_recv = p.a_rs_send = p.a_ro_recv = p.a_ro_send = Mat(1, dim);
  p.a_rr_recv = p.a_rr_send = p.a_sr_recv = p.a_sr_send = p.a_or_recv = p.a_or_send = Mat(1, dim);
  p.entity_gate = Mat(1, dim);
  p.relation_gate = Mat(1, dim);
  return p;
}

Mat entity_message_update(const GraphState& state, const MessagingParams& params) {
  check_state(state);
  nn::Tape t;
  MessagingVars v = as_inputs(t, params);
  EdgeLists edges = build_edges(state.adj);
  nn::Var out = build_entity_update(t, v, t.input(state.entity_feats), t.input(state.relation_feats),
                                    edges, state.adj.num_entities);
  return t.val(out);
}

Mat relation_message_update(const GraphState& state, const MessagingParams& params) {
  check_state(state);
  nn::Tape t;
  MessagingVars v = as_inputs(t, params);
  EdgeLists edges = build_edges(state.adj);
  nn::Var out = build_relation_update(t, v, t.input(state.entity_feats),
                                      t.input(state.relation_feats), edges,
                                      state.adj.num_relations());
  return t.val(out);
}

Mat global_local_fuse(const Mat& global_feats, const Mat& local_feats, const Mat& gate) {
  if (!global_feats.same_shape(local_feats))
    throw ConfigError("global_local_fuse: global/local shape mismatch");
  bool row_gate = gate.rows == 1 && gate.cols == global_feats.cols;
  if (!row_gate && !gate.same_shape(global_feats))
    throw ConfigError("global_local_fuse: gate shape mismatch");
  Mat out(global_feats.rows, global_feats.cols);
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) {
      double g = row_gate ? gate.at(0, c) : gate.at(r, c);
      out.at(r, c) = g * global_feats.at(r, c) + (1.0 - g) * local_feats.at(r, c);
    }
  return out;
}

GraphState pba_step(GraphState state, const MessagingParams& params) {
  check_state(state);
  Mat fe_hat = entity_message_update(state, params);
  Mat fr_hat = relation_message_update(state, params);
  Mat ge(1, params.entity_gate.cols), gr(1, params.relation_gate.cols);
  for (int c = 0; c < ge.cols; ++c) ge.at(0, c) = 1.0 / (1.0 + std::exp(-params.entity_gate.at(0, c)));
  for (int c = 0; c < gr.cols; ++c) gr.at(0, c) = 1.0 / (1.0 + std::exp(-params.relation_gate.at(0, c)));
  state.entity_feats = global_local_fuse(fe_hat, state.entity_local, ge);
  state.relation_feats = global_local_fuse(fr_hat, state.relation_local, gr);
  return state;
}

Mat pba_run(const GraphState& state, const MessagingParams& params, int iterations) {
  if (iterations < 1) throw ConfigError("pba_run: iterations must be >= 1");
  GraphState s = state;
  for (int i = 0; i < iterations; ++i) s = pba_step(std::move(s), params);
  return s.relation_feats;
}

std::vector<AttentionRecord> attention_coefficients(const GraphState& state,
                                                    const MessagingParams& params) {
  check_state(state);
  nn::Tape t;
  MessagingVars v = as_inputs(t, params);
  EdgeLists edges = build_edges(state.adj);
  nn::Var fe = t.input(state.entity_feats);
  nn::Var fr = t.input(state.relation_feats);
  int ne = state.adj.num_entities;
  int nr = state.adj.num_relations();

  std::vector<AttentionRecord> out;
  auto record = [&](const char* name, nn::Var recv, nn::Var send, nn::Var w, nn::Var ar, nn::Var as,
                    const std::vector<std::pair<int, int>>& e, int n) {
    AttentionRecord rec;
    rec.type = name;
    rec.edges = e;
    message_sum(t, recv, send, w, ar, as, e, n, &rec.alpha);
    out.push_back(std::move(rec));
  };
  record("ee", fe, fe, v.w_ee, v.a_ee_recv, v.a_ee_send, edges.ee, ne);
  record("rs", fe, fr, v.w_rs, v.a_rs_recv, v.a_rs_send, edges.rs, ne);
  record("ro", fe, fr, v.w_ro, v.a_ro_recv, v.a_ro_send, edges.ro, ne);
  record("rr", fr, fr, v.w_rr, v.a_rr_recv, v.a_rr_send, edges.rr, nr);
  record("sr", fr, fe, v.w_sr, v.a_sr_recv, v.a_sr_send, edges.sr, nr);
  record("or", fr, fe, v.w_or, v.a_or_recv, v.a_or_send, edges.obj_r, nr);
  return out;
}

EmbeddingTable EmbeddingTable::parse(const std::string& text) {
  EmbeddingTable tab;
  int line_no = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto tok = split_ws(line);
    if (tok.size() < 2)
      throw ParseError("embedding line " + std::to_string(line_no) + ": need token and values");
    std::vector<double> vec;
    for (size_t i = 1; i < tok.size(); ++i) {
      double x;
      if (!parse_double(tok[i], x))
        throw ParseError("embedding line " + std::to_string(line_no) + ": malformed value");
      vec.push_back(x);
    }
    if (tab.dim == 0) tab.dim = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != tab.dim)
      throw ParseError("embedding line " + std::to_string(line_no) + ": inconsistent dimension");
    tab.vectors[tok[0]] = std::move(vec);
  }
  if (tab.dim == 0) throw ParseError("embedding table: no entries");
  return tab;
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  try {
    return parse(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::vector<double> EmbeddingTable::token_vector(const std::string& token) const {
  auto it = vectors.find(token);
  if (it != vectors.end()) return it->second;
  if (!hash_fallback) throw VocabularyError("embedding table: unknown token '" + token + "'");
  Rng rng(mix_seed(fnv1a64(token), 0xe3bedull));
  std::vector<double> v(static_cast<size_t>(dim));
  double scale = 1.0 / std::sqrt(dim);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

std::vector<std::string> tokenize_label(const std::string& label) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : label) {
    if (ch == ' ' || ch == '_' || ch == '-') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Mat init_prototypes(const std::vector<std::string>& labels, const EmbeddingTable& table) {
  Mat t(static_cast<int>(labels.size()), table.dim);
  for (size_t i = 0; i < labels.size(); ++i) {
    std::vector<std::vector<double>> resolved;
    for (const std::string& token : tokenize_label(labels[i])) {
      if (table.has(token) || table.hash_fallback) resolved.push_back(table.token_vector(token));
    }
    if (resolved.empty())
      throw VocabularyError("init_prototypes: no token of label '" + labels[i] +
                            "' found in the embedding table");
    for (int c = 0; c < table.dim; ++c) {
      double s = 0.0;
      for (const std::vector<double>& v : resolved) s += v[static_cast<size_t>(c)];
      t.at(static_cast<int>(i), c) = s / static_cast<double>(resolved.size());
    }
  }
  return t;
}

double loss_instance_contrastive(std::span<const double> r_bar, const Mat& p_bar_all, int true_row,
                                 double tau) {
  if (!(tau > 0.0)) throw ConfigError("loss_instance_contrastive: tau must be positive");
  if (true_row < 0 || true_row >= p_bar_all.rows)
    throw ConfigError("loss_instance_contrastive: true row out of range");
  std::vector<double> logits(static_cast<size_t>(p_bar_all.rows));
  for (int i = 0; i < p_bar_all.rows; ++i) {
    double d = 0.0;
    for (int c = 0; c < p_bar_all.cols; ++c) d += r_bar[static_cast<size_t>(c)] * p_bar_all.at(i, c);
    logits[static_cast<size_t>(i)] = d / tau;
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (double l : logits) lse += std::exp(l - mx);
  return mx + std::log(lse) - logits[static_cast<size_t>(true_row)];
}

double loss_instance_distance(std::span<const double> r_true, std::span<const double> r_neg,
                              std::span<const double> p_bar, double gamma1) {
  if (gamma1 < 0.0) throw ConfigError("loss_instance_distance: gamma1 must be >= 0");
  double qp = 0.0, qn = 0.0;
  for (size_t i = 0; i < p_bar.size(); ++i) {
    double dp = r_true[i] - p_bar[i];
    double dn = r_neg[i] - p_bar[i];
    qp += dp * dp;
    qn += dn * dn;
  }
  return std::max(0.0, qp - qn + gamma1);
}

double loss_prototype_contrast(const Mat& p_bar) {
  double total = 0.0;
  for (int i = 0; i < p_bar.rows; ++i) {
    double row_sq = 0.0;
    for (int j = 0; j < p_bar.rows; ++j) {
      double g = 0.0;
      for (int c = 0; c < p_bar.cols; ++c) g += p_bar.at(i, c) * p_bar.at(j, c);
      row_sq += g * g;
    }
    total += std::sqrt(row_sq);
  }
  return total;
}

double loss_prototype_distance(const Mat& p_bar, int k, double gamma2, bool mean_reduce) {
  int n = p_bar.rows;
  int max_pairs = n * (n - 1);
  if (k < 1 || k > max_pairs) throw ConfigError("loss_prototype_distance: k out of range");
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(max_pairs));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double d = 0.0;
      for (int c = 0; c < p_bar.cols; ++c) {
        double diff = p_bar.at(i, c) - p_bar.at(j, c);
        d += diff * diff;
      }
      dists.push_back(d);
    }
  std::sort(dists.begin(), dists.end());
  double total = 0.0;
  for (int i = 0; i < k; ++i) total += std::max(0.0, -dists[static_cast<size_t>(i)] + gamma2);
  return mean_reduce ? total / static_cast<double>(k) : total;
}

double rpcm_total_loss(double ic, double id, double pc, double pd) { return ic + id + pc + pd; }

RelationPrediction predict_relation(std::span<const double> r_bar, const Mat& p_bar_classes,
                                    double tau) {
  if (!(tau > 0.0)) throw ConfigError("predict_relation: tau must be positive");
  RelationPrediction out;
  out.similarities.resize(static_cast<size_t>(p_bar_classes.rows));
  for (int i = 0; i < p_bar_classes.rows; ++i) {
    double d = 0.0;
    for (int c = 0; c < p_bar_classes.cols; ++c)
      d += r_bar[static_cast<size_t>(c)] * p_bar_classes.at(i, c);
    out.similarities[static_cast<size_t>(i)] = d / tau;
  }
  out.predicted_class = 0;
  for (int i = 1; i < p_bar_classes.rows; ++i)
    if (out.similarities[static_cast<size_t>(i)] >
        out.similarities[static_cast<size_t>(out.predicted_class)])
      out.predicted_class = i;
  double mx = out.similarities[static_cast<size_t>(out.predicted_class)];
  double denom = 0.0;
  out.calibrated.resize(out.similarities.size());
  for (double s : out.similarities) denom += std::exp(s - mx);
  for (size_t i = 0; i < out.similarities.size(); ++i)
    out.calibrated[i] = std::exp(out.similarities[i] - mx) / denom;
  return out;
}

RpcmModel RpcmModel::init(const RpcmConfig& cfg, int num_classes, const Mat& initial_prototypes,
                          Rng& rng) {
  if (initial_prototypes.rows != num_classes || initial_prototypes.cols != cfg.embed_dim)
    throw ConfigError("rpcm: initial prototypes must be num_classes x embed_dim");
  RpcmModel m;
  m.cfg = cfg;
  m.num_classes = num_classes;
  m.background = cfg.background_prototype;
  int ein = cfg.entity_input_dim();
  int rin = cfg.relation_input_dim();
  m.ent_in_w = randn(ein, cfg.hidden_dim, 1.0 / std::sqrt(ein), rng);
  m.ent_in_b = Mat(1, cfg.hidden_dim);
  m.rel_in_w = randn(rin, cfg.hidden_dim, 1.0 / std::sqrt(rin), rng);
  m.rel_in_b = Mat(1, cfg.hidden_dim);
  m.messaging = MessagingParams::init(cfg.hidden_dim, rng);
  m.map_r = ppg::Mlp2::init(cfg.hidden_dim, cfg.hidden_dim, cfg.joint_dim, ppg::Activation::tanh, rng);
  m.enc_w = randn(cfg.embed_dim, cfg.hidden_dim, 1.0 / std::sqrt(cfg.embed_dim), rng);
  m.enc_b = Mat(1, cfg.hidden_dim);
  m.map_p = ppg::Mlp2::init(cfg.hidden_dim, cfg.hidden_dim, cfg.joint_dim, ppg::Activation::tanh, rng);
  m.class_prototypes = initial_prototypes;
  m.background_prototype = randn(1, cfg.embed_dim, 1.0 / std::sqrt(cfg.embed_dim), rng);
  return m;
}

SceneBatch make_scene_batch(const scene::SceneGraph& graph, const Mat& features,
                            const std::vector<ppg::PairKey>& pairs, const RpcmConfig& cfg) {
  if (features.rows != static_cast<int>(graph.objects.size()))
    throw ConfigError("scene batch: features must have one row per object");
  if (features.cols != cfg.feature_dim)
    throw ConfigError("scene batch: feature dimension mismatch");

  std::map<int, int> row_of;
  for (size_t i = 0; i < graph.objects.size(); ++i)
    row_of[graph.objects[i].id] = static_cast<int>(i);

  double diag = std::sqrt(graph.image_width * graph.image_width +
                          graph.image_height * graph.image_height);
  SceneBatch b;
  int ein = cfg.entity_input_dim();
  b.entity_raw = Mat(static_cast<int>(graph.objects.size()), ein);
  for (size_t i = 0; i < graph.objects.size(); ++i) {
    const scene::ObjectInstance& o = graph.objects[i];
    int r = static_cast<int>(i);
    for (int c = 0; c < cfg.feature_dim; ++c) b.entity_raw.at(r, c) = features.at(r, c);
    geom::Vec2 ctr = o.box.center();
    b.entity_raw.at(r, cfg.feature_dim + 0) = ctr.x / graph.image_width;
    b.entity_raw.at(r, cfg.feature_dim + 1) = ctr.y / graph.image_height;
    b.entity_raw.at(r, cfg.feature_dim + 2) = o.box.width() / diag;
    b.entity_raw.at(r, cfg.feature_dim + 3) = o.box.height() / diag;
    b.entity_raw.at(r, cfg.feature_dim + 4) = o.box.angle() / (kPi / 2);
  }

  b.pairs = pairs;
  b.adj.num_entities = static_cast<int>(graph.objects.size());
  b.relation_raw = Mat(static_cast<int>(pairs.size()), cfg.relation_input_dim());
  for (size_t p = 0; p < pairs.size(); ++p) {
    auto is = row_of.find(pairs[p].subject_id);
    auto io = row_of.find(pairs[p].object_id);
    if (is == row_of.end() || io == row_of.end())
      throw ConfigError("scene batch: pair references unknown object id");
    b.adj.subject_of.push_back(is->second);
    b.adj.object_of.push_back(io->second);
    const scene::ObjectInstance& s = graph.objects[static_cast<size_t>(is->second)];
    const scene::ObjectInstance& o = graph.objects[static_cast<size_t>(io->second)];
    geom::PairSpatialFeature spatial =
        geom::pair_spatial_feature(s.box, o.box, graph.image_width, graph.image_height);
    int r = static_cast<int>(p);
    for (int c = 0; c < 9; ++c) b.relation_raw.at(r, c) = spatial.v[static_cast<size_t>(c)];
    for (int c = 0; c < ein; ++c) {
      b.relation_raw.at(r, 9 + c) = b.entity_raw.at(is->second, c);
      b.relation_raw.at(r, 9 + ein + c) = b.entity_raw.at(io->second, c);
    }
  }
  return b;
}

SceneForward build_scene_forward(nn::Tape& t, nn::Binder& bind, RpcmModel& model,
                                 const SceneBatch& batch, int iterations) {
  if (iterations <= 0) iterations = model.cfg.iterations;
  nn::Var ent_raw = t.input(batch.entity_raw);
  nn::Var rel_raw = t.input(batch.relation_raw);
  nn::Var fe0 = t.tanh(t.add(t.matmul(ent_raw, bind(model.ent_in_w)), bind(model.ent_in_b)));
  nn::Var fr0 = t.tanh(t.add(t.matmul(rel_raw, bind(model.rel_in_w)), bind(model.rel_in_b)));
  MessagingVars mv = as_params(t, bind, model.messaging);
  PbaVars pba = build_pba(t, mv, fe0, fr0, batch.adj, iterations);

  SceneForward f;
  if (batch.adj.num_relations() > 0) {
    nn::Var r = model.map_r.build(t, bind, pba.relations);
    f.relation_embeddings = t.rows_l2_normalize(r);
  } else {
    f.relation_embeddings = t.input(Mat(0, model.cfg.joint_dim));
  }

  nn::Var proto = model.background
                      ? t.concat_rows(bind(model.background_prototype), t.input(model.class_prototypes))
                      : t.input(model.class_prototypes);
  nn::Var encoded = t.tanh(t.add(t.matmul(proto, bind(model.enc_w)), bind(model.enc_b)));
  ppg::Mlp2& head = model.cfg.share_map_heads ? model.map_r : model.map_p;
  nn::Var p = head.build(t, bind, encoded);
  f.prototype_embeddings = t.rows_l2_normalize(p);
  return f;
}

SceneLoss build_scene_loss(nn::Tape& t, nn::Binder& bind, RpcmModel& model, const SceneBatch& batch,
                           const std::vector<std::pair<int, int>>& instances) {
  if (instances.empty()) throw ConfigError("build_scene_loss: no training instances");
  SceneForward f = build_scene_forward(t, bind, model, batch, model.cfg.iterations);
  // copies: later tape pushes invalidate references into the node storage
  const Mat r_bar = t.val(f.relation_embeddings);
  const Mat p_bar = t.val(f.prototype_embeddings);
  const double tau = model.cfg.tau;

  // instance contrastive: softmax over all prototype rows (background
  // included) of the scaled cosine logits
  std::vector<int> inst_rows;
  std::vector<std::pair<int, int>> true_elems;
  for (size_t i = 0; i < instances.size(); ++i) {
    inst_rows.push_back(instances[i].first);
    true_elems.emplace_back(static_cast<int>(i), model.class_row(instances[i].second));
  }
  nn::Var r_inst = t.gather_rows(f.relation_embeddings, inst_rows);
  nn::Var logits = t.scale(t.matmul(r_inst, t.transpose(f.prototype_embeddings)), 1.0 / tau);
  nn::Var ic = t.mean(t.sub(t.lse_rows(logits), t.gather_elems(logits, std::move(true_elems))));

  // instance distance: per instance, hardest in-batch negative of another
  // class by distance to the true prototype
  std::vector<int> id_true_rows, id_neg_rows, id_proto_rows;
  for (size_t i = 0; i < instances.size(); ++i) {
    int cls_row = model.class_row(instances[i].second);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < instances.size(); ++j) {
      if (instances[j].second == instances[i].second) continue;
      double d = 0.0;
      for (int c = 0; c < p_bar.cols; ++c) {
        double diff = r_bar.at(instances[j].first, c) - p_bar.at(cls_row, c);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    if (best < 0) continue;
    id_true_rows.push_back(instances[i].first);
    id_neg_rows.push_back(instances[static_cast<size_t>(best)].first);
    id_proto_rows.push_back(cls_row);
  }
  nn::Var id;
  if (id_true_rows.empty()) {
    id = t.input(Mat(1, 1, 0.0));
  } else {
    nn::Var rt = t.gather_rows(f.relation_embeddings, id_true_rows);
    nn::Var rn = t.gather_rows(f.relation_embeddings, id_neg_rows);
    nn::Var pp = t.gather_rows(f.prototype_embeddings, id_proto_rows);
    nn::Var qp = t.row_sum(t.square(t.sub(rt, pp)));
    nn::Var qn = t.row_sum(t.square(t.sub(rn, pp)));
    id = t.mean(t.relu(t.add_const(t.sub(qp, qn), model.cfg.gamma1)));
  }

  // prototype contrast over the class rows only
  std::vector<int> class_rows;
  for (int c = 0; c < model.num_classes; ++c) class_rows.push_back(model.class_row(c));
  nn::Var p_cls = t.gather_rows(f.prototype_embeddings, class_rows);
  nn::Var gram = t.matmul(p_cls, t.transpose(p_cls));
  nn::Var pc = t.sum(t.sqrt(t.row_sum(t.square(gram))));

  // prototype distance: hinge on the k smallest off-diagonal squared
  // distances, chosen from current values
  int n = model.num_classes;
  int k = std::min(model.cfg.proto_k, n * (n - 1));
  nn::Var pd;
  if (k < 1) {
    pd = t.input(Mat(1, 1, 0.0));
  } else {
    std::vector<std::tuple<double, int, int>> dists;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double d = 0.0;
        for (int c = 0; c < p_bar.cols; ++c) {
          double diff = p_bar.at(class_rows[static_cast<size_t>(i)], c) -
                        p_bar.at(class_rows[static_cast<size_t>(j)], c);
          d += diff * diff;
        }
        dists.emplace_back(d, i, j);
      }
    std::sort(dists.begin(), dists.end());
    std::vector<int> sel_i, sel_j;
    for (int s = 0; s < k; ++s) {
      sel_i.push_back(std::get<1>(dists[static_cast<size_t>(s)]));
      sel_j.push_back(std::get<2>(dists[static_cast<size_t>(s)]));
    }
    nn::Var pi = t.gather_rows(p_cls, sel_i);
    nn::Var pj = t.gather_rows(p_cls, sel_j);
    nn::Var d_sel = t.row_sum(t.square(t.sub(pi, pj)));
    nn::Var hinge = t.relu(t.add_const(t.scale(d_sel, -1.0), model.cfg.gamma2));
    pd = model.cfg.pd_mean ? t.mean(hinge) : t.sum(hinge);
  }

  SceneLoss loss;
  loss.ic = ic;
  loss.id = id;
  loss.pc = pc;
  loss.pd = pd;
  loss.total = t.add(t.add(ic, id), t.add(pc, pd));
  return loss;
}

Mat scene_relation_embeddings(RpcmModel& model, const SceneBatch& batch, int iterations) {
  nn::Tape t;
  nn::Binder bind(t);
  SceneForward f = build_scene_forward(t, bind, model, batch, iterations);
  return t.val(f.relation_embeddings);
}

Mat projected_prototypes(RpcmModel& model) {
  nn::Tape t;
  nn::Binder bind(t);
  SceneBatch empty;
  empty.entity_raw = Mat(0, model.cfg.entity_input_dim());
  empty.relation_raw = Mat(0, model.cfg.relation_input_dim());
  empty.adj.num_entities = 0;
  SceneForward f = build_scene_forward(t, bind, model, empty, 1);
  return t.val(f.prototype_embeddings);
}

namespace {

Mat l2_normalize_rows(const Mat& m) {
  Mat out = m;
  for (int r = 0; r < out.rows; ++r) {
    double norm = 0.0;
    for (int c = 0; c < out.cols; ++c) norm += out.at(r, c) * out.at(r, c);
    norm = std::sqrt(norm);
    if (norm == 0.0) throw UserError("project_to_joint_space: zero vector at normalization");
    for (int c = 0; c < out.cols; ++c) out.at(r, c) /= norm;
  }
  return out;
}

}  // namespace

JointSpace project_to_joint_space(const RpcmModel& model, const Mat& relation_features) {
  JointSpace out;
  out.r = Mat(relation_features.rows, model.cfg.joint_dim);
  for (int i = 0; i < relation_features.rows; ++i) {
    std::vector<double> row(relation_features.row(i), relation_features.row(i) + relation_features.cols);
    std::vector<double> mapped = model.map_r.forward(row);
    std::copy(mapped.begin(), mapped.end(), out.r.row(i));
  }

  Mat t = model.background ? Mat(model.num_classes + 1, model.cfg.embed_dim) : model.class_prototypes;
  if (model.background) {
    for (int c = 0; c < model.cfg.embed_dim; ++c) t.at(0, c) = model.background_prototype.at(0, c);
    for (int r = 0; r < model.num_classes; ++r)
      for (int c = 0; c < model.cfg.embed_dim; ++c) t.at(r + 1, c) = model.class_prototypes.at(r, c);
  }
  Mat encoded = matmul(t, model.enc_w);
  for (int r = 0; r < encoded.rows; ++r)
    for (int c = 0; c < encoded.cols; ++c)
      encoded.at(r, c) = std::tanh(encoded.at(r, c) + model.enc_b.at(0, c));
  const ppg::Mlp2& head = model.cfg.share_map_heads ? model.map_r : model.map_p;
  out.p = Mat(encoded.rows, model.cfg.joint_dim);
  for (int i = 0; i < encoded.rows; ++i) {
    std::vector<double> row(encoded.row(i), encoded.row(i) + encoded.cols);
    std::vector<double> mapped = head.forward(row);
    std::copy(mapped.begin(), mapped.end(), out.p.row(i));
  }

  out.r_bar = l2_normalize_rows(out.r);
  out.p_bar = l2_normalize_rows(out.p);
  return out;
}

Mat projected_class_prototypes(RpcmModel& model) {
  Mat all = projected_prototypes(model);
  if (!model.background) return all;
  Mat out(model.num_classes, all.cols);
  for (int c = 0; c < model.num_classes; ++c)
    for (int j = 0; j < all.cols; ++j) out.at(c, j) = all.at(c + 1, j);
  return out;
}

std::string serialize_prototypes(RpcmModel& model, const std::vector<std::string>& labels) {
  if (static_cast<int>(labels.size()) != model.num_classes)
    throw ConfigError("serialize_prototypes: label count mismatch");
  Mat all = projected_prototypes(model);
  std::string out;
  for (int r = 0; r < all.rows; ++r) {
    std::string name = model.background
                           ? (r == 0 ? "__background__" : labels[static_cast<size_t>(r - 1)])
                           : labels[static_cast<size_t>(r)];
    out += name;
    for (int c = 0; c < all.cols; ++c) out += " " + fmt_double(all.at(r, c));
    out += "\n";
  }
  return out;
}

}  // namespace sgg::rpcm
