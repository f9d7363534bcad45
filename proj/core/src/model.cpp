#include "depro/model.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace depro::model {

DeproModel make_model(const ModelConfig& cfg) {
  require(cfg.vocab >= 2 && cfg.d_emb >= 1 && cfg.kslots >= 1 && cfg.m_z >= 1 &&
              cfg.n_classes >= 2,
          "model: bad dimensions");
  require(cfg.m_z % cfg.kslots == 0, "model: m_z must be divisible by kslots");
  DeproModel m;
  m.cfg = cfg;
  const int h = cfg.m_z / cfg.kslots;
  const auto s = [&](const char* tag) { return derive_seed(cfg.seed, tag); };
  m.params.add("embed", net::normal_init(cfg.vocab, cfg.d_emb, 0.1, s("embed")));
  m.params.add("enc1_w", net::glorot_uniform(cfg.d_emb, h, s("enc1_w")));
  m.params.add("enc1_b", Mat::Zero(1, h));
  m.params.add("enc2_w", net::glorot_uniform(h, h, s("enc2_w")));
  m.params.add("enc2_b", Mat::Zero(1, h));
  m.params.add("cls_w", net::glorot_uniform(cfg.m_z, cfg.n_classes, s("cls_w")));
  m.params.add("cls_b", Mat::Zero(1, cfg.n_classes));
  m.params.add("critic_w", net::glorot_uniform(cfg.d_emb, cfg.m_z, s("critic_w")));
  m.params.add("critic_b", Mat::Zero(1, cfg.m_z));
  return m;
}

namespace {

struct LeafIds {
  net::NodeId embed, enc1_w, enc1_b, enc2_w, enc2_b, cls_w, cls_b, critic_w, critic_b;
};

LeafIds leaf_ids(const DeproModel& model, const std::vector<net::NodeId>& leaves) {
  const auto& p = model.params;
  const auto id = [&](const char* name) {
    return leaves[static_cast<std::size_t>(p.index_of(name))];
  };
  return {id("embed"),  id("enc1_w"), id("enc1_b"),   id("enc2_w"),  id("enc2_b"),
          id("cls_w"),  id("cls_b"),  id("critic_w"), id("critic_b")};
}

void check_batch(const DeproModel& model, const data::Batch& batch) {
  require(batch.size() >= 1, "model: empty batch");
  require(batch.kslots() == model.cfg.kslots, "model: batch slot count mismatch");
  require(batch.tokens.minCoeff() >= 0 && batch.tokens.maxCoeff() < model.cfg.vocab,
          "model: token id out of vocabulary");
}

}  // namespace

ForwardPass encode(const DeproModel& model, const data::Batch& batch) {
  check_batch(model, batch);
  ForwardPass fp;
  fp.param_leaves.reserve(static_cast<std::size_t>(model.params.count()));
  for (const Mat& v : model.params.values) fp.param_leaves.push_back(fp.tape.input(v));
  const LeafIds ids = leaf_ids(model, fp.param_leaves);

  const int k = model.cfg.kslots;
  fp.t_slots.reserve(static_cast<std::size_t>(k));
  std::vector<net::NodeId> slot_repr;
  slot_repr.reserve(static_cast<std::size_t>(k));
  std::vector<int> slot_tokens(static_cast<std::size_t>(batch.size()));
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < batch.size(); ++i) {
      slot_tokens[static_cast<std::size_t>(i)] = batch.tokens(i, j);
    }
    // The gather node's gradient is the per-slot local-feature gradient the
    // saliency ranking reads.
    net::NodeId t = fp.tape.gather_rows(ids.embed, slot_tokens);
    fp.t_slots.push_back(t);
    net::NodeId h1 =
        fp.tape.tanh(fp.tape.add_rowvec(fp.tape.matmul(t, ids.enc1_w), ids.enc1_b));
    slot_repr.push_back(fp.tape.add_rowvec(fp.tape.matmul(h1, ids.enc2_w), ids.enc2_b));
  }
  fp.z = fp.tape.concat_cols(slot_repr);
  fp.logits = fp.tape.add_rowvec(fp.tape.matmul(fp.z, ids.cls_w), ids.cls_b);
  return fp;
}

Mat encode_z(const DeproModel& model, const data::Batch& batch) {
  ForwardPass fp = encode(model, batch);
  return fp.tape.value(fp.z);
}

LossBreakdown depro_loss(ForwardPass& fp, const DeproModel& model, const data::Batch& batch,
                         const Vec& weights, const LossConfig& cfg) {
  require(weights.size() == batch.size(), "model::depro_loss: weight count mismatch");
  require(cfg.alpha >= 0.0, "model::depro_loss: alpha must be nonnegative");

  const Eigen::Index n = batch.size();
  const LeafIds ids = leaf_ids(model, fp.param_leaves);

  LossBreakdown out;
  const net::NodeId ce = fp.tape.weighted_softmax_ce(fp.logits, batch.labels, weights);
  out.ce_term = fp.tape.value(ce)(0, 0);

  if (!cfg.use_purification) {
    out.loss = ce;
    out.total = out.ce_term;
    return out;
  }

  // Saliency comes from the task-loss gradients of this same forward pass.
  fp.tape.backward(ce);
  out.saliency = purify::saliency(fp.tape, fp.t_slots, cfg.purify_ratio);

  // Per-slot membership masks of the per-sample top-M selections.
  const int k = model.cfg.kslots;
  std::vector<Mat> masks(static_cast<std::size_t>(k), Mat::Zero(n, 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j : out.saliency.selected[static_cast<std::size_t>(i)]) {
      masks[static_cast<std::size_t>(j)](i, 0) = 1.0;
    }
  }

  net::NodeId mi_sum = -1;  // sum over samples and kept slots of InfoNCE terms
  for (int j = 0; j < k; ++j) {
    if (masks[static_cast<std::size_t>(j)].sum() == 0.0) continue;
    net::NodeId proj = fp.tape.add_rowvec(
        fp.tape.matmul(fp.t_slots[static_cast<std::size_t>(j)], ids.critic_w), ids.critic_b);
    net::NodeId scores = fp.tape.matmul_nt(proj, fp.z);
    net::NodeId terms = fp.tape.info_nce_terms(scores);
    net::NodeId contrib = fp.tape.weighted_sum(terms, masks[static_cast<std::size_t>(j)]);
    mi_sum = (mi_sum < 0) ? contrib : fp.tape.add(mi_sum, contrib);
  }
  require(mi_sum >= 0, "model::depro_loss: empty slot selection");

  const double inv_n = 1.0 / static_cast<double>(n);
  net::NodeId mi_mean = fp.tape.scale(mi_sum, inv_n);
  out.loss = fp.tape.add(ce, fp.tape.scale(mi_mean, -cfg.alpha));
  out.total = fp.tape.value(out.loss)(0, 0);
  out.mi_term = -cfg.alpha * fp.tape.value(mi_mean)(0, 0);
  out.infonce_mean =
      fp.tape.value(mi_sum)(0, 0) / (static_cast<double>(n) * out.saliency.m);
  return out;
}

std::vector<Mat> param_grads(const ForwardPass& fp) {
  std::vector<Mat> grads;
  grads.reserve(fp.param_leaves.size());
  for (net::NodeId id : fp.param_leaves) grads.push_back(fp.tape.grad(id));
  return grads;
}

void save_model(const DeproModel& model, const std::string& prefix) {
  model.params.save(prefix + ".ckpt");
  nlohmann::json j;
  j["vocab"] = model.cfg.vocab;
  j["d_emb"] = model.cfg.d_emb;
  j["kslots"] = model.cfg.kslots;
  j["m_z"] = model.cfg.m_z;
  j["n_classes"] = model.cfg.n_classes;
  j["seed"] = model.cfg.seed;
  std::ofstream out(prefix + ".json");
  require(out.good(), "model::save_model: cannot open " + prefix + ".json");
  out << j.dump(2) << "\n";
}

DeproModel load_model(const std::string& prefix) {
  std::ifstream in(prefix + ".json");
  require(in.good(), "model::load_model: cannot open " + prefix + ".json");
  nlohmann::json j;
  in >> j;
  DeproModel m;
  m.cfg.vocab = j.at("vocab").get<int>();
  m.cfg.d_emb = j.at("d_emb").get<int>();
  m.cfg.kslots = j.at("kslots").get<int>();
  m.cfg.m_z = j.at("m_z").get<int>();
  m.cfg.n_classes = j.at("n_classes").get<int>();
  m.cfg.seed = j.at("seed").get<std::uint64_t>();
  m.params = net::ParamSet::load(prefix + ".ckpt");
  const char* expected[] = {"embed",  "enc1_w", "enc1_b",   "enc2_w",  "enc2_b",
                            "cls_w",  "cls_b",  "critic_w", "critic_b"};
  for (const char* name : expected) {
    require(m.params.index_of(name) >= 0,
            std::string("model::load_model: checkpoint missing ") + name);
  }
  require(m.params.at("embed").rows() == m.cfg.vocab &&
              m.params.at("embed").cols() == m.cfg.d_emb &&
              m.params.at("cls_w").rows() == m.cfg.m_z &&
              m.params.at("cls_w").cols() == m.cfg.n_classes &&
              m.params.at("enc1_w").rows() == m.cfg.d_emb &&
              m.params.at("enc1_w").cols() == m.cfg.m_z / m.cfg.kslots,
          "model::load_model: checkpoint shapes do not match dims");
  return m;
}

}  // namespace depro::model
