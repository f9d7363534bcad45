#pragma once

#include "depro/data.hpp"
#include "depro/netcore.hpp"
#include "depro/purify.hpp"
#include "depro/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace depro::model {

struct ModelConfig {
  int vocab = 64;
  int d_emb = 16;
  int kslots = 8;
  int m_z = 16;
  int n_classes = 2;
  std::uint64_t seed = 0;
};

/// Embedding layer (local features T), encoder to the sentence representation
/// Z, classifier head, and the critic used by the InfoNCE estimator.
/// The encoder is a shared two-layer dense stack applied per slot; each slot
/// owns m_z / kslots coordinates of Z. Pooling across slots before the stack
/// would (a) make the loss gradient identical for every slot, blinding the
/// saliency ranking, and (b) wire every slot into every Z coordinate, turning
/// cross-coordinate dependence into an architectural constant that no sample
/// re-weighting could remove. Requires m_z divisible by kslots.
struct DeproModel {
  ModelConfig cfg;
  net::ParamSet params;  // embed, enc1_w, enc1_b, enc2_w, enc2_b, cls_w, cls_b, critic_w, critic_b

  int slot_dim() const { return cfg.m_z / cfg.kslots; }
};

DeproModel make_model(const ModelConfig& cfg);

struct LossConfig {
  double alpha = 1e-4;
  double purify_ratio = 0.7;
  bool use_decorrelation = true;
  bool use_purification = true;
};

/// One forward pass: local features, representation and logits live on the
/// tape; depro_loss appends the objective nodes to the same tape.
struct ForwardPass {
  net::Tape tape;
  std::vector<net::NodeId> param_leaves;  // aligned with params order
  std::vector<net::NodeId> t_slots;       // kslots gather nodes, n x d_emb each
  net::NodeId z = -1;                     // n x m_z
  net::NodeId logits = -1;                // n x n_classes
};

ForwardPass encode(const DeproModel& model, const data::Batch& batch);

/// Representation values only (runs encode and reads Z off the tape).
Mat encode_z(const DeproModel& model, const data::Batch& batch);

struct LossBreakdown {
  net::NodeId loss = -1;
  double total = 0.0;
  double ce_term = 0.0;       // (1/n) sum_i w_i CE_i
  double mi_term = 0.0;       // -alpha * (1/n) sum_i sum_{j in S_i} infonce term; 0 when off
  double infonce_mean = 0.0;  // mean per-(sample, kept slot) estimate; 0 when off
  purify::SaliencyReport saliency;  // empty when purification is off
};

/// Appends the training objective to the pass:
///   (1/n) sum_i [ w_i CE(logits_i, y_i) - alpha * sum_{j in S_i} t_j(i) ]
/// where t_j(i) is sample i's InfoNCE term for slot j against in-batch
/// negatives and S_i is the per-sample top-M saliency selection. The saliency
/// gradients come from a backward pass on the CE term of this same tape; the
/// MI term is skipped entirely when use_purification is false.
LossBreakdown depro_loss(ForwardPass& fp, const DeproModel& model, const data::Batch& batch,
                         const Vec& weights, const LossConfig& cfg);

/// Gradients for every parameter after fp.tape.backward(loss).
std::vector<Mat> param_grads(const ForwardPass& fp);

void save_model(const DeproModel& model, const std::string& prefix);
DeproModel load_model(const std::string& prefix);

}  // namespace depro::model
