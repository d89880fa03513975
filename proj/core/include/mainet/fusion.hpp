#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mainet/tape.hpp"
#include "mainet/tensor.hpp"

namespace mainet::fusion {

/// One modality's classification result treated as a body of evidence over
/// the class frame: per-class confidences, a residual global-ignorance mass
/// (always zero when produced by a softmax head), a weight w in (0,1] and a
/// reliability r in [0,1].
struct Evidence {
  std::vector<double> p;
  double p_global = 0.0;
  double weight = 1.0;
  double reliability = 1.0;

  void validate() const;  // ranges and sum-to-one within 1e-9
};

/// Evidential-reasoning combination of M evidences into joint per-class
/// confidences.
///
/// Each evidence contributes a per-class support factor
///   c_m * (1 - r_m + alpha_{n,m}),   c_m = 1/(1 + w_m - r_m),
/// with the reliability-discounted weighted belief alpha_{n,m} = r_m * w_m *
/// p_{n,m}; the joint confidence divides the product of factors minus the
/// all-ignorance product by its sum over classes. Discounting the weighted
/// belief by r makes a fully unreliable evidence (r = 0) drop out of the
/// combination entirely, while r = 1 for every evidence reduces the rule to
/// Dempster's normalized product (the w and c factors cancel).
///
/// Throws DegenerateCombinationError when no class retains support (total
/// conflict between fully reliable evidences, or every r = 0).
std::vector<double> er_combine(const std::vector<Evidence>& evidences);

/// Dempster's orthogonal sum over singleton masses: joint_n proportional to
/// the product of p_{n,m}. Weight/reliability are ignored. Throws
/// DegenerateCombinationError on total conflict.
std::vector<double> ds_combine(const std::vector<Evidence>& evidences);

/// Plurality vote over per-evidence argmaxes. Ties break by highest mean
/// confidence among the tied classes, then lowest class id.
std::size_t majority_vote(const std::vector<Evidence>& evidences);

/// Elementwise mean of the confidence vectors.
std::vector<double> prob_average(const std::vector<Evidence>& evidences);

/// softmax(W . concat(p_1..p_M) + b) with W of shape [M*N, N].
std::vector<double> learned_fusion(const std::vector<Evidence>& evidences, const Tensor& w,
                                   const Tensor& b);

/// Argmax; ties break toward the lowest class id.
std::size_t decide(const std::vector<double>& joint);

// -- differentiable path -------------------------------------------------------

/// Tensor form of one evidence: p is [N]; weight/reliability are
/// single-element tensors already squashed into their valid ranges.
struct EvidenceT {
  Tensor p;
  Tensor weight;
  Tensor reliability;
};

/// Same combination rule as er_combine, composed from differentiable ops so
/// gradients reach p, w and r. (The c_m factors cancel in the closed-form
/// ratio and are omitted here.)
Tensor er_combine_t(const std::vector<EvidenceT>& evidences, GradTape* tape = nullptr);

Tensor learned_fusion_t(const std::vector<Tensor>& ps, const Tensor& w, const Tensor& b,
                        GradTape* tape = nullptr);

// -- decision heads -------------------------------------------------------------

/// Per-modality decision network: mean-pool tokens, linear d_m -> N, softmax.
/// Carries unconstrained weight/reliability logits, squashed by sigmoid.
struct Head {
  Tensor w, b;             // [d_m, N], [N]
  Tensor w_logit, r_logit;  // {1} each

  static Head init(std::size_t model_width, std::size_t classes, std::uint64_t seed);
  static Head zeros(std::size_t model_width, std::size_t classes);

  EvidenceT forward(const Tensor& tokens, GradTape* tape = nullptr) const;
  Evidence evaluate(const Tensor& tokens) const;  // plain, no tape

  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

}  // namespace mainet::fusion
