#include "mainet/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mainet/error.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"

namespace mainet::fusion {

namespace {

void require_nonempty(const std::vector<Evidence>& evidences, const char* op) {
  if (evidences.empty()) throw ShapeError(std::string(op) + ": at least one evidence required");
  const std::size_t n = evidences[0].p.size();
  for (std::size_t m = 0; m < evidences.size(); ++m) {
    if (evidences[m].p.size() != n)
      throw ShapeError(std::string(op) + ": evidence " + std::to_string(m) + " has " +
                       std::to_string(evidences[m].p.size()) + " classes, expected " +
                       std::to_string(n));
    evidences[m].validate();
  }
}

std::string list_indices(std::size_t count) {
  std::ostringstream os;
  for (std::size_t i = 0; i < count; ++i) os << (i ? ", " : "") << i;
  return os.str();
}

}  // namespace

void Evidence::validate() const {
  if (p.empty()) throw ShapeError("evidence: empty confidence vector");
  double sum = p_global;
  for (double v : p) {
    if (!(v >= 0.0)) throw ConfigError("evidence: negative or NaN confidence");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError("evidence: confidences sum to " + std::to_string(sum) + ", expected 1");
  if (!(weight > 0.0) || weight > 1.0)
    throw ConfigError("evidence: weight " + std::to_string(weight) + " outside (0,1]");
  if (!(reliability >= 0.0) || reliability > 1.0)
    throw ConfigError("evidence: reliability " + std::to_string(reliability) + " outside [0,1]");
}

std::vector<double> er_combine(const std::vector<Evidence>& evidences) {
  require_nonempty(evidences, "er_combine");
  const std::size_t n_classes = evidences[0].p.size();

  // Per-class support product and the all-ignorance product, both carrying
  // the c_rw normalization factors (they cancel in the final ratio).
  std::vector<double> support(n_classes, 1.0);
  double ignorance = 1.0;
  for (const Evidence& e : evidences) {
    const double c_rw = 1.0 / (1.0 + e.weight - e.reliability);
    for (std::size_t n = 0; n < n_classes; ++n)
      support[n] *= c_rw * (1.0 - e.reliability + e.reliability * e.weight * e.p[n]);
    ignorance *= c_rw * (1.0 - e.reliability);
  }

  double sum_support = 0.0;
  for (double s : support) sum_support += s;
  const double scale = sum_support - static_cast<double>(n_classes - 1) * ignorance;
  if (!(scale > 0.0))
    throw DegenerateCombinationError("er_combine: no class retains support; evidences " +
                                     list_indices(evidences.size()));
  const double norm = 1.0 / scale;  // L of the closed form

  const double residual = 1.0 - norm * ignorance;
  if (!(residual > 1e-300))
    throw DegenerateCombinationError("er_combine: no class retains support; evidences " +
                                     list_indices(evidences.size()));

  std::vector<double> joint(n_classes);
  for (std::size_t n = 0; n < n_classes; ++n)
    joint[n] = norm * (support[n] - ignorance) / residual;
  return joint;
}

std::vector<double> ds_combine(const std::vector<Evidence>& evidences) {
  require_nonempty(evidences, "ds_combine");
  const std::size_t n_classes = evidences[0].p.size();
  std::vector<double> joint(n_classes, 1.0);
  for (const Evidence& e : evidences)
    for (std::size_t n = 0; n < n_classes; ++n) joint[n] *= e.p[n];
  double total = 0.0;
  for (double v : joint) total += v;
  if (!(total > 0.0))
    throw DegenerateCombinationError("ds_combine: total conflict, all products vanish; evidences " +
                                     list_indices(evidences.size()));
  for (double& v : joint) v /= total;
  return joint;
}

std::size_t majority_vote(const std::vector<Evidence>& evidences) {
  require_nonempty(evidences, "majority_vote");
  const std::size_t n_classes = evidences[0].p.size();
  std::vector<std::size_t> votes(n_classes, 0);
  for (const Evidence& e : evidences) {
    std::size_t best = 0;
    for (std::size_t n = 1; n < n_classes; ++n)
      if (e.p[n] > e.p[best]) best = n;
    ++votes[best];
  }
  const std::size_t top = *std::max_element(votes.begin(), votes.end());
  std::size_t winner = n_classes;
  double winner_mean = -1.0;
  for (std::size_t n = 0; n < n_classes; ++n) {
    if (votes[n] != top) continue;
    double mean = 0.0;
    for (const Evidence& e : evidences) mean += e.p[n];
    mean /= static_cast<double>(evidences.size());
    if (mean > winner_mean + 1e-15) {  // then lowest class id on exact ties
      winner_mean = mean;
      winner = n;
    }
  }
  return winner;
}

std::vector<double> prob_average(const std::vector<Evidence>& evidences) {
  require_nonempty(evidences, "prob_average");
  const std::size_t n_classes = evidences[0].p.size();
  std::vector<double> joint(n_classes, 0.0);
  for (const Evidence& e : evidences)
    for (std::size_t n = 0; n < n_classes; ++n) joint[n] += e.p[n];
  for (double& v : joint) v /= static_cast<double>(evidences.size());
  return joint;
}

std::vector<double> learned_fusion(const std::vector<Evidence>& evidences, const Tensor& w,
                                   const Tensor& b) {
  require_nonempty(evidences, "learned_fusion");
  std::vector<Tensor> ps;
  for (const Evidence& e : evidences) ps.push_back(Tensor({e.p.size()}, std::vector<double>(e.p)));
  const Tensor joint = learned_fusion_t(ps, w, b, nullptr);
  return joint.data();
}

std::size_t decide(const std::vector<double>& joint) {
  if (joint.empty()) throw ShapeError("decide: empty distribution");
  std::size_t best = 0;
  for (std::size_t n = 1; n < joint.size(); ++n)
    if (joint[n] > joint[best]) best = n;  // strict: ties keep the lowest id
  return best;
}

// -- differentiable path ----------------------------------------------------------

Tensor er_combine_t(const std::vector<EvidenceT>& evidences, GradTape* tape) {
  if (evidences.empty()) throw ShapeError("er_combine: at least one evidence required");
  const std::size_t n_classes = evidences[0].p.dim(0);

  Tensor support;    // [N]
  Tensor ignorance;  // {1}
  for (const EvidenceT& e : evidences) {
    if (e.p.rank() != 1 || e.p.dim(0) != n_classes)
      throw ShapeError("er_combine: evidence confidence shape " + shape_str(e.p.shape()));
    const Tensor rw = ops::mul(e.reliability, e.weight, tape);                       // {1}
    const Tensor one_minus_r = ops::add_scalar(ops::scale(e.reliability, -1.0, tape), 1.0, tape);
    const Tensor factor =
        ops::add_bcast(ops::mul_bcast(e.p, rw, tape), one_minus_r, tape);            // [N]
    support = support.defined() ? ops::mul(support, factor, tape) : factor;
    ignorance = ignorance.defined() ? ops::mul(ignorance, one_minus_r, tape) : one_minus_r;
  }

  const Tensor sum_support = ops::reduce_sum(support, tape);                          // {1}
  const Tensor denom =
      ops::sub(sum_support, ops::scale(ignorance, static_cast<double>(n_classes), tape), tape);
  if (!(denom.item() > 1e-300))
    throw DegenerateCombinationError("er_combine: no class retains support; evidences " +
                                     list_indices(evidences.size()));
  return ops::div_bcast(ops::sub_bcast(support, ignorance, tape), denom, tape);
}

Tensor learned_fusion_t(const std::vector<Tensor>& ps, const Tensor& w, const Tensor& b,
                        GradTape* tape) {
  if (ps.empty()) throw ShapeError("learned_fusion: at least one evidence required");
  const Tensor joined = ops::concat(ps, 0, tape);
  if (w.rank() != 2 || w.dim(0) != joined.dim(0))
    throw ShapeError("learned_fusion: weight " + shape_str(w.shape()) + " does not accept " +
                     std::to_string(joined.dim(0)) + " stacked confidences");
  return ops::softmax(ops::linear(joined, w, b, tape), 0, tape);
}

// -- decision heads ----------------------------------------------------------------

Head Head::init(std::size_t model_width, std::size_t classes, std::uint64_t seed) {
  rng::Xoshiro256 gen(seed);
  Head h;
  h.w = Tensor({model_width, classes});
  const double s = std::sqrt(1.0 / static_cast<double>(model_width));
  for (auto& v : h.w.mutable_data()) v = gen.normal() * s;
  h.w.set_requires_grad(true);
  h.b = Tensor({classes});
  h.b.set_requires_grad(true);
  // sigmoid(2) ~= 0.88: start trusting every modality, let training adjust
  h.w_logit = Tensor::scalar(2.0);
  h.w_logit.set_requires_grad(true);
  h.r_logit = Tensor::scalar(2.0);
  h.r_logit.set_requires_grad(true);
  return h;
}

Head Head::zeros(std::size_t model_width, std::size_t classes) {
  Head h;
  h.w = Tensor({model_width, classes});
  h.w.set_requires_grad(true);
  h.b = Tensor({classes});
  h.b.set_requires_grad(true);
  h.w_logit = Tensor::scalar(0.0);
  h.w_logit.set_requires_grad(true);
  h.r_logit = Tensor::scalar(0.0);
  h.r_logit.set_requires_grad(true);
  return h;
}

EvidenceT Head::forward(const Tensor& tokens, GradTape* tape) const {
  const Tensor pooled = ops::mean_axis0(tokens, tape);
  const Tensor probs = ops::softmax(ops::linear(pooled, w, b, tape), 0, tape);
  return EvidenceT{probs, ops::sigmoid(w_logit, tape), ops::sigmoid(r_logit, tape)};
}

Evidence Head::evaluate(const Tensor& tokens) const {
  const EvidenceT e = forward(tokens, nullptr);
  return Evidence{e.p.data(), 0.0, e.weight.item(), e.reliability.item()};
}

void Head::named_parameters(const std::string& prefix,
                            std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
  out.emplace_back(prefix + ".w_logit", w_logit);
  out.emplace_back(prefix + ".r_logit", r_logit);
}

}  // namespace mainet::fusion
