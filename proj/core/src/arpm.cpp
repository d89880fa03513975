#include "mainet/arpm.hpp"

#include <cmath>

#include "mainet/error.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"

namespace mainet::arpm {

namespace {

Tensor normal_param(Shape shape, double stddev, rng::Xoshiro256& gen) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = gen.normal() * stddev;
  t.set_requires_grad(true);
  return t;
}

Tensor zero_param(Shape shape) {
  Tensor t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

void require_tokens(const Tensor& x, const AttentionConfig& cfg, const char* op) {
  if (x.rank() != 2 || x.dim(1) != cfg.model_width)
    throw ShapeError(std::string(op) + ": token sequence [L," +
                     std::to_string(cfg.model_width) + "] required, got " +
                     shape_str(x.shape()));
  if (x.dim(0) == 0) throw ShapeError(std::string(op) + ": empty token sequence");
}

}  // namespace

void AttentionConfig::validate() const {
  if (heads == 0 || model_width == 0) throw ConfigError("attention: width and heads must be >= 1");
  if (model_width % heads != 0)
    throw ConfigError("attention: model_width " + std::to_string(model_width) +
                      " not divisible by heads " + std::to_string(heads));
}

AttentionParams AttentionParams::init(const AttentionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  rng::Xoshiro256 gen(seed);
  const std::size_t dm = cfg.model_width, dk = cfg.head_width();
  const double s_in = std::sqrt(1.0 / static_cast<double>(dm));
  AttentionParams p;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    p.wq.push_back(normal_param({dm, dk}, s_in, gen));
    p.wk.push_back(normal_param({dm, dk}, s_in, gen));
    p.wv.push_back(normal_param({dm, dk}, s_in, gen));
  }
  // small output projection: stacked attention blocks start close to the
  // surrounding residual identity, which keeps the deep fusion stack
  // trainable without normalization layers
  p.wo = normal_param({cfg.heads * dk, dm},
                      0.1 * std::sqrt(1.0 / static_cast<double>(cfg.heads * dk)), gen);
  return p;
}

AttentionParams AttentionParams::zeros(const AttentionConfig& cfg) {
  cfg.validate();
  const std::size_t dm = cfg.model_width, dk = cfg.head_width();
  AttentionParams p;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    p.wq.push_back(zero_param({dm, dk}));
    p.wk.push_back(zero_param({dm, dk}));
    p.wv.push_back(zero_param({dm, dk}));
  }
  p.wo = zero_param({cfg.heads * dk, dm});
  return p;
}

void AttentionParams::named_parameters(const std::string& prefix,
                                       std::vector<std::pair<std::string, Tensor>>& out) const {
  for (std::size_t h = 0; h < wq.size(); ++h) {
    out.emplace_back(prefix + ".h" + std::to_string(h) + ".wq", wq[h]);
    out.emplace_back(prefix + ".h" + std::to_string(h) + ".wk", wk[h]);
    out.emplace_back(prefix + ".h" + std::to_string(h) + ".wv", wv[h]);
  }
  out.emplace_back(prefix + ".wo", wo);
}

Tensor mhca(const Tensor& xq, const Tensor& xkv, const AttentionParams& p,
            const AttentionConfig& cfg, GradTape* tape) {
  require_tokens(xq, cfg, "mhca");
  require_tokens(xkv, cfg, "mhca");
  const double scaling = 1.0 / std::sqrt(static_cast<double>(cfg.head_width()));

  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const Tensor q = ops::matmul(xq, p.wq[h], tape);
    const Tensor k = ops::matmul(xkv, p.wk[h], tape);
    const Tensor v = ops::matmul(xkv, p.wv[h], tape);
    const Tensor logits = ops::scale(ops::matmul(q, ops::transpose(k, tape), tape), scaling, tape);
    const Tensor weights = ops::softmax(logits, 1, tape);
    heads.push_back(ops::matmul(weights, v, tape));
  }
  const Tensor merged = ops::concat(heads, 1, tape);
  return ops::matmul(merged, p.wo, tape);
}

Tensor mhsa(const Tensor& x, const AttentionParams& p, const AttentionConfig& cfg, GradTape* tape) {
  require_tokens(x, cfg, "mhsa");
  return mhca(x, x, p, cfg, tape);
}

// -- CAFN ---------------------------------------------------------------------

CafnParams CafnParams::init(const AttentionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  rng::Xoshiro256 gen(seed);
  const std::size_t d2 = 2 * cfg.model_width;
  const std::size_t mid = d2 / 4;
  CafnParams p;
  p.w1 = normal_param({d2, mid}, std::sqrt(2.0 / static_cast<double>(d2)), gen);
  p.b1 = zero_param({mid});
  p.w2 = normal_param({mid, d2}, std::sqrt(2.0 / static_cast<double>(mid)), gen);
  p.b2 = zero_param({d2});
  // small restoring projection, same reasoning as the attention W_O
  p.proj = normal_param({d2, cfg.model_width}, 0.1 * std::sqrt(1.0 / static_cast<double>(d2)), gen);
  p.proj_b = zero_param({cfg.model_width});
  return p;
}

CafnParams CafnParams::zeros(const AttentionConfig& cfg) {
  cfg.validate();
  const std::size_t d2 = 2 * cfg.model_width;
  const std::size_t mid = d2 / 4;
  return CafnParams{zero_param({d2, mid}),            zero_param({mid}),
                    zero_param({mid, d2}),            zero_param({d2}),
                    zero_param({d2, cfg.model_width}), zero_param({cfg.model_width})};
}

void CafnParams::named_parameters(const std::string& prefix,
                                  std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".w1", w1);
  out.emplace_back(prefix + ".b1", b1);
  out.emplace_back(prefix + ".w2", w2);
  out.emplace_back(prefix + ".b2", b2);
  out.emplace_back(prefix + ".proj.w", proj);
  out.emplace_back(prefix + ".proj.b", proj_b);
}

Tensor cafn(const Tensor& fx, const Tensor& fy, const CafnParams& p, const AttentionConfig& cfg,
            GradTape* tape) {
  require_tokens(fx, cfg, "cafn");
  require_tokens(fy, cfg, "cafn");
  if (fx.dim(0) != fy.dim(0))
    throw ShapeError("cafn: token counts differ, " + shape_str(fx.shape()) + " vs " +
                     shape_str(fy.shape()));

  const std::array<Tensor, 2> both{fx, fy};
  const Tensor joined = ops::concat(both, 1, tape);            // [L, 2d]
  const Tensor squeezed = ops::mean_axis0(joined, tape);       // [2d]
  const Tensor hidden = ops::relu(ops::linear(squeezed, p.w1, p.b1, tape), tape);
  const Tensor gates = ops::sigmoid(ops::linear(hidden, p.w2, p.b2, tape), tape);
  const Tensor rescaled = ops::mul_rowvec(joined, gates, tape);
  return ops::linear(rescaled, p.proj, p.proj_b, tape);        // [L, d]
}

// -- DAFN-1 ---------------------------------------------------------------------

Dafn1Params Dafn1Params::init(const AttentionConfig& cfg, std::uint64_t seed) {
  return Dafn1Params{AttentionParams::init(cfg, rng::mix(seed, 0)),
                     AttentionParams::init(cfg, rng::mix(seed, 1)),
                     AttentionParams::init(cfg, rng::mix(seed, 2))};
}

Dafn1Params Dafn1Params::zeros(const AttentionConfig& cfg) {
  return Dafn1Params{AttentionParams::zeros(cfg), AttentionParams::zeros(cfg),
                     AttentionParams::zeros(cfg)};
}

void Dafn1Params::named_parameters(const std::string& prefix,
                                   std::vector<std::pair<std::string, Tensor>>& out) const {
  self_aux.named_parameters(prefix + ".self_aux", out);
  cross.named_parameters(prefix + ".cross", out);
  refine.named_parameters(prefix + ".refine", out);
}

Tensor dafn1(const Tensor& primary, const Tensor& aux, const Dafn1Params& p,
             const AttentionConfig& cfg, GradTape* tape) {
  const Tensor self_enhanced = mhsa(aux, p.self_aux, cfg, tape);
  const Tensor crossed = mhca(self_enhanced, primary, p.cross, cfg, tape);
  return mhsa(ops::add(self_enhanced, crossed, tape), p.refine, cfg, tape);
}

// -- DAFN-2 ---------------------------------------------------------------------

Dafn2Params Dafn2Params::init(const AttentionConfig& cfg, std::uint64_t seed) {
  return Dafn2Params{AttentionParams::init(cfg, rng::mix(seed, 0)),
                     AttentionParams::init(cfg, rng::mix(seed, 1)),
                     CafnParams::init(cfg, rng::mix(seed, 2)),
                     AttentionParams::init(cfg, rng::mix(seed, 3))};
}

Dafn2Params Dafn2Params::zeros(const AttentionConfig& cfg) {
  return Dafn2Params{AttentionParams::zeros(cfg), AttentionParams::zeros(cfg),
                     CafnParams::zeros(cfg), AttentionParams::zeros(cfg)};
}

void Dafn2Params::named_parameters(const std::string& prefix,
                                   std::vector<std::pair<std::string, Tensor>>& out) const {
  cross_fwd.named_parameters(prefix + ".cross_fwd", out);
  cross_rev.named_parameters(prefix + ".cross_rev", out);
  fuse.named_parameters(prefix + ".cafn", out);
  refine.named_parameters(prefix + ".refine", out);
}

Tensor dafn2(const Tensor& f_ab, const Tensor& f_ac, const Dafn2Params& p,
             const AttentionConfig& cfg, GradTape* tape) {
  const Tensor u = mhca(f_ab, f_ac, p.cross_fwd, cfg, tape);
  const Tensor v = mhca(f_ac, f_ab, p.cross_rev, cfg, tape);
  const Tensor fused = cafn(u, v, p.fuse, cfg, tape);
  return mhsa(fused, p.refine, cfg, tape);
}

// -- full mechanism ---------------------------------------------------------------

RotationParams RotationParams::init(const AttentionConfig& cfg, std::uint64_t seed) {
  return RotationParams{Dafn1Params::init(cfg, rng::mix(seed, 0)),
                        Dafn1Params::init(cfg, rng::mix(seed, 1)),
                        CafnParams::init(cfg, rng::mix(seed, 2)),
                        CafnParams::init(cfg, rng::mix(seed, 3)),
                        Dafn2Params::init(cfg, rng::mix(seed, 4))};
}

RotationParams RotationParams::zeros(const AttentionConfig& cfg) {
  return RotationParams{Dafn1Params::zeros(cfg), Dafn1Params::zeros(cfg), CafnParams::zeros(cfg),
                        CafnParams::zeros(cfg), Dafn2Params::zeros(cfg)};
}

void RotationParams::named_parameters(const std::string& prefix,
                                      std::vector<std::pair<std::string, Tensor>>& out) const {
  dafn1_first.named_parameters(prefix + ".dafn1_first", out);
  dafn1_second.named_parameters(prefix + ".dafn1_second", out);
  cafn_first.named_parameters(prefix + ".cafn_first", out);
  cafn_second.named_parameters(prefix + ".cafn_second", out);
  deep.named_parameters(prefix + ".dafn2", out);
}

ArpmParams ArpmParams::init(const AttentionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ArpmParams p;
  p.cfg = cfg;
  for (std::size_t r = 0; r < 3; ++r)
    p.rotations[r] = RotationParams::init(cfg, rng::mix(seed, 10 + r));
  return p;
}

ArpmParams ArpmParams::zeros(const AttentionConfig& cfg) {
  cfg.validate();
  ArpmParams p;
  p.cfg = cfg;
  for (std::size_t r = 0; r < 3; ++r) p.rotations[r] = RotationParams::zeros(cfg);
  return p;
}

void ArpmParams::named_parameters(const std::string& prefix,
                                  std::vector<std::pair<std::string, Tensor>>& out) const {
  for (std::size_t r = 0; r < 3; ++r)
    rotations[r].named_parameters(prefix + ".rot" + std::to_string(r), out);
}

Tensor arpm_enhance(const std::array<Tensor, 3>& features, std::size_t primary,
                    const ArpmParams& p, GradTape* tape) {
  if (primary >= 3) throw ConfigError("arpm: primary modality index out of range");
  const RotationParams& rot = p.rotations[primary];
  const Tensor& f_p = features[primary];
  // auxiliaries in ascending modality order
  std::array<std::size_t, 2> aux{};
  std::size_t n = 0;
  for (std::size_t m = 0; m < 3; ++m)
    if (m != primary) aux[n++] = m;

  const Tensor shallow_first =
      ops::add(dafn1(f_p, features[aux[0]], rot.dafn1_first, p.cfg, tape),
               cafn(f_p, features[aux[0]], rot.cafn_first, p.cfg, tape), tape);
  const Tensor shallow_second =
      ops::add(dafn1(f_p, features[aux[1]], rot.dafn1_second, p.cfg, tape),
               cafn(f_p, features[aux[1]], rot.cafn_second, p.cfg, tape), tape);
  const Tensor deep = dafn2(shallow_first, shallow_second, rot.deep, p.cfg, tape);
  return ops::add(f_p, deep, tape);
}

std::array<Tensor, 3> arpm_forward(const std::array<Tensor, 3>& features, const ArpmParams& p,
                                   GradTape* tape) {
  return {arpm_enhance(features, 0, p, tape), arpm_enhance(features, 1, p, tape),
          arpm_enhance(features, 2, p, tape)};
}

// -- tokenizer ---------------------------------------------------------------------

Tokenizer Tokenizer::init(std::size_t feature_dim, std::size_t tokens, const AttentionConfig& cfg,
                          std::uint64_t seed) {
  if (tokens == 0 || feature_dim % tokens != 0)
    throw ConfigError("tokenizer: feature dim " + std::to_string(feature_dim) +
                      " not divisible by token count " + std::to_string(tokens));
  rng::Xoshiro256 gen(seed);
  Tokenizer t;
  t.tokens = tokens;
  const std::size_t slice = feature_dim / tokens;
  t.w = normal_param({slice, cfg.model_width}, std::sqrt(1.0 / static_cast<double>(slice)), gen);
  t.b = zero_param({cfg.model_width});
  return t;
}

Tokenizer Tokenizer::zeros(std::size_t feature_dim, std::size_t tokens,
                           const AttentionConfig& cfg) {
  if (tokens == 0 || feature_dim % tokens != 0)
    throw ConfigError("tokenizer: feature dim " + std::to_string(feature_dim) +
                      " not divisible by token count " + std::to_string(tokens));
  Tokenizer t;
  t.tokens = tokens;
  t.w = zero_param({feature_dim / tokens, cfg.model_width});
  t.b = zero_param({cfg.model_width});
  return t;
}

Tensor Tokenizer::tokenize(const Tensor& feature, GradTape* tape) const {
  if (feature.rank() != 1 || feature.dim(0) != tokens * w.dim(0))
    throw ShapeError("tokenize: feature " + shape_str(feature.shape()) + " does not split into " +
                     std::to_string(tokens) + " tokens of " + std::to_string(w.dim(0)));
  const Tensor grid = ops::reshape(feature, {tokens, w.dim(0)}, tape);
  return ops::linear(grid, w, b, tape);
}

void Tokenizer::named_parameters(const std::string& prefix,
                                 std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

}  // namespace mainet::arpm
