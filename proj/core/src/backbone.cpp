#include "mainet/backbone.hpp"

#include <cmath>

#include "mainet/error.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"

namespace mainet::backbone {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, rng::Xoshiro256& gen) {
  Tensor t(std::move(shape));
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.mutable_data()) v = gen.normal() * s;
  t.set_requires_grad(true);
  return t;
}

Tensor zero_param(Shape shape) {
  Tensor t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

void BackboneConfig::validate() const {
  if (large_kernel % 2 == 0) throw ConfigError("backbone: large_kernel must be odd");
  if (dilated_branches.empty()) throw ConfigError("backbone: at least one dilated branch required");
  for (const auto& [k, d] : dilated_branches) {
    if (k % 2 == 0) throw ConfigError("backbone: branch kernel must be odd");
    if (d == 0) throw ConfigError("backbone: branch dilation must be >= 1");
    if (d * (k - 1) + 1 > large_kernel)
      throw ConfigError("backbone: branch (" + std::to_string(k) + "," + std::to_string(d) +
                        ") exceeds the " + std::to_string(large_kernel) + "x" +
                        std::to_string(large_kernel) + " footprint");
  }
  if (blocks_per_stage == 0) throw ConfigError("backbone: blocks_per_stage must be >= 1");
  for (auto c : stage_channels) {
    if (c == 0) throw ConfigError("backbone: stage channels must be >= 1");
    if (c % se_reduction != 0)
      throw ConfigError("backbone: channels " + std::to_string(c) + " not divisible by SE reduction " +
                        std::to_string(se_reduction));
  }
  if (feature_dim % 4 != 0) throw ConfigError("backbone: feature_dim must be divisible by 4");
}

// -- SE block -----------------------------------------------------------------

SeBlock SeBlock::init(std::size_t channels, std::size_t reduction, std::uint64_t seed) {
  if (channels % reduction != 0)
    throw ConfigError("se_block: channels " + std::to_string(channels) +
                      " not divisible by reduction " + std::to_string(reduction));
  rng::Xoshiro256 gen(seed);
  const std::size_t mid = channels / reduction;
  SeBlock se;
  se.w1 = he_normal({channels, mid}, channels, gen);
  se.b1 = zero_param({mid});
  se.w2 = he_normal({mid, channels}, mid, gen);
  se.b2 = zero_param({channels});
  return se;
}

SeBlock SeBlock::zeros(std::size_t channels, std::size_t reduction) {
  if (channels % reduction != 0)
    throw ConfigError("se_block: channels " + std::to_string(channels) +
                      " not divisible by reduction " + std::to_string(reduction));
  const std::size_t mid = channels / reduction;
  return SeBlock{zero_param({channels, mid}), zero_param({mid}), zero_param({mid, channels}),
                 zero_param({channels})};
}

Tensor SeBlock::forward(const Tensor& x, GradTape* tape) const {
  const Tensor squeezed = ops::global_avg_pool(x, tape);
  const Tensor hidden = ops::relu(ops::linear(squeezed, w1, b1, tape), tape);
  const Tensor gates = ops::sigmoid(ops::linear(hidden, w2, b2, tape), tape);
  return ops::scale_channels(x, gates, tape);
}

// -- dilated reparam conv --------------------------------------------------------

DilatedReparamConv DilatedReparamConv::init(
    std::size_t channels, std::size_t large_kernel,
    const std::vector<std::pair<std::size_t, std::size_t>>& specs, std::uint64_t seed) {
  rng::Xoshiro256 gen(seed);
  DilatedReparamConv conv;
  conv.channels = channels;
  conv.large_kernel = large_kernel;
  for (const auto& [k, d] : specs) {
    if (d * (k - 1) + 1 > large_kernel)
      throw ConfigError("dilated_reparam: branch (" + std::to_string(k) + "," + std::to_string(d) +
                        ") exceeds footprint " + std::to_string(large_kernel));
    DilatedBranch br{k, d, he_normal({channels, 1, k, k}, k * k, gen)};
    conv.branches.push_back(std::move(br));
  }
  return conv;
}

DilatedReparamConv DilatedReparamConv::zeros(
    std::size_t channels, std::size_t large_kernel,
    const std::vector<std::pair<std::size_t, std::size_t>>& specs) {
  DilatedReparamConv conv;
  conv.channels = channels;
  conv.large_kernel = large_kernel;
  for (const auto& [k, d] : specs) {
    if (d * (k - 1) + 1 > large_kernel)
      throw ConfigError("dilated_reparam: branch (" + std::to_string(k) + "," + std::to_string(d) +
                        ") exceeds footprint " + std::to_string(large_kernel));
    conv.branches.push_back(DilatedBranch{k, d, zero_param({channels, 1, k, k})});
  }
  return conv;
}

Tensor DilatedReparamConv::forward(const Tensor& x, GradTape* tape) const {
  Tensor acc;
  for (const auto& br : branches) {
    ops::Conv2dSpec spec;
    spec.stride = 1;
    spec.padding = br.dilation * (br.kernel - 1) / 2;  // preserves spatial dims
    spec.dilation = br.dilation;
    spec.depthwise = true;
    Tensor y = ops::conv2d(x, br.weight, spec, tape);
    acc = acc.defined() ? ops::add(acc, y, tape) : y;
  }
  return acc;
}

Tensor DilatedReparamConv::merged_kernel() const {
  Tensor merged({channels, 1, large_kernel, large_kernel});
  auto& mv = merged.mutable_data();
  const long center = static_cast<long>(large_kernel - 1) / 2;
  for (const auto& br : branches) {
    const long half = static_cast<long>(br.kernel - 1) / 2;
    const auto& wv = br.weight.data();
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t u = 0; u < br.kernel; ++u)
        for (std::size_t v = 0; v < br.kernel; ++v) {
          const long y = center + static_cast<long>(br.dilation) * (static_cast<long>(u) - half);
          const long x = center + static_cast<long>(br.dilation) * (static_cast<long>(v) - half);
          mv[(c * large_kernel + static_cast<std::size_t>(y)) * large_kernel +
             static_cast<std::size_t>(x)] += wv[(c * br.kernel + u) * br.kernel + v];
        }
  }
  return merged;
}

Tensor DilatedReparamConv::forward_merged(const Tensor& x) const {
  ops::Conv2dSpec spec;
  spec.stride = 1;
  spec.padding = (large_kernel - 1) / 2;
  spec.dilation = 1;
  spec.depthwise = true;
  return ops::conv2d(x, merged_kernel(), spec);
}

// -- residual block ---------------------------------------------------------------

Tensor Block::forward(const Tensor& x, GradTape* tape) const {
  Tensor h = dw.forward(x, tape);
  h = se.forward(h, tape);
  ops::Conv2dSpec pw;  // 1x1
  h = ops::add_channel_bias(ops::conv2d(h, pw1, pw, tape), pw1_b, tape);
  h = ops::relu(h, tape);
  h = ops::add_channel_bias(ops::conv2d(h, pw2, pw, tape), pw2_b, tape);
  return ops::add(x, h, tape);
}

// -- backbone ---------------------------------------------------------------------

namespace {

Block make_block(std::size_t channels, const BackboneConfig& cfg, std::uint64_t seed, bool zero) {
  Block b;
  if (zero) {
    b.dw = DilatedReparamConv::zeros(channels, cfg.large_kernel, cfg.dilated_branches);
    b.se = SeBlock::zeros(channels, cfg.se_reduction);
    b.pw1 = zero_param({channels, channels, 1, 1});
    b.pw2 = zero_param({channels, channels, 1, 1});
  } else {
    b.dw = DilatedReparamConv::init(channels, cfg.large_kernel, cfg.dilated_branches,
                                    rng::mix(seed, 1));
    b.se = SeBlock::init(channels, cfg.se_reduction, rng::mix(seed, 2));
    rng::Xoshiro256 gen(rng::mix(seed, 3));
    b.pw1 = he_normal({channels, channels, 1, 1}, channels, gen);
    b.pw2 = he_normal({channels, channels, 1, 1}, channels, gen);
  }
  b.pw1_b = zero_param({channels});
  b.pw2_b = zero_param({channels});
  return b;
}

Backbone make_backbone(const BackboneConfig& cfg, std::size_t in_channels, std::uint64_t seed,
                       bool zero) {
  cfg.validate();
  if (in_channels == 0 || in_channels > 3)
    throw ConfigError("backbone: 1, 2 or 3 input channels supported");
  Backbone bb;
  bb.cfg = cfg;
  bb.in_channels = in_channels;

  rng::Xoshiro256 gen(rng::mix(seed, 100));
  bb.stem_w = zero ? zero_param({cfg.stage_channels[0], in_channels, 3, 3})
                   : he_normal({cfg.stage_channels[0], in_channels, 3, 3}, in_channels * 9, gen);
  bb.stem_b = zero_param({cfg.stage_channels[0]});

  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t k = 0; k < cfg.blocks_per_stage; ++k)
      bb.stages[s].push_back(
          make_block(cfg.stage_channels[s], cfg, rng::mix(seed, 200 + s * 16 + k), zero));

  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t cin = cfg.stage_channels[s], cout = cfg.stage_channels[s + 1];
    bb.down_w[s] = zero ? zero_param({cout, cin, 3, 3})
                        : he_normal({cout, cin, 3, 3}, cin * 9, gen);
    bb.down_b[s] = zero_param({cout});
  }
  return bb;
}

}  // namespace

Backbone Backbone::init(const BackboneConfig& cfg, std::size_t in_channels, std::uint64_t seed) {
  return make_backbone(cfg, in_channels, seed, false);
}

Backbone Backbone::zeros(const BackboneConfig& cfg, std::size_t in_channels) {
  return make_backbone(cfg, in_channels, 0, true);
}

StageOutputs Backbone::forward_stages(const Tensor& map, GradTape* tape) const {
  if (map.rank() != 3 || map.dim(0) != in_channels || map.dim(1) != cfg.input_size ||
      map.dim(2) != cfg.input_size)
    throw ShapeError("backbone: expected [" + std::to_string(in_channels) + "," +
                     std::to_string(cfg.input_size) + "," + std::to_string(cfg.input_size) +
                     "], got " + shape_str(map.shape()));

  ops::Conv2dSpec stride2;
  stride2.stride = 2;
  stride2.padding = 1;

  Tensor h = ops::add_channel_bias(ops::conv2d(map, stem_w, stride2, tape), stem_b, tape);

  StageOutputs out;
  for (std::size_t s = 0; s < 4; ++s) {
    for (const auto& block : stages[s]) h = block.forward(h, tape);
    out.f[s] = h;
    if (s < 3)
      h = ops::add_channel_bias(ops::conv2d(h, down_w[s], stride2, tape), down_b[s], tape);
  }
  return out;
}

void Backbone::named_parameters(const std::string& prefix,
                                std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".stem.w", stem_w);
  out.emplace_back(prefix + ".stem.b", stem_b);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t k = 0; k < stages[s].size(); ++k) {
      const std::string base = prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(k);
      const Block& blk = stages[s][k];
      for (std::size_t br = 0; br < blk.dw.branches.size(); ++br)
        out.emplace_back(base + ".dw.branch" + std::to_string(br), blk.dw.branches[br].weight);
      out.emplace_back(base + ".se.w1", blk.se.w1);
      out.emplace_back(base + ".se.b1", blk.se.b1);
      out.emplace_back(base + ".se.w2", blk.se.w2);
      out.emplace_back(base + ".se.b2", blk.se.b2);
      out.emplace_back(base + ".pw1.w", blk.pw1);
      out.emplace_back(base + ".pw1.b", blk.pw1_b);
      out.emplace_back(base + ".pw2.w", blk.pw2);
      out.emplace_back(base + ".pw2.b", blk.pw2_b);
    }
  for (std::size_t s = 0; s < 3; ++s) {
    out.emplace_back(prefix + ".down" + std::to_string(s) + ".w", down_w[s]);
    out.emplace_back(prefix + ".down" + std::to_string(s) + ".b", down_b[s]);
  }
}

// -- stage fusion ----------------------------------------------------------------

StageFuser StageFuser::init(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  rng::Xoshiro256 gen(seed);
  StageFuser f;
  const std::size_t slice = cfg.feature_dim / 4;
  for (std::size_t s = 0; s < 4; ++s) {
    f.w[s] = he_normal({cfg.stage_channels[s], slice}, cfg.stage_channels[s], gen);
    f.b[s] = zero_param({slice});
  }
  return f;
}

StageFuser StageFuser::zeros(const BackboneConfig& cfg) {
  cfg.validate();
  StageFuser f;
  const std::size_t slice = cfg.feature_dim / 4;
  for (std::size_t s = 0; s < 4; ++s) {
    f.w[s] = zero_param({cfg.stage_channels[s], slice});
    f.b[s] = zero_param({slice});
  }
  return f;
}

Tensor StageFuser::fuse(const StageOutputs& s, GradTape* tape) const {
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < 4; ++i) {
    if (!s.f[i].defined()) throw ShapeError("fuse_stages: missing stage output " + std::to_string(i));
    const Tensor pooled = ops::global_avg_pool(s.f[i], tape);
    parts.push_back(ops::linear(pooled, w[i], b[i], tape));
  }
  return ops::concat(parts, 0, tape);
}

void StageFuser::named_parameters(const std::string& prefix,
                                  std::vector<std::pair<std::string, Tensor>>& out) const {
  for (std::size_t s = 0; s < 4; ++s) {
    out.emplace_back(prefix + ".proj" + std::to_string(s) + ".w", w[s]);
    out.emplace_back(prefix + ".proj" + std::to_string(s) + ".b", b[s]);
  }
}

}  // namespace mainet::backbone
