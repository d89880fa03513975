#include "mainet/verify.hpp"

#include <cmath>
#include <sstream>

#include "mainet/arpm.hpp"
#include "mainet/backbone.hpp"
#include "mainet/data.hpp"
#include "mainet/fusion.hpp"
#include "mainet/grad_check.hpp"
#include "mainet/metrics.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"
#include "mainet/serialize.hpp"

namespace mainet::verify {

namespace {

Tensor random_tensor(Shape shape, rng::Xoshiro256& gen, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = gen.normal() * scale;
  return t;
}

double max_abs_rel(const std::vector<double>& got, const std::vector<double>& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max({std::fabs(got[i]), std::fabs(want[i]), 1e-12});
    worst = std::max(worst, std::fabs(got[i] - want[i]) / denom);
  }
  return worst;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

CheckResult check(const std::string& name, double worst, double tol) {
  return {name, worst <= tol, "max err " + fmt(worst) + " (tol " + fmt(tol) + ")"};
}

// -- independent reference computations -------------------------------------------

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

std::vector<double> naive_depthwise(const std::vector<double>& x, std::size_t c, std::size_t h,
                                    std::size_t w, const std::vector<double>& ker, std::size_t k,
                                    std::size_t pad, std::size_t dil) {
  const std::size_t oh = (h + 2 * pad - dil * (k - 1) - 1) + 1;
  const std::size_t ow = (w + 2 * pad - dil * (k - 1) - 1) + 1;
  std::vector<double> out(c * oh * ow, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t u = 0; u < k; ++u)
          for (std::size_t v = 0; v < k; ++v) {
            const long iy = static_cast<long>(i) - static_cast<long>(pad) +
                            static_cast<long>(u * dil);
            const long ix = static_cast<long>(j) - static_cast<long>(pad) +
                            static_cast<long>(v * dil);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
              continue;
            acc += x[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] *
                   ker[(ch * k + u) * k + v];
          }
        out[(ch * oh + i) * ow + j] = acc;
      }
  return out;
}

std::vector<double> reference_mhca(const std::vector<double>& xq, std::size_t lq,
                                   const std::vector<double>& xkv, std::size_t lkv,
                                   const arpm::AttentionParams& p,
                                   const arpm::AttentionConfig& cfg) {
  const std::size_t dm = cfg.model_width, dk = cfg.head_width(), heads = cfg.heads;
  std::vector<double> merged(lq * heads * dk, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto& wq = p.wq[h].data();
    const auto& wk = p.wk[h].data();
    const auto& wv = p.wv[h].data();
    const auto q = naive_matmul(xq, wq, lq, dm, dk);
    const auto k = naive_matmul(xkv, wk, lkv, dm, dk);
    const auto v = naive_matmul(xkv, wv, lkv, dm, dk);
    for (std::size_t i = 0; i < lq; ++i) {
      std::vector<double> logits(lkv);
      double mx = -1e300;
      for (std::size_t j = 0; j < lkv; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < dk; ++t) acc += q[i * dk + t] * k[j * dk + t];
        logits[j] = acc / std::sqrt(static_cast<double>(dk));
        mx = std::max(mx, logits[j]);
      }
      double denom = 0.0;
      for (auto& lv : logits) {
        lv = std::exp(lv - mx);
        denom += lv;
      }
      for (std::size_t t = 0; t < dk; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < lkv; ++j) acc += (logits[j] / denom) * v[j * dk + t];
        merged[i * heads * dk + h * dk + t] = acc;
      }
    }
  }
  return naive_matmul(merged, p.wo.data(), lq, heads * dk, dm);
}

std::vector<double> reference_er(const std::vector<fusion::Evidence>& es) {
  const std::size_t n = es[0].p.size();
  std::vector<double> num(n, 1.0);
  double ign = 1.0;
  for (const auto& e : es) {
    for (std::size_t c = 0; c < n; ++c)
      num[c] *= 1.0 - e.reliability + e.reliability * e.weight * e.p[c];
    ign *= 1.0 - e.reliability;
  }
  double total = 0.0;
  for (double v : num) total += v;
  std::vector<double> joint(n);
  for (std::size_t c = 0; c < n; ++c)
    joint[c] = (num[c] - ign) / (total - static_cast<double>(n) * ign);
  return joint;
}

// -- individual checks --------------------------------------------------------------

CheckResult matmul_check(rng::Xoshiro256& gen) {
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Tensor a = random_tensor({7, 5}, gen);
    const Tensor b = random_tensor({5, 3}, gen);
    const Tensor c = ops::matmul(a, b);
    worst = std::max(worst, max_abs_rel(c.data(), naive_matmul(a.data(), b.data(), 7, 5, 3)));
  }
  return check("matmul vs naive triple loop", worst, 1e-12);
}

CheckResult softmax_check(rng::Xoshiro256& gen) {
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor x = random_tensor({6}, gen, 3.0);
    const Tensor s = ops::softmax(x, 0);
    double denom = 0.0;
    double mx = -1e300;
    for (double v : x.data()) mx = std::max(mx, v);
    std::vector<double> want(6);
    for (std::size_t i = 0; i < 6; ++i) denom += std::exp(x.data()[i] - mx);
    for (std::size_t i = 0; i < 6; ++i) want[i] = std::exp(x.data()[i] - mx) / denom;
    worst = std::max(worst, max_abs_rel(s.data(), want));
    double sum = 0.0;
    for (double v : s.data()) sum += v;
    worst = std::max(worst, std::fabs(sum - 1.0));
  }
  return check("softmax vs direct evaluation", worst, 1e-12);
}

CheckResult conv_check(rng::Xoshiro256& gen) {
  double worst = 0.0;
  const Tensor x = random_tensor({4, 16, 16}, gen);
  const Tensor k = random_tensor({4, 1, 13, 13}, gen);
  ops::Conv2dSpec spec;
  spec.padding = 6;
  spec.depthwise = true;
  const Tensor y = ops::conv2d(x, k, spec);
  worst = max_abs_rel(y.data(), naive_depthwise(x.data(), 4, 16, 16, k.data(), 13, 6, 1));
  return check("conv2d 13x13 depthwise vs nested loops", worst, 1e-10);
}

CheckResult pool_check(rng::Xoshiro256& gen) {
  const Tensor x = random_tensor({2, 7, 7}, gen);
  const Tensor y = ops::adaptive_avg_pool(x, 3, 3);
  double worst = 0.0;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const std::size_t y0 = i * 7 / 3, y1 = ((i + 1) * 7 + 2) / 3;
        const std::size_t x0 = j * 7 / 3, x1 = ((j + 1) * 7 + 2) / 3;
        double acc = 0.0;
        for (std::size_t yy = y0; yy < y1; ++yy)
          for (std::size_t xx = x0; xx < x1; ++xx) acc += x(c, yy, xx);
        acc /= static_cast<double>((y1 - y0) * (x1 - x0));
        worst = std::max(worst, std::fabs(y(c, i, j) - acc));
      }
  return check("adaptive_avg_pool vs window enumeration", worst, 1e-12);
}

CheckResult reparam_check(rng::Xoshiro256& gen) {
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<std::pair<std::size_t, std::size_t>> specs = {{13, 1}, {5, 2}, {3, 3}};
    if (rep % 3 == 1) specs = {{13, 1}, {3, 2}};
    if (rep % 3 == 2) specs = {{1, 1}, {3, 4}, {5, 3}};
    auto conv = backbone::DilatedReparamConv::init(3, 13, specs, gen.next());
    const Tensor x = random_tensor({3, 12, 12}, gen);
    const Tensor multi = conv.forward(x);
    const Tensor merged = conv.forward_merged(x);
    worst = std::max(worst, max_abs_rel(multi.data(), merged.data()));
  }
  return check("reparam merged kernel vs multi-branch forward", worst, 1e-10);
}

CheckResult attention_check(rng::Xoshiro256& gen) {
  arpm::AttentionConfig cfg;
  cfg.model_width = 32;
  cfg.heads = 4;
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto p = arpm::AttentionParams::init(cfg, gen.next());
    const Tensor xq = random_tensor({5, 32}, gen);
    const Tensor xkv = random_tensor({3, 32}, gen);
    worst = std::max(
        worst, max_abs_rel(arpm::mhsa(xq, p, cfg).data(),
                           reference_mhca(xq.data(), 5, xq.data(), 5, p, cfg)));
    worst = std::max(
        worst, max_abs_rel(arpm::mhca(xq, xkv, p, cfg).data(),
                           reference_mhca(xq.data(), 5, xkv.data(), 3, p, cfg)));
  }
  return check("mhsa/mhca vs per-head loop reference", worst, 1e-10);
}

CheckResult residual_identity_check(rng::Xoshiro256& gen) {
  arpm::AttentionConfig cfg;
  cfg.model_width = 32;
  cfg.heads = 4;
  const auto zeros = arpm::ArpmParams::zeros(cfg);
  double worst = 0.0;
  const std::array<Tensor, 3> fs = {random_tensor({4, 32}, gen), random_tensor({4, 32}, gen),
                                    random_tensor({4, 32}, gen)};
  const auto out = arpm::arpm_forward(fs, zeros);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t i = 0; i < fs[m].size(); ++i)
      worst = std::max(worst, std::fabs(out[m].data()[i] - fs[m].data()[i]));
  return {("arpm zero-parameter residual identity"), worst == 0.0, "max abs diff " + fmt(worst)};
}

CheckResult grad_elementary_check(rng::Xoshiro256& gen) {
  double worst = 0.0;
  {
    const Tensor b = random_tensor({4, 3}, gen);
    worst = std::max(worst, grad_check(
                                [&](const Tensor& t, GradTape* tape) {
                                  return ops::reduce_sum(
                                      ops::sigmoid(ops::matmul(t, b, tape), tape), tape);
                                },
                                random_tensor({2, 4}, gen)));
  }
  {
    const Tensor k = random_tensor({2, 1, 3, 3}, gen);
    ops::Conv2dSpec spec;
    spec.padding = 2;
    spec.dilation = 2;
    spec.depthwise = true;
    worst = std::max(worst, grad_check(
                                [&](const Tensor& t, GradTape* tape) {
                                  return ops::reduce_mean(ops::conv2d(t, k, spec, tape), tape);
                                },
                                random_tensor({2, 6, 6}, gen)));
  }
  {
    worst = std::max(worst, grad_check(
                                [&](const Tensor& t, GradTape* tape) {
                                  return ops::cross_entropy(ops::softmax(t, 0, tape), 1, tape);
                                },
                                random_tensor({5}, gen)));
  }
  {
    worst = std::max(worst, grad_check(
                                [&](const Tensor& t, GradTape* tape) {
                                  return ops::reduce_sum(ops::adaptive_avg_pool(t, 3, 5, tape), tape);
                                },
                                random_tensor({1, 7, 9}, gen)));
  }
  return check("elementary op gradients vs central differences", worst, 1e-6);
}

CheckResult grad_pipeline_check(rng::Xoshiro256& gen) {
  arpm::AttentionConfig cfg;
  cfg.model_width = 32;
  cfg.heads = 4;
  const auto params = arpm::ArpmParams::init(cfg, gen.next());
  const auto head = fusion::Head::init(cfg.model_width, 3, gen.next());
  const Tensor fb = random_tensor({4, 32}, gen, 0.5);
  const Tensor fc = random_tensor({4, 32}, gen, 0.5);
  const double worst = grad_check(
      [&](const Tensor& t, GradTape* tape) {
        const auto enhanced = arpm::arpm_forward({t, fb, fc}, params, tape);
        Tensor loss = Tensor::scalar(0.0);
        for (std::size_t m = 0; m < 3; ++m) {
          const fusion::EvidenceT e = head.forward(enhanced[m], tape);
          loss = ops::add(loss, ops::cross_entropy(e.p, m % 3, tape), tape);
        }
        return loss;
      },
      random_tensor({4, 32}, gen, 0.5), 1e-5);
  return check("arpm+head+loss gradient vs central differences", worst, 1e-4);
}

CheckResult er_properties_check(rng::Xoshiro256& gen) {
  double worst = 0.0;
  std::string fail;
  for (int rep = 0; rep < 1000 && fail.empty(); ++rep) {
    const std::size_t m_count = 1 + gen.below(4);
    std::vector<fusion::Evidence> es;
    for (std::size_t m = 0; m < m_count; ++m) {
      fusion::Evidence e;
      double sum = 0.0;
      for (int c = 0; c < 3; ++c) {
        e.p.push_back(0.05 + gen.uniform());
        sum += e.p.back();
      }
      for (auto& v : e.p) v /= sum;
      e.weight = 0.05 + 0.95 * gen.uniform();
      e.reliability = 0.05 + 0.95 * gen.uniform();
      es.push_back(std::move(e));
    }

    const auto joint = fusion::er_combine(es);
    double total = 0.0;
    for (double v : joint) total += v;
    worst = std::max(worst, std::fabs(total - 1.0));

    if (m_count == 1) worst = std::max(worst, max_abs_rel(joint, es[0].p));

    auto perm = es;
    std::reverse(perm.begin(), perm.end());
    worst = std::max(worst, max_abs_rel(joint, fusion::er_combine(perm)));

    auto rel = es;
    for (auto& e : rel) e.reliability = 1.0;
    worst = std::max(worst, max_abs_rel(fusion::er_combine(rel), fusion::ds_combine(rel)));

    if (m_count >= 2) {
      auto neut = es;
      neut[0].reliability = 0.0;
      const auto rest = std::vector<fusion::Evidence>(es.begin() + 1, es.end());
      worst = std::max(worst, max_abs_rel(fusion::er_combine(neut), fusion::er_combine(rest)));
    }

    worst = std::max(worst, max_abs_rel(joint, reference_er(es)));
  }
  return check("er_combine identity/permutation/reduction/neutrality", worst, 1e-9);
}

CheckResult er_gradient_check(rng::Xoshiro256& gen) {
  // The probe packs 3 evidences as [9 p-logits, 3 w-logits, 3 r-logits];
  // fixed selection matrices slice it differentiably.
  const double worst = grad_check(
      [&](const Tensor& t, GradTape* tape) {
        std::vector<fusion::EvidenceT> es;
        for (std::size_t m = 0; m < 3; ++m) {
          Tensor sel_p({15, 3});
          for (std::size_t c = 0; c < 3; ++c) sel_p.mutable_data()[(m * 3 + c) * 3 + c] = 1.0;
          Tensor sel_w({15, 1});
          sel_w.mutable_data()[9 + m] = 1.0;
          Tensor sel_r({15, 1});
          sel_r.mutable_data()[12 + m] = 1.0;
          fusion::EvidenceT e;
          e.p = ops::softmax(ops::linear(t, sel_p, Tensor(), tape), 0, tape);
          e.weight = ops::sigmoid(ops::linear(t, sel_w, Tensor(), tape), tape);
          e.reliability = ops::sigmoid(ops::linear(t, sel_r, Tensor(), tape), tape);
          es.push_back(std::move(e));
        }
        const Tensor joint = fusion::er_combine_t(es, tape);
        return ops::cross_entropy(joint, 1, tape);
      },
      random_tensor({15}, gen, 0.8));
  return check("er_combine gradient w.r.t. p, w, r", worst, 1e-5);
}

CheckResult split_check() {
  std::vector<int> labels;
  labels.insert(labels.end(), 2409, 0);
  labels.insert(labels.end(), 2353, 1);
  labels.insert(labels.end(), 2327, 2);
  const auto split = data::split_dataset(labels, {0.8, 0.1, 0.1}, 5);
  const bool pass = split.train.size() == 5669 && split.val.size() == 710 &&
                    split.test.size() == 710;
  return {"split reproduces the reference 5669/710/710 distribution", pass,
          std::to_string(split.train.size()) + "/" + std::to_string(split.val.size()) + "/" +
              std::to_string(split.test.size())};
}

CheckResult metrics_check(rng::Xoshiro256& gen) {
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    metrics::Confusion c(3, std::vector<double>(3, 0.0));
    for (auto& row : c)
      for (auto& v : row) v = static_cast<double>(gen.below(40));
    c[0][0] += 1.0;  // avoid the all-zero matrix
    const auto rep_out = metrics::compute_metrics(c);
    double total = 0.0, trace = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        total += c[i][j];
        if (i == j) trace += c[i][j];
      }
    worst = std::max(worst, std::fabs(rep_out.accuracy - 100.0 * trace / total));
    double f1_sum = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      double tp = c[k][k], fp = 0.0, fn = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        if (i != k) {
          fp += c[i][k];
          fn += c[k][i];
        }
      }
      const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      f1_sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    }
    worst = std::max(worst, std::fabs(rep_out.f1 - 100.0 * f1_sum / 3.0));
  }
  return check("metrics vs per-formula re-evaluation", worst, 1e-9);
}

CheckResult serialization_check(rng::Xoshiro256& gen) {
  const Tensor t = random_tensor({3, 4, 5}, gen);
  std::ostringstream os;
  io::write_tensor(os, t);
  std::istringstream is(os.str());
  const Tensor back = io::read_tensor(is);
  const bool same = back.shape() == t.shape() && back.data() == t.data();
  return {"tensor serialization round trip", same, same ? "bit exact" : "mismatch"};
}

CheckResult determinism_check() {
  data::SynthConfig cfg;
  cfg.n_samples = 12;
  cfg.map_size = 16;
  cfg.seed = 99;
  const auto a = data::gen_synthetic(cfg);
  const auto b = data::gen_synthetic(cfg);
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i)
    same = a[i].label == b[i].label && a[i].image_map.data() == b[i].image_map.data() &&
           a[i].audio_map.data() == b[i].audio_map.data() &&
           a[i].wave_map->data() == b[i].wave_map->data();
  return {"synthetic generation determinism", same, same ? "bit identical" : "mismatch"};
}

}  // namespace

std::vector<CheckResult> run_all(std::uint64_t seed) {
  rng::Xoshiro256 gen(rng::mix(seed, 0xC0FFEE));
  std::vector<CheckResult> results;
  results.push_back(matmul_check(gen));
  results.push_back(softmax_check(gen));
  results.push_back(conv_check(gen));
  results.push_back(pool_check(gen));
  results.push_back(reparam_check(gen));
  results.push_back(attention_check(gen));
  results.push_back(residual_identity_check(gen));
  results.push_back(grad_elementary_check(gen));
  results.push_back(grad_pipeline_check(gen));
  results.push_back(er_properties_check(gen));
  results.push_back(er_gradient_check(gen));
  results.push_back(split_check());
  results.push_back(metrics_check(gen));
  results.push_back(serialization_check(gen));
  results.push_back(determinism_check());
  return results;
}

}  // namespace mainet::verify
