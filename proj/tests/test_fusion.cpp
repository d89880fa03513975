#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mainet/fusion.hpp"
#include "mainet/grad_check.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"

using namespace mainet;
using namespace mainet::fusion;

namespace {

Evidence make_evidence(std::vector<double> p, double w = 1.0, double r = 1.0) {
  Evidence e;
  e.p = std::move(p);
  e.weight = w;
  e.reliability = r;
  return e;
}

Evidence random_evidence(rng::Xoshiro256& gen, std::size_t classes = 3) {
  Evidence e;
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    e.p.push_back(0.02 + gen.uniform());
    sum += e.p.back();
  }
  for (auto& v : e.p) v /= sum;
  e.weight = 0.05 + 0.95 * gen.uniform();
  e.reliability = 0.05 + 0.95 * gen.uniform();
  return e;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("er_combine: single evidence returns its own distribution for any valid w, r") {
  rng::Xoshiro256 gen(3);
  const std::vector<double> p = {0.7, 0.2, 0.1};
  for (int rep = 0; rep < 50; ++rep) {
    const double w = 0.05 + 0.95 * gen.uniform();
    const double r = 0.05 + 0.95 * gen.uniform();
    const auto joint = er_combine({make_evidence(p, w, r)});
    CHECK(max_abs_diff(joint, p) <= 1e-12);
  }
}

TEST_CASE("er_combine: two certain identical evidences give the normalized product") {
  const auto joint = er_combine({make_evidence({0.9, 0.1}), make_evidence({0.9, 0.1})});
  CHECK(joint[0] == doctest::Approx(0.81 / 0.82).epsilon(1e-12));
  CHECK(joint[1] == doctest::Approx(0.01 / 0.82).epsilon(1e-12));
}

TEST_CASE("er_combine: an evidence with zero reliability drops out of the joint") {
  rng::Xoshiro256 gen(5);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<Evidence> three = {random_evidence(gen), random_evidence(gen),
                                   random_evidence(gen)};
    three[1].reliability = 0.0;
    const std::vector<Evidence> pair = {three[0], three[2]};
    CHECK(max_abs_diff(er_combine(three), er_combine(pair)) <= 1e-9);
  }
}

TEST_CASE("er_combine properties over random evidence sets") {
  rng::Xoshiro256 gen(7);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t m_count = 1 + gen.below(4);
    std::vector<Evidence> es;
    for (std::size_t m = 0; m < m_count; ++m) es.push_back(random_evidence(gen));

    const auto joint = er_combine(es);

    // valid distribution
    double sum = 0.0;
    for (double v : joint) {
      CHECK(v >= -1e-15);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-9);

    // permutation invariance
    std::vector<Evidence> shuffled = es;
    rng::shuffle(shuffled, gen);
    CHECK(max_abs_diff(joint, er_combine(shuffled)) <= 1e-12);

    // r = 1 reduction to Dempster's normalized product, any weights
    std::vector<Evidence> certain = es;
    for (auto& e : certain) e.reliability = 1.0;
    const auto reduced = er_combine(certain);
    const auto dempster = ds_combine(certain);
    CHECK(max_abs_diff(reduced, dempster) <= 1e-9);
    CHECK(decide(reduced) == decide(dempster));
  }
}

TEST_CASE("er_combine matches a closed-form longhand oracle with c factors written out") {
  rng::Xoshiro256 gen(9);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t m_count = 1 + gen.below(3);
    std::vector<Evidence> es;
    for (std::size_t m = 0; m < m_count; ++m) es.push_back(random_evidence(gen));

    // longhand: T_n = prod c(1-r+rwp), T0 = prod c(1-r), L = 1/(sum T - (N-1) T0),
    // P_n = L (T_n - T0) / (1 - L T0)
    const std::size_t n = 3;
    std::vector<long double> t(n, 1.0L);
    long double t0 = 1.0L;
    for (const auto& e : es) {
      const long double c = 1.0L / (1.0L + e.weight - e.reliability);
      for (std::size_t k = 0; k < n; ++k)
        t[k] *= c * (1.0L - e.reliability + e.reliability * e.weight * e.p[k]);
      t0 *= c * (1.0L - e.reliability);
    }
    long double sum_t = 0.0L;
    for (auto v : t) sum_t += v;
    const long double big_l = 1.0L / (sum_t - static_cast<long double>(n - 1) * t0);
    std::vector<double> want(n);
    for (std::size_t k = 0; k < n; ++k)
      want[k] = static_cast<double>(big_l * (t[k] - t0) / (1.0L - big_l * t0));

    CHECK(max_abs_diff(er_combine(es), want) <= 1e-12);
  }
}

TEST_CASE("er_combine raises a degenerate-combination error naming evidence indices") {
  // total conflict between fully reliable, fully weighted evidences
  std::vector<Evidence> conflict = {make_evidence({1.0, 0.0}), make_evidence({0.0, 1.0})};
  try {
    er_combine(conflict);
    FAIL("expected DegenerateCombinationError");
  } catch (const DegenerateCombinationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("0") != std::string::npos);
    CHECK(msg.find("1") != std::string::npos);
  }
  // every evidence fully unreliable: nothing left to combine
  std::vector<Evidence> useless = {make_evidence({0.5, 0.5}, 1.0, 0.0)};
  CHECK_THROWS_AS(er_combine(useless), DegenerateCombinationError);
}

TEST_CASE("ds_combine: uniform evidence is neutral, products and Zadeh pathology") {
  const auto joint =
      ds_combine({make_evidence({0.6, 0.3, 0.1}), make_evidence({1.0 / 3, 1.0 / 3, 1.0 / 3})});
  CHECK(max_abs_diff(joint, {0.6, 0.3, 0.1}) <= 1e-12);

  const auto two = ds_combine({make_evidence({0.9, 0.1}), make_evidence({0.9, 0.1})});
  CHECK(two[0] == doctest::Approx(0.81 / 0.82).epsilon(1e-12));

  // Zadeh-style: two near-certain, disagreeing evidences put all mass on the
  // minority class
  const auto zadeh =
      ds_combine({make_evidence({0.99, 0.01, 0.0}), make_evidence({0.0, 0.01, 0.99})});
  CHECK(zadeh[0] == doctest::Approx(0.0));
  CHECK(zadeh[1] == doctest::Approx(1.0));
  CHECK(zadeh[2] == doctest::Approx(0.0));

  CHECK_THROWS_AS(ds_combine({make_evidence({1.0, 0.0}), make_evidence({0.0, 1.0})}),
                  DegenerateCombinationError);
}

TEST_CASE("majority_vote: plurality, tie-breaks, degenerate single evidence") {
  // plurality
  CHECK(majority_vote({make_evidence({0.8, 0.1, 0.1}), make_evidence({0.7, 0.2, 0.1}),
                       make_evidence({0.1, 0.8, 0.1})}) == 0);
  // all distinct argmaxes: tie broken by the highest mean confidence
  CHECK(majority_vote({make_evidence({0.5, 0.3, 0.2}), make_evidence({0.1, 0.6, 0.3}),
                       make_evidence({0.2, 0.4, 0.4})}) == 1);
  // exact tie on mean confidence: lowest class id wins
  CHECK(majority_vote({make_evidence({0.5, 0.5, 0.0}), make_evidence({0.5, 0.5, 0.0})}) == 0);
  // single evidence: its argmax
  CHECK(majority_vote({make_evidence({0.2, 0.3, 0.5})}) == 2);
}

TEST_CASE("prob_average: idempotence, analytic case, random mean oracle") {
  const auto same = prob_average({make_evidence({0.3, 0.5, 0.2}), make_evidence({0.3, 0.5, 0.2})});
  CHECK(max_abs_diff(same, {0.3, 0.5, 0.2}) <= 1e-15);

  const auto mixed = prob_average({make_evidence({1.0, 0.0, 0.0}), make_evidence({0.0, 1.0, 0.0})});
  CHECK(max_abs_diff(mixed, {0.5, 0.5, 0.0}) <= 1e-15);

  rng::Xoshiro256 gen(11);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Evidence> es = {random_evidence(gen), random_evidence(gen), random_evidence(gen)};
    const auto got = prob_average(es);
    for (std::size_t c = 0; c < 3; ++c) {
      const double want = (es[0].p[c] + es[1].p[c] + es[2].p[c]) / 3.0;
      CHECK(got[c] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("learned_fusion: zero weights give the uniform distribution; oracle check") {
  std::vector<Evidence> es = {make_evidence({0.7, 0.2, 0.1}), make_evidence({0.1, 0.8, 0.1})};
  const Tensor w0({6, 3});
  const Tensor b0({3});
  for (double v : learned_fusion(es, w0, b0)) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  rng::Xoshiro256 gen(13);
  Tensor w({6, 3});
  for (auto& v : w.mutable_data()) v = gen.normal();
  Tensor b({3});
  for (auto& v : b.mutable_data()) v = gen.normal() * 0.1;
  const auto got = learned_fusion(es, w, b);
  // direct linear + softmax oracle
  std::vector<double> logits(3);
  const std::vector<double> stacked = {0.7, 0.2, 0.1, 0.1, 0.8, 0.1};
  for (std::size_t o = 0; o < 3; ++o) {
    logits[o] = b(o);
    for (std::size_t i = 0; i < 6; ++i) logits[o] += stacked[i] * w(i, o);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (std::size_t o = 0; o < 3; ++o)
    CHECK(got[o] == doctest::Approx(logits[o] / denom).epsilon(1e-12));

  double sum = 0.0;
  for (double v : got) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(learned_fusion(es, Tensor({5, 3}), b0), ShapeError);
}

TEST_CASE("decide: argmax with lowest-id tie-break and scale invariance") {
  CHECK(decide({0.2, 0.5, 0.3}) == 1);
  CHECK(decide({0.5, 0.5, 0.0}) == 0);
  rng::Xoshiro256 gen(17);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> p = {gen.uniform(), gen.uniform(), gen.uniform()};
    const std::size_t base = decide(p);
    const double scale = 0.1 + 5.0 * gen.uniform();
    std::vector<double> scaled = p;
    for (auto& v : scaled) v *= scale;
    CHECK(decide(scaled) == base);
  }
}

TEST_CASE("head_forward: zero head gives uniform confidences; outputs normalized") {
  const Head zero = Head::zeros(16, 3);
  const Tensor tokens({4, 16});
  const EvidenceT e = zero.forward(tokens);
  for (double v : e.p.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(e.weight.item() == doctest::Approx(0.5));  // sigmoid(0)

  rng::Xoshiro256 gen(19);
  const Head head = Head::init(16, 3, 21);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor t({4, 16});
    for (auto& v : t.mutable_data()) v = gen.normal();
    const EvidenceT out = head.forward(t);
    double sum = 0.0;
    for (double v : out.p.data()) sum += v;
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
    CHECK(out.weight.item() > 0.0);
    CHECK(out.weight.item() < 1.0);
    CHECK(out.reliability.item() >= 0.0);
    CHECK(out.reliability.item() <= 1.0);

    // pool/linear/softmax oracle
    std::vector<double> pooled(16, 0.0);
    for (std::size_t c = 0; c < 16; ++c) {
      for (std::size_t i = 0; i < 4; ++i) pooled[c] += t(i, c);
      pooled[c] /= 4.0;
    }
    std::vector<double> logits(3);
    for (std::size_t o = 0; o < 3; ++o) {
      logits[o] = head.b(o);
      for (std::size_t c = 0; c < 16; ++c) logits[o] += pooled[c] * head.w(c, o);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (auto& v : logits) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (std::size_t o = 0; o < 3; ++o)
      CHECK(out.p.data()[o] == doctest::Approx(logits[o] / denom).epsilon(1e-12));
  }
}

TEST_CASE("er_combine_t agrees with the plain path and passes the gradient check") {
  rng::Xoshiro256 gen(23);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Evidence> es = {random_evidence(gen), random_evidence(gen), random_evidence(gen)};
    std::vector<EvidenceT> ts;
    for (const auto& e : es)
      ts.push_back(EvidenceT{Tensor({3}, std::vector<double>(e.p)), Tensor::scalar(e.weight),
                             Tensor::scalar(e.reliability)});
    CHECK(max_abs_diff(er_combine_t(ts).data(), er_combine(es)) <= 1e-12);
  }

  // gradient w.r.t. p, w, r through softmax/sigmoid squashings
  const double err = grad_check(
      [](const Tensor& probe, GradTape* tape) {
        std::vector<EvidenceT> es;
        for (std::size_t m = 0; m < 3; ++m) {
          Tensor sel_p({15, 3});
          for (std::size_t c = 0; c < 3; ++c) sel_p.mutable_data()[(m * 3 + c) * 3 + c] = 1.0;
          Tensor sel_w({15, 1});
          sel_w.mutable_data()[9 + m] = 1.0;
          Tensor sel_r({15, 1});
          sel_r.mutable_data()[12 + m] = 1.0;
          EvidenceT e;
          e.p = ops::softmax(ops::linear(probe, sel_p, Tensor(), tape), 0, tape);
          e.weight = ops::sigmoid(ops::linear(probe, sel_w, Tensor(), tape), tape);
          e.reliability = ops::sigmoid(ops::linear(probe, sel_r, Tensor(), tape), tape);
          es.push_back(std::move(e));
        }
        return ops::cross_entropy(er_combine_t(es, tape), 0, tape);
      },
      [] {
        rng::Xoshiro256 g(29);
        Tensor t({15});
        for (auto& v : t.mutable_data()) v = g.normal() * 0.7;
        return t;
      }());
  CHECK(err <= 1e-5);
}

TEST_CASE("evidence validation rejects out-of-range fields") {
  CHECK_THROWS_AS(make_evidence({0.5, 0.6}).validate(), ConfigError);         // sums to 1.1
  CHECK_THROWS_AS(make_evidence({0.5, 0.5}, 0.0).validate(), ConfigError);    // w = 0
  CHECK_THROWS_AS(make_evidence({0.5, 0.5}, 1.0, 1.5).validate(), ConfigError);
  CHECK_THROWS_AS(make_evidence({-0.1, 1.1}).validate(), ConfigError);
  CHECK_NOTHROW(make_evidence({0.5, 0.5}, 1.0, 0.0).validate());
}
