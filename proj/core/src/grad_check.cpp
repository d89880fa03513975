#include "mainet/grad_check.hpp"

#include <cmath>

namespace mainet {

double grad_check(const std::function<Tensor(const Tensor&, GradTape*)>& f, const Tensor& x,
                  double eps) {
  if (eps < 1e-7 || eps > 1e-4)
    throw ContractError("grad_check: eps " + std::to_string(eps) + " outside [1e-7, 1e-4]");

  Tensor probe(x.shape(), std::vector<double>(x.data()));
  probe.set_requires_grad(true);
  GradTape tape;
  Tensor loss = f(probe, &tape);
  if (loss.size() != 1)
    throw ContractError("grad_check: function output must be scalar, got " +
                        shape_str(loss.shape()));
  tape.backward(loss);
  const std::vector<double> analytic = probe.grad();

  double worst = 0.0;
  Tensor shifted(x.shape(), std::vector<double>(x.data()));
  auto& sv = shifted.mutable_data();
  for (std::size_t i = 0; i < sv.size(); ++i) {
    const double orig = sv[i];
    sv[i] = orig + eps;
    const double up = f(shifted, nullptr).item();
    sv[i] = orig - eps;
    const double dn = f(shifted, nullptr).item();
    sv[i] = orig;
    const double cd = (up - dn) / (2.0 * eps);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(cd), 1e-12});
    worst = std::max(worst, std::fabs(analytic[i] - cd) / denom);
  }
  return worst;
}

}  // namespace mainet
