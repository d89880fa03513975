#pragma once

#include <functional>

#include "mainet/tape.hpp"
#include "mainet/tensor.hpp"

namespace mainet {

/// Compares the tape gradient of a scalar-valued function against central
/// finite differences, element by element, and returns the worst relative
/// error: |analytic - cd| / max(|analytic|, |cd|, 1e-12).
///
/// `f` must evaluate the same computation whether or not a tape is supplied
/// (the finite-difference probes run without one). `eps` must lie in
/// [1e-7, 1e-4], the window where central differences are trustworthy in
/// double precision.
double grad_check(const std::function<Tensor(const Tensor&, GradTape*)>& f, const Tensor& x,
                  double eps = 1e-5);

}  // namespace mainet
