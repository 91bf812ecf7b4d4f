#pragma once

#include <vector>

namespace mrlab {

// One perturbed-solve outcome: image-space disturbance sizes (weak and
// strong metric) against the domain-space distance of the reached solution
// from the reference.
struct PerturbationRecord {
  double weak_image_dist = 0.0;
  double weak_domain_dist = 0.0;
  double strong_image_dist = 0.0;
  bool solver_converged = false;
};

// Empirical regularity estimate  d_domain <= kappa * d_image^beta.
// kappa is inflated after the log-log fit so the bound holds for every
// record used (uniform envelope, not a least-squares average).
struct RegularityFit {
  double kappa = 0.0;       // > 0
  double beta = 0.0;        // in (0, 1.5]; raw slopes outside are clamped
  double r_squared = 0.0;   // of the log-log fit
  int n_records = 0;        // records used
};

// Least-squares fit of log(domain) against log(image) over converged records
// with weak_image_dist > min_dist and weak_domain_dist > 0.  Throws
// std::invalid_argument with a descriptive message when fewer than 5 usable
// records remain or the usable image distances are all equal.
RegularityFit fit_regularity(const std::vector<PerturbationRecord>& records,
                             double min_dist = 1e-6);

}  // namespace mrlab
