#include "mrlab/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mrlab {

RegularityFit fit_regularity(const std::vector<PerturbationRecord>& records,
                             double min_dist) {
  std::vector<double> lx, ly, img, dom;
  for (const auto& r : records) {
    if (!r.solver_converged) continue;
    if (!(r.weak_image_dist > min_dist)) continue;
    if (!(r.weak_domain_dist > 0.0)) continue;  // any envelope covers it
    img.push_back(r.weak_image_dist);
    dom.push_back(r.weak_domain_dist);
    lx.push_back(std::log(r.weak_image_dist));
    ly.push_back(std::log(r.weak_domain_dist));
  }
  const int n = int(lx.size());
  if (n < 5)
    throw std::invalid_argument(
        "fit_regularity: fewer than 5 usable records (converged with "
        "image distance above min_dist)");

  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0))
    throw std::invalid_argument(
        "fit_regularity: degenerate spread, all image distances equal");

  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = ly[i] - (intercept + slope * lx[i]);
    ss_res += e * e;
  }

  RegularityFit fit;
  fit.beta = std::clamp(slope, 1e-3, 1.5);
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.n_records = n;
  // uniform envelope: inflate kappa until every used record is covered
  double kappa = std::exp(intercept);
  for (int i = 0; i < n; ++i)
    kappa = std::max(kappa, dom[i] / std::pow(img[i], fit.beta));
  fit.kappa = kappa;
  return fit;
}

}  // namespace mrlab
