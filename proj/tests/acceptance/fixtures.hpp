#pragma once

#include <vector>

#include "ivsurv/estimators.hpp"
#include "ivsurv/learners.hpp"
#include "ivsurv/survival_data.hpp"

// Six-subject binary-instrument fixture with hand-specified nuisances, and
// direct-arithmetic evaluations of each estimator written without the
// library's per-subject helpers.
namespace fixture {

ivsurv::SurvivalDataset data();
ivsurv::TimeGrid grid();

// mu(i,t,z,a) = 0.85 - 0.12 t + 0.03 i + 0.05 z - 0.04 a
// omega(i,z,a) = 0.6 + 0.05 i + 0.03 z + 0.04 a
// pi(i,z) = 0.25 + 0.4 z + 0.02 i,  delta(i,1) = 0.4 + 0.03 i = 1 - delta(i,0)
ivsurv::NuisanceSet nuisances();

// h(i,k,z,a) = 0.10 + 0.02 k + 0.01 i + 0.03 z + 0.02 a
// g(i,k,z,a) = 0.05 + 0.01 k + 0.01 i + 0.02 z + 0.01 a
// cells = 2 drops z (z = 0 in the formulas) and stores P(A = 1 | X) = 0.45 + 0.02 i.
ivsurv::HazardSet hazards(int cells);

struct Oracle {
  std::vector<double> psi;
  double denominator = 0.0;
};

Oracle if_binary(const ivsurv::SurvivalDataset& d, const ivsurv::NuisanceSet& nu, const ivsurv::TimeGrid& grid);
Oracle ipw(const ivsurv::SurvivalDataset& d, const ivsurv::NuisanceSet& nu, const ivsurv::TimeGrid& grid);
Oracle plugin(const ivsurv::SurvivalDataset& d, const ivsurv::NuisanceSet& nu, const ivsurv::TimeGrid& grid);
Oracle if_hazard(const ivsurv::SurvivalDataset& d, const ivsurv::HazardSet& hz, const ivsurv::TimeGrid& grid);
Oracle naive_hazard(const ivsurv::SurvivalDataset& d, const ivsurv::HazardSet& hz, const ivsurv::TimeGrid& grid);

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace fixture
