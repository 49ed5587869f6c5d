#include "acceptance/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fixture {

using namespace ivsurv;

namespace {

struct Row {
  double x, z;
  int a;
  double time;
  int r;
};

constexpr Row kRows[] = {
    {0.5, 1, 1, 2, 1}, {-0.3, 1, 0, 3, 0}, {1.2, 1, 1, 4, 1},
    {0.1, 0, 0, 1, 1}, {-0.8, 0, 1, 3, 1}, {0.7, 0, 0, 2, 0},
};

// Y_t for an uncensored subject; callers multiply by r.
double y(const Observation& o, int t) { return o.r == 1 && o.time > t ? 1.0 : 0.0; }
double event_at(const Observation& o, int k) { return o.r == 1 && o.time == k ? 1.0 : 0.0; }
double at_risk(const Observation& o, int k) { return o.time > k - 1 ? 1.0 : 0.0; }

double S(const HazardSet& hz, std::size_t i, int k, int z, int a) {
  double s = 1.0;
  for (int m = 1; m <= k; ++m) s *= 1.0 - hz.h(i, m, z, a);
  return s;
}

double G(const HazardSet& hz, std::size_t i, int k, int z, int a) {
  double g = 1.0;
  for (int m = 1; m <= k; ++m) g *= 1.0 - hz.g(i, m, z, a);
  return g;
}

}  // namespace

SurvivalDataset data() {
  SurvivalDataset d;
  d.q = 1;
  d.tau = 3;
  for (const Row& r : kRows) d.rows.push_back({{r.x}, r.z, r.a, r.time, r.r});
  return d;
}

TimeGrid grid() { return TimeGrid::unit(3); }

NuisanceSet nuisances() {
  NuisanceSet nu;
  nu.resize(6, 3);
  for (std::size_t i = 0; i < 6; ++i) {
    const double di = static_cast<double>(i);
    for (int z = 0; z < 2; ++z) {
      nu.pi(i, z) = 0.25 + 0.4 * z + 0.02 * di;
      for (int a = 0; a < 2; ++a) {
        nu.omega(i, z, a) = 0.6 + 0.05 * di + 0.03 * z + 0.04 * a;
        for (std::size_t t = 0; t < 3; ++t)
          nu.mu(i, t, z, a) = 0.85 - 0.12 * static_cast<double>(t + 1) + 0.03 * di + 0.05 * z - 0.04 * a;
      }
    }
    nu.delta(i, 1) = 0.4 + 0.03 * di;
    nu.delta(i, 0) = 1.0 - nu.delta(i, 1);
  }
  return nu;
}

HazardSet hazards(int cells) {
  HazardSet hz;
  hz.resize(6, 3, cells);
  for (std::size_t i = 0; i < 6; ++i) {
    const double di = static_cast<double>(i);
    for (int z = 0; z < cells / 2; ++z)
      for (int a = 0; a < 2; ++a)
        for (int k = 1; k <= 3; ++k) {
          hz.h_[hz.at(i, k, z, a)] = 0.10 + 0.02 * k + 0.01 * di + 0.03 * z + 0.02 * a;
          hz.g_[hz.at(i, k, z, a)] = 0.05 + 0.01 * k + 0.01 * di + 0.02 * z + 0.01 * a;
        }
    if (cells == 4) {
      hz.pi_[i * 2] = 0.25 + 0.02 * di;
      hz.pi_[i * 2 + 1] = 0.65 + 0.02 * di;
      hz.delta_[i * 2 + 1] = 0.4 + 0.03 * di;
      hz.delta_[i * 2] = 0.6 - 0.03 * di;
    } else {
      hz.pi_[i * 2] = 0.45 + 0.02 * di;
      hz.pi_[i * 2 + 1] = 0.0;
    }
  }
  hz.rebuild_products();
  return hz;
}

Oracle if_binary(const SurvivalDataset& d, const NuisanceSet& nu, const TimeGrid& grid) {
  const std::size_t n = d.size();
  Oracle out;
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& o = d.rows[i];
    const double Z = o.z, A = o.a;
    const double pi1 = nu.pi(i, 1), pi0 = nu.pi(i, 0);
    const double Pi1 = (A - pi1) * Z / nu.delta(i, 1) + pi1;
    const double Pi0 = (A - pi0) * (1.0 - Z) / nu.delta(i, 0) + pi0;
    out.denominator += (Pi1 - Pi0) / static_cast<double>(n);
  }
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Observation& o = d.rows[i];
      const double Z = o.z, A = o.a, R = o.r, Y = y(o, grid.points[t]);
      double M[2];
      for (int j = 0; j < 2; ++j) {
        const double Ij = j == 1 ? Z : 1.0 - Z;
        const double m1 = nu.mu(i, t, j, 1), m0 = nu.mu(i, t, j, 0), p = nu.pi(i, j), dj = nu.delta(i, j);
        M[j] = m1 * p + m0 * (1.0 - p) +
               Ij / dj * (R * A / nu.omega(i, j, 1) * (Y - m1) + m1 * (A - p)) +
               Ij / dj * (R * (1.0 - A) / nu.omega(i, j, 0) * (Y - m0) + m0 * ((1.0 - A) - (1.0 - p)));
      }
      s += M[1] - M[0];
    }
    out.psi.push_back(s / static_cast<double>(n) / out.denominator);
  }
  return out;
}

Oracle ipw(const SurvivalDataset& d, const NuisanceSet& nu, const TimeGrid& grid) {
  const double n = static_cast<double>(d.size());
  auto Pn = [&](auto f) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += f(i, d.rows[i]);
    return s / n;
  };
  Oracle out;
  out.denominator = Pn([&](std::size_t i, const Observation& o) {
    return o.a * o.z / nu.delta(i, 1) - o.a * (1.0 - o.z) / nu.delta(i, 0);
  });
  const double w11 = Pn([&](std::size_t i, const Observation& o) { return o.a * o.z / nu.delta(i, 1); });
  const double w10 = Pn([&](std::size_t i, const Observation& o) { return (1.0 - o.a) * o.z / nu.delta(i, 1); });
  const double w01 = Pn([&](std::size_t i, const Observation& o) { return o.a * (1.0 - o.z) / nu.delta(i, 0); });
  const double w00 =
      Pn([&](std::size_t i, const Observation& o) { return (1.0 - o.a) * (1.0 - o.z) / nu.delta(i, 0); });
  for (int t : grid.points) {
    const double m11 = Pn([&](std::size_t i, const Observation& o) {
      return y(o, t) * o.r * o.a * o.z / (nu.omega(i, 1, 1) * nu.pi(i, 1) * nu.delta(i, 1));
    });
    const double m10 = Pn([&](std::size_t i, const Observation& o) {
      return y(o, t) * o.r * (1.0 - o.a) * o.z / (nu.omega(i, 1, 0) * (1.0 - nu.pi(i, 1)) * nu.delta(i, 1));
    });
    const double m01 = Pn([&](std::size_t i, const Observation& o) {
      return y(o, t) * o.r * o.a * (1.0 - o.z) / (nu.omega(i, 0, 1) * nu.pi(i, 0) * nu.delta(i, 0));
    });
    const double m00 = Pn([&](std::size_t i, const Observation& o) {
      return y(o, t) * o.r * (1.0 - o.a) * (1.0 - o.z) / (nu.omega(i, 0, 0) * (1.0 - nu.pi(i, 0)) * nu.delta(i, 0));
    });
    out.psi.push_back((m11 * w11 + m10 * w10 - (m01 * w01 + m00 * w00)) / out.denominator);
  }
  return out;
}

Oracle plugin(const SurvivalDataset& d, const NuisanceSet& nu, const TimeGrid& grid) {
  const double n = static_cast<double>(d.size());
  Oracle out;
  double p1 = 0.0, p0 = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    p1 += nu.pi(i, 1) / n;
    p0 += nu.pi(i, 0) / n;
  }
  out.denominator = p1 - p0;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double e1 = 0.0, e0 = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      e1 += (nu.mu(i, t, 1, 1) * nu.pi(i, 1) + nu.mu(i, t, 1, 0) * (1.0 - nu.pi(i, 1))) / n;
      e0 += (nu.mu(i, t, 0, 1) * nu.pi(i, 0) + nu.mu(i, t, 0, 0) * (1.0 - nu.pi(i, 0))) / n;
    }
    out.psi.push_back((e1 - e0) / out.denominator);
  }
  return out;
}

Oracle if_hazard(const SurvivalDataset& d, const HazardSet& hz, const TimeGrid& grid) {
  const double n = static_cast<double>(d.size());
  Oracle out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Observation& o = d.rows[i];
    const double Pi1 = (o.a - hz.pi(i, 1)) * o.z / hz.delta(i, 1) + hz.pi(i, 1);
    const double Pi0 = (o.a - hz.pi(i, 0)) * (1.0 - o.z) / hz.delta(i, 0) + hz.pi(i, 0);
    out.denominator += (Pi1 - Pi0) / n;
  }
  for (int t : grid.points) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Observation& o = d.rows[i];
      for (int z = 0; z < 2; ++z) {
        const double Iz = z == 1 ? o.z : 1.0 - o.z;
        double lam = 0.0;
        for (int a = 0; a < 2; ++a) {
          const double Ia = o.a == a ? 1.0 : 0.0;
          const double pza = a == 1 ? hz.pi(i, z) : 1.0 - hz.pi(i, z);
          const double St = S(hz, i, t, z, a);
          double sum = 0.0;
          for (int k = 1; k <= t; ++k)
            sum += Ia * at_risk(o, k) / (pza * G(hz, i, k - 1, z, a)) * St / S(hz, i, k, z, a) *
                   (event_at(o, k) - hz.h(i, k, z, a));
          // pi_z(a) times the stratum martingale
          lam += -Iz / hz.delta(i, z) * pza * sum + Iz / hz.delta(i, z) * St * (Ia - pza) + St * pza;
        }
        s += z == 1 ? lam : -lam;
      }
    }
    out.psi.push_back(s / n / out.denominator);
  }
  return out;
}

Oracle naive_hazard(const SurvivalDataset& d, const HazardSet& hz, const TimeGrid& grid) {
  const double n = static_cast<double>(d.size());
  Oracle out;
  out.denominator = 1.0;
  for (int t : grid.points) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Observation& o = d.rows[i];
      for (int a = 0; a < 2; ++a) {
        const double Ia = o.a == a ? 1.0 : 0.0;
        const double pa = a == 1 ? hz.pi(i, 0) : 1.0 - hz.pi(i, 0);
        const double St = S(hz, i, t, 0, a);
        double lam = St;
        for (int k = 1; k <= t; ++k)
          lam -= Ia * at_risk(o, k) / (pa * G(hz, i, k - 1, 0, a)) * St / S(hz, i, k, 0, a) *
                 (event_at(o, k) - hz.h(i, k, 0, a));
        s += a == 1 ? lam : -lam;
      }
    }
    out.psi.push_back(s / n);
  }
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (!(d <= m)) m = std::isnan(d) ? std::numeric_limits<double>::infinity() : d;
  }
  return m;
}

}  // namespace fixture
