#include "curvlab/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "curvlab/error.hpp"
#include "curvlab/io.hpp"
#include "curvlab/linalg.hpp"

namespace curvlab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Secular function phi(mu) = -c + sum_i w_i * mu (1 - mu l_i / 2) / (1 - mu l_i)^2
// over the included indices; strictly increasing on [0, 1/l_max). The
// reciprocal form keeps large mu (l_max <= 0 case) overflow-free.
struct Secular {
  const std::vector<double>& w;   // squared eigen-components of g
  const std::vector<double>& l;   // eigenvalues
  const std::vector<char>& use;
  double c;

  double operator()(double mu) const {
    double s = -c;
    if (mu <= 1.0) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!use[i] || w[i] == 0.0) continue;
        double d = 1.0 - mu * l[i];
        s += w[i] * mu * (1.0 - 0.5 * mu * l[i]) / (d * d);
      }
    } else {
      double inv = 1.0 / mu;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!use[i] || w[i] == 0.0) continue;
        double d = inv - l[i];
        s += w[i] * (inv - 0.5 * l[i]) / (d * d);
      }
    }
    return s;
  }

  double derivative(double mu) const {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!use[i] || w[i] == 0.0) continue;
      double d = 1.0 - mu * l[i];
      s += w[i] / (d * d * d);
    }
    return s;
  }
};

// Root of phi on (lo, hi] given phi(lo) < 0 <= phi(hi): bisection to a
// tight bracket, then a few damped Newton polish steps.
double solve_root(const Secular& phi, double lo, double hi) {
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    double mid = 0.5 * (lo + hi);
    if (phi(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double mu = 0.5 * (lo + hi);
  for (int it = 0; it < 4; ++it) {
    double f = phi(mu), df = phi.derivative(mu);
    if (df <= 0.0 || !std::isfinite(df)) break;
    double next = mu - f / df;
    if (!(next > lo && next < hi)) break;
    mu = next;
  }
  return mu;
}

}  // namespace

void validate_model(const QuadraticModel& m) {
  if (m.g.ndim() != 1) throw ShapeError("quadratic model: g must be a vector");
  int d = static_cast<int>(m.g.size());
  if (m.H.ndim() != 2 || m.H.rows() != d || m.H.cols() != d)
    throw ShapeError("quadratic model: H shape " + shape_to_string(m.H.shape()) +
                     " does not match g dimension " + std::to_string(d));
  double scale = std::max(1.0, norm_inf(m.H));
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (std::abs(m.H.at(i, j) - m.H.at(j, i)) > 1e-12 * scale)
        throw Error("quadratic model: H not symmetric at (" + std::to_string(i) + "," +
                    std::to_string(j) + ")");
  if (m.c < 0) throw Error("quadratic model: c must be >= 0, got " + format_double(m.c));
  check_finite(m.g, "quadratic model g");
  check_finite(m.H, "quadratic model H");
}

MinPerturbation exact_min_perturbation(const QuadraticModel& m) {
  validate_model(m);
  int d = static_cast<int>(m.g.size());
  if (m.c == 0.0) {
    // Already on the threshold: the zero perturbation is feasible.
    return {Tensor({d}), 0.0, 0.0, false};
  }

  EigenDecomposition ed = jacobi_eigen(m.H);
  const std::vector<double>& l = ed.eigenvalues;
  double nu = l.back();

  // Components of g in the eigenbasis.
  std::vector<double> gt(static_cast<std::size_t>(d)), w(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += ed.eigenvectors.at(k, i) * m.g[k];
    gt[static_cast<std::size_t>(i)] = s;
    w[static_cast<std::size_t>(i)] = s * s;
  }
  std::vector<char> use(static_cast<std::size_t>(d), 1);

  auto build_result = [&](const std::vector<double>& rt, double mu, bool hard) {
    Tensor r({d});
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += ed.eigenvectors.at(k, i) * rt[static_cast<std::size_t>(i)];
      r[k] = s;
    }
    double n = 0.0;
    for (double v : rt) n += v * v;
    return MinPerturbation{std::move(r), std::sqrt(n), mu, hard};
  };
  auto coords_at = [&](double mu) {
    std::vector<double> rt(static_cast<std::size_t>(d), 0.0);
    if (mu <= 1.0) {
      for (int i = 0; i < d; ++i)
        if (use[static_cast<std::size_t>(i)])
          rt[static_cast<std::size_t>(i)] =
              mu * gt[static_cast<std::size_t>(i)] / (1.0 - mu * l[static_cast<std::size_t>(i)]);
    } else {
      double inv = 1.0 / mu;
      for (int i = 0; i < d; ++i)
        if (use[static_cast<std::size_t>(i)])
          rt[static_cast<std::size_t>(i)] =
              gt[static_cast<std::size_t>(i)] / (inv - l[static_cast<std::size_t>(i)]);
    }
    return rt;
  };

  Secular phi{w, l, use, m.c};

  if (nu <= 0.0) {
    // Concave (or flat) gain. The supremum of the gain decides feasibility:
    // sup = -c + sum_{l_i<0} w_i/(2|l_i|), infinite if g has mass on a
    // zero eigenvalue.
    double tiny_l = 1e-14 * std::max(1.0, std::abs(l.front()));
    bool unbounded = false;
    double sup = -m.c;
    for (int i = 0; i < d; ++i) {
      std::size_t si = static_cast<std::size_t>(i);
      if (std::abs(l[si]) <= tiny_l) {
        if (w[si] > 0.0) unbounded = true;
      } else {
        sup += w[si] / (-2.0 * l[si]);
      }
    }
    if (!unbounded) {
      double feas_tol = 1e-13 * std::max(1.0, m.c);
      if (sup < -feas_tol)
        throw InfeasibleError(
            "quadratic model infeasible: the gain's supremum is " + format_double(sup) +
            " < 0 (top eigenvalue " + format_double(nu) + "), no perturbation reaches the threshold");
      if (sup <= feas_tol) {
        // Tangent case: the unique feasible point is the gain's maximizer.
        std::vector<double> rt(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < d; ++i) {
          std::size_t si = static_cast<std::size_t>(i);
          if (std::abs(l[si]) > tiny_l) rt[si] = -gt[si] / l[si];
        }
        return build_result(rt, kInf, false);
      }
    }
    // Root exists at finite mu: grow the bracket geometrically.
    double hi = 1.0;
    int grow = 0;
    while (phi(hi) <= 0.0 && grow++ < 300) hi *= 2.0;
    if (phi(hi) <= 0.0)
      throw ConvergenceError("secular bracket did not capture the root", grow);
    double mu = solve_root(phi, 0.0, hi);
    return build_result(coords_at(mu), mu, false);
  }

  // Convex direction exists (nu > 0). mu ranges over [0, 1/nu).
  double mu_max = 1.0 / nu;
  double eig_tol = 1e-12 * std::max(1.0, std::abs(nu));
  double top_mass = 0.0;
  for (int i = 0; i < d; ++i) {
    std::size_t si = static_cast<std::size_t>(i);
    if (l[si] >= nu - eig_tol) {
      use[si] = 0;  // top subspace handled separately
      top_mass += w[si];
    }
  }
  double g_scale = norm2(m.g) + 1.0;

  if (top_mass <= 1e-28 * g_scale * g_scale) {
    // Gradient has (numerically) no mass on the top eigenspace.
    double phi_bar = phi(mu_max);
    if (phi_bar < 0.0) {
      // Hard case: saturate mu = 1/nu and make up the deficit along the
      // top eigendirection.
      std::vector<double> rt = coords_at(mu_max);
      double t = std::sqrt(-2.0 * phi_bar / nu);
      for (int i = d - 1; i >= 0; --i) {
        std::size_t si = static_cast<std::size_t>(i);
        if (!use[si]) {
          rt[si] = t;
          break;
        }
      }
      return build_result(rt, mu_max, true);
    }
    double mu = solve_root(phi, 0.0, mu_max);
    return build_result(coords_at(mu), mu, false);
  }

  // Ordinary case: phi -> +infinity as mu -> 1/nu, so a unique root sits in
  // (0, 1/nu). Re-enable the top terms and tighten the bracket toward mu_max.
  for (int i = 0; i < d; ++i) use[static_cast<std::size_t>(i)] = 1;
  double lo = 0.0, hi = mu_max;
  for (int k = 1; k <= 500; ++k) {
    hi = mu_max * (1.0 - std::ldexp(1.0, -k));
    if (hi <= lo) {
      hi = std::nextafter(mu_max, 0.0);
      break;
    }
    if (phi(hi) > 0.0) break;
    lo = hi;
  }
  if (phi(hi) <= 0.0)
    throw ConvergenceError("secular bracket degenerate near the pole", 500);
  double mu = solve_root(phi, lo, hi);
  return build_result(coords_at(mu), mu, false);
}

double bound_formula(double t, double nu, double c) {
  if (t < 0 || nu < 0 || c < 0) throw Error("bound_formula: arguments must be non-negative");
  double s = std::sqrt(t * t + 2.0 * nu * c);
  double denom = t + s;
  if (denom == 0.0) return c == 0.0 ? 0.0 : kInf;
  return 2.0 * c / denom;
}

RobustnessBounds robustness_bounds(const QuadraticModel& m) {
  validate_model(m);
  EigenDecomposition ed = jacobi_eigen(m.H);
  int d = static_cast<int>(m.g.size());
  double nu = ed.eigenvalues.back();
  double scale = std::max(1.0, std::abs(ed.eigenvalues.front()));
  if (nu < -1e-12 * scale)
    throw Error("robustness_bounds: top eigenvalue " + format_double(nu) +
                " < 0, outside the bounds' assumptions");
  nu = std::max(nu, 0.0);
  double gn = norm2(m.g);
  if (gn == 0.0) throw Error("robustness_bounds: zero gradient");
  Tensor u = ed.eigenvector(d - 1);
  double gtu = std::abs(dot(m.g, u));

  RobustnessBounds b;
  b.nu = nu;
  b.gtu = gtu;
  b.lower = bound_formula(gn, nu, m.c);
  b.upper = bound_formula(gtu, nu, m.c);
  b.upper_is_limit = gtu <= 1e-14 * gn;
  b.lower_simplified = m.c / gn - 2.0 * nu * m.c * m.c / (gn * gn * gn);
  b.upper_simplified = gtu > 0.0 ? m.c / gtu : kInf;
  return b;
}

std::vector<BoundCurveRow> bound_curve(double gnorm, double c, double gtu,
                                       const std::vector<double>& nu_grid) {
  if (gnorm <= 0 || c < 0 || gtu < 0) throw Error("bound_curve: need |g| > 0, c >= 0, g.u >= 0");
  if (gtu > gnorm + 1e-12) throw Error("bound_curve: g.u cannot exceed |g|");
  for (std::size_t i = 0; i < nu_grid.size(); ++i) {
    if (nu_grid[i] <= 0) throw Error("bound_curve: nu grid must be positive");
    if (i > 0 && nu_grid[i] <= nu_grid[i - 1]) throw Error("bound_curve: nu grid must ascend");
  }
  std::vector<BoundCurveRow> rows;
  rows.reserve(nu_grid.size());
  for (double nu : nu_grid)
    rows.push_back({nu, bound_formula(gnorm, nu, c), bound_formula(gtu, nu, c)});
  return rows;
}

std::string bound_curve_to_csv(const std::vector<BoundCurveRow>& rows, double gnorm, double c,
                               double gtu) {
  CsvBuilder csv;
  csv.comment("gnorm", gnorm);
  csv.comment("c", c);
  csv.comment("gtu", gtu);
  csv.row("nu", "lower", "upper");
  for (const auto& r : rows) csv.row(r.nu, r.lower, r.upper);
  return csv.str();
}

SandwichReport sandwich_check(const QuadraticModel& m) {
  MinPerturbation exact = exact_min_perturbation(m);
  RobustnessBounds b = robustness_bounds(m);
  SandwichReport rep;
  rep.lower_simplified = b.lower_simplified;
  rep.lower = b.lower;
  rep.exact = exact.norm;
  rep.upper = b.upper;
  rep.upper_simplified = b.upper_simplified;
  const double slack = 1e-9;
  rep.ok_lower_simplified = rep.lower_simplified <= rep.lower + slack;
  rep.ok_lower = rep.lower <= rep.exact + slack;
  rep.ok_upper = rep.exact <= rep.upper + slack;
  rep.ok_upper_simplified = rep.upper <= rep.upper_simplified + slack;
  return rep;
}

QuadraticModel random_model(Rng& rng) {
  int d = 2 + rng.uniform_int(7);
  std::vector<double> l(static_cast<std::size_t>(d));
  for (int attempt = 0;; ++attempt) {
    double mx = -kInf;
    for (auto& v : l) {
      v = rng.uniform(-2.0, 5.0);
      mx = std::max(mx, v);
    }
    if (mx >= 0.01) break;
    if (attempt > 1000) throw Error("random_model: eigenvalue redraw stuck");
  }
  // Random orthogonal basis via Gram-Schmidt on normal draws.
  std::vector<Tensor> q;
  for (int i = 0; i < d; ++i) {
    for (int retry = 0; retry < 100; ++retry) {
      Tensor v = rng.normal_tensor({d});
      for (const Tensor& u : q) axpy(-dot(v, u), u, v);
      double n = norm2(v);
      if (n > 1e-8) {
        scale_inplace(v, 1.0 / n);
        q.push_back(std::move(v));
        break;
      }
    }
    if (static_cast<int>(q.size()) != i + 1) throw Error("random_model: basis draw degenerate");
  }
  Tensor H({d, d});
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += l[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i)][j] * q[static_cast<std::size_t>(i)][k];
      H.at(j, k) = s;
    }
  Tensor g = rng.normal_tensor({d});
  double n = norm2(g);
  while (n == 0.0) {
    g = rng.normal_tensor({d});
    n = norm2(g);
  }
  scale_inplace(g, rng.uniform(0.1, 3.0) / n);
  double c = rng.uniform(0.01, 2.0);
  return {std::move(g), std::move(H), c};
}

std::string model_to_json(const QuadraticModel& m) {
  nlohmann::json j;
  int d = static_cast<int>(m.g.size());
  j["d"] = d;
  j["c"] = m.c;
  j["g"] = std::vector<double>(m.g.data(), m.g.data() + d);
  std::vector<std::vector<double>> H;
  for (int i = 0; i < d; ++i)
    H.emplace_back(m.H.data() + static_cast<std::size_t>(i) * d,
                   m.H.data() + static_cast<std::size_t>(i + 1) * d);
  j["H"] = H;
  return j.dump(2);
}

QuadraticModel model_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  int d = j.at("d").get<int>();
  QuadraticModel m;
  m.c = j.at("c").get<double>();
  m.g = Tensor({d}, j.at("g").get<std::vector<double>>());
  Tensor H({d, d});
  auto rows = j.at("H").get<std::vector<std::vector<double>>>();
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) H.at(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  m.H = std::move(H);
  validate_model(m);
  return m;
}

SweepResult sandwich_sweep(int n_models, std::uint64_t seed, int max_dumps) {
  Rng rng(seed);
  SweepResult out;
  for (int i = 0; i < n_models; ++i) {
    QuadraticModel m = random_model(rng);
    SandwichReport rep = sandwich_check(m);
    ++out.models;
    if (!rep.ok()) {
      ++out.violations;
      if (static_cast<int>(out.counterexamples.size()) < max_dumps)
        out.counterexamples.push_back(model_to_json(m));
    }
  }
  return out;
}

}  // namespace curvlab
