#include "hsics/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace hsics {
namespace {

constexpr double kStepMin = 1e-16;
constexpr double kStepMax = 1e5;
constexpr double kArmijo = 1e-4;
constexpr int kNonmonotoneMemory = 3;
constexpr int kMaxLineSearch = 30;
constexpr int kMaxRootIterations = 30;
// SPG iterations with an unchanged sign pattern before trying a face solve.
constexpr int kPolishAfter = 5;

// Sign pattern of x: -1, 0, +1 per entry.
std::vector<signed char> sign_pattern(const Vector& x) {
  std::vector<signed char> out(static_cast<std::size_t>(x.size()));
  for (Index i = 0; i < x.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<signed char>((x(i) > 0) - (x(i) < 0));
  return out;
}

constexpr int kMaxActiveSetSteps = 200;

// Solves  min 1/2||y - a_W z||^2  s.t.  sgn.z = tau  over the working set W,
// falling back to unconstrained least squares on W when the multiplier of the
// ball constraint comes out negative. Returns (z, mu).
std::pair<Vector, double> solve_face(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& y, double tau,
                                     const std::vector<Index>& w, const Vector& sgn) {
  const Index k = static_cast<Index>(w.size());
  Matrix aw(a.rows(), k);
  for (Index c = 0; c < k; ++c) aw.col(c) = a.col(w[static_cast<std::size_t>(c)]);
  const Matrix gram = aw.transpose() * aw;
  const Vector corr = aw.transpose() * y;

  // [gram sgn; sgn^T 0] [z; mu] = [corr; tau], minimum-norm for rank-deficient faces
  Matrix kkt = Matrix::Zero(k + 1, k + 1);
  kkt.topLeftCorner(k, k) = gram;
  kkt.topRightCorner(k, 1) = sgn;
  kkt.bottomLeftCorner(1, k) = sgn.transpose();
  Vector rhs(k + 1);
  rhs << corr, tau;
  const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  // mu is only known to rounding; zero-residual faces give mu = 0 exactly
  const double mu_floor = -1e-12 * std::max(1.0, corr.lpNorm<Eigen::Infinity>());
  if (sol(k) >= mu_floor) return {sol.head(k), std::max(sol(k), 0.0)};
  Vector z = gram.completeOrthogonalDecomposition().solve(corr);
  if (sgn.dot(z) > tau) return {sol.head(k), 0.0};
  return {std::move(z), 0.0};
}

// Primal active-set refinement of a feasible point x, in the manner of
// Lawson-Hanson: the working set keeps a fixed sign per index, a face solve
// that flips a sign is cut back to the first zero crossing, and the worst
// off-set KKT violator is added when the face is optimal. Returns the KKT
// point, or nullopt if the step cap is hit or the result is not an
// improvement on x.
std::optional<Vector> refine_active_set(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& y,
                                        double tau, const Vector& x0) {
  const Index n = x0.size();
  Vector x = x0;
  std::vector<Index> w;
  std::vector<double> sg;
  for (Index j = 0; j < n; ++j)
    if (x(j) != 0.0) {
      w.push_back(j);
      sg.push_back(x(j) > 0 ? 1.0 : -1.0);
    }

  auto add_worst_violator = [&](double mu) {
    const Vector g = a.transpose() * (y - a * x);
    const double scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
    Index worst = -1;
    double excess = 1e-10 * scale;
    std::vector<bool> in(static_cast<std::size_t>(n), false);
    for (Index j : w) in[static_cast<std::size_t>(j)] = true;
    for (Index j = 0; j < n; ++j)
      if (!in[static_cast<std::size_t>(j)] && std::abs(g(j)) - mu > excess) {
        excess = std::abs(g(j)) - mu;
        worst = j;
      }
    if (worst < 0) return false;
    w.push_back(worst);
    sg.push_back(g(worst) > 0 ? 1.0 : -1.0);
    return true;
  };

  if (w.empty() && (tau == 0.0 || !add_worst_violator(0.0))) return std::nullopt;

  for (int step = 0; step < kMaxActiveSetSteps; ++step) {
    const Vector sgn = Eigen::Map<const Vector>(sg.data(), static_cast<Index>(sg.size()));
    auto [z, mu] = solve_face(a, y, tau, w, sgn);
    if (!z.allFinite()) return std::nullopt;

    // largest step toward z that keeps every working sign
    double t = 1.0;
    for (std::size_t c = 0; c < w.size(); ++c) {
      const double xc = sg[c] * x(w[c]);
      const double zc = sg[c] * z(static_cast<Index>(c));
      if (zc <= 0.0) t = std::min(t, xc / (xc - zc));
    }
    for (std::size_t c = 0; c < w.size(); ++c) x(w[c]) += t * (z(static_cast<Index>(c)) - x(w[c]));

    if (t < 1.0) {
      std::vector<Index> keep_w;
      std::vector<double> keep_s;
      for (std::size_t c = 0; c < w.size(); ++c) {
        if (sg[c] * x(w[c]) <= 1e-15 * tau && sg[c] * z(static_cast<Index>(c)) <= 0.0) {
          x(w[c]) = 0.0;
        } else {
          keep_w.push_back(w[c]);
          keep_s.push_back(sg[c]);
        }
      }
      if (keep_w.size() == w.size()) return std::nullopt; // no progress possible
      w = std::move(keep_w);
      sg = std::move(keep_s);
      if (w.empty() && !add_worst_violator(0.0)) break;
      continue;
    }
    if (!add_worst_violator(mu)) {
      if (x.lpNorm<1>() > tau * (1.0 + 1e-12)) return std::nullopt;
      if ((y - a * x).squaredNorm() > (y - a * x0).squaredNorm() * (1.0 + 1e-12) + 1e-300) return std::nullopt;
      return x;
    }
  }
  return std::nullopt;
}

} // namespace

SolveReport solve_lasso_constrained(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& y, double tau,
                                    double tol, int max_iter, const std::optional<Vector>& s0) {
  if (a.rows() != y.size()) throw ValidationError("solve_lasso_constrained: a rows != y length");
  if (!(tau >= 0.0)) throw ValidationError("solve_lasso_constrained: tau must be >= 0");
  if (!(tol > 0.0)) throw ValidationError("solve_lasso_constrained: tol must be > 0");
  const Index n = a.cols();
  if (s0 && s0->size() != n) throw ValidationError("solve_lasso_constrained: warm start has wrong length");

  SolveReport rep;
  Vector x = project_l1(s0 ? *s0 : Vector::Zero(n), tau);

  Vector r = y - a * x;
  double f = 0.5 * r.squaredNorm();
  Vector g = -(a.transpose() * r);
  std::deque<double> recent{f};

  auto restart_from = [&](Vector cand) {
    x = std::move(cand);
    r = y - a * x;
    f = 0.5 * r.squaredNorm();
    g = -(a.transpose() * r);
    recent.assign(1, f);
  };

  double alpha = std::clamp(1.0 / std::max(g.lpNorm<Eigen::Infinity>(), 1e-300), kStepMin, kStepMax);
  std::vector<signed char> pattern = sign_pattern(x);
  int stable_for = 0;
  bool polished = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    const double pg = (project_l1(x - g, tau) - x).norm();
    if (pg <= tol) {
      rep.converged = true;
      break;
    }

    if (stable_for >= kPolishAfter && !polished) {
      polished = true;
      if (auto cand = refine_active_set(a, y, tau, x)) {
        restart_from(std::move(*cand));
        continue;
      }
    }

    Vector dir = project_l1(x - alpha * g, tau) - x;
    double gtd = g.dot(dir);
    if (!(gtd < 0.0)) {
      // BB step degenerated; fall back to a unit projected step
      alpha = 1.0;
      dir = project_l1(x - g, tau) - x;
      gtd = g.dot(dir);
    }

    bool accepted = false;
    double step = 1.0;
    double delta = 0.0;
    Vector adir;
    if (gtd < 0.0) {
      adir = a * dir;
      const double fmax = *std::max_element(recent.begin(), recent.end());
      // f(x + t dir) - f(x) = -t r.adir + t^2/2 ||adir||^2, evaluated without
      // cancellation so the search still works when f is at its rounding floor
      const double r_adir = r.dot(adir);
      const double adir2 = adir.squaredNorm();
      for (int ls = 0; ls < kMaxLineSearch; ++ls) {
        delta = -step * r_adir + 0.5 * step * step * adir2;
        if ((f - fmax) + delta <= kArmijo * step * gtd) {
          accepted = true;
          break;
        }
        // safeguarded quadratic interpolation of f along dir
        const double denom = 2.0 * (delta - step * gtd);
        const double next = denom > 0.0 ? -gtd * step * step / denom : 0.5 * step;
        step = std::clamp(next, 0.1 * step, 0.5 * step);
      }
    }
    if (!accepted) {
      // No numerically descending direction is left; the face solve is the
      // only way to make further progress.
      if (auto cand = refine_active_set(a, y, tau, x); cand && !polished) {
        polished = true;
        restart_from(std::move(*cand));
        continue;
      }
      break;
    }

    const Vector s_step = step * dir;
    x += s_step;
    if ((it + 1) % 50 == 0) r = y - a * x;
    else r -= step * adir;
    f += delta;
    Vector g_new = -(a.transpose() * r);
    const Vector y_step = g_new - g;
    g = std::move(g_new);

    const double sts = s_step.squaredNorm();
    const double sty = s_step.dot(y_step);
    alpha = sty <= 0.0 ? kStepMax : std::clamp(sts / sty, kStepMin, kStepMax);

    recent.push_back(f);
    if (static_cast<int>(recent.size()) > kNonmonotoneMemory) recent.pop_front();

    auto next_pattern = sign_pattern(x);
    if (next_pattern == pattern) {
      ++stable_for;
    } else {
      pattern = std::move(next_pattern);
      stable_for = 0;
      polished = false;
    }
  }

  rep.solution = std::move(x);
  const Vector res = y - a * rep.solution;
  rep.residual_norm = res.norm();
  rep.objective = 0.5 * res.squaredNorm();
  rep.iterations = it;
  rep.status = rep.converged ? SolveStatus::converged : SolveStatus::max_iterations;
  return rep;
}

SolveReport solve_bpdn(const BpdnProblem& p, double tol, int max_iter, const std::optional<Vector>& s0) {
  if (p.a.rows() != p.y.size()) throw ValidationError("solve_bpdn: a rows != y length");
  if (!(p.epsilon >= 0.0)) throw ValidationError("solve_bpdn: epsilon must be >= 0");
  if (!(tol > 0.0)) throw ValidationError("solve_bpdn: tol must be > 0");
  const auto& a = p.a;
  const auto& y = p.y;
  const Index n = a.cols();
  const double eps = p.epsilon;

  SolveReport rep;
  const double ynorm = y.norm();
  if (ynorm <= eps) {
    rep.solution = Vector::Zero(n);
    rep.residual_norm = ynorm;
    rep.converged = true;
    rep.status = SolveStatus::converged;
    return rep;
  }

  const double band = std::max(1e-4 * eps, tol);
  // phi(tau) - eps is convex and decreasing; [tau_lo, tau_hi] brackets the root
  double tau_lo = 0.0;
  double f_lo = ynorm - eps;
  double tau_hi = std::numeric_limits<double>::infinity();
  double f_hi = 0.0;
  int hi_streak = 0;
  std::optional<double> ls_floor;
  Vector x = Vector::Zero(n);
  double tau = 0.0;
  if (s0) {
    if (s0->size() != n) throw ValidationError("solve_bpdn: warm start has wrong length");
    x = *s0;
    tau = s0->lpNorm<1>();
  }

  rep.status = SolveStatus::max_iterations;
  for (int k = 0; k < kMaxRootIterations; ++k) {
    SolveReport inner = solve_lasso_constrained(a, y, tau, tol, max_iter, x);
    rep.iterations += inner.iterations;
    x = std::move(inner.solution);
    const Vector r = y - a * x;
    const double phi = r.norm();

    if (std::abs(phi - eps) <= band) {
      rep.status = SolveStatus::converged;
      break;
    }
    const double corr = (a.transpose() * r).lpNorm<Eigen::Infinity>();
    double next;
    if (phi > eps) {
      // An interior or stationary point hints that phi has reached the
      // least-squares floor; confirm against the floor itself.
      const bool interior = inner.converged && x.lpNorm<1>() < tau * (1.0 - 1e-9);
      if (interior || corr <= 1e-12 * phi) {
        if (!ls_floor) ls_floor = (y - a * a.completeOrthogonalDecomposition().solve(y)).norm();
        if (*ls_floor > eps + band) {
          rep.status = SolveStatus::infeasible;
          break;
        }
      }
      if (corr <= 1e-12 * phi) break;
      if (tau >= tau_lo) {
        tau_lo = tau;
        f_lo = phi - eps;
      }
      hi_streak = 0;
      next = tau + (phi - eps) * phi / corr;
    } else {
      // Newton steps from the right crawl when phi is near zero; use false
      // position on the bracket instead, halving a stale left value (Illinois)
      tau_hi = std::min(tau_hi, tau);
      f_hi = phi - eps;
      if (++hi_streak >= 2) f_lo *= 0.5;
      next = tau_hi - f_hi * (tau_hi - tau_lo) / (f_hi - f_lo);
    }
    if (!(next > tau_lo && next < tau_hi))
      next = std::isfinite(tau_hi) ? 0.5 * (tau_lo + tau_hi) : 2.0 * std::max(next, tau_lo);
    if (next == tau) break;
    tau = next;
  }

  rep.solution = std::move(x);
  rep.residual_norm = (y - a * rep.solution).norm();
  rep.objective = rep.solution.lpNorm<1>();
  rep.converged = rep.status == SolveStatus::converged;
  return rep;
}

} // namespace hsics
