#include "hsics/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace hsics {
namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// g = a^T r
double kkt_from_gradient(const Vector& g, const Vector& s, double lambda) {
  double worst = 0.0;
  for (Index j = 0; j < s.size(); ++j) {
    const double v = s(j) == 0.0 ? std::max(0.0, std::abs(g(j)) - lambda)
                                 : std::abs(g(j) - std::copysign(lambda, s(j)));
    worst = std::max(worst, v);
  }
  return worst;
}

void validate(const LassoProblem& p) {
  if (p.a.rows() != p.y.size())
    throw ValidationError("lasso: a has " + std::to_string(p.a.rows()) + " rows but y has length " +
                          std::to_string(p.y.size()));
  if (!(p.lambda > 0.0)) throw ValidationError("lasso: lambda must be > 0");
}

} // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
  case SolveStatus::converged: return "converged";
  case SolveStatus::max_iterations: return "max_iterations";
  case SolveStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

double lasso_kkt_residual(const LassoProblem& p, const Vector& s) {
  validate(p);
  const Vector r = p.y - p.a * s;
  return kkt_from_gradient(p.a.transpose() * r, s, p.lambda);
}

SolveReport lasso_cd(const LassoProblem& p, const std::optional<Vector>& s0, int max_iter, double tol) {
  validate(p);
  if (!(tol > 0.0)) throw ValidationError("lasso_cd: tol must be > 0");
  const Index n = p.a.cols();

  SolveReport rep;
  rep.solution = s0 ? *s0 : Vector::Zero(n);
  if (rep.solution.size() != n) throw ValidationError("lasso_cd: warm start has wrong length");
  Vector& s = rep.solution;

  const Vector col_norm2 = p.a.colwise().squaredNorm().transpose();
  Vector r = p.y - p.a * s;
  auto objective = [&] { return 0.5 * r.squaredNorm() + p.lambda * s.lpNorm<1>(); };

  double kkt = kkt_from_gradient(p.a.transpose() * r, s, p.lambda);
  rep.converged = kkt <= tol;
  for (int sweep = 0; sweep < max_iter && !rep.converged; ++sweep) {
    for (Index j = 0; j < n; ++j) {
      if (col_norm2(j) == 0.0) {
        s(j) = 0.0;
        continue;
      }
      const double z = p.a.col(j).dot(r) + col_norm2(j) * s(j);
      const double next = soft_threshold(z, p.lambda) / col_norm2(j);
      const double delta = next - s(j);
      if (delta != 0.0) {
        r.noalias() -= delta * p.a.col(j);
        s(j) = next;
      }
    }
    // refresh the residual so drift never accumulates across sweeps
    r = p.y - p.a * s;
    rep.objective_history.push_back(objective());
    rep.iterations = sweep + 1;
    kkt = kkt_from_gradient(p.a.transpose() * r, s, p.lambda);
    rep.converged = kkt <= tol;
  }

  r = p.y - p.a * s;
  rep.residual_norm = r.norm();
  rep.objective = objective();
  rep.status = rep.converged ? SolveStatus::converged : SolveStatus::max_iterations;
  return rep;
}

namespace detail {

int lasso_cd_gram(const Matrix& gram, const Eigen::Ref<const Vector>& corr, double lambda, Eigen::Ref<Vector> s,
                  int max_iter, double tol) {
  const Index n = gram.cols();
  Vector g = corr - gram * s; // a^T r
  if (kkt_from_gradient(g, s, lambda) <= tol) return 0;

  for (int sweep = 0; sweep < max_iter; ++sweep) {
    for (Index j = 0; j < n; ++j) {
      const double gjj = gram(j, j);
      if (gjj == 0.0) {
        s(j) = 0.0;
        continue;
      }
      const double z = g(j) + gjj * s(j);
      const double next = soft_threshold(z, lambda) / gjj;
      const double delta = next - s(j);
      if (delta != 0.0) {
        g.noalias() -= delta * gram.col(j);
        s(j) = next;
      }
    }
    // exact refresh, touching only the active columns
    g = corr;
    for (Index j = 0; j < n; ++j)
      if (s(j) != 0.0) g.noalias() -= s(j) * gram.col(j);
    if (kkt_from_gradient(g, s, lambda) <= tol) return sweep + 1;
  }
  return -1;
}

} // namespace detail

Vector project_l1(const Vector& v, double tau) {
  if (!(tau >= 0.0)) throw ValidationError("project_l1: tau must be >= 0");
  if (tau == 0.0) return Vector::Zero(v.size());
  // slack keeps the projection idempotent under rounding of the l1 sum
  if (v.lpNorm<1>() <= tau * (1.0 + 1e-13)) return v;

  std::vector<double> mag(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) mag[static_cast<std::size_t>(i)] = std::abs(v(i));
  std::sort(mag.begin(), mag.end(), std::greater<>());

  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < mag.size(); ++j) {
    cumsum += mag[j];
    const double t = (cumsum - tau) / static_cast<double>(j + 1);
    if (mag[j] - t > 0.0) theta = t;
    else break;
  }

  Vector w(v.size());
  for (Index i = 0; i < v.size(); ++i) w(i) = std::copysign(std::max(std::abs(v(i)) - theta, 0.0), v(i));
  return w;
}

} // namespace hsics
