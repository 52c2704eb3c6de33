#pragma once

#include "hsics/core.hpp"

#include <optional>
#include <vector>

namespace hsics {

/// min_s 1/2 ||y - a s||^2 + lambda ||s||_1
struct LassoProblem {
  Eigen::Ref<const Matrix> a;
  Eigen::Ref<const Vector> y;
  double lambda;
};

/// min_s ||s||_1  s.t.  ||y - a s||_2 <= epsilon
struct BpdnProblem {
  Eigen::Ref<const Matrix> a;
  Eigen::Ref<const Vector> y;
  double epsilon;
};

enum class SolveStatus {
  converged,
  max_iterations,
  infeasible, // BPDN only: epsilon is below the distance from y to range(a)
};

const char* to_string(SolveStatus s);

struct SolveReport {
  Vector solution;
  double residual_norm = 0.0; // ||y - a * solution||_2, recomputed at exit
  int iterations = 0;
  bool converged = false;
  // Lasso: 1/2||r||^2 + lambda||s||_1. Constrained Lasso: 1/2||r||^2. BPDN: ||s||_1.
  double objective = 0.0;
  SolveStatus status = SolveStatus::max_iterations;
  // lasso_cd only: objective after each full sweep.
  std::vector<double> objective_history;
};

/// Cyclic coordinate descent for the Lasso.
///
/// Stops as soon as the KKT residual
///   max_j  s_j == 0 ? max(0, |a_j^T r| - lambda) : |a_j^T r - lambda sign(s_j)|
/// drops to `tol`; checked before the first sweep and after every sweep.
/// Non-convergence within `max_iter` sweeps is reported, not thrown.
SolveReport lasso_cd(const LassoProblem& p, const std::optional<Vector>& s0, int max_iter, double tol);

/// KKT residual of `s` for the Lasso (see lasso_cd).
double lasso_kkt_residual(const LassoProblem& p, const Vector& s);

/// Euclidean projection of v onto {w : ||w||_1 <= tau}.
Vector project_l1(const Vector& v, double tau);

/// min 1/2||y - a s||^2  s.t. ||s||_1 <= tau, by spectral projected gradient
/// (Barzilai-Borwein steps, nonmonotone Armijo line search). Exits when the
/// projected-gradient norm ||P(s - g) - s|| <= tol.
SolveReport solve_lasso_constrained(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& y, double tau, double tol, int max_iter,
                                    const std::optional<Vector>& s0 = std::nullopt);

/// Basis pursuit denoising by Pareto-curve root finding: Newton iteration on
/// phi(tau) = ||y - a s_tau|| - epsilon with phi'(tau) = -||a^T r||_inf / ||r||,
/// safeguarded by a bracket, at most 30 root iterations. Each s_tau comes from
/// solve_lasso_constrained (tolerance `tol`, at most `max_iter` iterations).
///
/// On convergence |residual - epsilon| <= max(1e-4 epsilon, tol), or the zero
/// vector when ||y|| <= epsilon. Reports SolveStatus::infeasible when the
/// least-squares residual floor lies above epsilon.
SolveReport solve_bpdn(const BpdnProblem& p, double tol, int max_iter,
                       const std::optional<Vector>& s0 = std::nullopt);

namespace detail {

/// Coordinate descent on the Gram form: gram = a^T a, corr = a^T y. Produces
/// the same iterates as lasso_cd. `s` is the warm start and the output.
/// Returns the number of sweeps, or -1 when max_iter was exhausted.
int lasso_cd_gram(const Matrix& gram, const Eigen::Ref<const Vector>& corr, double lambda, Eigen::Ref<Vector> s,
                  int max_iter, double tol);

} // namespace detail

} // namespace hsics
