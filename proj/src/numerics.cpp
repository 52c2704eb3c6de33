#include "hsics/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

namespace hsics {
namespace {

constexpr int kMaxSweeps = 80;

// Orthogonalizes the columns of w in place (one-sided Jacobi), accumulating the
// rotations into v. On exit the columns of w are mutually orthogonal to working
// precision and w_in = w * v^T.
void jacobi_orthogonalize(Matrix& w, Matrix& v) {
  const Index n = w.cols();
  const double tol = std::numeric_limits<double>::epsilon() * std::sqrt(static_cast<double>(w.rows()));
  std::vector<double> norm2(static_cast<std::size_t>(n));

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    for (Index j = 0; j < n; ++j) norm2[static_cast<std::size_t>(j)] = w.col(j).squaredNorm();

    bool rotated = false;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double alpha = norm2[static_cast<std::size_t>(p)];
        const double beta = norm2[static_cast<std::size_t>(q)];
        if (alpha == 0.0 || beta == 0.0) continue;
        const double gamma = w.col(p).dot(w.col(q));
        if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;

        for (Index i = 0; i < w.rows(); ++i) {
          const double wp = w(i, p);
          const double wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Index i = 0; i < v.rows(); ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
        norm2[static_cast<std::size_t>(p)] = alpha - t * gamma;
        norm2[static_cast<std::size_t>(q)] = beta + t * gamma;
      }
    }
    if (!rotated) return;
  }
  throw NumericalError("svd: one-sided Jacobi did not converge");
}

// Replaces the columns flagged in `missing` with unit vectors orthogonal to all
// other columns (classical Gram-Schmidt, applied twice).
void complete_basis(Matrix& u, const std::vector<bool>& missing) {
  const Index rows = u.rows();
  Index candidate = 0;
  for (Index j = 0; j < u.cols(); ++j) {
    if (!missing[static_cast<std::size_t>(j)]) continue;
    for (;; ++candidate) {
      if (candidate >= rows) throw NumericalError("svd: cannot complete orthonormal basis");
      Vector e = Vector::Unit(rows, candidate);
      for (int pass = 0; pass < 2; ++pass) {
        for (Index k = 0; k < u.cols(); ++k) {
          if (k == j || (missing[static_cast<std::size_t>(k)] && k > j)) continue;
          e -= u.col(k).dot(e) * u.col(k);
        }
      }
      const double nrm = e.norm();
      if (nrm > 0.5) {
        u.col(j) = e / nrm;
        ++candidate;
        break;
      }
    }
  }
}

// SVD of a matrix with rows >= cols.
SvdResult svd_tall(const Matrix& a) {
  const Index rows = a.rows();
  const Index cols = a.cols();

  Matrix w;
  Matrix q_thin;
  if (rows > cols) {
    Eigen::HouseholderQR<Matrix> qr(a);
    w = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    q_thin = qr.householderQ() * Matrix::Identity(rows, cols);
  } else {
    w = a;
  }
  Matrix v = Matrix::Identity(cols, cols);
  jacobi_orthogonalize(w, v);

  Vector norms(cols);
  for (Index j = 0; j < cols; ++j) norms(j) = w.col(j).norm();

  std::vector<Index> order(static_cast<std::size_t>(cols));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return norms(x) > norms(y); });

  SvdResult out;
  out.sigma.resize(cols);
  Matrix u_small(w.rows(), cols);
  out.v.resize(cols, cols);
  std::vector<bool> missing(static_cast<std::size_t>(cols), false);
  for (Index k = 0; k < cols; ++k) {
    const Index j = order[static_cast<std::size_t>(k)];
    out.sigma(k) = norms(j);
    out.v.col(k) = v.col(j);
    if (norms(j) > std::numeric_limits<double>::min()) {
      u_small.col(k) = w.col(j) / norms(j);
    } else {
      out.sigma(k) = 0.0;
      u_small.col(k).setZero();
      missing[static_cast<std::size_t>(k)] = true;
    }
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) complete_basis(u_small, missing);

  out.u = rows > cols ? Matrix(q_thin * u_small) : u_small;

  for (Index k = 0; k < cols; ++k) {
    Index imax = 0;
    out.u.col(k).cwiseAbs().maxCoeff(&imax);
    if (out.u(imax, k) < 0.0) {
      out.u.col(k) = -out.u.col(k);
      out.v.col(k) = -out.v.col(k);
    }
  }
  return out;
}

} // namespace

SvdResult svd(const Matrix& a) {
  require_finite(a, "svd");
  if (a.rows() >= a.cols()) return svd_tall(a);

  // a^T = U' S V'^T  =>  a = V' S U'^T
  SvdResult t = svd_tall(a.transpose());
  SvdResult out{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  for (Index k = 0; k < out.sigma.size(); ++k) {
    Index imax = 0;
    out.u.col(k).cwiseAbs().maxCoeff(&imax);
    if (out.u(imax, k) < 0.0) {
      out.u.col(k) = -out.u.col(k);
      out.v.col(k) = -out.v.col(k);
    }
  }
  return out;
}

double condition_number(const Vector& sigma) {
  if (sigma.size() == 0) throw ValidationError("condition_number: empty spectrum");
  const double smax = sigma.maxCoeff();
  const double smin = sigma.minCoeff();
  if (smax <= 0.0) throw ValidationError("condition_number: matrix is zero");
  if (smin < smax * 1e-300) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

double condition_number(const Matrix& a) { return condition_number(svd(a).sigma); }

Matrix dct_basis(Index d) {
  if (d < 1) throw ValidationError("dct_basis: d must be >= 1");
  Matrix psi(d, d);
  const double dd = static_cast<double>(d);
  for (Index k = 0; k < d; ++k) {
    const double ck = k == 0 ? std::sqrt(1.0 / dd) : std::sqrt(2.0 / dd);
    for (Index i = 0; i < d; ++i)
      psi(i, k) = ck * std::cos(std::numbers::pi * static_cast<double>((2 * i + 1) * k) / (2.0 * dd));
  }
  return psi;
}

} // namespace hsics
