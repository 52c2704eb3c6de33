#pragma once

#include "hsics/core.hpp"
#include "hsics/numerics.hpp"
#include "hsics/sparse.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace hsics {

enum class MeasurementKind { gaussian, subsample, svd_dictionary, svd_dct };

const char* to_string(MeasurementKind k);
MeasurementKind measurement_kind_from_string(const std::string& s);

/// Phi (m x d) plus what is needed to rebuild or recognise it.
struct MeasurementMatrix {
  Matrix phi;
  MeasurementKind kind = MeasurementKind::gaussian;
  std::uint64_t seed = 0;          // gaussian, subsample
  std::vector<Index> bands;        // subsample: band picked by each row
  std::string source_fingerprint;  // svd kinds: fingerprint() of the SVD source
  // svd kinds: leading m singular values / right vectors of the source, used
  // by sensing_matrix; empty after a file round trip (recomputed on demand)
  Vector sigma_m;
  Matrix v_m;

  Index m() const { return phi.rows(); }
  Index d() const { return phi.cols(); }
};

/// Entries i.i.d. N(0, 1/m).
MeasurementMatrix gaussian_measurement(Index m, Index d, std::uint64_t seed);

/// m distinct bands drawn uniformly without replacement; row i = e_{bands[i]}.
MeasurementMatrix subsample_measurement(Index m, Index d, std::uint64_t seed);

/// Phi = U_m^T from svd(source).
MeasurementMatrix svd_measurement(const Matrix& source, Index m, MeasurementKind kind = MeasurementKind::svd_dictionary);

/// Same, reusing a factorization of `source` (one SVD shared across many m).
MeasurementMatrix svd_measurement(const SvdResult& f, const std::string& source_fingerprint, Index m,
                                  MeasurementKind kind = MeasurementKind::svd_dictionary);

/// m / d as a percentage, the sampling ratio.
double sampling_ratio_percent(Index m, Index d);

struct SensingMatrix {
  Matrix a;             // m x n
  bool fast_path = false; // a = diag(sigma_m) v_m^T
  Vector sigma_m;
  Matrix v_m;
};

/// a = Phi * sparsifier, formed as diag(sigma_m) V_m^T directly when Phi was
/// built by svd_measurement from this very sparsifier.
SensingMatrix sensing_matrix(const MeasurementMatrix& phi, const Matrix& sparsifier);

/// a = P * B * diag(q).
struct BalancedDecomposition {
  Matrix p; // m x m
  Matrix b; // m x n
  Vector q; // n, nonzero
  int iterations_run = 0;
  double imbalance = 0.0;
  // imbalance_history[t] is the imbalance after t updates; [0] describes a itself
  std::vector<double> imbalance_history;
};

/// max_j | ||b_j|| - cbar | / cbar with cbar the mean column norm; 0 when b = 0.
double balanced_residual(const Matrix& b);

/// Imbalance of b as measured by the balancing iteration: balanced_residual
/// of the right singular vectors V^T of b. Zero exactly at a fixed point.
double imbalance(const Matrix& b);

using BalanceObserver = std::function<void(int t, const Matrix& p, const Matrix& b, const Vector& q)>;

/// SVD-based rectangular balancing. Starting from P = I, B = a, q = 1, each
/// update takes B = U S V^T, sets P <- P U S, B <- V^T D, q <- q / diag(D)
/// where D scales the columns of V^T to the common norm sqrt(m/n) (unit norm
/// up to that constant, which keeps the rows of B orthonormal and leaves P
/// and q free of a growing scale factor). Runs t_max updates, or
/// fewer once the imbalance falls below 1e-10. `observer` sees the state
/// after every update.
BalancedDecomposition balance(const Matrix& a, int t_max = 10, const BalanceObserver& observer = {});

struct BalancedSolve {
  Vector solution;      // s = s_tilde / q
  SolveReport balanced; // report of the solve in balanced coordinates (s_tilde, y_tilde)
};

/// Solves min ||s~||_1 s.t. ||P^{-1} y - B s~|| <= epsilon and maps back by
/// s = s~ / q. epsilon is used as given. Throws NumericalError when
/// cond(P) > 1e12.
BalancedSolve balanced_bpdn(const BalancedDecomposition& dec, const Vector& y, double epsilon, double tol = 1e-6,
                            int max_iter = 5000, const std::optional<Vector>& s0 = std::nullopt);

// HSMEAS1: Phi block + kind JSON. HSBAL1: P, B, q blocks + JSON.
void write_measurement(const std::filesystem::path& path, const MeasurementMatrix& m);
MeasurementMatrix read_measurement(const std::filesystem::path& path);
void write_balanced(const std::filesystem::path& path, const BalancedDecomposition& dec);
BalancedDecomposition read_balanced(const std::filesystem::path& path);

} // namespace hsics
