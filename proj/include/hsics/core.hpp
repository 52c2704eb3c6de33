#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hsics {

// Dense column-major storage shared by every module. All numerics are double.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Bad arguments or malformed inputs. The CLI maps this to exit status 1.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (non-convergence, singular factor, ...).
/// The CLI maps this to exit status 2.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Throws ValidationError unless `m` is non-empty and every entry is finite.
void require_finite(const Matrix& m, const char* what);
void require_finite(const Vector& v, const char* what);

/// Hex SHA-256 of the raw bytes of `m` (rows, cols, then column-major data).
/// Used to tie SVD-derived measurement matrices to their source dictionary.
std::string fingerprint(const Matrix& m);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

} // namespace hsics
