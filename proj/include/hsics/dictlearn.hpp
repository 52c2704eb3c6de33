#pragma once

#include "hsics/core.hpp"
#include "hsics/spectra.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hsics {

struct DictionaryProvenance {
  std::string dataset_id;
  double lambda = 0.0;
  int epochs = 0;      // requested
  int epochs_run = 0;  // completed before the objective stopped decreasing
  std::uint64_t seed = 0;
  Index batch_size = 0; // 0 = full batch
  std::vector<PixelId> training_pixels;
  std::vector<double> objective_history; // index 0 = after initial coding
};

/// Sparsifying dictionary with atoms as columns; every atom has norm <= 1.
struct Dictionary {
  Matrix atoms; // d x n
  DictionaryProvenance provenance;

  Index bands() const { return atoms.rows(); }
  Index atom_count() const { return atoms.cols(); }
};

struct TrainConfig {
  Index atom_count = 0;
  double lambda = 0.0; // <= 0 selects 1.2 / sqrt(d)
  int epochs = 30;
  std::uint64_t seed = 0;
  double tol = 1e-6;      // relative change that ends a dictionary-update pass
  double code_tol = 1e-8; // KKT tolerance of each sparse-coding solve
  Index batch_size = 0;   // 0 = full batch, otherwise minibatch size
};

double default_lambda(Index bands);

/// 1/2 sum_i ||x_i - D s_i||^2 + lambda sum_i ||s_i||_1
double dictionary_objective(const Matrix& x, const Matrix& d, const Matrix& codes, double lambda);

/// Alternating minimization: sparse-code every column with the dictionary
/// fixed, then block-coordinate descent on the atoms using the accumulated
/// statistics A = S S^T and B = X S^T, projecting each atom onto the unit
/// ball. The recorded objective never increases; an epoch that would
/// increase it is discarded and training stops.
Dictionary learn_dictionary(const SpectraSet& x, const TrainConfig& cfg);

struct CodingResult {
  Matrix coefficients;           // n x p
  std::vector<Index> unconverged; // columns whose solve hit the sweep cap
};

/// Column-wise Lasso coding of x against d.
CodingResult sparse_code(const Matrix& d, const Matrix& x, double lambda, double tol = 1e-8,
                         int max_sweeps = 10000);

// HSDICT1 file: "HSDICT1\0", u32 d, u32 n, f64 column-major atoms, u32 byte
// length + provenance JSON. All integers and floats little-endian.
void write_dictionary(const std::filesystem::path& path, const Dictionary& d);
Dictionary read_dictionary(const std::filesystem::path& path);

std::string provenance_json(const DictionaryProvenance& p);
DictionaryProvenance provenance_from_json(const std::string& text);

} // namespace hsics
