#pragma once

#include "hsics/core.hpp"

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hsics {

/// Spatial coordinate of a pixel in its source cube (synthetic scenes use
/// (column index, 0)).
struct PixelId {
  std::int32_t x = 0;
  std::int32_t y = 0;
  auto operator<=>(const PixelId&) const = default;
};

/// Spectra as columns of a d x p matrix.
///
/// dataset_id names the source (a content hash for cubes, a parameter string
/// for synthetic scenes); subsets produced by a split keep it, which is what
/// lets a dictionary's training ids be checked against a test set.
struct SpectraSet {
  Matrix columns;                  // d x p
  std::vector<PixelId> pixel_ids;  // length p
  bool normalized = false;         // every column has unit l2 norm
  std::string dataset_id;
  std::vector<PixelId> dropped;    // zero pixels removed during normalization
  std::optional<Vector> wavelengths_nm;

  Index bands() const { return columns.rows(); }
  Index pixels() const { return columns.cols(); }
};

/// Throws ValidationError if the set is internally inconsistent.
void validate(const SpectraSet& s);

} // namespace hsics
