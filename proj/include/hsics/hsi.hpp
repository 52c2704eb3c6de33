#pragma once

#include "hsics/core.hpp"
#include "hsics/dictlearn.hpp"
#include "hsics/spectra.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hsics {

/// Hyperspectral cube in band-sequential order:
/// data[(b * lines + y) * samples + x].
struct HsiCube {
  Index samples = 0;
  Index lines = 0;
  Index bands = 0;
  std::optional<Vector> wavelengths_nm;
  std::vector<double> data;
  int data_type = 5;  // ENVI code used when the cube is written: 4 = float32, 5 = float64
  int byte_order = 0; // 0 = little-endian, 1 = big-endian

  double at(Index x, Index y, Index b) const {
    return data[static_cast<std::size_t>((b * lines + y) * samples + x)];
  }
};

class EnviError : public ValidationError {
public:
  enum class Kind { malformed, missing_key, unsupported_interleave, unsupported_data_type, size_mismatch };
  EnviError(Kind k, const std::string& what) : ValidationError(what), kind_(k) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

/// Reads an ENVI header and its companion binary (the header path without
/// ".hdr", or with .img/.dat/.raw/.bsq in its place). Required keys: samples,
/// lines, bands, data type (4 or 5), interleave (bsq), byte order.
HsiCube read_envi(const std::filesystem::path& header_path);

/// Writes `header_path` and the binary next to it (header path minus ".hdr")
/// using the cube's data_type and byte_order.
void write_envi(const std::filesystem::path& header_path, const HsiCube& cube);

/// Removes the listed band indices (e.g. water-absorption bands).
HsiCube drop_bands(const HsiCube& cube, const std::vector<Index>& bands);

/// One column per pixel, scanning x fastest. With `normalize`, columns are
/// scaled to unit norm and zero pixels are dropped (listed in `dropped`).
SpectraSet to_spectra(const HsiCube& cube, bool normalize);

/// Uniformly random partition: round(train_fraction * p) columns go to the
/// training side. Both sides keep the source order and dataset id.
std::pair<SpectraSet, SpectraSet> split_train_test(const SpectraSet& s, double train_fraction, std::uint64_t seed);

/// Subset of columns, in the given order.
SpectraSet select_columns(const SpectraSet& s, const std::vector<Index>& cols);

struct SynthScene {
  Dictionary true_dictionary;
  Matrix true_codes; // n x p, at most k nonzeros per column, scaled so ||D s_i|| = 1
  SpectraSet spectra;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Planted model: column-normalized Gaussian dictionary, k-sparse Gaussian
/// codes scaled to unit clean norm, spectra = normalize(D s + sigma * noise).
SynthScene synth_scene(Index d, Index n_atoms, Index k, Index p, double noise_sigma, std::uint64_t seed);

/// Same generative model over a given dictionary.
SynthScene synth_scene_from(const Dictionary& dict, Index k, Index p, double noise_sigma, std::uint64_t seed);

/// CSV with one row per band and one column per pixel: header
/// `band,<x>_<y>,...`, values with 17 significant digits.
void write_spectra_csv(const std::filesystem::path& path, const SpectraSet& s);
SpectraSet read_spectra_csv(const std::filesystem::path& path);

} // namespace hsics
