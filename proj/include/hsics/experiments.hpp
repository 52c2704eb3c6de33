#pragma once

#include "hsics/core.hpp"
#include "hsics/dictlearn.hpp"
#include "hsics/sensing.hpp"
#include "hsics/spectra.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hsics {

/// ||x_star - x|| / ||x||. Throws ValidationError when x = 0 or lengths differ.
double relative_error(const Vector& x_star, const Vector& x);

enum class Sparsifier { dct, learned };
enum class Sampler { gaussian, subsample, svd };

struct PipelineSpec {
  std::string name;
  Sparsifier sparsifier = Sparsifier::learned;
  Sampler sampler = Sampler::svd;
  bool balanced = false;
  double epsilon = 0.01;
  std::vector<Index> m_list;
  std::uint64_t seed = 0; // measurement matrices; each m derives its own stream
  double tol = 1e-6;      // BPDN tolerance
  int max_iter = 5000;    // SPG iterations per constrained subproblem
};

/// dctgaussian, dctsvd, dgaussian, dsub, dsvd, dsvd-bal.
PipelineSpec pipeline_from_name(const std::string& name, std::vector<Index> m_list, double epsilon,
                                std::uint64_t seed);
const std::vector<std::string>& pipeline_names();

/// Seed of the measurement matrix for a given m; independent of the other
/// entries of m_list.
std::uint64_t measurement_seed(std::uint64_t seed, Index m);

/// Everything needed to reconstruct at one measurement count.
struct Stage {
  Index m = 0;
  MeasurementMatrix phi;
  SensingMatrix sensing;
  std::optional<BalancedDecomposition> balanced;
};

/// Builds the operators of `spec` at m. `factor` is svd(sparsifier) when the
/// sampler is svd (computed if null).
Stage build_stage(const PipelineSpec& spec, const Matrix& sparsifier, Index m, const SvdResult* factor = nullptr);

struct PixelResult {
  Vector codes;  // s
  Vector x_star; // sparsifier * s
  bool converged = false;
  std::string failure; // non-empty when the solve threw
};

PixelResult reconstruct(const Stage& stage, const Matrix& sparsifier, const Vector& y, const PipelineSpec& spec,
                        const std::optional<Vector>& warm = std::nullopt);

struct ErrorCurve {
  std::string pipeline;
  std::string dataset;
  std::vector<Index> m_values;
  std::vector<double> mean_rel_error;
  std::vector<double> std_rel_error; // sample standard deviation over pixels
  std::vector<Index> n_pixels;
  std::vector<Index> n_failed;       // solver did not converge or threw
  Matrix per_pixel;                  // |m_values| x p relative errors
};

/// Appends the summary at m (mean, sample std, counts) of per-pixel relative
/// errors; per_pixel is left to the caller.
void add_curve_point(ErrorCurve& c, Index m, const Vector& errors, Index failed);

/// Runs the pipeline on every test column. `learned` is required for learned
/// sparsifiers; its training pixels must not intersect the test set when both
/// come from the same dataset. Pixels whose solve does not converge keep the
/// solver's last iterate and are counted in n_failed; a solve that throws
/// scores the zero reconstruction (error 1). Each pixel is warm-started from
/// its solution at the previous m.
ErrorCurve run_pipeline(const PipelineSpec& spec, const Dictionary* learned, const SpectraSet& test);

/// Sparsifier of a spec: dct_basis(d) or the learned atoms.
Matrix sparsifier_matrix(const PipelineSpec& spec, const Dictionary* learned, Index bands);

/// Throws ValidationError when the test set shares pixels with the
/// dictionary's training set (same dataset only).
void check_hygiene(const Dictionary& d, const SpectraSet& test);

struct ConditionPoint {
  Index m = 0;
  double unbalanced = 0.0;
  double balanced = 0.0;
};

/// Condition number of the DSVD sensing matrix diag(sigma_m) V_m^T per m, and
/// of its balanced B (10 balancing iterations).
std::vector<ConditionPoint> condition_curve(const Matrix& d, const std::vector<Index>& m_list);

struct RobustnessReport {
  ErrorCurve cross;  // dictionary trained on scene A, tested on scene B
  ErrorCurve native; // dictionary trained on scene B
  double rmse_between_curves = 0.0;
  Dictionary dict_a;
  Dictionary dict_b;
};

RobustnessReport robustness_experiment(const SpectraSet& scene_a_train, const SpectraSet& scene_b_train,
                                       const SpectraSet& scene_b_test, const TrainConfig& cfg,
                                       const PipelineSpec& spec);

/// sqrt(mean_m (a_m - b_m)^2) over mean relative errors; curves must share m.
double curve_rmse(const ErrorCurve& a, const ErrorCurve& b);

// CSV writers; decimals use 17 significant digits.
std::string format_decimal(double v);
void write_error_curve_csv(const std::filesystem::path& path, const ErrorCurve& c);
void write_condition_csv(const std::filesystem::path& path, const std::vector<ConditionPoint>& points);
void write_trace_csv(const std::filesystem::path& path, const Vector& truth, const Vector& reconstruction,
                     const std::optional<Vector>& wavelengths_nm);

} // namespace hsics
