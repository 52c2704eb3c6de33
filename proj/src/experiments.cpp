#include "hsics/experiments.hpp"

#include "hsics/numerics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

namespace hsics {
namespace {

constexpr int kBalanceIterations = 10;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw ValidationError("write failed: " + path.string());
}

void check_m_list(const std::vector<Index>& m_list, Index limit, const std::string& who) {
  if (m_list.empty()) throw ValidationError(who + ": m list is empty");
  for (std::size_t i = 0; i < m_list.size(); ++i) {
    if (m_list[i] < 1 || m_list[i] > limit)
      throw ValidationError(who + ": m = " + std::to_string(m_list[i]) + " outside 1.." + std::to_string(limit));
    if (i > 0 && m_list[i] <= m_list[i - 1]) throw ValidationError(who + ": m list must be strictly increasing");
  }
}

} // namespace

double relative_error(const Vector& x_star, const Vector& x) {
  if (x_star.size() != x.size()) throw ValidationError("relative_error: length mismatch");
  const double ref = x.norm();
  if (ref == 0.0) throw ValidationError("relative_error: reference signal is zero");
  return (x_star - x).norm() / ref;
}

const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> names{"dctgaussian", "dctsvd", "dgaussian", "dsub", "dsvd", "dsvd-bal"};
  return names;
}

PipelineSpec pipeline_from_name(const std::string& name, std::vector<Index> m_list, double epsilon,
                                std::uint64_t seed) {
  std::string key = name;
  for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  PipelineSpec spec;
  spec.name = key;
  spec.m_list = std::move(m_list);
  spec.epsilon = epsilon;
  spec.seed = seed;
  if (key == "dctgaussian") {
    spec.sparsifier = Sparsifier::dct;
    spec.sampler = Sampler::gaussian;
  } else if (key == "dctsvd") {
    spec.sparsifier = Sparsifier::dct;
    spec.sampler = Sampler::svd;
  } else if (key == "dgaussian") {
    spec.sampler = Sampler::gaussian;
  } else if (key == "dsub") {
    spec.sampler = Sampler::subsample;
  } else if (key == "dsvd") {
    spec.sampler = Sampler::svd;
  } else if (key == "dsvd-bal") {
    spec.sampler = Sampler::svd;
    spec.balanced = true;
  } else {
    throw ValidationError("unknown pipeline '" + name + "' (expected one of dctgaussian, dctsvd, dgaussian, dsub, dsvd, dsvd-bal)");
  }
  if (!(epsilon >= 0.0)) throw ValidationError("pipeline " + key + ": epsilon must be >= 0");
  return spec;
}

std::uint64_t measurement_seed(std::uint64_t seed, Index m) {
  // splitmix64 finalizer over (seed, m)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(m) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix sparsifier_matrix(const PipelineSpec& spec, const Dictionary* learned, Index bands) {
  if (spec.sparsifier == Sparsifier::dct) return dct_basis(bands);
  if (!learned) throw ValidationError("pipeline " + spec.name + " needs a learned dictionary");
  if (learned->bands() != bands)
    throw ValidationError("pipeline " + spec.name + ": dictionary has " + std::to_string(learned->bands()) +
                          " bands, spectra have " + std::to_string(bands));
  return learned->atoms;
}

Stage build_stage(const PipelineSpec& spec, const Matrix& sparsifier, Index m, const SvdResult* factor) {
  const Index d = sparsifier.rows();
  Stage st;
  st.m = m;
  switch (spec.sampler) {
  case Sampler::gaussian: st.phi = gaussian_measurement(m, d, measurement_seed(spec.seed, m)); break;
  case Sampler::subsample: st.phi = subsample_measurement(m, d, measurement_seed(spec.seed, m)); break;
  case Sampler::svd: {
    const MeasurementKind kind =
        spec.sparsifier == Sparsifier::dct ? MeasurementKind::svd_dct : MeasurementKind::svd_dictionary;
    if (factor) st.phi = svd_measurement(*factor, fingerprint(sparsifier), m, kind);
    else st.phi = svd_measurement(sparsifier, m, kind);
    break;
  }
  }
  st.sensing = sensing_matrix(st.phi, sparsifier);
  if (spec.balanced) st.balanced = balance(st.sensing.a, kBalanceIterations);
  return st;
}

PixelResult reconstruct(const Stage& stage, const Matrix& sparsifier, const Vector& y, const PipelineSpec& spec,
                        const std::optional<Vector>& warm) {
  PixelResult out;
  try {
    if (stage.balanced) {
      BalancedSolve r = balanced_bpdn(*stage.balanced, y, spec.epsilon, spec.tol, spec.max_iter, warm);
      out.codes = std::move(r.solution);
      out.converged = r.balanced.converged;
    } else {
      SolveReport r = solve_bpdn({stage.sensing.a, y, spec.epsilon}, spec.tol, spec.max_iter, warm);
      out.codes = std::move(r.solution);
      out.converged = r.converged;
    }
  } catch (const NumericalError& e) {
    out.codes = Vector::Zero(sparsifier.cols());
    out.converged = false;
    out.failure = e.what();
  }
  out.x_star = sparsifier * out.codes;
  return out;
}

void check_hygiene(const Dictionary& d, const SpectraSet& test) {
  if (d.provenance.dataset_id != test.dataset_id) return;
  const std::set<PixelId> train(d.provenance.training_pixels.begin(), d.provenance.training_pixels.end());
  for (const PixelId& id : test.pixel_ids)
    if (train.count(id))
      throw ValidationError("test pixel (" + std::to_string(id.x) + ", " + std::to_string(id.y) +
                            ") was used to train the dictionary");
}

void add_curve_point(ErrorCurve& c, Index m, const Vector& errors, Index failed) {
  const Index p = errors.size();
  if (p == 0) throw ValidationError("add_curve_point: no pixels");
  const double mean = errors.mean();
  const double var = p > 1 ? (errors.array() - mean).square().sum() / static_cast<double>(p - 1) : 0.0;
  c.m_values.push_back(m);
  c.mean_rel_error.push_back(mean);
  c.std_rel_error.push_back(std::sqrt(var));
  c.n_pixels.push_back(p);
  c.n_failed.push_back(failed);
}

ErrorCurve run_pipeline(const PipelineSpec& spec, const Dictionary* learned, const SpectraSet& test) {
  validate(test);
  const Index d = test.bands();
  const Matrix sparsifier = sparsifier_matrix(spec, learned, d);
  if (spec.sparsifier == Sparsifier::learned) check_hygiene(*learned, test);
  const Index limit = spec.sampler == Sampler::svd ? std::min(d, sparsifier.cols()) : d;
  check_m_list(spec.m_list, limit, "pipeline " + spec.name);

  std::optional<SvdResult> factor;
  if (spec.sampler == Sampler::svd) factor = svd(sparsifier);

  ErrorCurve curve;
  curve.pipeline = spec.name;
  curve.dataset = test.dataset_id;
  const Index p = test.pixels();
  curve.per_pixel.resize(static_cast<Index>(spec.m_list.size()), p);
  std::vector<std::optional<Vector>> warm(static_cast<std::size_t>(p));

  for (std::size_t k = 0; k < spec.m_list.size(); ++k) {
    const Index m = spec.m_list[k];
    const Stage stage = build_stage(spec, sparsifier, m, factor ? &*factor : nullptr);
    Index failed = 0;
    for (Index i = 0; i < p; ++i) {
      const Vector x = test.columns.col(i);
      const Vector y = stage.phi.phi * x;
      PixelResult r = reconstruct(stage, sparsifier, y, spec, warm[static_cast<std::size_t>(i)]);
      if (!r.converged) ++failed;
      curve.per_pixel(static_cast<Index>(k), i) = relative_error(r.x_star, x);
      if (r.failure.empty()) warm[static_cast<std::size_t>(i)] = std::move(r.codes);
    }
    add_curve_point(curve, m, curve.per_pixel.row(static_cast<Index>(k)).transpose(), failed);
  }
  return curve;
}

std::vector<ConditionPoint> condition_curve(const Matrix& d, const std::vector<Index>& m_list) {
  require_finite(d, "condition_curve");
  check_m_list(m_list, std::min(d.rows(), d.cols()), "condition_curve");
  const SvdResult f = svd(d);
  std::vector<ConditionPoint> out;
  for (Index m : m_list) {
    const Matrix a = f.sigma.head(m).asDiagonal() * f.v.leftCols(m).transpose();
    ConditionPoint pt;
    pt.m = m;
    pt.unbalanced = condition_number(a);
    pt.balanced = condition_number(balance(a, kBalanceIterations).b);
    out.push_back(pt);
  }
  return out;
}

double curve_rmse(const ErrorCurve& a, const ErrorCurve& b) {
  if (a.m_values != b.m_values) throw ValidationError("curve_rmse: curves have different m values");
  if (a.m_values.empty()) throw ValidationError("curve_rmse: empty curves");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.m_values.size(); ++i) {
    const double diff = a.mean_rel_error[i] - b.mean_rel_error[i];
    sum += diff * diff;
  }
  return std::sqrt(sum / static_cast<double>(a.m_values.size()));
}

RobustnessReport robustness_experiment(const SpectraSet& scene_a_train, const SpectraSet& scene_b_train,
                                       const SpectraSet& scene_b_test, const TrainConfig& cfg,
                                       const PipelineSpec& spec) {
  if (scene_a_train.bands() != scene_b_train.bands() || scene_b_train.bands() != scene_b_test.bands())
    throw ValidationError("robustness_experiment: scenes have different band counts");
  if (spec.sparsifier != Sparsifier::learned)
    throw ValidationError("robustness_experiment: the pipeline must use a learned dictionary");
  RobustnessReport rep;
  rep.dict_a = learn_dictionary(scene_a_train, cfg);
  rep.dict_b = learn_dictionary(scene_b_train, cfg);
  rep.cross = run_pipeline(spec, &rep.dict_a, scene_b_test);
  rep.native = run_pipeline(spec, &rep.dict_b, scene_b_test);
  rep.rmse_between_curves = curve_rmse(rep.cross, rep.native);
  return rep;
}

std::string format_decimal(double v) { return fmt::format("{:.17g}", v); }

void write_error_curve_csv(const std::filesystem::path& path, const ErrorCurve& c) {
  std::string out = "m,mean_rel_err,std_rel_err,n_pixels,n_failed\n";
  for (std::size_t i = 0; i < c.m_values.size(); ++i)
    out += fmt::format("{},{},{},{},{}\n", c.m_values[i], format_decimal(c.mean_rel_error[i]),
                       format_decimal(c.std_rel_error[i]), c.n_pixels[i], c.n_failed[i]);
  write_text(path, out);
}

void write_condition_csv(const std::filesystem::path& path, const std::vector<ConditionPoint>& points) {
  std::string out = "m,cond_unbalanced,cond_balanced\n";
  for (const ConditionPoint& p : points)
    out += fmt::format("{},{},{}\n", p.m, format_decimal(p.unbalanced), format_decimal(p.balanced));
  write_text(path, out);
}

void write_trace_csv(const std::filesystem::path& path, const Vector& truth, const Vector& reconstruction,
                     const std::optional<Vector>& wavelengths_nm) {
  if (truth.size() != reconstruction.size()) throw ValidationError("write_trace_csv: length mismatch");
  if (wavelengths_nm && wavelengths_nm->size() != truth.size())
    throw ValidationError("write_trace_csv: wavelength count does not match the band count");
  std::string out = "band,wavelength_nm,truth,reconstruction\n";
  for (Index b = 0; b < truth.size(); ++b)
    out += fmt::format("{},{},{},{}\n", b, wavelengths_nm ? format_decimal((*wavelengths_nm)(b)) : std::string(),
                       format_decimal(truth(b)), format_decimal(reconstruction(b)));
  write_text(path, out);
}

} // namespace hsics
