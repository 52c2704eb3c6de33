#include "hsics/sensing.hpp"

#include "hsics/binio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hsics {
namespace {

constexpr double kImbalanceStop = 1e-10;
constexpr double kMaxConditionP = 1e12;

void check_m(Index m, Index d, const char* who) {
  if (d < 1 || m < 1 || m > d)
    throw ValidationError(std::string(who) + ": need 1 <= m <= d, got m = " + std::to_string(m) +
                          ", d = " + std::to_string(d));
}

} // namespace

const char* to_string(MeasurementKind k) {
  switch (k) {
  case MeasurementKind::gaussian: return "gaussian";
  case MeasurementKind::subsample: return "subsample";
  case MeasurementKind::svd_dictionary: return "svd_dictionary";
  case MeasurementKind::svd_dct: return "svd_dct";
  }
  return "unknown";
}

MeasurementKind measurement_kind_from_string(const std::string& s) {
  for (MeasurementKind k : {MeasurementKind::gaussian, MeasurementKind::subsample, MeasurementKind::svd_dictionary,
                            MeasurementKind::svd_dct})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown measurement kind '" + s + "'");
}

MeasurementMatrix gaussian_measurement(Index m, Index d, std::uint64_t seed) {
  check_m(m, d, "gaussian_measurement");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  MeasurementMatrix out;
  out.kind = MeasurementKind::gaussian;
  out.seed = seed;
  out.phi.resize(m, d);
  for (Index i = 0; i < out.phi.size(); ++i) out.phi.data()[i] = dist(rng);
  return out;
}

MeasurementMatrix subsample_measurement(Index m, Index d, std::uint64_t seed) {
  check_m(m, d, "subsample_measurement");
  std::vector<Index> all(static_cast<std::size_t>(d));
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);

  MeasurementMatrix out;
  out.kind = MeasurementKind::subsample;
  out.seed = seed;
  out.bands.assign(all.begin(), all.begin() + m);
  out.phi = Matrix::Zero(m, d);
  for (Index i = 0; i < m; ++i) out.phi(i, out.bands[static_cast<std::size_t>(i)]) = 1.0;
  return out;
}

MeasurementMatrix svd_measurement(const SvdResult& f, const std::string& source_fingerprint, Index m,
                                  MeasurementKind kind) {
  if (kind != MeasurementKind::svd_dictionary && kind != MeasurementKind::svd_dct)
    throw ValidationError("svd_measurement: kind must be an svd kind");
  if (m < 1 || m > f.sigma.size())
    throw ValidationError("svd_measurement: m = " + std::to_string(m) + " outside 1.." + std::to_string(f.sigma.size()));
  MeasurementMatrix out;
  out.kind = kind;
  out.phi = f.u.leftCols(m).transpose();
  out.source_fingerprint = source_fingerprint;
  out.sigma_m = f.sigma.head(m);
  out.v_m = f.v.leftCols(m);
  return out;
}

MeasurementMatrix svd_measurement(const Matrix& source, Index m, MeasurementKind kind) {
  require_finite(source, "svd_measurement");
  return svd_measurement(svd(source), fingerprint(source), m, kind);
}

double sampling_ratio_percent(Index m, Index d) {
  check_m(m, d, "sampling_ratio_percent");
  return 100.0 * static_cast<double>(m) / static_cast<double>(d);
}

SensingMatrix sensing_matrix(const MeasurementMatrix& phi, const Matrix& sparsifier) {
  require_finite(sparsifier, "sensing_matrix sparsifier");
  if (phi.d() != sparsifier.rows())
    throw ValidationError("sensing_matrix: measurement matrix has " + std::to_string(phi.d()) +
                          " columns but the sparsifier has " + std::to_string(sparsifier.rows()) + " bands");
  SensingMatrix out;
  const bool svd_kind = phi.kind == MeasurementKind::svd_dictionary || phi.kind == MeasurementKind::svd_dct;
  if (svd_kind && phi.source_fingerprint == fingerprint(sparsifier)) {
    out.fast_path = true;
    if (phi.sigma_m.size() == phi.m() && phi.v_m.cols() == phi.m()) {
      out.sigma_m = phi.sigma_m;
      out.v_m = phi.v_m;
    } else {
      const SvdResult f = svd(sparsifier);
      out.sigma_m = f.sigma.head(phi.m());
      out.v_m = f.v.leftCols(phi.m());
    }
    out.a = out.sigma_m.asDiagonal() * out.v_m.transpose();
  } else {
    out.a = phi.phi * sparsifier;
  }
  return out;
}

double balanced_residual(const Matrix& b) {
  const Vector norms = b.colwise().norm().transpose();
  const double mean = norms.mean();
  if (mean == 0.0) return 0.0;
  return (norms.array() - mean).abs().maxCoeff() / mean;
}

double imbalance(const Matrix& b) { return balanced_residual(svd(b).v.transpose()); }

BalancedDecomposition balance(const Matrix& a, int t_max, const BalanceObserver& observer) {
  require_finite(a, "balance");
  const Index m = a.rows();
  const Index n = a.cols();
  if (m > n) throw ValidationError("balance: need rows <= cols, got " + std::to_string(m) + "x" + std::to_string(n));
  if (t_max < 0) throw ValidationError("balance: t_max must be >= 0");
  for (Index j = 0; j < n; ++j)
    if ((a.col(j).array() == 0.0).all()) throw ValidationError("balance: column " + std::to_string(j) + " is zero");

  BalancedDecomposition dec;
  dec.p = Matrix::Identity(m, m);
  dec.b = a;
  dec.q = Vector::Ones(n);
  const double rms_norm = std::sqrt(static_cast<double>(m) / static_cast<double>(n));
  SvdResult f = svd(dec.b);
  dec.imbalance_history.push_back(balanced_residual(f.v.transpose()));

  for (int t = 0; t < t_max && dec.imbalance_history.back() >= kImbalanceStop; ++t) {
    const Matrix vt = f.v.transpose();
    // S^{-1} on the diagonal. Columns go to the common norm sqrt(m/n), the RMS
    // column norm of an m x n matrix with orthonormal rows, so a balanced
    // input is a fixed point with S = I and B keeps orthonormal rows.
    const Vector scale = vt.colwise().norm().transpose() / rms_norm;
    if (!scale.allFinite() || (scale.array() == 0.0).any() || !scale.cwiseInverse().allFinite())
      throw NumericalError("balance: column scaling became zero or non-finite");
    dec.p = dec.p * f.u * f.sigma.asDiagonal();
    dec.b = vt * scale.cwiseInverse().asDiagonal();
    dec.q = dec.q.cwiseProduct(scale);
    ++dec.iterations_run;
    if (observer) observer(dec.iterations_run, dec.p, dec.b, dec.q);
    f = svd(dec.b);
    dec.imbalance_history.push_back(balanced_residual(f.v.transpose()));
  }
  dec.imbalance = dec.imbalance_history.back();
  if (!dec.q.allFinite() || (dec.q.array() == 0.0).any())
    throw NumericalError("balance: column scaling became zero or non-finite");
  return dec;
}

BalancedSolve balanced_bpdn(const BalancedDecomposition& dec, const Vector& y, double epsilon, double tol,
                            int max_iter, const std::optional<Vector>& s0) {
  if (y.size() != dec.p.rows())
    throw ValidationError("balanced_bpdn: y has length " + std::to_string(y.size()) + ", expected " +
                          std::to_string(dec.p.rows()));
  require_finite(y, "balanced_bpdn y");
  if (condition_number(dec.p) > kMaxConditionP)
    throw NumericalError("balanced_bpdn: P is near singular (condition number above 1e12)");
  const Vector y_tilde = dec.p.partialPivLu().solve(y);

  std::optional<Vector> start;
  if (s0) start = s0->cwiseProduct(dec.q);
  BalancedSolve out;
  out.balanced = solve_bpdn({dec.b, y_tilde, epsilon}, tol, max_iter, start);
  out.solution = out.balanced.solution.cwiseQuotient(dec.q);
  return out;
}

void write_measurement(const std::filesystem::path& path, const MeasurementMatrix& m) {
  nlohmann::json j;
  j["kind"] = to_string(m.kind);
  j["m"] = m.m();
  j["d"] = m.d();
  j["seed"] = m.seed;
  j["bands"] = m.bands;
  j["source_fingerprint"] = m.source_fingerprint;
  binio::write(path, "HSMEAS1", {&m.phi}, j.dump());
}

MeasurementMatrix read_measurement(const std::filesystem::path& path) {
  binio::Contents c = binio::read(path, "HSMEAS1", 1);
  MeasurementMatrix m;
  m.phi = std::move(c.blocks[0]);
  try {
    const nlohmann::json j = nlohmann::json::parse(c.json);
    m.kind = measurement_kind_from_string(j.at("kind").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.bands = j.at("bands").get<std::vector<Index>>();
    m.source_fingerprint = j.at("source_fingerprint").get<std::string>();
    if (j.at("m").get<Index>() != m.m() || j.at("d").get<Index>() != m.d())
      throw ValidationError(path.string() + ": header dimensions disagree with the matrix block");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return m;
}

void write_balanced(const std::filesystem::path& path, const BalancedDecomposition& dec) {
  nlohmann::json j;
  j["iterations_run"] = dec.iterations_run;
  j["imbalance"] = dec.imbalance;
  j["imbalance_history"] = dec.imbalance_history;
  const Matrix q = dec.q;
  binio::write(path, "HSBAL1", {&dec.p, &dec.b, &q}, j.dump());
}

BalancedDecomposition read_balanced(const std::filesystem::path& path) {
  binio::Contents c = binio::read(path, "HSBAL1", 3);
  BalancedDecomposition dec;
  dec.p = std::move(c.blocks[0]);
  dec.b = std::move(c.blocks[1]);
  if (c.blocks[2].cols() != 1) throw ValidationError(path.string() + ": q block must be a single column");
  dec.q = c.blocks[2].col(0);
  if (dec.p.rows() != dec.p.cols() || dec.p.rows() != dec.b.rows() || dec.q.size() != dec.b.cols())
    throw ValidationError(path.string() + ": inconsistent P/B/q dimensions");
  try {
    const nlohmann::json j = nlohmann::json::parse(c.json);
    dec.iterations_run = j.at("iterations_run").get<int>();
    dec.imbalance = j.at("imbalance").get<double>();
    dec.imbalance_history = j.at("imbalance_history").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return dec;
}

} // namespace hsics
