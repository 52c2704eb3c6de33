#include "hsics/dictlearn.hpp"

#include "hsics/binio.hpp"
#include "hsics/sparse.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hsics {
namespace {

constexpr double kDeadAtom = 1e-10;
constexpr int kMaxUpdatePasses = 100;
constexpr int kMaxCodeSweeps = 10000;

// Codes the listed columns of x in place, warm-started from their current codes.
void code_columns(const Matrix& d, const Matrix& x, double lambda, double tol, const std::vector<Index>& cols,
                  Matrix& codes) {
  const Matrix gram = d.transpose() * d;
  for (Index i : cols) {
    const Vector corr = d.transpose() * x.col(i);
    detail::lasso_cd_gram(gram, corr, lambda, codes.col(i), kMaxCodeSweeps, tol);
  }
}

// Cold-start coding along a decreasing lambda path (factor 10 per stage),
// each stage warm-started from the previous one. Plain coordinate descent
// from zero crawls when lambda is tiny and the Gram matrix is singular.
bool code_by_continuation(const Matrix& gram, const Vector& corr, double lambda, Eigen::Ref<Vector> s,
                          int max_sweeps, double tol) {
  const double lambda_max = corr.lpNorm<Eigen::Infinity>();
  if (lambda >= lambda_max) {
    s.setZero();
    return true;
  }
  int budget = max_sweeps;
  for (double stage = std::max(lambda, 0.1 * lambda_max);; stage = std::max(lambda, 0.1 * stage)) {
    const bool last = stage == lambda;
    const int used = detail::lasso_cd_gram(gram, corr, stage, s, budget, last ? tol : std::max(tol, 1e-3 * stage));
    if (last) return used >= 0;
    budget -= used < 0 ? budget : used;
    if (budget <= 0) return false;
  }
}

// Block-coordinate descent over the atoms for fixed statistics
// a = S S^T, b = X S^T; each column step is exact and followed by projection
// onto the unit ball.
void update_atoms(Matrix& d, const Matrix& a, const Matrix& b, double tol) {
  for (int pass = 0; pass < kMaxUpdatePasses; ++pass) {
    const Matrix before = d;
    for (Index j = 0; j < d.cols(); ++j) {
      const double ajj = a(j, j);
      if (ajj < kDeadAtom) continue;
      Vector u = (b.col(j) - d * a.col(j)) / ajj + d.col(j);
      const double norm = u.norm();
      if (norm > 1.0) u /= norm;
      d.col(j) = u;
    }
    if ((d - before).norm() <= tol * std::max(before.norm(), 1e-300)) break;
  }
}

// Replaces atoms whose usage a(j,j) fell below kDeadAtom by the worst
// reconstructed training columns, zeroing their code rows. Kept only if the
// objective does not go up.
void reseed_dead_atoms(const Matrix& x, double lambda, Matrix& d, Matrix& codes) {
  std::vector<Index> dead;
  for (Index j = 0; j < d.cols(); ++j)
    if (codes.row(j).squaredNorm() < kDeadAtom) dead.push_back(j);
  if (dead.empty()) return;

  const Vector err = (x - d * codes).colwise().norm().transpose();
  std::vector<Index> order(static_cast<std::size_t>(x.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index l, Index r) { return err(l) > err(r); });

  Matrix d_new = d;
  Matrix c_new = codes;
  std::size_t next = 0;
  for (Index j : dead) {
    while (next < order.size() && x.col(order[next]).norm() == 0.0) ++next;
    if (next == order.size()) break;
    const Index i = order[next++];
    d_new.col(j) = x.col(i) / x.col(i).norm();
    c_new.row(j).setZero();
  }
  if (dictionary_objective(x, d_new, c_new, lambda) <= dictionary_objective(x, d, codes, lambda)) {
    d = std::move(d_new);
    codes = std::move(c_new);
  }
}

nlohmann::json pixels_json(const std::vector<PixelId>& ids) {
  nlohmann::json out = nlohmann::json::array();
  for (const PixelId& p : ids) out.push_back({p.x, p.y});
  return out;
}

} // namespace

double default_lambda(Index bands) { return 1.2 / std::sqrt(static_cast<double>(bands)); }

double dictionary_objective(const Matrix& x, const Matrix& d, const Matrix& codes, double lambda) {
  return 0.5 * (x - d * codes).squaredNorm() + lambda * codes.cwiseAbs().sum();
}

Dictionary learn_dictionary(const SpectraSet& x, const TrainConfig& cfg) {
  validate(x);
  const Matrix& data = x.columns;
  const Index p = data.cols();
  const Index n = cfg.atom_count;
  if (n < 1) throw ValidationError("learn_dictionary: atom_count must be >= 1");
  if (p < n)
    throw ValidationError("learn_dictionary: " + std::to_string(p) + " training columns but " + std::to_string(n) +
                          " atoms requested");
  if (cfg.epochs < 1) throw ValidationError("learn_dictionary: epochs must be >= 1");
  if (cfg.batch_size < 0) throw ValidationError("learn_dictionary: batch_size must be >= 0");
  if (!(cfg.tol > 0.0) || !(cfg.code_tol > 0.0)) throw ValidationError("learn_dictionary: tolerances must be > 0");
  const double lambda = cfg.lambda > 0.0 ? cfg.lambda : default_lambda(data.rows());

  std::mt19937_64 rng(cfg.seed);
  std::vector<Index> all(static_cast<std::size_t>(p));
  std::iota(all.begin(), all.end(), 0);

  // initial atoms: distinct training columns, projected onto the unit ball
  std::vector<Index> pick = all;
  std::shuffle(pick.begin(), pick.end(), rng);
  Matrix d(data.rows(), n);
  for (Index j = 0; j < n; ++j) {
    d.col(j) = data.col(pick[static_cast<std::size_t>(j)]);
    const double norm = d.col(j).norm();
    if (norm > 1.0) d.col(j) /= norm;
  }

  Matrix codes = Matrix::Zero(n, p);
  code_columns(d, data, lambda, cfg.code_tol, all, codes);

  Dictionary out;
  DictionaryProvenance& prov = out.provenance;
  prov.objective_history.push_back(dictionary_objective(data, d, codes, lambda));

  const bool minibatch = cfg.batch_size > 0 && cfg.batch_size < p;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Matrix d_next = d;
    Matrix codes_next = codes;
    if (!minibatch) {
      code_columns(d_next, data, lambda, cfg.code_tol, all, codes_next);
      update_atoms(d_next, codes_next * codes_next.transpose(), data * codes_next.transpose(), cfg.tol);
    } else {
      std::vector<Index> order = all;
      std::shuffle(order.begin(), order.end(), rng);
      Matrix a = Matrix::Zero(n, n);
      Matrix b = Matrix::Zero(data.rows(), n);
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        const std::vector<Index> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(stop));
        code_columns(d_next, data, lambda, cfg.code_tol, batch, codes_next);
        for (Index i : batch) {
          a.noalias() += codes_next.col(i) * codes_next.col(i).transpose();
          b.noalias() += data.col(i) * codes_next.col(i).transpose();
        }
        update_atoms(d_next, a, b, cfg.tol);
      }
    }
    reseed_dead_atoms(data, lambda, d_next, codes_next);

    const double f = dictionary_objective(data, d_next, codes_next, lambda);
    if (f > prov.objective_history.back()) break;
    d = std::move(d_next);
    codes = std::move(codes_next);
    prov.objective_history.push_back(f);
    ++prov.epochs_run;
  }

  out.atoms = std::move(d);
  prov.dataset_id = x.dataset_id;
  prov.lambda = lambda;
  prov.epochs = cfg.epochs;
  prov.seed = cfg.seed;
  prov.batch_size = minibatch ? cfg.batch_size : 0;
  prov.training_pixels = x.pixel_ids;
  return out;
}

CodingResult sparse_code(const Matrix& d, const Matrix& x, double lambda, double tol, int max_sweeps) {
  require_finite(d, "sparse_code dictionary");
  if (x.rows() != d.rows())
    throw ValidationError("sparse_code: dictionary has " + std::to_string(d.rows()) + " bands, spectra have " +
                          std::to_string(x.rows()));
  if (!x.allFinite()) throw ValidationError("sparse_code: spectra have non-finite entries");
  if (!(lambda > 0.0)) throw ValidationError("sparse_code: lambda must be > 0");
  if (!(tol > 0.0)) throw ValidationError("sparse_code: tol must be > 0");

  CodingResult out;
  out.coefficients = Matrix::Zero(d.cols(), x.cols());
  const Matrix gram = d.transpose() * d;
  for (Index i = 0; i < x.cols(); ++i) {
    const Vector corr = d.transpose() * x.col(i);
    if (!code_by_continuation(gram, corr, lambda, out.coefficients.col(i), max_sweeps, tol))
      out.unconverged.push_back(i);
  }
  return out;
}

std::string provenance_json(const DictionaryProvenance& p) {
  nlohmann::json j;
  j["dataset_id"] = p.dataset_id;
  j["lambda"] = p.lambda;
  j["epochs"] = p.epochs;
  j["epochs_run"] = p.epochs_run;
  j["seed"] = p.seed;
  j["batch_size"] = p.batch_size;
  j["training_pixels"] = pixels_json(p.training_pixels);
  j["objective_history"] = p.objective_history;
  return j.dump();
}

DictionaryProvenance provenance_from_json(const std::string& text) {
  DictionaryProvenance p;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    p.dataset_id = j.at("dataset_id").get<std::string>();
    p.lambda = j.at("lambda").get<double>();
    p.epochs = j.at("epochs").get<int>();
    p.epochs_run = j.at("epochs_run").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.batch_size = j.at("batch_size").get<Index>();
    for (const auto& px : j.at("training_pixels")) p.training_pixels.push_back({px.at(0).get<std::int32_t>(), px.at(1).get<std::int32_t>()});
    p.objective_history = j.at("objective_history").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dictionary provenance: ") + e.what());
  }
  return p;
}

void write_dictionary(const std::filesystem::path& path, const Dictionary& d) {
  require_finite(d.atoms, "write_dictionary");
  binio::write(path, "HSDICT1", {&d.atoms}, provenance_json(d.provenance));
}

Dictionary read_dictionary(const std::filesystem::path& path) {
  binio::Contents c = binio::read(path, "HSDICT1", 1);
  Dictionary d;
  d.atoms = std::move(c.blocks[0]);
  d.provenance = provenance_from_json(c.json);
  return d;
}

} // namespace hsics
