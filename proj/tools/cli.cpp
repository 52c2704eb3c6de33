#include "cli.hpp"

#include "hsics/dictlearn.hpp"
#include "hsics/experiments.hpp"
#include "hsics/hsi.hpp"
#include "hsics/numerics.hpp"
#include "hsics/sensing.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <set>

namespace hsics::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw ValidationError("cannot write " + p.string());
}

std::string flag_error(const std::string& flag, const std::exception& e) { return flag + ": " + e.what(); }

fs::path prepare_out(const std::string& dir) {
  const fs::path p(dir);
  if (fs::exists(p) && !fs::is_directory(p)) throw ValidationError("--out: " + dir + " exists and is not a directory");
  fs::create_directories(p);
  return p;
}

// The manifest lists every input with its hash and every output with its
// hash; keys are sorted, so equal runs give equal manifests.
class Manifest {
public:
  Manifest(const std::string& command, fs::path dir) : dir_(std::move(dir)) {
    j_["tool"] = "hsics";
    j_["version"] = kToolVersion;
    j_["command"] = command;
    j_["inputs"] = json::array();
    j_["seeds"] = json::object();
    j_["parameters"] = json::object();
    j_["results"] = json::object();
  }

  json& operator[](const char* key) { return j_[key]; }
  void input(json record) { j_["inputs"].push_back(std::move(record)); }
  void output(const std::string& name) { outputs_.push_back(name); }

  void write() {
    json outs = json::array();
    for (const auto& name : outputs_) outs.push_back({{"file", name}, {"sha256", sha256_hex(slurp(dir_ / name))}});
    j_["outputs"] = std::move(outs);
    write_text(dir_ / "manifest.json", j_.dump(2) + "\n");
  }

private:
  fs::path dir_;
  json j_;
  std::vector<std::string> outputs_;
};

json file_record(const std::string& flag, const std::string& path) {
  return {{"flag", flag}, {"path", path}, {"sha256", sha256_hex(slurp(path))}};
}

SpectraSet drop_rows(const SpectraSet& s, const std::vector<Index>& bands) {
  std::set<Index> drop;
  for (Index b : bands) {
    if (b < 0 || b >= s.bands())
      throw ValidationError("--drop-bands: band " + std::to_string(b) + " is outside 0.." + std::to_string(s.bands() - 1));
    drop.insert(b);
  }
  if (static_cast<Index>(drop.size()) == s.bands()) throw ValidationError("--drop-bands: every band would be dropped");
  SpectraSet out = s;
  out.columns.resize(s.bands() - static_cast<Index>(drop.size()), s.pixels());
  Index r = 0;
  for (Index b = 0; b < s.bands(); ++b)
    if (!drop.count(b)) out.columns.row(r++) = s.columns.row(b);
  out.wavelengths_nm.reset();
  return out;
}

// A cube (.hdr) is normalized with zero pixels dropped; a CSV is taken as is.
SpectraSet load_spectra(const std::string& flag, const std::string& path, const std::vector<Index>& drop,
                        Manifest& manifest) {
  if (!fs::exists(path)) throw ValidationError(flag + ": no such file " + path);
  json rec = file_record(flag, path);
  SpectraSet s;
  try {
    if (fs::path(path).extension() == ".hdr") {
      HsiCube cube = read_envi(path);
      if (!drop.empty()) {
        try {
          cube = drop_bands(cube, drop);
        } catch (const ValidationError& e) {
          throw ValidationError(flag_error("--drop-bands", e));
        }
      }
      s = to_spectra(cube, true);
      rec["dropped_zero_pixels"] = s.dropped.size();
    } else {
      s = read_spectra_csv(path);
      if (!drop.empty()) s = drop_rows(s, drop);
    }
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    if (what.rfind("--", 0) == 0) throw;
    throw ValidationError(flag_error(flag, e));
  }
  rec["dataset_id"] = s.dataset_id;
  rec["bands"] = s.bands();
  rec["pixels"] = s.pixels();
  if (!drop.empty()) rec["dropped_bands"] = drop;
  manifest.input(std::move(rec));
  return s;
}

std::pair<SpectraSet, SpectraSet> split(const SpectraSet& s, double fraction, std::uint64_t seed) {
  try {
    return split_train_test(s, fraction, seed);
  } catch (const ValidationError& e) {
    throw ValidationError(flag_error("--train-fraction", e));
  }
}

SpectraSet head(const SpectraSet& s, Index max_pixels) {
  if (max_pixels <= 0 || max_pixels >= s.pixels()) return s;
  std::vector<Index> cols(static_cast<std::size_t>(max_pixels));
  for (Index i = 0; i < max_pixels; ++i) cols[static_cast<std::size_t>(i)] = i;
  return select_columns(s, cols);
}

void check_m_flag(const std::vector<Index>& m, Index limit) {
  if (m.empty()) throw ValidationError("--m: at least one measurement count is required");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] < 1 || m[i] > limit)
      throw ValidationError("--m: " + std::to_string(m[i]) + " is outside 1.." + std::to_string(limit));
    if (i > 0 && m[i] <= m[i - 1]) throw ValidationError("--m: values must be strictly increasing");
  }
}

Dictionary load_dictionary(const std::string& path, Manifest& manifest) {
  if (!fs::exists(path)) throw ValidationError("--dictionary: no such file " + path);
  try {
    Dictionary d = read_dictionary(path);
    json rec = file_record("--dictionary", path);
    rec["bands"] = d.bands();
    rec["atoms"] = d.atom_count();
    manifest.input(std::move(rec));
    return d;
  } catch (const ValidationError& e) {
    throw ValidationError(flag_error("--dictionary", e));
  }
}

MeasurementMatrix load_measurement(const std::string& path, Manifest& manifest) {
  if (!fs::exists(path)) throw ValidationError("--measurement: no such file " + path);
  try {
    MeasurementMatrix m = read_measurement(path);
    manifest.input(file_record("--measurement", path));
    return m;
  } catch (const ValidationError& e) {
    throw ValidationError(flag_error("--measurement", e));
  }
}

// --dictionary FILE or --dct; `bands` is the band count the caller needs.
struct SparsifierFlags {
  std::string dictionary;
  bool dct = false;
};

Matrix load_sparsifier(const SparsifierFlags& f, Index bands, Manifest& manifest) {
  if (f.dct == !f.dictionary.empty()) throw ValidationError("exactly one of --dictionary and --dct is required");
  if (f.dct) {
    manifest["parameters"]["sparsifier"] = "dct";
    return dct_basis(bands);
  }
  const Dictionary d = load_dictionary(f.dictionary, manifest);
  if (d.bands() != bands)
    throw ValidationError("--dictionary: " + std::to_string(d.bands()) + " bands, expected " + std::to_string(bands));
  manifest["parameters"]["sparsifier"] = "learned";
  return d.atoms;
}

void add_sparsifier_flags(CLI::App* sub, SparsifierFlags& f) {
  sub->add_option("--dictionary", f.dictionary, "HSDICT1 dictionary used as sparsifier");
  sub->add_flag("--dct", f.dct, "use the orthonormal DCT-II basis as sparsifier");
}

void write_codes_csv(const fs::path& path, const Matrix& codes, const std::vector<PixelId>& ids) {
  std::string out = "atom";
  for (const auto& id : ids) out += fmt::format(",{}_{}", id.x, id.y);
  out += "\n";
  for (Index a = 0; a < codes.rows(); ++a) {
    out += std::to_string(a);
    for (Index c = 0; c < codes.cols(); ++c) out += "," + format_decimal(codes(a, c));
    out += "\n";
  }
  write_text(path, out);
}

json curve_json(const ErrorCurve& c) {
  return {{"m", c.m_values},
          {"mean_rel_error", c.mean_rel_error},
          {"std_rel_error", c.std_rel_error},
          {"n_pixels", c.n_pixels},
          {"n_failed", c.n_failed}};
}

void print_ratios(std::ostream& out, const std::vector<Index>& m, Index d) {
  for (Index v : m)
    out << fmt::format("m = {}: sampling ratio {:.2f}% of {} bands\n", v, sampling_ratio_percent(v, d), d);
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  Index d = 64, atoms = 96, k = 4, p = 2000;
  double sigma = 0.01;
  std::uint64_t seed = 0;
  std::string dictionary;
  std::string out;
};

void cmd_synth(const SynthOptions& o, std::ostream& out) {
  const fs::path dir = prepare_out(o.out);
  Manifest man("synth", dir);
  SynthScene scene;
  if (!o.dictionary.empty()) {
    const Dictionary dict = load_dictionary(o.dictionary, man);
    if (o.k > dict.atom_count()) throw ValidationError("--k: exceeds the dictionary's atom count");
    scene = synth_scene_from(dict, o.k, o.p, o.sigma, o.seed);
  } else {
    if (o.k > o.atoms) throw ValidationError("--k: must not exceed --atoms");
    scene = synth_scene(o.d, o.atoms, o.k, o.p, o.sigma, o.seed);
  }
  write_spectra_csv(dir / "spectra.csv", scene.spectra);
  write_dictionary(dir / "dictionary.bin", scene.true_dictionary);
  write_codes_csv(dir / "codes.csv", scene.true_codes, scene.spectra.pixel_ids);
  man["parameters"] = {{"d", scene.spectra.bands()}, {"atoms", scene.true_dictionary.atom_count()},
                       {"k", o.k}, {"p", o.p}, {"sigma", o.sigma}};
  man["seeds"] = {{"scene", o.seed}};
  man["results"] = {{"dataset_id", scene.spectra.dataset_id}};
  for (const char* f : {"spectra.csv", "dictionary.bin", "codes.csv"}) man.output(f);
  man.write();
  out << fmt::format("wrote {} spectra of {} bands to {}\n", scene.spectra.pixels(), scene.spectra.bands(), o.out);
}

// ---------------------------------------------------------------- learn

struct LearnOptions {
  std::string input;
  std::vector<Index> drop_bands;
  Index atoms = 0;
  double lambda = 0.0;
  int epochs = 30;
  Index batch = 0;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> split_seed;
  double train_fraction = 0.5;
  bool write_splits = false;
  std::string out;
};

void cmd_learn(const LearnOptions& o, std::ostream& out) {
  const fs::path dir = prepare_out(o.out);
  Manifest man("learn", dir);
  const SpectraSet all = load_spectra("--input", o.input, o.drop_bands, man);
  const std::uint64_t split_seed = o.split_seed.value_or(o.seed);
  const auto [train, test] = split(all, o.train_fraction, split_seed);

  TrainConfig cfg;
  cfg.atom_count = o.atoms;
  cfg.lambda = o.lambda;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.batch_size = o.batch;
  const Dictionary dict = learn_dictionary(train, cfg);
  write_dictionary(dir / "dictionary.bin", dict);
  man.output("dictionary.bin");
  if (o.write_splits) {
    write_spectra_csv(dir / "train.csv", train);
    write_spectra_csv(dir / "test.csv", test);
    man.output("train.csv");
    man.output("test.csv");
  }
  man["parameters"] = {{"atoms", o.atoms}, {"lambda", dict.provenance.lambda}, {"epochs", o.epochs},
                       {"batch", o.batch}, {"train_fraction", o.train_fraction}};
  man["seeds"] = {{"dictionary", o.seed}, {"split", split_seed}};
  man["results"] = {{"epochs_run", dict.provenance.epochs_run},
                    {"objective_history", dict.provenance.objective_history},
                    {"train_pixels", train.pixels()},
                    {"test_pixels", test.pixels()}};
  man.write();
  out << fmt::format("trained {} atoms on {} pixels, {} epochs, objective {}\n", dict.atom_count(), train.pixels(),
                     dict.provenance.epochs_run, format_decimal(dict.provenance.objective_history.back()));
}

// ---------------------------------------------------------------- sample

struct SampleOptions {
  std::string kind;
  Index m = 0;
  Index d = 0;
  std::optional<std::uint64_t> seed;
  std::string dictionary;
  std::string input;
  std::vector<Index> drop_bands;
  std::string out;
};

void cmd_sample(const SampleOptions& o, std::ostream& out) {
  const fs::path dir = prepare_out(o.out);
  Manifest man("sample", dir);
  std::optional<SpectraSet> spectra;
  if (!o.input.empty()) spectra = load_spectra("--input", o.input, o.drop_bands, man);
  std::optional<Dictionary> dict;
  if (!o.dictionary.empty()) dict = load_dictionary(o.dictionary, man);

  Index d = o.d;
  const auto agree = [&](Index other, const char* flag) {
    if (d != 0 && d != other)
      throw ValidationError(std::string(flag) + ": " + std::to_string(other) + " bands, expected " + std::to_string(d));
    d = other;
  };
  if (dict) agree(dict->bands(), "--dictionary");
  if (spectra) agree(spectra->bands(), "--input");
  if (d <= 0) throw ValidationError("--d: band count unknown (give --d, --dictionary or --input)");

  MeasurementMatrix phi;
  const MeasurementKind kind = [&] {
    try {
      return measurement_kind_from_string(o.kind);
    } catch (const ValidationError& e) {
      throw ValidationError(flag_error("--kind", e));
    }
  }();
  switch (kind) {
  case MeasurementKind::gaussian:
  case MeasurementKind::subsample: {
    if (!o.seed) throw ValidationError("--seed: required for --kind " + o.kind);
    check_m_flag({o.m}, d);
    const std::uint64_t s = measurement_seed(*o.seed, o.m);
    phi = kind == MeasurementKind::gaussian ? gaussian_measurement(o.m, d, s) : subsample_measurement(o.m, d, s);
    man["seeds"] = {{"pipeline", *o.seed}, {"matrix", s}};
    break;
  }
  case MeasurementKind::svd_dictionary:
    if (!dict) throw ValidationError("--dictionary: required for --kind " + o.kind);
    check_m_flag({o.m}, std::min(d, dict->atom_count()));
    phi = svd_measurement(dict->atoms, o.m, kind);
    break;
  case MeasurementKind::svd_dct:
    check_m_flag({o.m}, d);
    phi = svd_measurement(dct_basis(d), o.m, kind);
    break;
  }
  write_measurement(dir / "measurement.bin", phi);
  man.output("measurement.bin");
  if (spectra) {
    // same per-column product as run_pipeline, so the CSV carries identical bits
    SpectraSet y;
    y.columns.resize(phi.m(), spectra->pixels());
    for (Index i = 0; i < spectra->pixels(); ++i) {
      const Vector x = spectra->columns.col(i);
      y.columns.col(i) = phi.phi * x;
    }
    y.pixel_ids = spectra->pixel_ids;
    y.dataset_id = "measurements";
    write_spectra_csv(dir / "measurements.csv", y);
    man.output("measurements.csv");
  }
  man["parameters"] = {{"kind", to_string(kind)}, {"m", o.m}, {"d", d},
                       {"sampling_ratio_percent", sampling_ratio_percent(o.m, d)}};
  man.write();
  print_ratios(out, {o.m}, d);
}

// ---------------------------------------------------------------- balance

struct BalanceOptions {
  std::string measurement;
  SparsifierFlags sparsifier;
  int t_max = 10;
  std::string out;
};

void cmd_balance(const BalanceOptions& o, std::ostream& out) {
  const fs::path dir = prepare_out(o.out);
  Manifest man("balance", dir);
  const MeasurementMatrix phi = load_measurement(o.measurement, man);
  const Matrix s = load_sparsifier(o.sparsifier, phi.d(), man);
  const Matrix a = sensing_matrix(phi, s).a;
  const BalancedDecomposition dec = balance(a, o.t_max);
  write_balanced(dir / "balanced.bin", dec);
  std::string log = "t,imbalance\n";
  for (std::size_t t = 0; t < dec.imbalance_history.size(); ++t)
    log += fmt::format("{},{}\n", t, format_decimal(dec.imbalance_history[t]));
  write_text(dir / "imbalance.csv", log);
  const double cond_a = condition_number(a);
  const double cond_b = condition_number(dec.b);
  man["parameters"]["t_max"] = o.t_max;
  man["results"] = {{"iterations_run", dec.iterations_run}, {"imbalance", dec.imbalance},
                    {"cond_unbalanced", cond_a}, {"cond_balanced", cond_b}};
  man.output("balanced.bin");
  man.output("imbalance.csv");
  man.write();
  out << fmt::format("{} iterations, imbalance {}, cond {} -> {}\n", dec.iterations_run, format_decimal(dec.imbalance),
                     format_decimal(cond_a), format_decimal(cond_b));
}

// ---------------------------------------------------------------- reconstruct

struct ReconstructOptions {
  std::string measurement;
  SparsifierFlags sparsifier;
  std::string measurements;
  std::string truth;
  std::vector<Index> drop_bands;
  double epsilon = 0.01;
  double tol = 1e-6;
  int max_iter = 5000;
  bool balance = false;
  std::string balanced;
  std::vector<Index> trace;
  std::string out;
};

void cmd_reconstruct(const ReconstructOptions& o, std::ostream& out) {
  const fs::path dir = prepare_out(o.out);
  Manifest man("reconstruct", dir);
  Stage stage;
  stage.phi = load_measurement(o.measurement, man);
  stage.m = stage.phi.m();
  const Matrix s = load_sparsifier(o.sparsifier, stage.phi.d(), man);
  stage.sensing = sensing_matrix(stage.phi, s);
  if (o.balance && !o.balanced.empty()) throw ValidationError("--balanced: cannot be combined with --balance");
  if (o.balance) stage.balanced = balance(stage.sensing.a, 10);
  if (!o.balanced.empty()) {
    try {
      stage.balanced = read_balanced(o.balanced);
    } catch (const ValidationError& e) {
      throw ValidationError(flag_error("--balanced", e));
    }
    if (stage.balanced->b.rows() != stage.m || stage.balanced->b.cols() != s.cols())
      throw ValidationError("--balanced: B does not match the sensing matrix shape");
    man.input(file_record("--balanced", o.balanced));
  }

  const SpectraSet y = load_spectra("--measurements", o.measurements, {}, man);
  if (y.bands() != stage.m)
    throw ValidationError("--measurements: " + std::to_string(y.bands()) + " rows, the measurement matrix has " +
                          std::to_string(stage.m));
  std::optional<SpectraSet> truth;
  if (!o.truth.empty()) {
    truth = load_spectra("--truth", o.truth, o.drop_bands, man);
    if (truth->bands() != stage.phi.d())
      throw ValidationError("--truth: " + std::to_string(truth->bands()) + " bands, the measurement matrix has " +
                            std::to_string(stage.phi.d()));
    if (truth->pixel_ids != y.pixel_ids) throw ValidationError("--truth: pixel ids differ from --measurements");
  }
  if (!o.trace.empty() && !truth) throw ValidationError("--trace: requires --truth");
  for (Index t : o.trace)
    if (t < 0 || t >= y.pixels()) throw ValidationError("--trace: pixel index " + std::to_string(t) + " out of range");

  PipelineSpec spec;
  spec.name = "reconstruct";
  spec.sparsifier = o.sparsifier.dct ? Sparsifier::dct : Sparsifier::learned;
  spec.balanced = stage.balanced.has_value();
  spec.epsilon = o.epsilon;
  spec.tol = o.tol;
  spec.max_iter = o.max_iter;

  SpectraSet rec;
  rec.columns.resize(stage.phi.d(), y.pixels());
  rec.pixel_ids = y.pixel_ids;
  rec.dataset_id = "reconstruction";
  Index failed = 0;
  Vector errors(y.pixels());
  for (Index i = 0; i < y.pixels(); ++i) {
    const PixelResult r = reconstruct(stage, s, y.columns.col(i), spec);
    if (!r.converged) ++failed;
    rec.columns.col(i) = r.x_star;
    if (truth) errors(i) = relative_error(r.x_star, truth->columns.col(i));
  }
  write_spectra_csv(dir / "reconstruction.csv", rec);
  man.output("reconstruction.csv");
  man["parameters"] = {{"epsilon", o.epsilon}, {"tol", o.tol}, {"max_iter", o.max_iter},
                       {"balanced", spec.balanced}, {"m", stage.m}, {"d", stage.phi.d()},
                       {"sparsifier", o.sparsifier.dct ? "dct" : "learned"}};
  man["results"]["n_failed"] = failed;
  if (truth) {
    ErrorCurve c;
    c.pipeline = "reconstruct";
    c.dataset = truth->dataset_id;
    add_curve_point(c, stage.m, errors, failed);
    write_error_curve_csv(dir / "errors.csv", c);
    man.output("errors.csv");
    man["results"]["curve"] = curve_json(c);
    for (Index t : o.trace) {
      const std::string name = fmt::format("trace_{}.csv", t);
      write_trace_csv(dir / name, truth->columns.col(t), rec.columns.col(t), truth->wavelengths_nm);
      man.output(name);
    }
    out << fmt::format("m = {}: mean relative error {} over {} pixels ({} failed)\n", stage.m,
                       format_decimal(c.mean_rel_error[0]), y.pixels(), failed);
  } else {
    out << fmt::format("reconstructed {} pixels ({} failed)\n", y.pixels(), failed);
  }
  man.write();
}

// ---------------------------------------------------------------- compare

struct CompareOptions {
  std::string input;
  std::vector<Index> drop_bands;
  std::vector<std::string> methods{"dctgaussian", "dsub", "dgaussian", "dsvd", "dctsvd"};
  std::vector<Index> m;
  double epsilon = 0.01;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::uint64_t> train_seed;
  double train_fraction = 0.5;
  std::string dictionary;
  Index atoms = 0;
  double lambda = 0.0;
  int epochs = 30;
  Index batch = 0;
  double tol = 1e-6;
  int max_iter = 5000;
  Index max_pixels = 0;
  std::vector<Index> trace;
  std::string from_manifest;
  std::string out;
};

// Everything that determines the CSVs; --out and --from-manifest are not part of it.
json compare_parameters(const CompareOptions& o) {
  return {{"input", o.input},
          {"drop_bands", o.drop_bands},
          {"methods", o.methods},
          {"m", o.m},
          {"epsilon", o.epsilon},
          {"seed", o.seed},
          {"split_seed", o.split_seed.value_or(o.seed)},
          {"train_seed", o.train_seed.value_or(o.seed)},
          {"train_fraction", o.train_fraction},
          {"dictionary", o.dictionary},
          {"atoms", o.atoms},
          {"lambda", o.lambda},
          {"epochs", o.epochs},
          {"batch", o.batch},
          {"tol", o.tol},
          {"max_iter", o.max_iter},
          {"max_pixels", o.max_pixels},
          {"trace", o.trace}};
}

CompareOptions options_from_manifest(const std::string& path, const std::string& out_dir) {
  json j;
  try {
    j = json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw ValidationError(flag_error("--from-manifest", e));
  }
  try {
    if (j.at("command").get<std::string>() != "compare")
      throw ValidationError("--from-manifest: " + path + " is not a compare manifest");
    const json& p = j.at("parameters");
    CompareOptions o;
    o.input = p.at("input").get<std::string>();
    o.drop_bands = p.at("drop_bands").get<std::vector<Index>>();
    o.methods = p.at("methods").get<std::vector<std::string>>();
    o.m = p.at("m").get<std::vector<Index>>();
    o.epsilon = p.at("epsilon").get<double>();
    o.seed = p.at("seed").get<std::uint64_t>();
    o.split_seed = p.at("split_seed").get<std::uint64_t>();
    o.train_seed = p.at("train_seed").get<std::uint64_t>();
    o.train_fraction = p.at("train_fraction").get<double>();
    o.dictionary = p.at("dictionary").get<std::string>();
    o.atoms = p.at("atoms").get<Index>();
    o.lambda = p.at("lambda").get<double>();
    o.epochs = p.at("epochs").get<int>();
    o.batch = p.at("batch").get<Index>();
    o.tol = p.at("tol").get<double>();
    o.max_iter = p.at("max_iter").get<int>();
    o.max_pixels = p.at("max_pixels").get<Index>();
    o.trace = p.at("trace").get<std::vector<Index>>();
    o.out = out_dir;
    // the inputs must be the ones the manifest was made from
    for (const json& in : j.at("inputs")) {
      const std::string file = in.at("path").get<std::string>();
      if (!fs::exists(file)) throw ValidationError("--from-manifest: input " + file + " is missing");
      if (sha256_hex(slurp(file)) != in.at("sha256").get<std::string>())
        throw ValidationError("--from-manifest: input " + file + " has changed since the manifest was written");
    }
    return o;
  } catch (const json::exception& e) {
    throw ValidationError(flag_error("--from-manifest", e));
  }
}

void cmd_compare(const CompareOptions& o, std::ostream& out) {
  if (o.out.empty()) throw ValidationError("--out: required");
  if (o.input.empty()) throw ValidationError("--input: required");
  const fs::path dir = prepare_out(o.out);
  Manifest man("compare", dir);
  const SpectraSet all = load_spectra("--input", o.input, o.drop_bands, man);
  const std::uint64_t split_seed = o.split_seed.value_or(o.seed);
  const std::uint64_t train_seed = o.train_seed.value_or(o.seed);
  auto [train, test_all] = split(all, o.train_fraction, split_seed);
  const SpectraSet test = head(test_all, o.max_pixels);
  for (Index t : o.trace)
    if (t < 0 || t >= test.pixels()) throw ValidationError("--trace: pixel index " + std::to_string(t) + " out of range");

  std::vector<PipelineSpec> specs;
  std::set<std::string> seen;
  bool needs_dict = false;
  bool needs_svd = false;
  for (const auto& name : o.methods) {
    PipelineSpec spec;
    try {
      spec = pipeline_from_name(name, o.m, o.epsilon, o.seed);
    } catch (const ValidationError& e) {
      throw ValidationError(flag_error(std::string(e.what()).find("epsilon") != std::string::npos ? "--epsilon" : "--methods", e));
    }
    if (!seen.insert(spec.name).second) throw ValidationError("--methods: " + spec.name + " is listed twice");
    spec.tol = o.tol;
    spec.max_iter = o.max_iter;
    needs_dict = needs_dict || spec.sparsifier == Sparsifier::learned;
    needs_svd = needs_svd || spec.sampler == Sampler::svd;
    specs.push_back(std::move(spec));
  }
  if (specs.empty()) throw ValidationError("--methods: no pipelines given");

  check_m_flag(o.m, all.bands());
  std::optional<Dictionary> dict;
  if (!o.dictionary.empty()) {
    dict = load_dictionary(o.dictionary, man);
  } else if (needs_dict) {
    if (o.atoms <= 0) throw ValidationError("--atoms: required to train a dictionary (or give --dictionary)");
    TrainConfig cfg;
    cfg.atom_count = o.atoms;
    cfg.lambda = o.lambda;
    cfg.epochs = o.epochs;
    cfg.seed = train_seed;
    cfg.batch_size = o.batch;
    dict = learn_dictionary(train, cfg);
    write_dictionary(dir / "dictionary.bin", *dict);
    man.output("dictionary.bin");
  }
  Index limit = all.bands();
  if (dict && needs_svd) limit = std::min(limit, dict->atom_count());
  check_m_flag(o.m, limit);

  json curves = json::object();
  for (const auto& spec : specs) {
    const Dictionary* learned = spec.sparsifier == Sparsifier::learned ? &*dict : nullptr;
    const ErrorCurve c = run_pipeline(spec, learned, test);
    const std::string name = spec.name + ".csv";
    write_error_curve_csv(dir / name, c);
    man.output(name);
    curves[spec.name] = curve_json(c);
    for (std::size_t k = 0; k < c.m_values.size(); ++k)
      out << fmt::format("{} m = {}: mean relative error {} (std {}, {} failed)\n", spec.name, c.m_values[k],
                         format_decimal(c.mean_rel_error[k]), format_decimal(c.std_rel_error[k]), c.n_failed[k]);

    // traces at the largest m, solved from a cold start
    if (!o.trace.empty()) {
      const Matrix s = sparsifier_matrix(spec, learned, test.bands());
      const Stage stage = build_stage(spec, s, spec.m_list.back());
      for (Index t : o.trace) {
        const Vector x = test.columns.col(t);
        const PixelResult r = reconstruct(stage, s, stage.phi.phi * x, spec);
        const std::string trace = fmt::format("trace_{}_{}.csv", spec.name, t);
        write_trace_csv(dir / trace, x, r.x_star, test.wavelengths_nm);
        man.output(trace);
      }
    }
  }
  print_ratios(out, o.m, all.bands());

  json ratios = json::object();
  for (Index v : o.m) ratios[std::to_string(v)] = sampling_ratio_percent(v, all.bands());
  man["parameters"] = compare_parameters(o);
  man["seeds"] = {{"measurement", o.seed}, {"split", split_seed}, {"dictionary", train_seed}};
  man["results"] = {{"curves", curves},
                    {"train_pixels", train.pixels()},
                    {"test_pixels", test.pixels()},
                    {"aggregation", "mean and sample standard deviation over every test pixel"},
                    {"sampling_ratio_percent", ratios}};
  man.write();
}

// ---------------------------------------------------------------- condcurve

struct CondOptions {
  SparsifierFlags sparsifier;
  Index d = 0;
  std::vector<Index> m;
  std::string out;
};

void cmd_condcurve(const CondOptions& o, std::ostream& out) {
  const fs::path dir = prepare_out(o.out);
  Manifest man("condcurve", dir);
  Index d = o.d;
  if (!o.sparsifier.dictionary.empty()) {
    if (d != 0) throw ValidationError("--d: not used with --dictionary");
    d = read_dictionary(o.sparsifier.dictionary).bands();
  }
  if (d <= 0) throw ValidationError("--d: required with --dct");
  const Matrix s = load_sparsifier(o.sparsifier, d, man);
  check_m_flag(o.m, std::min(s.rows(), s.cols()));
  std::vector<ConditionPoint> points;
  try {
    points = condition_curve(s, o.m);
  } catch (const ValidationError& e) {
    // e.g. the DCT: its right singular vectors are the identity, so the
    // sensing matrix has zero columns and cannot be balanced
    throw ValidationError(flag_error(o.sparsifier.dct ? "--dct" : "--dictionary", e));
  }
  write_condition_csv(dir / "condition.csv", points);
  man.output("condition.csv");
  man["parameters"]["m"] = o.m;
  man["parameters"]["balance_iterations"] = 10;
  man.write();
  for (const auto& pt : points)
    out << fmt::format("m = {}: cond {} unbalanced, {} balanced\n", pt.m, format_decimal(pt.unbalanced),
                       format_decimal(pt.balanced));
}

// ---------------------------------------------------------------- robustness

struct RobustnessOptions {
  std::string scene_a, scene_b;
  std::vector<Index> drop_bands;
  double train_fraction = 0.5;
  std::optional<std::uint64_t> split_seed;
  Index atoms = 0;
  double lambda = 0.0;
  int epochs = 30;
  Index batch = 0;
  std::uint64_t seed = 0;
  std::vector<Index> m;
  double epsilon = 0.01;
  double tol = 1e-6;
  int max_iter = 5000;
  Index max_pixels = 0;
  std::string out;
};

void cmd_robustness(const RobustnessOptions& o, std::ostream& out) {
  const fs::path dir = prepare_out(o.out);
  Manifest man("robustness", dir);
  const SpectraSet a = load_spectra("--scene-a", o.scene_a, o.drop_bands, man);
  const SpectraSet b = load_spectra("--scene-b", o.scene_b, o.drop_bands, man);
  if (a.bands() != b.bands()) throw ValidationError("--scene-b: band count differs from --scene-a");
  const std::uint64_t split_seed = o.split_seed.value_or(o.seed);
  const SpectraSet a_train = split(a, o.train_fraction, split_seed).first;
  auto [b_train, b_test_all] = split(b, o.train_fraction, split_seed);
  const SpectraSet b_test = head(b_test_all, o.max_pixels);
  check_m_flag(o.m, std::min(a.bands(), o.atoms));

  TrainConfig cfg;
  cfg.atom_count = o.atoms;
  cfg.lambda = o.lambda;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.batch_size = o.batch;
  PipelineSpec spec = pipeline_from_name("dsvd", o.m, o.epsilon, o.seed);
  spec.tol = o.tol;
  spec.max_iter = o.max_iter;
  const RobustnessReport r = robustness_experiment(a_train, b_train, b_test, cfg, spec);

  write_error_curve_csv(dir / "cross.csv", r.cross);
  write_error_curve_csv(dir / "native.csv", r.native);
  write_dictionary(dir / "dictionary_a.bin", r.dict_a);
  write_dictionary(dir / "dictionary_b.bin", r.dict_b);
  for (const char* f : {"cross.csv", "native.csv", "dictionary_a.bin", "dictionary_b.bin"}) man.output(f);
  man["parameters"] = {{"atoms", o.atoms}, {"lambda", r.dict_a.provenance.lambda}, {"epochs", o.epochs},
                       {"batch", o.batch}, {"train_fraction", o.train_fraction}, {"m", o.m},
                       {"epsilon", o.epsilon}, {"tol", o.tol}, {"max_iter", o.max_iter},
                       {"max_pixels", o.max_pixels}};
  man["seeds"] = {{"dictionary", o.seed}, {"measurement", o.seed}, {"split", split_seed}};
  man["results"] = {{"rmse_between_curves", r.rmse_between_curves},
                    {"cross", curve_json(r.cross)},
                    {"native", curve_json(r.native)},
                    {"test_pixels", b_test.pixels()}};
  man.write();
  out << fmt::format("rmse between cross and native curves: {}\n", format_decimal(r.rmse_between_curves));
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hyperspectral compressive sensing experiments"};
  app.name("hsics");
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s_synth = app.add_subcommand("synth", "draw a synthetic scene from a planted dictionary");
  s_synth->add_option("--d", synth.d, "bands")->check(CLI::PositiveNumber);
  s_synth->add_option("--atoms", synth.atoms, "atoms of the planted dictionary")->check(CLI::PositiveNumber);
  s_synth->add_option("--k", synth.k, "nonzeros per code")->check(CLI::PositiveNumber);
  s_synth->add_option("--p", synth.p, "pixels")->check(CLI::PositiveNumber);
  s_synth->add_option("--sigma", synth.sigma, "noise level")->check(CLI::NonNegativeNumber);
  s_synth->add_option("--seed", synth.seed)->required();
  auto* synth_dict = s_synth->add_option("--dictionary", synth.dictionary, "draw from this dictionary instead");
  synth_dict->excludes(s_synth->get_option("--d"))->excludes(s_synth->get_option("--atoms"));
  s_synth->add_option("--out", synth.out, "output directory")->required();

  LearnOptions learn;
  auto* s_learn = app.add_subcommand("learn", "train a dictionary on the training split of a cube or CSV");
  s_learn->add_option("--input", learn.input, "ENVI header (.hdr) or spectra CSV")->required();
  s_learn->add_option("--drop-bands", learn.drop_bands, "band indices to remove")->delimiter(',');
  s_learn->add_option("--atoms", learn.atoms)->required()->check(CLI::PositiveNumber);
  s_learn->add_option("--lambda", learn.lambda, "sparsity weight (default 1.2/sqrt(bands))")->check(CLI::NonNegativeNumber);
  s_learn->add_option("--epochs", learn.epochs)->check(CLI::PositiveNumber);
  s_learn->add_option("--batch", learn.batch, "minibatch size, 0 = full batch")->check(CLI::NonNegativeNumber);
  s_learn->add_option("--seed", learn.seed)->required();
  s_learn->add_option("--split-seed", learn.split_seed, "defaults to --seed");
  s_learn->add_option("--train-fraction", learn.train_fraction)->check(CLI::Range(0.0, 1.0));
  s_learn->add_flag("--write-splits", learn.write_splits, "also write train.csv and test.csv");
  s_learn->add_option("--out", learn.out)->required();

  SampleOptions sample;
  auto* s_sample = app.add_subcommand("sample", "emit a measurement matrix (and measurements of --input)");
  s_sample->add_option("--kind", sample.kind, "gaussian, subsample, svd_dictionary or svd_dct")->required();
  s_sample->add_option("--m", sample.m)->required();
  s_sample->add_option("--d", sample.d)->check(CLI::PositiveNumber);
  s_sample->add_option("--seed", sample.seed, "pipeline seed; the matrix uses the stream derived for --m");
  s_sample->add_option("--dictionary", sample.dictionary);
  s_sample->add_option("--input", sample.input, "spectra to measure");
  s_sample->add_option("--drop-bands", sample.drop_bands)->delimiter(',');
  s_sample->add_option("--out", sample.out)->required();

  BalanceOptions bal;
  auto* s_balance = app.add_subcommand("balance", "balance the sensing matrix of a measurement matrix and sparsifier");
  s_balance->add_option("--measurement", bal.measurement)->required();
  add_sparsifier_flags(s_balance, bal.sparsifier);
  s_balance->add_option("--t-max", bal.t_max)->check(CLI::NonNegativeNumber);
  s_balance->add_option("--out", bal.out)->required();

  ReconstructOptions rec;
  auto* s_rec = app.add_subcommand("reconstruct", "recover spectra from measurements");
  s_rec->add_option("--measurement", rec.measurement, "HSMEAS1 matrix")->required();
  add_sparsifier_flags(s_rec, rec.sparsifier);
  s_rec->add_option("--measurements", rec.measurements, "measurement CSV written by sample")->required();
  s_rec->add_option("--truth", rec.truth, "reference spectra; enables errors.csv");
  s_rec->add_option("--drop-bands", rec.drop_bands, "applied to --truth")->delimiter(',');
  s_rec->add_option("--epsilon", rec.epsilon)->check(CLI::NonNegativeNumber);
  s_rec->add_option("--tol", rec.tol)->check(CLI::PositiveNumber);
  s_rec->add_option("--max-iter", rec.max_iter)->check(CLI::PositiveNumber);
  s_rec->add_flag("--balance", rec.balance, "balance the sensing matrix first");
  s_rec->add_option("--balanced", rec.balanced, "HSBAL1 file written by balance");
  s_rec->add_option("--trace", rec.trace, "pixel indices to write as traces")->delimiter(',');
  s_rec->add_option("--out", rec.out)->required();

  CompareOptions cmp;
  auto* s_cmp = app.add_subcommand("compare", "run pipelines on the test split and write one error curve each");
  s_cmp->add_option("--input", cmp.input, "ENVI header (.hdr) or spectra CSV");
  s_cmp->add_option("--drop-bands", cmp.drop_bands)->delimiter(',');
  s_cmp->add_option("--methods", cmp.methods, "comma-separated pipeline names")->delimiter(',');
  s_cmp->add_option("--m", cmp.m, "comma-separated measurement counts")->delimiter(',');
  s_cmp->add_option("--epsilon", cmp.epsilon)->check(CLI::NonNegativeNumber);
  s_cmp->add_option("--seed", cmp.seed, "measurement seed; also the default split and training seed");
  s_cmp->add_option("--split-seed", cmp.split_seed);
  s_cmp->add_option("--train-seed", cmp.train_seed);
  s_cmp->add_option("--train-fraction", cmp.train_fraction)->check(CLI::Range(0.0, 1.0));
  s_cmp->add_option("--dictionary", cmp.dictionary, "pre-trained dictionary (skips training)");
  s_cmp->add_option("--atoms", cmp.atoms)->check(CLI::PositiveNumber);
  s_cmp->add_option("--lambda", cmp.lambda)->check(CLI::NonNegativeNumber);
  s_cmp->add_option("--epochs", cmp.epochs)->check(CLI::PositiveNumber);
  s_cmp->add_option("--batch", cmp.batch)->check(CLI::NonNegativeNumber);
  s_cmp->add_option("--tol", cmp.tol)->check(CLI::PositiveNumber);
  s_cmp->add_option("--max-iter", cmp.max_iter)->check(CLI::PositiveNumber);
  s_cmp->add_option("--max-pixels", cmp.max_pixels, "use only the first N test pixels, 0 = all")
      ->check(CLI::NonNegativeNumber);
  s_cmp->add_option("--trace", cmp.trace, "test pixel indices to write as traces")->delimiter(',');
  auto* from = s_cmp->add_option("--from-manifest", cmp.from_manifest, "rerun a previous compare");
  s_cmp->add_option("--out", cmp.out)->required();
  for (auto* opt : s_cmp->get_options())
    if (opt != from && opt->get_name() != "--out" && opt->get_name() != "--help") from->excludes(opt);

  CondOptions cond;
  auto* s_cond = app.add_subcommand("condcurve", "condition numbers of the adaptive sensing matrix per m");
  add_sparsifier_flags(s_cond, cond.sparsifier);
  s_cond->add_option("--d", cond.d, "bands, with --dct")->check(CLI::PositiveNumber);
  s_cond->add_option("--m", cond.m)->required()->delimiter(',');
  s_cond->add_option("--out", cond.out)->required();

  RobustnessOptions rob;
  auto* s_rob = app.add_subcommand("robustness", "cross-scene dictionary transfer");
  s_rob->add_option("--scene-a", rob.scene_a, "scene the transferred dictionary is trained on")->required();
  s_rob->add_option("--scene-b", rob.scene_b, "scene under test")->required();
  s_rob->add_option("--drop-bands", rob.drop_bands)->delimiter(',');
  s_rob->add_option("--train-fraction", rob.train_fraction)->check(CLI::Range(0.0, 1.0));
  s_rob->add_option("--split-seed", rob.split_seed);
  s_rob->add_option("--atoms", rob.atoms)->required()->check(CLI::PositiveNumber);
  s_rob->add_option("--lambda", rob.lambda)->check(CLI::NonNegativeNumber);
  s_rob->add_option("--epochs", rob.epochs)->check(CLI::PositiveNumber);
  s_rob->add_option("--batch", rob.batch)->check(CLI::NonNegativeNumber);
  s_rob->add_option("--seed", rob.seed)->required();
  s_rob->add_option("--m", rob.m)->required()->delimiter(',');
  s_rob->add_option("--epsilon", rob.epsilon)->check(CLI::NonNegativeNumber);
  s_rob->add_option("--tol", rob.tol)->check(CLI::PositiveNumber);
  s_rob->add_option("--max-iter", rob.max_iter)->check(CLI::PositiveNumber);
  s_rob->add_option("--max-pixels", rob.max_pixels)->check(CLI::NonNegativeNumber);
  s_rob->add_option("--out", rob.out)->required();

  std::vector<std::string> argv_store{"hsics"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (*s_synth) cmd_synth(synth, out);
    else if (*s_learn) cmd_learn(learn, out);
    else if (*s_sample) cmd_sample(sample, out);
    else if (*s_balance) cmd_balance(bal, out);
    else if (*s_rec) cmd_reconstruct(rec, out);
    else if (*s_cmp) {
      if (!cmp.from_manifest.empty()) cmd_compare(options_from_manifest(cmp.from_manifest, cmp.out), out);
      else {
        if (s_cmp->count("--m") == 0) throw ValidationError("--m: required");
        if (s_cmp->count("--seed") == 0) throw ValidationError("--seed: required");
        cmd_compare(cmp, out);
      }
    } else if (*s_cond) cmd_condcurve(cond, out);
    else if (*s_rob) cmd_robustness(rob, out);
    return 0;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    // ValidationError, EnviError and I/O errors all mean bad input
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

} // namespace hsics::cli
