#include "cli.hpp"

#include "hsics/dictlearn.hpp"
#include "hsics/experiments.hpp"
#include "hsics/hsi.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <unistd.h>

namespace fs = std::filesystem;
using namespace hsics;

namespace {

struct Outcome {
  int status;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("hsics_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
  fs::path path_;
};

// Second line of an error-curve CSV, split on commas.
std::vector<std::string> curve_rows(const std::string& path, std::vector<std::string>* m_column = nullptr) {
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "m,mean_rel_err,std_rel_err,n_pixels,n_failed");
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    rows.push_back(line);
    if (m_column) m_column->push_back(line.substr(0, line.find(',')));
  }
  return rows;
}

double first_mean(const std::string& path) {
  const auto rows = curve_rows(path);
  EXPECT_EQ(rows.size(), 1u);
  const auto a = rows[0].find(',');
  return std::stod(rows[0].substr(a + 1, rows[0].find(',', a + 1) - a - 1));
}

void make_scene(const TempDir& t, const std::string& name, const std::string& d, const std::string& atoms,
                const std::string& p) {
  const Outcome o = run_cli({"synth", "--d", d, "--atoms", atoms, "--k", "2", "--p", p, "--seed", "5", "--out", t / name});
  ASSERT_EQ(o.status, 0) << o.err;
}

} // namespace

TEST(Cli, SynthTwiceIsByteIdentical) {
  TempDir t;
  const std::vector<std::string> common{"synth", "--d", "64", "--atoms", "96", "--k", "4", "--p", "2000", "--seed", "7"};
  auto a = common, b = common;
  a.insert(a.end(), {"--out", t / "a"});
  b.insert(b.end(), {"--out", t / "b"});
  ASSERT_EQ(run_cli(a).status, 0);
  ASSERT_EQ(run_cli(b).status, 0);
  for (const char* f : {"spectra.csv", "dictionary.bin", "codes.csv", "manifest.json"}) {
    const std::string x = slurp(t / ("a/" + std::string(f)));
    ASSERT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(t / ("b/" + std::string(f)))) << f;
  }
  const SpectraSet s = read_spectra_csv(t / "a/spectra.csv");
  EXPECT_EQ(s.bands(), 64);
  EXPECT_EQ(s.pixels(), 2000);
  EXPECT_EQ(read_dictionary(t / "a/dictionary.bin").atom_count(), 96);
}

TEST(Cli, CompareWritesOneCurvePerMethodWithMatchingM) {
  TempDir t;
  make_scene(t, "scene", "64", "96", "200");
  const Outcome o = run_cli({"compare", "--input", t / "scene/spectra.csv", "--methods", "dsvd,dgaussian", "--m",
                         "4,8,16,32", "--seed", "3", "--atoms", "96", "--epochs", "2", "--max-pixels", "10", "--out",
                         t / "cmp"});
  ASSERT_EQ(o.status, 0) << o.err;
  std::vector<std::string> m_dsvd, m_gauss;
  EXPECT_EQ(curve_rows(t / "cmp/dsvd.csv", &m_dsvd).size(), 4u);
  EXPECT_EQ(curve_rows(t / "cmp/dgaussian.csv", &m_gauss).size(), 4u);
  EXPECT_EQ(m_dsvd, (std::vector<std::string>{"4", "8", "16", "32"}));
  EXPECT_EQ(m_dsvd, m_gauss);

  const auto man = nlohmann::json::parse(slurp(t / "cmp/manifest.json"));
  EXPECT_EQ(man["command"], "compare");
  EXPECT_EQ(man["seeds"]["measurement"], 3);
  EXPECT_EQ(man["inputs"][0]["sha256"], sha256_hex(slurp(t / "scene/spectra.csv")));
  EXPECT_EQ(man["results"]["test_pixels"], 10);
  EXPECT_NE(o.out.find("m = 4: sampling ratio 6.25% of 64 bands"), std::string::npos);
}

TEST(Cli, CompareFromManifestReproducesCsvs) {
  TempDir t;
  make_scene(t, "scene", "16", "24", "120");
  ASSERT_EQ(run_cli({"compare", "--input", t / "scene/spectra.csv", "--methods", "dsvd,dsub,dctgaussian", "--m", "2,4,8",
                 "--seed", "9", "--atoms", "24", "--epochs", "3", "--trace", "0", "--out", t / "first"})
                .status,
            0);
  const Outcome again = run_cli({"compare", "--from-manifest", t / "first/manifest.json", "--out", t / "second"});
  ASSERT_EQ(again.status, 0) << again.err;
  for (const char* f : {"dsvd.csv", "dsub.csv", "dctgaussian.csv", "dictionary.bin", "trace_dsvd_0.csv", "manifest.json"})
    EXPECT_EQ(slurp(t / ("first/" + std::string(f))), slurp(t / ("second/" + std::string(f)))) << f;

  // other flags cannot override a manifest
  EXPECT_EQ(run_cli({"compare", "--from-manifest", t / "first/manifest.json", "--seed", "1", "--out", t / "x"}).status, 1);

  // a changed input is refused
  std::ofstream(t / "scene/spectra.csv", std::ios::app) << "\n";
  const Outcome changed = run_cli({"compare", "--from-manifest", t / "first/manifest.json", "--out", t / "third"});
  EXPECT_EQ(changed.status, 1);
  EXPECT_NE(changed.err.find("--from-manifest"), std::string::npos);
}

struct EquivalenceCase {
  const char* pipeline;
  std::vector<std::string> sample_flags;
  std::vector<std::string> reconstruct_flags;
};

class ReconstructEquivalence : public ::testing::TestWithParam<EquivalenceCase> {};

TEST_P(ReconstructEquivalence, MatchesInProcessPipeline) {
  const EquivalenceCase& c = GetParam();
  TempDir t;
  make_scene(t, "scene", "16", "24", "60");
  const std::string dict = t / "scene/dictionary.bin";
  const std::string spectra = t / "scene/spectra.csv";

  std::vector<std::string> sample{"sample", "--m", "8", "--seed", "11", "--input", spectra, "--out", t / "smp"};
  sample.insert(sample.end(), c.sample_flags.begin(), c.sample_flags.end());
  for (auto& s : sample)
    if (s == "DICT") s = dict;
  const Outcome so = run_cli(sample);
  ASSERT_EQ(so.status, 0) << so.err;

  std::vector<std::string> rec{"reconstruct", "--measurement", t / "smp/measurement.bin", "--measurements",
                               t / "smp/measurements.csv", "--truth", spectra, "--out", t / "rec"};
  for (auto s : c.reconstruct_flags) rec.push_back(s == "DICT" ? dict : s);
  const Outcome ro = run_cli(rec);
  ASSERT_EQ(ro.status, 0) << ro.err;

  const SpectraSet x = read_spectra_csv(spectra);
  const Dictionary d = read_dictionary(dict);
  const PipelineSpec spec = pipeline_from_name(c.pipeline, {8}, 0.01, 11);
  const ErrorCurve curve = run_pipeline(spec, &d, x);
  EXPECT_NEAR(first_mean(t / "rec/errors.csv"), curve.mean_rel_error[0], 1e-12);
  EXPECT_GT(curve.mean_rel_error[0], 0.0);
}

INSTANTIATE_TEST_SUITE_P(
    Pipelines, ReconstructEquivalence,
    ::testing::Values(EquivalenceCase{"dsvd", {"--kind", "svd_dictionary", "--dictionary", "DICT"}, {"--dictionary", "DICT"}},
                      EquivalenceCase{"dgaussian", {"--kind", "gaussian"}, {"--dictionary", "DICT"}},
                      EquivalenceCase{"dsub", {"--kind", "subsample"}, {"--dictionary", "DICT"}},
                      EquivalenceCase{"dctgaussian", {"--kind", "gaussian"}, {"--dct"}},
                      EquivalenceCase{"dctsvd", {"--kind", "svd_dct"}, {"--dct"}},
                      EquivalenceCase{"dsvd-bal", {"--kind", "svd_dictionary", "--dictionary", "DICT"},
                                      {"--dictionary", "DICT", "--balance"}}),
    [](const auto& info) {
      std::string n = info.param.pipeline;
      for (char& ch : n)
        if (ch == '-') ch = '_';
      return n;
    });

TEST(Cli, BalanceFileFeedsReconstruct) {
  TempDir t;
  make_scene(t, "scene", "16", "24", "30");
  const std::string dict = t / "scene/dictionary.bin";
  ASSERT_EQ(run_cli({"sample", "--kind", "svd_dictionary", "--m", "6", "--dictionary", dict, "--input",
                 t / "scene/spectra.csv", "--out", t / "smp"})
                .status,
            0);
  const Outcome b = run_cli({"balance", "--measurement", t / "smp/measurement.bin", "--dictionary", dict, "--out", t / "bal"});
  ASSERT_EQ(b.status, 0) << b.err;
  const std::string log = slurp(t / "bal/imbalance.csv");
  EXPECT_EQ(log.rfind("t,imbalance\n0,", 0), 0u);

  const std::vector<std::string> base{"reconstruct", "--measurement", t / "smp/measurement.bin", "--dictionary", dict,
                                      "--measurements", t / "smp/measurements.csv", "--truth", t / "scene/spectra.csv"};
  auto from_file = base, inline_balance = base;
  from_file.insert(from_file.end(), {"--balanced", t / "bal/balanced.bin", "--out", t / "r1"});
  inline_balance.insert(inline_balance.end(), {"--balance", "--out", t / "r2"});
  ASSERT_EQ(run_cli(from_file).status, 0);
  ASSERT_EQ(run_cli(inline_balance).status, 0);
  EXPECT_EQ(slurp(t / "r1/reconstruction.csv"), slurp(t / "r2/reconstruction.csv"));
}

TEST(Cli, CondcurveAndRobustnessWriteTheirFiles) {
  TempDir t;
  make_scene(t, "scene", "16", "24", "80");
  ASSERT_EQ(run_cli({"condcurve", "--dictionary", t / "scene/dictionary.bin", "--m", "1,4,8", "--out", t / "cc"}).status, 0);
  const std::string csv = slurp(t / "cc/condition.csv");
  EXPECT_EQ(csv.rfind("m,cond_unbalanced,cond_balanced\n1,1,1\n4,", 0), 0u) << csv;
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  const std::string s = t / "scene/spectra.csv";
  const Outcome r = run_cli({"robustness", "--scene-a", s, "--scene-b", s, "--atoms", "24", "--epochs", "2", "--seed", "1",
                         "--m", "4,8", "--max-pixels", "10", "--out", t / "rob"});
  ASSERT_EQ(r.status, 0) << r.err;
  // same scene, same split, same seed: identical dictionaries and curves
  EXPECT_EQ(slurp(t / "rob/cross.csv"), slurp(t / "rob/native.csv"));
  const auto man = nlohmann::json::parse(slurp(t / "rob/manifest.json"));
  EXPECT_EQ(man["results"]["rmse_between_curves"].get<double>(), 0.0);
}

TEST(Cli, LearnRecordsSplitAndDictionary) {
  TempDir t;
  make_scene(t, "scene", "16", "24", "50");
  const Outcome o = run_cli({"learn", "--input", t / "scene/spectra.csv", "--atoms", "12", "--epochs", "2", "--seed", "4",
                         "--write-splits", "--out", t / "dl"});
  ASSERT_EQ(o.status, 0) << o.err;
  const Dictionary d = read_dictionary(t / "dl/dictionary.bin");
  EXPECT_EQ(d.atom_count(), 12);
  EXPECT_EQ(d.provenance.training_pixels.size(), 25u);
  EXPECT_EQ(read_spectra_csv(t / "dl/test.csv").pixels(), 25);
  const auto man = nlohmann::json::parse(slurp(t / "dl/manifest.json"));
  EXPECT_EQ(man["seeds"]["split"], 4);
  EXPECT_EQ(man["outputs"].size(), 3u);
}

TEST(Cli, ValidationErrorsExitOneAndNameTheFlag) {
  TempDir t;
  make_scene(t, "scene", "16", "24", "40");
  const std::string s = t / "scene/spectra.csv";
  struct Case {
    std::vector<std::string> args;
    const char* flag;
  };
  const std::vector<Case> cases{
      {{"compare", "--input", s, "--m", "4,99", "--seed", "1", "--atoms", "24", "--out", t / "o"}, "--m"},
      {{"compare", "--input", s, "--m", "8,4", "--seed", "1", "--atoms", "24", "--out", t / "o"}, "--m"},
      {{"compare", "--input", s, "--m", "4", "--seed", "1", "--methods", "dfoo", "--out", t / "o"}, "--methods"},
      {{"compare", "--input", s, "--m", "4", "--seed", "1", "--methods", "dsvd", "--out", t / "o"}, "--atoms"},
      {{"compare", "--input", s, "--m", "4", "--out", t / "o"}, "--seed"},
      {{"compare", "--input", t / "missing.csv", "--m", "4", "--seed", "1", "--out", t / "o"}, "--input"},
      {{"learn", "--input", s, "--atoms", "4", "--seed", "1", "--train-fraction", "0.001", "--out", t / "o"},
       "--train-fraction"},
      {{"learn", "--input", s, "--atoms", "4", "--seed", "1", "--drop-bands", "16", "--out", t / "o"}, "--drop-bands"},
      {{"sample", "--kind", "fourier", "--m", "4", "--d", "16", "--out", t / "o"}, "--kind"},
      {{"sample", "--kind", "gaussian", "--m", "4", "--d", "16", "--out", t / "o"}, "--seed"},
      {{"sample", "--kind", "gaussian", "--m", "20", "--d", "16", "--seed", "1", "--out", t / "o"}, "--m"},
      {{"synth", "--atoms", "3", "--k", "4", "--seed", "1", "--out", t / "o"}, "--k"},
      {{"synth", "--d", "-3", "--seed", "1", "--out", t / "o"}, "--d"},
      {{"synth", "--seed", "x", "--out", t / "o"}, "--seed"},
      {{"condcurve", "--dct", "--m", "2", "--out", t / "o"}, "--d"},
      {{"condcurve", "--dct", "--d", "8", "--m", "2", "--out", t / "o"}, "--dct"},
  };
  for (const auto& c : cases) {
    const Outcome o = run_cli(c.args);
    EXPECT_EQ(o.status, 1) << c.args[0] << " " << c.flag << ": " << o.err;
    EXPECT_NE(o.err.find(c.flag), std::string::npos) << o.err;
  }
  EXPECT_EQ(run_cli({}).status, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).status, 1);
  EXPECT_EQ(run_cli({"--help"}).status, 0);
}

TEST(Cli, NumericalFailureExitsTwo) {
  // an atom of subnormal entries makes the column scaling overflow
  TempDir t;
  Dictionary d;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  d.atoms = Matrix::NullaryExpr(8, 12, [&] { return g(rng); });
  d.atoms.colwise().normalize();
  d.atoms.col(5).setConstant(1e-310);
  write_dictionary(t / "tiny.bin", d);
  ASSERT_EQ(run_cli({"sample", "--kind", "gaussian", "--m", "4", "--d", "8", "--seed", "2", "--out", t / "smp"}).status, 0);
  const Outcome o = run_cli({"balance", "--measurement", t / "smp/measurement.bin", "--dictionary", t / "tiny.bin", "--out",
                         t / "bal"});
  EXPECT_EQ(o.status, 2) << o.err;
}
