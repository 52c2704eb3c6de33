#include "hsics/hsi.hpp"
#include "hsics/dictlearn.hpp"
#include "hsics/sparse.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

using namespace hsics;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("hsics_hsi_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& f) const { return path_ / f; }

private:
  fs::path path_;
};

void put(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string header(const std::string& extra, const std::string& dims = "samples = 2\nlines = 2\nbands = 3\n") {
  return "ENVI\n" + dims + extra;
}

const std::string kStdKeys = "data type = 4\ninterleave = bsq\nbyte order = 0\n";

// float32 little-endian: 1, 2, 0.5, -1 | 0.25, 3, 1, 2 | 0.5, -1, 0.25, 3
const std::array<unsigned char, 48> kFixture = {
    0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40, 0x00, 0x00, 0x00, 0x3F, 0x00, 0x00, 0x80, 0xBF,
    0x00, 0x00, 0x80, 0x3E, 0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40,
    0x00, 0x00, 0x00, 0x3F, 0x00, 0x00, 0x80, 0xBF, 0x00, 0x00, 0x80, 0x3E, 0x00, 0x00, 0x40, 0x40};

std::string fixture_bytes() { return {kFixture.begin(), kFixture.end()}; }

EnviError::Kind kind_of(const fs::path& hdr) {
  try {
    read_envi(hdr);
  } catch (const EnviError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no EnviError for " << hdr;
  return EnviError::Kind::malformed;
}

HsiCube small_cube(int data_type) {
  HsiCube c;
  c.samples = 3;
  c.lines = 2;
  c.bands = 4;
  c.data_type = data_type;
  for (int i = 0; i < 24; ++i) c.data.push_back(0.125 * i - 1.0);
  c.wavelengths_nm = Vector::LinSpaced(4, 415.5, 950.0);
  return c;
}

SpectraSet numbered(Index p) {
  SpectraSet s;
  s.columns = Matrix::Ones(2, p);
  for (Index i = 0; i < p; ++i) s.pixel_ids.push_back({static_cast<std::int32_t>(i), 0});
  s.dataset_id = "numbered";
  return s;
}

} // namespace

TEST(ReadEnvi, HandWrittenFloat32Fixture) {
  TempDir dir("fixture");
  put(dir / "cube.hdr", header(kStdKeys));
  put(dir / "cube", fixture_bytes());
  const HsiCube c = read_envi(dir / "cube.hdr");
  EXPECT_EQ(c.samples, 2);
  EXPECT_EQ(c.lines, 2);
  EXPECT_EQ(c.bands, 3);
  const std::vector<double> want = {1, 2, 0.5, -1, 0.25, 3, 1, 2, 0.5, -1, 0.25, 3};
  EXPECT_EQ(c.data, want);
  EXPECT_EQ(c.at(1, 0, 1), 3.0);
  EXPECT_EQ(c.at(1, 1, 2), 3.0);
  EXPECT_FALSE(c.wavelengths_nm.has_value());
}

TEST(ReadEnvi, CompanionWithImgExtension) {
  TempDir dir("img");
  put(dir / "cube.hdr", header(kStdKeys));
  put(dir / "cube.img", fixture_bytes());
  EXPECT_EQ(read_envi(dir / "cube.hdr").data.size(), 12u);
}

TEST(ReadEnvi, BigEndianFloat64) {
  TempDir dir("be");
  put(dir / "c.hdr", header("data type = 5\ninterleave = bsq\nbyte order = 1\n", "samples = 1\nlines = 1\nbands = 2\n"));
  // 1.5 and -2 as big-endian doubles
  const std::string bytes = {'\x3F', '\xF8', 0, 0, 0, 0, 0, 0, '\xC0', 0, 0, 0, 0, 0, 0, 0};
  put(dir / "c", bytes);
  const HsiCube c = read_envi(dir / "c.hdr");
  EXPECT_EQ(c.data, (std::vector<double>{1.5, -2.0}));
}

TEST(ReadEnvi, HeaderOffsetIsSkipped) {
  TempDir dir("offset");
  put(dir / "c.hdr", header(kStdKeys + "header offset = 5\n"));
  put(dir / "c", "XXXXX" + fixture_bytes());
  EXPECT_EQ(read_envi(dir / "c.hdr").data[1], 2.0);
}

TEST(ReadEnvi, Wavelengths148Bands) {
  TempDir dir("wl");
  // 415 to 950 nm in 148 steps, written over several lines as ENVI tools do
  std::string wl = "wavelength = {\n";
  for (int b = 0; b < 148; ++b) {
    wl += std::to_string(415.0 + b * (535.0 / 147.0));
    wl += b + 1 < 148 ? (b % 8 == 7 ? ",\n" : ", ") : "}\n";
  }
  put(dir / "c.hdr", header("data type = 4\ninterleave = bsq\nbyte order = 0\n" + wl,
                            "samples = 1\nlines = 1\nbands = 148\n"));
  put(dir / "c", std::string(148 * 4, '\0'));
  const HsiCube c = read_envi(dir / "c.hdr");
  ASSERT_TRUE(c.wavelengths_nm.has_value());
  ASSERT_EQ(c.wavelengths_nm->size(), 148);
  EXPECT_NEAR((*c.wavelengths_nm)(0), 415.0, 1e-9);
  EXPECT_NEAR((*c.wavelengths_nm)(147), 950.0, 1e-4);

  put(dir / "c.hdr", header("data type = 4\ninterleave = bsq\nbyte order = 0\nwavelength = {400, 500}\n",
                            "samples = 1\nlines = 1\nbands = 148\n"));
  EXPECT_THROW(read_envi(dir / "c.hdr"), ValidationError);
}

TEST(ReadEnvi, TruncatedBinaryIsSizeMismatch) {
  TempDir dir("trunc");
  put(dir / "c.hdr", header(kStdKeys));
  put(dir / "c", fixture_bytes().substr(0, 44));
  EXPECT_EQ(kind_of(dir / "c.hdr"), EnviError::Kind::size_mismatch);
  put(dir / "c", fixture_bytes() + "x");
  EXPECT_EQ(kind_of(dir / "c.hdr"), EnviError::Kind::size_mismatch);
}

TEST(ReadEnvi, DistinctErrorKinds) {
  TempDir dir("kinds");
  put(dir / "c", fixture_bytes());
  put(dir / "c.hdr", header("data type = 4\nbyte order = 0\n"));
  EXPECT_EQ(kind_of(dir / "c.hdr"), EnviError::Kind::missing_key);
  put(dir / "c.hdr", header("data type = 4\ninterleave = bil\nbyte order = 0\n"));
  EXPECT_EQ(kind_of(dir / "c.hdr"), EnviError::Kind::unsupported_interleave);
  put(dir / "c.hdr", header("data type = 4\ninterleave = bip\nbyte order = 0\n"));
  EXPECT_EQ(kind_of(dir / "c.hdr"), EnviError::Kind::unsupported_interleave);
  put(dir / "c.hdr", header("data type = 2\ninterleave = bsq\nbyte order = 0\n"));
  EXPECT_EQ(kind_of(dir / "c.hdr"), EnviError::Kind::unsupported_data_type);
  put(dir / "c.hdr", "not a header\n");
  EXPECT_EQ(kind_of(dir / "c.hdr"), EnviError::Kind::malformed);
}

TEST(WriteEnvi, RoundTripIsByteIdentical) {
  for (int type : {4, 5}) {
    for (int order : {0, 1}) {
      TempDir dir("rt" + std::to_string(type) + std::to_string(order));
      HsiCube c = small_cube(type);
      c.byte_order = order;
      write_envi(dir / "a.hdr", c);
      const HsiCube back = read_envi(dir / "a.hdr");
      EXPECT_EQ(back.data, c.data);
      ASSERT_TRUE(back.wavelengths_nm.has_value());
      EXPECT_EQ(*back.wavelengths_nm, *c.wavelengths_nm);
      write_envi(dir / "b.hdr", back);
      EXPECT_EQ(slurp(dir / "a.hdr"), slurp(dir / "b.hdr"));
      EXPECT_EQ(slurp(dir / "a"), slurp(dir / "b"));
      EXPECT_EQ(fs::file_size(dir / "a"), 24u * (type == 4 ? 4u : 8u));
    }
  }
}

TEST(DropBands, RemovesPlanesAndWavelengths) {
  const HsiCube c = small_cube(5);
  const HsiCube out = drop_bands(c, {0, 2});
  EXPECT_EQ(out.bands, 2);
  EXPECT_EQ(out.at(2, 1, 0), c.at(2, 1, 1));
  EXPECT_EQ(out.at(0, 0, 1), c.at(0, 0, 3));
  EXPECT_EQ((*out.wavelengths_nm)(1), (*c.wavelengths_nm)(3));
  EXPECT_THROW(drop_bands(c, {4}), ValidationError);
  EXPECT_THROW(drop_bands(c, {0, 1, 2, 3}), ValidationError);
}

TEST(ToSpectra, UnnormalizedIsPureReindexing) {
  const HsiCube c = small_cube(5);
  const SpectraSet s = to_spectra(c, false);
  ASSERT_EQ(s.pixels(), 6);
  ASSERT_EQ(s.bands(), 4);
  for (Index y = 0; y < 2; ++y)
    for (Index x = 0; x < 3; ++x) {
      const Index col = y * 3 + x;
      EXPECT_EQ(s.pixel_ids[static_cast<std::size_t>(col)], (PixelId{static_cast<std::int32_t>(x), static_cast<std::int32_t>(y)}));
      for (Index b = 0; b < 4; ++b) EXPECT_EQ(s.columns(b, col), c.at(x, y, b));
    }
  EXPECT_FALSE(s.normalized);
  EXPECT_EQ(*s.wavelengths_nm, *c.wavelengths_nm);
}

TEST(ToSpectra, EqualPixelsNormalizeIdentically) {
  HsiCube c;
  c.samples = 2;
  c.lines = 2;
  c.bands = 3;
  c.data = {2, 2, 2, 2, 1, 1, 1, 1, 5, 5, 5, 5};
  const SpectraSet s = to_spectra(c, true);
  ASSERT_EQ(s.pixels(), 4);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_EQ(s.columns.col(i), s.columns.col(0));
    EXPECT_NEAR(s.columns.col(i).norm(), 1.0, 1e-12);
  }
}

TEST(ToSpectra, ThreeFourFive) {
  HsiCube c;
  c.samples = 1;
  c.lines = 1;
  c.bands = 2;
  c.data = {3, 4};
  const SpectraSet s = to_spectra(c, true);
  EXPECT_DOUBLE_EQ(s.columns(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(s.columns(1, 0), 0.8);
  EXPECT_TRUE(s.normalized);
}

TEST(ToSpectra, ZeroPixelIsDroppedAndLogged) {
  HsiCube c;
  c.samples = 3;
  c.lines = 1;
  c.bands = 2;
  c.data = {1, 0, 2, 1, 0, 2};
  const SpectraSet s = to_spectra(c, true);
  EXPECT_EQ(s.pixels(), 2);
  ASSERT_EQ(s.dropped.size(), 1u);
  EXPECT_EQ(s.dropped[0], (PixelId{1, 0}));
  EXPECT_EQ(s.pixel_ids, (std::vector<PixelId>{{0, 0}, {2, 0}}));
  EXPECT_EQ(to_spectra(c, false).pixels(), 3);
}

TEST(ToSpectra, DatasetIdIsContentHash) {
  HsiCube c = small_cube(5);
  const std::string id = to_spectra(c, true).dataset_id;
  EXPECT_EQ(id, to_spectra(c, true).dataset_id);
  c.data[3] += 1.0;
  EXPECT_NE(id, to_spectra(c, true).dataset_id);
}

TEST(Split, HalvesAreDisjointAndExhaustive) {
  const SpectraSet s = numbered(10);
  const auto [train, test] = split_train_test(s, 0.5, 3);
  EXPECT_EQ(train.pixels(), 5);
  EXPECT_EQ(test.pixels(), 5);
  std::set<PixelId> all(train.pixel_ids.begin(), train.pixel_ids.end());
  for (const PixelId& id : test.pixel_ids) EXPECT_TRUE(all.insert(id).second);
  EXPECT_EQ(all.size(), 10u);
  EXPECT_EQ(train.dataset_id, s.dataset_id);
}

TEST(Split, RoundsTrainSize) {
  const SpectraSet s = numbered(7);
  EXPECT_EQ(split_train_test(s, 0.5, 1).first.pixels(), 4);
  EXPECT_EQ(split_train_test(s, 0.3, 1).first.pixels(), 2);
}

TEST(Split, SameSeedSamePartition) {
  const SpectraSet s = numbered(50);
  const auto a = split_train_test(s, 0.5, 9);
  const auto b = split_train_test(s, 0.5, 9);
  EXPECT_EQ(a.first.pixel_ids, b.first.pixel_ids);
  EXPECT_EQ(a.second.pixel_ids, b.second.pixel_ids);
  EXPECT_NE(split_train_test(s, 0.5, 10).first.pixel_ids, a.first.pixel_ids);
}

TEST(Split, EmptySideIsAnError) {
  EXPECT_THROW(split_train_test(numbered(1), 0.5, 0), ValidationError);
  EXPECT_THROW(split_train_test(numbered(10), 0.01, 0), ValidationError);
  EXPECT_THROW(split_train_test(numbered(10), 0.99, 0), ValidationError);
  EXPECT_THROW(split_train_test(numbered(10), 0.0, 0), ValidationError);
  EXPECT_THROW(split_train_test(numbered(10), 1.0, 0), ValidationError);
}

TEST(Split, UniformSelectionFrequency) {
  // Per-pixel frequencies over 200 seeds are Binomial(200, 0.5) / 200 with
  // standard deviation 0.035; pooled over blocks of 100 pixels the standard
  // deviation is 0.0035, so a 0.02 band is a tight uniformity check.
  const Index p = 10000;
  const int seeds = 200;
  const SpectraSet s = numbered(p);
  std::vector<int> hits(static_cast<std::size_t>(p), 0);
  for (int seed = 0; seed < seeds; ++seed)
    for (const PixelId& id : split_train_test(s, 0.5, static_cast<std::uint64_t>(seed)).first.pixel_ids)
      ++hits[static_cast<std::size_t>(id.x)];

  for (Index block = 0; block < p / 100; ++block) {
    int sum = 0;
    for (Index i = block * 100; i < (block + 1) * 100; ++i) sum += hits[static_cast<std::size_t>(i)];
    EXPECT_NEAR(sum / (100.0 * seeds), 0.5, 0.02) << "block " << block;
  }
  double mean = 0.0;
  double sq = 0.0;
  for (int h : hits) {
    const double f = h / static_cast<double>(seeds);
    mean += f;
    sq += f * f;
  }
  mean /= static_cast<double>(p);
  const double sd = std::sqrt(sq / static_cast<double>(p) - mean * mean);
  EXPECT_NEAR(mean, 0.5, 1e-12);
  EXPECT_NEAR(sd, std::sqrt(0.25 / seeds), 0.004);
}

TEST(SynthScene, NoiselessOneSparseIsSignedAtom) {
  const SynthScene sc = synth_scene(16, 24, 1, 50, 0.0, 4);
  const Matrix& d = sc.true_dictionary.atoms;
  for (Index j = 0; j < d.cols(); ++j) EXPECT_NEAR(d.col(j).norm(), 1.0, 1e-12);
  for (Index i = 0; i < sc.spectra.pixels(); ++i) {
    Index j = 0;
    (sc.true_codes.col(i).cwiseAbs()).maxCoeff(&j);
    const Vector x = sc.spectra.columns.col(i);
    const double sign = x.dot(d.col(j)) > 0 ? 1.0 : -1.0;
    EXPECT_LE((x - sign * d.col(j)).norm(), 1e-12) << i;
  }

  const CodingResult r = sparse_code(d, sc.spectra.columns, 1e-7, 1e-12, 100000);
  for (Index i = 0; i < sc.spectra.pixels(); ++i) {
    const Vector s = r.coefficients.col(i);
    EXPECT_LE((sc.spectra.columns.col(i) - d * s).norm(), 1e-6) << i;
    EXPECT_EQ((s.array().abs() > 1e-6).count(), 1) << i;
  }
}

TEST(SynthScene, ModelInvariants) {
  const SynthScene sc = synth_scene(20, 30, 3, 100, 0.02, 8);
  EXPECT_EQ(sc.spectra.bands(), 20);
  EXPECT_EQ(sc.spectra.pixels(), 100);
  EXPECT_TRUE(sc.spectra.normalized);
  for (Index i = 0; i < 100; ++i) {
    EXPECT_LE((sc.true_codes.col(i).array() != 0.0).count(), 3);
    EXPECT_NEAR((sc.true_dictionary.atoms * sc.true_codes.col(i)).norm(), 1.0, 1e-12);
    EXPECT_NEAR(sc.spectra.columns.col(i).norm(), 1.0, 1e-12);
  }
}

TEST(SynthScene, BitIdenticalForSeed) {
  const SynthScene a = synth_scene(16, 24, 3, 40, 0.01, 77);
  const SynthScene b = synth_scene(16, 24, 3, 40, 0.01, 77);
  EXPECT_EQ(a.true_dictionary.atoms, b.true_dictionary.atoms);
  EXPECT_EQ(a.true_codes, b.true_codes);
  EXPECT_EQ(a.spectra.columns, b.spectra.columns);
  EXPECT_EQ(a.spectra.dataset_id, b.spectra.dataset_id);
  EXPECT_NE(synth_scene(16, 24, 3, 40, 0.01, 78).spectra.columns, a.spectra.columns);
}

TEST(SynthScene, FromGivenDictionary) {
  const SynthScene base = synth_scene(16, 24, 3, 10, 0.0, 1);
  const SynthScene a = synth_scene_from(base.true_dictionary, 3, 30, 0.01, 5);
  const SynthScene b = synth_scene_from(base.true_dictionary, 3, 30, 0.01, 6);
  EXPECT_EQ(a.true_dictionary.atoms, base.true_dictionary.atoms);
  EXPECT_NE(a.spectra.columns, b.spectra.columns);
  EXPECT_NE(a.spectra.dataset_id, b.spectra.dataset_id);
}

TEST(SynthScene, RejectsBadParameters) {
  EXPECT_THROW(synth_scene(16, 24, 25, 10, 0.0, 1), ValidationError);
  EXPECT_THROW(synth_scene(16, 24, 0, 10, 0.0, 1), ValidationError);
  EXPECT_THROW(synth_scene(16, 24, 2, 0, 0.0, 1), ValidationError);
  EXPECT_THROW(synth_scene(16, 24, 2, 10, -1.0, 1), ValidationError);
}

TEST(SynthScene, PlantedModelIsFeasibleAtFullMeasurement) {
  const SynthScene sc = synth_scene(64, 96, 4, 2000, 0.01, 13);
  const double eps = 0.03;
  int within = 0;
  for (Index i = 0; i < sc.spectra.pixels(); ++i) {
    const Vector y = sc.spectra.columns.col(i);
    const SolveReport r = solve_bpdn({sc.true_dictionary.atoms, y, eps}, 1e-6, 5000);
    if (r.converged && r.residual_norm <= eps * (1 + 1e-3)) ++within;
  }
  EXPECT_GE(within, 1980);
}

TEST(SpectraCsv, RoundTripIsExact) {
  TempDir dir("csv");
  SynthScene sc = synth_scene(5, 6, 2, 4, 0.01, 2);
  sc.spectra.pixel_ids[1] = {7, 3};
  write_spectra_csv(dir / "s.csv", sc.spectra);
  const SpectraSet back = read_spectra_csv(dir / "s.csv");
  EXPECT_EQ(back.columns, sc.spectra.columns);
  EXPECT_EQ(back.pixel_ids, sc.spectra.pixel_ids);
  const std::string text = slurp(dir / "s.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "band,0_0,7_3,2_0,3_0");
  write_spectra_csv(dir / "t.csv", back);
  EXPECT_EQ(slurp(dir / "t.csv"), text);
}

TEST(SpectraCsv, RejectsRaggedRows) {
  TempDir dir("csvbad");
  put(dir / "s.csv", "band,0_0,1_0\n0,1,2\n1,3\n");
  EXPECT_THROW(read_spectra_csv(dir / "s.csv"), ValidationError);
}
