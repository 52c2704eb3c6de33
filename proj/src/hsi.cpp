#include "hsics/hsi.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace hsics {
namespace fs = std::filesystem;
namespace {

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string trim(std::string s) {
  auto blank = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), blank));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), blank).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// key -> raw value; brace-delimited values may span lines and keep their braces
std::map<std::string, std::string> parse_header(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "ENVI")
    throw EnviError(EnviError::Kind::malformed, where + ": header does not start with ENVI");
  std::map<std::string, std::string> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw EnviError(EnviError::Kind::malformed, where + ": bad header line: " + line);
    const std::string key = lower(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '{') {
      while (value.find('}') == std::string::npos) {
        std::string more;
        if (!std::getline(in, more)) throw EnviError(EnviError::Kind::malformed, where + ": unterminated { in " + key);
        value += " " + trim(more);
      }
    }
    out[key] = value;
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& value, const std::string& where) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw EnviError(EnviError::Kind::malformed, where + ": " + key + " is not an integer: " + value);
  return v;
}

double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ValidationError(what + ": not a number: '" + t + "'");
  return v;
}

std::vector<double> parse_list(const std::string& braced, const std::string& what) {
  const auto open = braced.find('{');
  const auto close = braced.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw EnviError(EnviError::Kind::malformed, what + ": expected a {...} list");
  std::vector<double> out;
  std::stringstream items(braced.substr(open + 1, close - open - 1));
  std::string item;
  while (std::getline(items, item, ','))
    if (!trim(item).empty()) out.push_back(parse_double(item, what));
  return out;
}

fs::path companion_binary(const fs::path& header_path) {
  std::vector<fs::path> candidates;
  if (lower(header_path.extension().string()) == ".hdr") {
    fs::path stem = header_path;
    stem.replace_extension();
    candidates.push_back(stem);
    for (const char* ext : {".img", ".dat", ".raw", ".bsq"}) candidates.push_back(fs::path(stem).replace_extension(ext));
  } else {
    candidates.push_back(fs::path(header_path).replace_extension(".img"));
  }
  for (const fs::path& c : candidates)
    if (fs::is_regular_file(c)) return c;
  throw ValidationError(header_path.string() + ": no companion binary found (tried " + candidates.front().string() +
                        " and .img/.dat/.raw/.bsq)");
}

template <class U>
U byteswap(U v) {
  U out = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out = static_cast<U>((out << 8) | (v & 0xff));
    v = static_cast<U>(v >> 8);
  }
  return out;
}

// decodes `count` values of width 4 or 8 stored with the given byte order
std::vector<double> decode(const char* p, std::size_t count, int data_type, int byte_order) {
  const bool swap = (byte_order == 1) == (std::endian::native == std::endian::little);
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (data_type == 4) {
      std::uint32_t bits;
      std::memcpy(&bits, p + 4 * i, 4);
      out[i] = std::bit_cast<float>(swap ? byteswap(bits) : bits);
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, p + 8 * i, 8);
      out[i] = std::bit_cast<double>(swap ? byteswap(bits) : bits);
    }
  }
  return out;
}

std::string encode(const std::vector<double>& values, int data_type, int byte_order) {
  const bool swap = (byte_order == 1) == (std::endian::native == std::endian::little);
  const std::size_t width = data_type == 4 ? 4 : 8;
  std::string out(values.size() * width, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (data_type == 4) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
      if (swap) bits = byteswap(bits);
      std::memcpy(out.data() + 4 * i, &bits, 4);
    } else {
      auto bits = std::bit_cast<std::uint64_t>(values[i]);
      if (swap) bits = byteswap(bits);
      std::memcpy(out.data() + 8 * i, &bits, 8);
    }
  }
  return out;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ValidationError("write failed: " + path.string());
}

void check_wavelengths(const Vector& w, Index bands, const std::string& where) {
  if (w.size() != bands)
    throw ValidationError(where + ": " + std::to_string(w.size()) + " wavelengths for " + std::to_string(bands) +
                          " bands");
  for (Index i = 1; i < w.size(); ++i)
    if (!(w(i) > w(i - 1))) throw ValidationError(where + ": wavelengths are not strictly increasing");
}

// shortest representation that reads back to the same double
std::string format_number(double v) { return fmt::format("{}", v); }

std::string id_string(const PixelId& p) { return std::to_string(p.x) + "_" + std::to_string(p.y); }

// unit-norm scaling, throwing if the column is zero
Vector unit(const Vector& v) {
  const double n = v.norm();
  if (n == 0.0) throw NumericalError("synth_scene: zero spectrum generated");
  return v / n;
}

} // namespace

void validate(const SpectraSet& s) {
  if (s.columns.rows() < 1) throw ValidationError("spectra: no bands");
  if (static_cast<Index>(s.pixel_ids.size()) != s.columns.cols())
    throw ValidationError("spectra: " + std::to_string(s.pixel_ids.size()) + " pixel ids for " +
                          std::to_string(s.columns.cols()) + " columns");
  if (!s.columns.allFinite()) throw ValidationError("spectra: non-finite values");
  if (s.wavelengths_nm) check_wavelengths(*s.wavelengths_nm, s.columns.rows(), "spectra");
}

HsiCube read_envi(const fs::path& header_path) {
  const std::string where = header_path.string();
  const auto keys = parse_header(slurp(header_path), where);
  auto need = [&](const char* key) -> const std::string& {
    const auto it = keys.find(key);
    if (it == keys.end()) throw EnviError(EnviError::Kind::missing_key, where + ": missing header key '" + key + "'");
    return it->second;
  };

  HsiCube cube;
  cube.samples = parse_int("samples", need("samples"), where);
  cube.lines = parse_int("lines", need("lines"), where);
  cube.bands = parse_int("bands", need("bands"), where);
  if (cube.samples < 1 || cube.lines < 1 || cube.bands < 1)
    throw EnviError(EnviError::Kind::malformed, where + ": samples, lines and bands must be >= 1");
  cube.data_type = static_cast<int>(parse_int("data type", need("data type"), where));
  if (cube.data_type != 4 && cube.data_type != 5)
    throw EnviError(EnviError::Kind::unsupported_data_type,
                    where + ": data type " + std::to_string(cube.data_type) + " not supported (only 4 and 5)");
  const std::string interleave = lower(need("interleave"));
  if (interleave != "bsq")
    throw EnviError(EnviError::Kind::unsupported_interleave, where + ": interleave '" + interleave + "' not supported (only bsq)");
  cube.byte_order = static_cast<int>(parse_int("byte order", need("byte order"), where));
  if (cube.byte_order != 0 && cube.byte_order != 1)
    throw EnviError(EnviError::Kind::malformed, where + ": byte order must be 0 or 1");
  long long offset = 0;
  if (const auto it = keys.find("header offset"); it != keys.end()) offset = parse_int("header offset", it->second, where);

  if (const auto it = keys.find("wavelength"); it != keys.end()) {
    const std::vector<double> w = parse_list(it->second, where + " wavelength");
    cube.wavelengths_nm = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
    check_wavelengths(*cube.wavelengths_nm, cube.bands, where);
  }

  const fs::path bin = companion_binary(header_path);
  const std::string raw = slurp(bin);
  const std::size_t count = static_cast<std::size_t>(cube.samples * cube.lines * cube.bands);
  const std::size_t width = cube.data_type == 4 ? 4 : 8;
  if (offset < 0 || raw.size() != static_cast<std::size_t>(offset) + count * width)
    throw EnviError(EnviError::Kind::size_mismatch,
                    bin.string() + ": " + std::to_string(raw.size()) + " bytes, expected " +
                        std::to_string(static_cast<std::size_t>(offset) + count * width));
  cube.data = decode(raw.data() + offset, count, cube.data_type, cube.byte_order);
  return cube;
}

void write_envi(const fs::path& header_path, const HsiCube& cube) {
  if (lower(header_path.extension().string()) != ".hdr")
    throw ValidationError(header_path.string() + ": header path must end in .hdr");
  if (cube.data_type != 4 && cube.data_type != 5)
    throw EnviError(EnviError::Kind::unsupported_data_type, "write_envi: data type must be 4 or 5");
  if (cube.data.size() != static_cast<std::size_t>(cube.samples * cube.lines * cube.bands))
    throw ValidationError("write_envi: data length does not match samples x lines x bands");

  std::string hdr = "ENVI\n";
  hdr += fmt::format("samples = {}\nlines = {}\nbands = {}\nheader offset = 0\nfile type = ENVI Standard\n", cube.samples,
                     cube.lines, cube.bands);
  hdr += fmt::format("data type = {}\ninterleave = bsq\nbyte order = {}\n", cube.data_type, cube.byte_order);
  if (cube.wavelengths_nm) {
    hdr += "wavelength = {";
    for (Index i = 0; i < cube.wavelengths_nm->size(); ++i)
      hdr += (i ? ", " : "") + format_number((*cube.wavelengths_nm)(i));
    hdr += "}\n";
  }
  fs::path bin = header_path;
  bin.replace_extension();
  write_file(header_path, hdr);
  write_file(bin, encode(cube.data, cube.data_type, cube.byte_order));
}

HsiCube drop_bands(const HsiCube& cube, const std::vector<Index>& bands) {
  std::vector<bool> drop(static_cast<std::size_t>(cube.bands), false);
  for (Index b : bands) {
    if (b < 0 || b >= cube.bands) throw ValidationError("drop_bands: band " + std::to_string(b) + " out of range");
    drop[static_cast<std::size_t>(b)] = true;
  }
  HsiCube out = cube;
  out.data.clear();
  std::vector<double> wl;
  const std::size_t plane = static_cast<std::size_t>(cube.samples * cube.lines);
  for (Index b = 0; b < cube.bands; ++b) {
    if (drop[static_cast<std::size_t>(b)]) continue;
    out.data.insert(out.data.end(), cube.data.begin() + static_cast<std::ptrdiff_t>(b * plane),
                    cube.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * plane));
    if (cube.wavelengths_nm) wl.push_back((*cube.wavelengths_nm)(b));
  }
  out.bands = static_cast<Index>(out.data.size() / std::max<std::size_t>(plane, 1));
  if (out.bands == 0) throw ValidationError("drop_bands: no bands left");
  if (cube.wavelengths_nm) out.wavelengths_nm = Eigen::Map<const Vector>(wl.data(), static_cast<Index>(wl.size()));
  return out;
}

SpectraSet to_spectra(const HsiCube& cube, bool normalize) {
  const Index p = cube.samples * cube.lines;
  Matrix all(cube.bands, p);
  for (Index b = 0; b < cube.bands; ++b)
    for (Index px = 0; px < p; ++px) all(b, px) = cube.data[static_cast<std::size_t>(b * p + px)];

  SpectraSet s;
  s.dataset_id = "cube:" + fingerprint(all);
  s.wavelengths_nm = cube.wavelengths_nm;
  s.normalized = normalize;
  std::vector<Index> keep;
  for (Index px = 0; px < p; ++px) {
    const PixelId id{static_cast<std::int32_t>(px % cube.samples), static_cast<std::int32_t>(px / cube.samples)};
    if (normalize && all.col(px).norm() == 0.0) {
      s.dropped.push_back(id);
      continue;
    }
    keep.push_back(px);
    s.pixel_ids.push_back(id);
  }
  s.columns.resize(cube.bands, static_cast<Index>(keep.size()));
  for (Index c = 0; c < s.columns.cols(); ++c) {
    s.columns.col(c) = all.col(keep[static_cast<std::size_t>(c)]);
    if (normalize) s.columns.col(c) /= s.columns.col(c).norm();
  }
  if (!s.columns.allFinite()) throw ValidationError("to_spectra: cube contains non-finite values");
  return s;
}

SpectraSet select_columns(const SpectraSet& s, const std::vector<Index>& cols) {
  SpectraSet out;
  out.columns.resize(s.bands(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c] < 0 || cols[c] >= s.pixels()) throw ValidationError("select_columns: column out of range");
    out.columns.col(static_cast<Index>(c)) = s.columns.col(cols[c]);
    out.pixel_ids.push_back(s.pixel_ids[static_cast<std::size_t>(cols[c])]);
  }
  out.normalized = s.normalized;
  out.dataset_id = s.dataset_id;
  out.dropped = s.dropped;
  out.wavelengths_nm = s.wavelengths_nm;
  return out;
}

std::pair<SpectraSet, SpectraSet> split_train_test(const SpectraSet& s, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("split_train_test: train_fraction must be in (0, 1)");
  const Index p = s.pixels();
  const auto n_train = static_cast<Index>(std::llround(train_fraction * static_cast<double>(p)));
  if (n_train < 1 || n_train >= p)
    throw ValidationError("split_train_test: a " + std::to_string(train_fraction) + " split of " + std::to_string(p) +
                          " pixels leaves one side empty");

  std::vector<Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> train(order.begin(), order.begin() + n_train);
  std::vector<Index> test(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {select_columns(s, train), select_columns(s, test)};
}

SynthScene synth_scene(Index d, Index n_atoms, Index k, Index p, double noise_sigma, std::uint64_t seed) {
  if (d < 1 || n_atoms < 1) throw ValidationError("synth_scene: d and n_atoms must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Dictionary dict;
  dict.atoms.resize(d, n_atoms);
  for (Index j = 0; j < n_atoms; ++j) {
    for (Index i = 0; i < d; ++i) dict.atoms(i, j) = n01(rng);
    dict.atoms.col(j) = unit(dict.atoms.col(j));
  }
  dict.provenance.dataset_id = "planted";
  dict.provenance.seed = seed;
  // the scene itself draws from an independent stream
  SynthScene scene = synth_scene_from(dict, k, p, noise_sigma, rng());
  scene.seed = seed;
  scene.spectra.dataset_id = fmt::format("synth:d={},n={},k={},p={},sigma={},seed={}", d, n_atoms, k, p, noise_sigma, seed);
  return scene;
}

SynthScene synth_scene_from(const Dictionary& dict, Index k, Index p, double noise_sigma, std::uint64_t seed) {
  const Matrix& atoms = dict.atoms;
  require_finite(atoms, "synth_scene dictionary");
  const Index d = atoms.rows();
  const Index n = atoms.cols();
  if (k < 1 || k > n) throw ValidationError("synth_scene: k must be in 1..n_atoms");
  if (p < 1) throw ValidationError("synth_scene: p must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ValidationError("synth_scene: noise_sigma must be >= 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  SynthScene scene;
  scene.true_dictionary = dict;
  scene.noise_sigma = noise_sigma;
  scene.seed = seed;
  scene.true_codes = Matrix::Zero(n, p);
  SpectraSet& s = scene.spectra;
  s.columns.resize(d, p);
  s.normalized = true;

  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < p; ++i) {
    Vector clean;
    do {
      std::iota(idx.begin(), idx.end(), 0);
      for (Index c = 0; c < k; ++c) {
        // partial Fisher-Yates: the first k entries are a uniform k-subset
        std::uniform_int_distribution<Index> pick(c, n - 1);
        std::swap(idx[static_cast<std::size_t>(c)], idx[static_cast<std::size_t>(pick(rng))]);
      }
      scene.true_codes.col(i).setZero();
      for (Index c = 0; c < k; ++c) scene.true_codes(idx[static_cast<std::size_t>(c)], i) = n01(rng);
      clean = atoms * scene.true_codes.col(i);
    } while (clean.norm() == 0.0);
    scene.true_codes.col(i) /= clean.norm();
    clean /= clean.norm();

    Vector noisy = clean;
    for (Index b = 0; b < d; ++b) noisy(b) += noise_sigma * n01(rng);
    s.columns.col(i) = unit(noisy);
    s.pixel_ids.push_back({static_cast<std::int32_t>(i), 0});
  }
  s.dataset_id = fmt::format("synth-from:{}:k={},p={},sigma={},seed={}", fingerprint(atoms).substr(0, 16), k, p, noise_sigma, seed);
  return scene;
}

void write_spectra_csv(const fs::path& path, const SpectraSet& s) {
  validate(s);
  std::string out = "band";
  for (const PixelId& id : s.pixel_ids) out += "," + id_string(id);
  out += "\n";
  for (Index b = 0; b < s.bands(); ++b) {
    out += std::to_string(b);
    for (Index c = 0; c < s.pixels(); ++c) out += fmt::format(",{:.17g}", s.columns(b, c));
    out += "\n";
  }
  write_file(path, out);
}

SpectraSet read_spectra_csv(const fs::path& path) {
  const std::string text = slurp(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty CSV");
  std::stringstream header(line);
  std::string cell;
  std::getline(header, cell, ',');
  if (trim(cell) != "band") throw ValidationError(path.string() + ": first header cell must be 'band'");

  SpectraSet s;
  while (std::getline(header, cell, ',')) {
    const std::string t = trim(cell);
    const auto us = t.find('_');
    if (us == std::string::npos) throw ValidationError(path.string() + ": pixel column '" + t + "' is not <x>_<y>");
    s.pixel_ids.push_back({static_cast<std::int32_t>(parse_int("pixel x", t.substr(0, us), path.string())),
                           static_cast<std::int32_t>(parse_int("pixel y", t.substr(us + 1), path.string()))});
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::stringstream row(line);
    std::getline(row, cell, ',');
    std::vector<double> values;
    while (std::getline(row, cell, ',')) values.push_back(parse_double(cell, path.string()));
    if (values.size() != s.pixel_ids.size())
      throw ValidationError(path.string() + ": band row " + std::to_string(rows.size()) + " has " +
                            std::to_string(values.size()) + " values, expected " + std::to_string(s.pixel_ids.size()));
    rows.push_back(std::move(values));
  }
  if (rows.empty() || s.pixel_ids.empty()) throw ValidationError(path.string() + ": no data");
  s.columns.resize(static_cast<Index>(rows.size()), static_cast<Index>(s.pixel_ids.size()));
  for (std::size_t b = 0; b < rows.size(); ++b)
    for (std::size_t c = 0; c < rows[b].size(); ++c) s.columns(static_cast<Index>(b), static_cast<Index>(c)) = rows[b][c];
  s.dataset_id = "csv:" + sha256_hex(text);
  s.normalized = true;
  for (Index c = 0; c < s.pixels(); ++c)
    if (std::abs(s.columns.col(c).norm() - 1.0) > 1e-12) s.normalized = false;
  validate(s);
  return s;
}

} // namespace hsics
