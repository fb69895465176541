#include "somgan/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "somgan/error.hpp"
#include "somgan/simd.hpp"

namespace somgan {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Precondition: return "precondition";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Matrix

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require_dims(rows[r].size() == m.cols(), "Matrix::from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::slice_rows(std::size_t first, std::size_t count) const {
  require_dims(first + count <= rows_, "Matrix::slice_rows out of range");
  Matrix out(count, cols_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_,
              out.data_.begin());
  return out;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require_dims(indices[i] < rows_, "Matrix::gather_rows index out of range");
    const auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_dims(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  if (a.rows() && b.cols() && a.cols())
    simd::kernels().gemm_acc(a.rows(), a.cols(), b.cols(), a.data(), b.data(), c.data());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) { return matmul(a, b.transposed()); }
Matrix matmul_tn(const Matrix& a, const Matrix& b) { return matmul(a.transposed(), b); }

Matrix hconcat(const Matrix& a, const Matrix& b) {
  require_dims(a.rows() == b.rows(), "hconcat: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Matrix vconcat(const Matrix& a, const Matrix& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  require_dims(a.cols() == b.cols(), "vconcat: column counts differ");
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Label / Dataset

Label Label::inlier(int k) {
  if (k < 0) fail(ErrorKind::Precondition, "inlier class index must be non-negative");
  return Label(Kind::Inlier, k);
}

Label Label::parse(std::string_view code) {
  while (!code.empty() && (code.back() == ' ' || code.back() == '\r')) code.remove_suffix(1);
  while (!code.empty() && code.front() == ' ') code.remove_prefix(1);
  if (code == "outlier") return outlier();
  if (code == "unlabeled") return unlabeled();
  int k = 0;
  const auto [ptr, ec] = std::from_chars(code.data(), code.data() + code.size(), k);
  if (ec != std::errc() || ptr != code.data() + code.size() || k < 0 || code.empty())
    fail(ErrorKind::Parse, "invalid label code '" + std::string(code) + "'");
  return inlier(k);
}

std::string Label::code() const {
  switch (kind_) {
    case Kind::Inlier: return std::to_string(class_);
    case Kind::Outlier: return "outlier";
    case Kind::Unlabeled: return "unlabeled";
  }
  return {};
}

Dataset::Dataset(std::size_t band_count, std::size_t class_count)
    : band_count_(band_count), class_count_(class_count) {
  if (band_count == 0) fail(ErrorKind::Precondition, "band count must be positive");
  if (class_count < 2) fail(ErrorKind::Precondition, "class count must be at least 2");
}

void Dataset::add(Spectrum spectrum, Label label) {
  require_dims(spectrum.size() == band_count_,
               "spectrum has " + std::to_string(spectrum.size()) + " bands, dataset expects " +
                   std::to_string(band_count_));
  for (double v : spectrum)
    if (!std::isfinite(v)) fail(ErrorKind::Numerical, "non-finite reflectance value");
  if (label.is_inlier() && static_cast<std::size_t>(label.class_index()) >= class_count_)
    fail(ErrorKind::Precondition, "inlier class " + std::to_string(label.class_index()) +
                                      " outside [0, " + std::to_string(class_count_) + ")");
  samples_.push_back({std::move(spectrum), label});
}

Dataset Dataset::filtered(const std::function<bool(const Label&)>& keep) const {
  Dataset out(band_count_, class_count_);
  for (const auto& s : samples_)
    if (keep(s.label)) out.samples_.push_back(s);
  return out;
}

Matrix Dataset::spectra() const {
  Matrix m(samples_.size(), band_count_);
  for (std::size_t i = 0; i < samples_.size(); ++i)
    std::copy(samples_[i].spectrum.begin(), samples_[i].spectrum.end(), m.row(i).begin());
  return m;
}

std::vector<Label> Dataset::labels() const {
  std::vector<Label> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.label);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

bool parse_number(std::string_view cell, double& out) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return false;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    auto line = trim(text.substr(start, pos - start));
    if (!line.empty()) lines.push_back(line);
    start = pos + 1;
  }
  return lines;
}

}  // namespace

Dataset parse_csv(std::string_view text, const CsvSchema& schema) {
  const auto lines = split_lines(text);
  if (lines.empty()) fail(ErrorKind::Parse, "CSV is empty: expected header row");
  const auto header = split_cells(lines.front());
  if (header.size() < 2 || trim(header.back()) != "label")
    fail(ErrorKind::Parse, "CSV header must be b0,...,b{B-1},label");
  const std::size_t bands = schema.band_count ? schema.band_count : header.size() - 1;
  if (header.size() - 1 != bands)
    fail(ErrorKind::Dimension, "CSV header declares " + std::to_string(header.size() - 1) +
                                   " bands, schema expects " + std::to_string(bands));
  if (lines.size() == 1) fail(ErrorKind::Parse, "CSV has a header but no data rows");

  std::vector<Sample> rows;
  rows.reserve(lines.size() - 1);
  int max_class = -1;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_cells(lines[li]);
    const std::string where = "row " + std::to_string(li);
    if (cells.size() != bands + 1)
      fail(ErrorKind::Dimension, where + ": expected " + std::to_string(bands) +
                                     " band values plus label, found " +
                                     std::to_string(cells.size()) + " cells");
    Spectrum s(bands);
    for (std::size_t b = 0; b < bands; ++b) {
      if (!parse_number(cells[b], s[b]) || !std::isfinite(s[b]))
        fail(ErrorKind::Parse, where + ": malformed number in column " + std::to_string(b));
    }
    Label label = Label::unlabeled();
    try {
      label = Label::parse(cells.back());
    } catch (const Error& e) {
      fail(ErrorKind::Parse, where + ": " + e.what());
    }
    if (label.is_inlier()) max_class = std::max(max_class, label.class_index());
    rows.push_back({std::move(s), label});
  }
  const std::size_t classes =
      schema.class_count ? schema.class_count : std::max<std::size_t>(2, max_class + 1);
  Dataset data(bands, classes);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      data.add(std::move(rows[i].spectrum), rows[i].label);
    } catch (const Error& e) {
      fail(e.kind(), "row " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  try {
    return parse_csv(read_file(path), schema);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_csv(const Dataset& data) {
  std::string out;
  for (std::size_t b = 0; b < data.band_count(); ++b) out += "b" + std::to_string(b) + ",";
  out += "label\n";
  for (const auto& s : data.samples()) {
    for (double v : s.spectrum) {
      out += format_double(v);
      out += ',';
    }
    out += s.label.code();
    out += '\n';
  }
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << format_csv(data);
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

Matrix load_spectra_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto lines = split_lines(text);
  std::vector<std::vector<double>> rows;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto cells = split_cells(lines[li]);
    std::vector<double> row;
    bool numeric = true;
    for (auto c : cells) {
      double v = 0.0;
      if (!parse_number(c, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (li == 0) continue;  // header
      fail(ErrorKind::Parse, path.string() + ": row " + std::to_string(li) + " is not numeric");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::Dimension, path.string() + ": row " + std::to_string(li) +
                                     " has " + std::to_string(row.size()) + " values");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::Parse, path.string() + ": no spectra");
  return Matrix::from_rows(rows);
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), std_(std::move(stddev)) {
  require_dims(mean_.size() == std_.size(), "Standardizer: mean/std length mismatch");
  for (double& s : std_) s = std::max(s, kStdFloor);
}

Standardizer Standardizer::identity(std::size_t bands) {
  return Standardizer(std::vector<double>(bands, 0.0), std::vector<double>(bands, 1.0));
}

Standardizer Standardizer::fit(const Matrix& rows) {
  if (rows.rows() == 0) fail(ErrorKind::Precondition, "cannot fit standardizer on empty subset");
  const std::size_t n = rows.rows();
  const std::size_t bands = rows.cols();
  std::vector<double> mean(bands, 0.0);
  std::vector<double> var(bands, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < bands; ++b) mean[b] += rows(i, b);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < bands; ++b) {
      const double d = rows(i, b) - mean[b];
      var[b] += d * d;
    }
  for (double& v : var) v = std::sqrt(v / static_cast<double>(n));
  return Standardizer(std::move(mean), std::move(var));
}

Standardizer Standardizer::fit(const Dataset& data, const LabelFilter& subset) {
  return fit(data.filtered(subset).spectra());
}

Spectrum Standardizer::apply(std::span<const double> s) const {
  require_dims(s.size() == mean_.size(), "standardize: band count mismatch");
  Spectrum out(s.size());
  for (std::size_t b = 0; b < s.size(); ++b) out[b] = (s[b] - mean_[b]) / std_[b];
  return out;
}

Spectrum Standardizer::invert(std::span<const double> z) const {
  require_dims(z.size() == mean_.size(), "unstandardize: band count mismatch");
  Spectrum out(z.size());
  for (std::size_t b = 0; b < z.size(); ++b) out[b] = z[b] * std_[b] + mean_[b];
  return out;
}

Matrix Standardizer::apply(const Matrix& rows) const {
  require_dims(rows.cols() == mean_.size(), "standardize: band count mismatch");
  Matrix out(rows.rows(), rows.cols());
  for (std::size_t i = 0; i < rows.rows(); ++i)
    for (std::size_t b = 0; b < rows.cols(); ++b) out(i, b) = (rows(i, b) - mean_[b]) / std_[b];
  return out;
}

Matrix Standardizer::invert(const Matrix& rows) const {
  require_dims(rows.cols() == mean_.size(), "unstandardize: band count mismatch");
  Matrix out(rows.rows(), rows.cols());
  for (std::size_t i = 0; i < rows.rows(); ++i)
    for (std::size_t b = 0; b < rows.cols(); ++b) out(i, b) = rows(i, b) * std_[b] + mean_[b];
  return out;
}

}  // namespace somgan
