#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "somgan/matrix.hpp"

namespace somgan {

/// Band-indexed reflectance values.
using Spectrum = std::vector<double>;

class Label {
 public:
  enum class Kind { Inlier, Outlier, Unlabeled };

  static Label inlier(int k);
  static Label outlier() noexcept { return Label(Kind::Outlier, -1); }
  static Label unlabeled() noexcept { return Label(Kind::Unlabeled, -1); }

  /// Parses "0".."K-1", "outlier", "unlabeled". Throws Error(Parse).
  static Label parse(std::string_view code);

  Kind kind() const noexcept { return kind_; }
  bool is_inlier() const noexcept { return kind_ == Kind::Inlier; }
  bool is_outlier() const noexcept { return kind_ == Kind::Outlier; }
  bool is_unlabeled() const noexcept { return kind_ == Kind::Unlabeled; }
  /// Only meaningful for inliers.
  int class_index() const noexcept { return class_; }

  std::string code() const;

  friend bool operator==(const Label&, const Label&) = default;

 private:
  Label(Kind kind, int k) noexcept : kind_(kind), class_(k) {}
  Kind kind_;
  int class_;
};

struct Sample {
  Spectrum spectrum;
  Label label;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t band_count, std::size_t class_count);

  /// Validates band length, finiteness and class range.
  void add(Spectrum spectrum, Label label);

  std::size_t band_count() const noexcept { return band_count_; }
  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  const Sample& operator[](std::size_t i) const noexcept { return samples_[i]; }

  Dataset filtered(const std::function<bool(const Label&)>& keep) const;
  Matrix spectra() const;
  std::vector<Label> labels() const;

 private:
  std::size_t band_count_ = 0;
  std::size_t class_count_ = 0;
  std::vector<Sample> samples_;
};

struct CsvSchema {
  /// 0 means infer as max(2, largest inlier index + 1).
  std::size_t class_count = 0;
  /// 0 means take it from the header.
  std::size_t band_count = 0;
};

/// Header `b0,...,b{B-1},label`, one sample per row. Errors name the
/// 1-based data row.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
Dataset parse_csv(std::string_view text, const CsvSchema& schema = {});
void save_csv(const Dataset& data, const std::filesystem::path& path);
std::string format_csv(const Dataset& data);

/// Headerless or headed numeric grid (e.g. raster pixels), one spectrum per row.
Matrix load_spectra_csv(const std::filesystem::path& path);

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

using LabelFilter = std::function<bool(const Label&)>;
inline bool any_label(const Label&) { return true; }

/// Per-band z-score with population statistics.
class Standardizer {
 public:
  static constexpr double kStdFloor = 1e-8;

  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> stddev);

  static Standardizer identity(std::size_t bands);
  /// Throws Error(Precondition) when the filter selects nothing.
  static Standardizer fit(const Dataset& data, const LabelFilter& subset = any_label);
  static Standardizer fit(const Matrix& rows);

  std::size_t band_count() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stddev() const noexcept { return std_; }

  Spectrum apply(std::span<const double> s) const;
  Spectrum invert(std::span<const double> z) const;
  Matrix apply(const Matrix& rows) const;
  Matrix invert(const Matrix& rows) const;

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

/// Free-function spellings of Standardizer::fit / apply.
inline Standardizer fit_standardizer(const Dataset& data, const LabelFilter& subset = any_label) {
  return Standardizer::fit(data, subset);
}
inline Spectrum standardize(std::span<const double> s, const Standardizer& z) { return z.apply(s); }

}  // namespace somgan
