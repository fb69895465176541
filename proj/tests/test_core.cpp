#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "somgan/core.hpp"
#include "somgan/error.hpp"
#include "somgan/rng.hpp"

using namespace somgan;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected somgan::Error");
  return ErrorKind::Config;
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("label codes") {
  CHECK(Label::parse("0") == Label::inlier(0));
  CHECK(Label::parse("outlier").is_outlier());
  CHECK(Label::parse("unlabeled").is_unlabeled());
  CHECK(Label::inlier(3).code() == "3");
  CHECK(kind_of([] { Label::parse("cat"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { Label::parse("-1"); }) == ErrorKind::Parse);
}

TEST_CASE("three-row csv parses labels in order") {
  const auto d = parse_csv("b0,b1,b2,b3,label\n1,2,3,4,0\n0.5,0.5,0.5,0.5,outlier\n1,1,1,1,unlabeled\n");
  REQUIRE(d.size() == 3);
  CHECK(d.band_count() == 4);
  CHECK(d[0].label == Label::inlier(0));
  CHECK(d[1].label.is_outlier());
  CHECK(d[2].label.is_unlabeled());
  CHECK(d[0].spectrum[3] == 4.0);
}

TEST_CASE("degenerate csv input") {
  CHECK(kind_of([] { parse_csv(""); }) == ErrorKind::Parse);
  CHECK(kind_of([] { parse_csv("b0,b1,b2,b3,label\n"); }) == ErrorKind::Parse);
  try {
    parse_csv("b0,b1,b2,b3,label\n1,2,3,4,0\n1,2,3,1\n");
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  CHECK(kind_of([] { parse_csv("b0,b1,label\n1,x,0\n"); }) == ErrorKind::Parse);
}

TEST_CASE("inlier class must be below K") {
  Dataset d(2, 2);
  CHECK_THROWS_AS(d.add({1.0, 2.0}, Label::inlier(2)), Error);
  CHECK_THROWS_AS(d.add({1.0}, Label::inlier(0)), Error);
  CHECK_THROWS_AS(d.add({1.0, NAN}, Label::inlier(0)), Error);
  d.add({1.0, 2.0}, Label::inlier(1));
  CHECK(d.size() == 1);
}

TEST_CASE("csv round trip is exact") {
  RandomStream rng(3);
  Dataset d(5, 3);
  for (int i = 0; i < 40; ++i) {
    Spectrum s = testutil::random_vector(5, rng, 0.0, 3.0);
    const int r = static_cast<int>(rng.index(5));
    d.add(s, r < 3 ? Label::inlier(r) : (r == 3 ? Label::outlier() : Label::unlabeled()));
  }
  const auto path = std::filesystem::temp_directory_path() / "somgan_core_roundtrip.csv";
  save_csv(d, path);
  const auto back = load_csv(path, {3, 0});
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].label == d[i].label);
    CHECK(back[i].spectrum == d[i].spectrum);
  }
  std::filesystem::remove(path);
}

TEST_CASE("standardizer examples") {
  Dataset two(2, 2);
  two.add({0.0, 0.0}, Label::inlier(0));
  two.add({2.0, 2.0}, Label::inlier(1));
  const auto z = fit_standardizer(two);
  CHECK(z.mean() == std::vector<double>{1.0, 1.0});
  CHECK(z.stddev() == std::vector<double>{1.0, 1.0});

  Dataset one(3, 2);
  one.add({1.0, 2.0, 3.0}, Label::inlier(0));
  const auto z1 = fit_standardizer(one);
  CHECK(z1.mean() == std::vector<double>{1.0, 2.0, 3.0});
  for (double s : z1.stddev()) CHECK(s == Standardizer::kStdFloor);

  const auto zero = z.apply(std::vector<double>{1.0, 1.0});
  CHECK(zero == std::vector<double>{0.0, 0.0});
  const auto id = Standardizer::identity(2);
  CHECK(id.apply(std::vector<double>{3.5, -1.0}) == std::vector<double>{3.5, -1.0});

  CHECK(kind_of([&] { fit_standardizer(two, [](const Label& l) { return l.is_outlier(); }); }) ==
        ErrorKind::Precondition);
  CHECK(kind_of([&] { z.apply(std::vector<double>{1.0}); }) == ErrorKind::Dimension);
}

TEST_CASE("standardizer properties on random data") {
  RandomStream rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.index(50), b = 1 + rng.index(8);
    Matrix x = testutil::random_matrix(n, b, rng, rng.uniform(0.1, 10.0));
    for (std::size_t i = 0; i < n; ++i) x(i, 0) = 7.0;  // constant band
    const auto z = Standardizer::fit(x);
    CHECK(z.stddev()[0] == Standardizer::kStdFloor);
    const Matrix y = z.apply(x);
    for (std::size_t c = 0; c < b; ++c) {
      double m = 0.0, v = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += y(i, c);
      m /= n;
      for (std::size_t i = 0; i < n; ++i) v += (y(i, c) - m) * (y(i, c) - m);
      v /= n;
      CHECK(std::abs(m) < 1e-8);
      if (c > 0) CHECK(std::abs(std::sqrt(v) - 1.0) < 1e-6);
    }
    const Matrix back = z.invert(y);
    for (std::size_t k = 0; k < x.size(); ++k)
      CHECK(std::abs(back.values()[k] - x.values()[k]) <= 1e-10 * std::max(1.0, std::abs(x.values()[k])));
  }
}

TEST_CASE("seed derivation is deterministic and tag sensitive") {
  CHECK(derive_seed(1, "som") == derive_seed(1, "som"));
  CHECK(derive_seed(1, "som") != derive_seed(1, "init"));
  CHECK(derive_seed(1, std::uint64_t{0}) != derive_seed(2, std::uint64_t{0}));
  RandomStream a(9), b(9);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
}

TEST_CASE("raster loader accepts headed and headerless grids") {
  const auto dir = std::filesystem::temp_directory_path();
  {
    std::ofstream(dir / "somgan_raster_a.csv") << "b0,b1\n1,2\n3,4\n";
    std::ofstream(dir / "somgan_raster_b.csv") << "1,2\n3,4\n";
  }
  const Matrix a = load_spectra_csv(dir / "somgan_raster_a.csv");
  const Matrix b = load_spectra_csv(dir / "somgan_raster_b.csv");
  CHECK(a == b);
  CHECK(a.rows() == 2);
  CHECK(a(1, 0) == 3.0);
}

}
