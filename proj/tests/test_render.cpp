#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tfadv/render.hpp>

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace tfadv;

namespace {

Mat random_plane(Index rows, Index cols, std::uint64_t seed, double scale) {
  RngState rng(seed);
  Mat m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
  return m;
}

// Scalar oracle: recompute one output pixel of the full pipeline
// (magnitude -> min-max normalize -> piecewise-linear LUT -> bilinear
// resize) without any shared code paths beyond the LUT table itself.
double pixel_oracle(const Mat& re, const Mat& im, const Mat& lut, Index out_h,
                    Index out_w, Index y, Index x, int chan) {
  const Index rows = re.rows(), cols = re.cols();
  double mn = std::numeric_limits<double>::infinity();
  double mx = -std::numeric_limits<double>::infinity();
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) {
      const double m = std::hypot(re(r, c), im(r, c));
      mn = std::min(mn, m);
      mx = std::max(mx, m);
    }
  auto color_at = [&](Index r, Index c) {
    const double m = std::hypot(re(r, c), im(r, c));
    const double u = (m - mn) / (mx - mn);
    double t = u * double(lut.rows() - 1);
    Index i = static_cast<Index>(std::floor(t));
    i = std::max<Index>(0, std::min<Index>(i, lut.rows() - 2));
    const double f = t - double(i);
    return lut(i, chan) * (1.0 - f) + lut(i + 1, chan) * f;
  };
  const double sy = double(y) * double(rows - 1) / double(out_h - 1);
  const double sx = double(x) * double(cols - 1) / double(out_w - 1);
  const Index y0 = std::min<Index>(static_cast<Index>(std::floor(sy)), rows - 1);
  const Index x0 = std::min<Index>(static_cast<Index>(std::floor(sx)), cols - 1);
  const double fy = sy - double(y0), fx = sx - double(x0);
  const Index y1 = std::min<Index>(y0 + 1, rows - 1);
  const Index x1 = std::min<Index>(x0 + 1, cols - 1);
  return color_at(y0, x0) * (1 - fy) * (1 - fx) +
         color_at(y1, x0) * fy * (1 - fx) +
         color_at(y0, x1) * (1 - fy) * fx + color_at(y1, x1) * fy * fx;
}

}  // namespace

TEST_CASE("parula lut: 64 valid entries, csv round trip is exact") {
  const ColorLut lut = ColorLut::parula();
  REQUIRE(lut.table.rows() == 64);
  REQUIRE(lut.table.cols() == 3);
  CHECK(lut.table.allFinite());
  CHECK(lut.table.minCoeff() >= 0.0);
  CHECK(lut.table.maxCoeff() <= 1.0);

  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / "tfadv_parula.csv";
  lut.write_csv(p);
  const ColorLut back = ColorLut::from_csv(p);
  CHECK(back.table == lut.table);  // bitwise
  fs::remove(p);

  // The shipped asset matches the embedded table exactly.
  const ColorLut shipped =
      ColorLut::from_csv(fs::path(TFADV_ASSETS_DIR) / "parula.csv");
  CHECK(shipped.table == lut.table);
}

TEST_CASE("render_image matches the per-pixel scalar oracle") {
  const ColorLut lut = ColorLut::parula();
  const Mat re = random_plane(24, 11, 3, 0.7);
  const Mat im = random_plane(24, 11, 4, 0.7);
  const TFImage img = render_image(re, im, lut, 32, 32);
  CHECK(img.height() == 32);
  CHECK(img.width() == 32);
  CHECK(img.src_bins == 24);
  CHECK(img.src_frames == 11);

  RngState pick(99);
  for (int rep = 0; rep < 50; ++rep) {
    const Index y = pick.uniform_int(0, 31), x = pick.uniform_int(0, 31);
    const int c = pick.uniform_int(0, 2);
    const double want = pixel_oracle(re, im, lut.table, 32, 32, y, x, c);
    CHECK(img.chan[c](y, x) == doctest::Approx(want).epsilon(1e-6));
  }

  // Range invariant.
  for (int c = 0; c < 3; ++c) {
    CHECK(img.chan[c].minCoeff() >= 0.0);
    CHECK(img.chan[c].maxCoeff() <= 1.0);
  }
}

TEST_CASE("render_image: constant magnitude field is rejected") {
  const ColorLut lut = ColorLut::parula();
  const Mat re = Mat::Constant(8, 8, 2.5);
  const Mat im = Mat::Zero(8, 8);
  CHECK_THROWS_AS(render_image(re, im, lut, 16, 16), NumericError);
}

TEST_CASE("render_image: the max-magnitude cell maps to the last lut row") {
  const ColorLut lut = ColorLut::parula();
  Mat re = random_plane(8, 8, 7, 0.3);
  Mat im = random_plane(8, 8, 8, 0.3);
  re(3, 4) = 9.0;  // strict global max
  im(3, 4) = 0.0;
  // out size == source size makes the resize an exact copy.
  const TFImage img = render_image(re, im, lut, 8, 8);
  for (int c = 0; c < 3; ++c) CHECK(img.chan[c](3, 4) == lut.table(63, c));
  CHECK(img.norm.max_mag == 9.0);
}

TEST_CASE("render scale covariance: s * planes gives the same image") {
  const ColorLut lut = ColorLut::parula();
  const Mat re = random_plane(16, 9, 12, 0.5);
  const Mat im = random_plane(16, 9, 13, 0.5);
  const TFImage a = render_image(re, im, lut, 24, 24);
  const TFImage b = render_image(Mat(3.0 * re), Mat(3.0 * im), lut, 24, 24);
  for (int c = 0; c < 3; ++c)
    CHECK((a.chan[c] - b.chan[c]).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(b.norm.max_mag == doctest::Approx(3.0 * a.norm.max_mag));
}

TEST_CASE("render_backward: zero upstream gradient gives zero plane grads") {
  const ColorLut lut = ColorLut::parula();
  const Mat re = random_plane(16, 9, 21, 0.5);
  const Mat im = random_plane(16, 9, 22, 0.5);
  std::array<Mat, 3> up{Mat::Zero(24, 24), Mat::Zero(24, 24),
                        Mat::Zero(24, 24)};
  auto [dre, dim] = render_backward(re, im, lut, up, 24, 24);
  CHECK(dre.cwiseAbs().maxCoeff() == 0.0);
  CHECK(dim.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("render_backward: zero-magnitude cell gets zero gradient") {
  const ColorLut lut = ColorLut::parula();
  Mat re = random_plane(8, 8, 31, 0.5);
  Mat im = random_plane(8, 8, 32, 0.5);
  re(2, 2) = 0.0;
  im(2, 2) = 0.0;
  std::array<Mat, 3> up{Mat::Ones(16, 16), Mat::Ones(16, 16),
                        Mat::Ones(16, 16)};
  auto [dre, dim] = render_backward(re, im, lut, up, 16, 16);
  CHECK(dre(2, 2) == 0.0);
  CHECK(dim(2, 2) == 0.0);
}

TEST_CASE("render_backward matches central finite differences") {
  const ColorLut lut = ColorLut::parula();
  const Index rows = 12, cols = 7, H = 20, W = 20;
  const Mat re = random_plane(rows, cols, 41, 0.6);
  const Mat im = random_plane(rows, cols, 42, 0.6);

  // Linear functional of the pixels with fixed random weights; its exact
  // pixel gradient is the weights themselves.
  std::array<Mat, 3> weights;
  for (int c = 0; c < 3; ++c) weights[c] = random_plane(H, W, 50 + c, 1.0);

  auto loss_of = [&](const Mat& r, const Mat& i) {
    const TFImage img = render_image(r, i, lut, H, W);
    double acc = 0.0;
    for (int c = 0; c < 3; ++c)
      acc += (img.chan[c].array() * weights[c].array()).sum();
    return acc;
  };

  auto [dre, dim] = render_backward(re, im, lut, weights, H, W);

  // Locate min/max magnitude cells: their normalization gradient is
  // intentionally stopped, so finite differences disagree there.
  Mat mag(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) mag(r, c) = std::hypot(re(r, c), im(r, c));
  Index rmin, cmin, rmax, cmax;
  mag.minCoeff(&rmin, &cmin);
  mag.maxCoeff(&rmax, &cmax);
  const double mn = mag(rmin, cmin), mx = mag(rmax, cmax);

  const double step = 1e-4;
  RngState pick(77);
  int checked = 0;
  while (checked < 20) {
    const Index r = pick.uniform_int(0, int(rows) - 1);
    const Index c = pick.uniform_int(0, int(cols) - 1);
    if ((r == rmin && c == cmin) || (r == rmax && c == cmax)) continue;
    // Keep clear of lut knots: nudging rule from the gradient-check spec.
    const double u = (mag(r, c) - mn) / (mx - mn);
    const double t = u * 63.0;
    if (std::abs(t - std::round(t)) < 1e-2) continue;

    const bool real_part = pick.uniform() < 0.5;
    Mat r2 = re, i2 = im;
    double& cell = real_part ? r2(r, c) : i2(r, c);
    cell += step;
    const double up_val = loss_of(r2, i2);
    cell -= 2 * step;
    const double dn_val = loss_of(r2, i2);
    const double fd = (up_val - dn_val) / (2 * step);
    const double an = real_part ? dre(r, c) : dim(r, c);
    if (std::abs(fd) < 1e-12 && std::abs(an) < 1e-12) {
      ++checked;
      continue;
    }
    CHECK(std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)) < 1e-4);
    ++checked;
  }
}

TEST_CASE("db-scale mode: matches a scalar oracle and finite differences") {
  const ColorLut lut = ColorLut::parula();
  const Mat re = random_plane(10, 6, 81, 0.5);
  const Mat im = random_plane(10, 6, 82, 0.5);
  RenderOptions opts;
  opts.db_scale = true;

  // Scalar oracle on the pre-resize path: dB magnitude, min-max, LUT.
  const TFImage img = render_image(re, im, lut, 10, 6, opts);
  Mat db(10, 6);
  for (Index j = 0; j < 6; ++j)
    for (Index i = 0; i < 10; ++i)
      db(i, j) = 20.0 * std::log10(
                     std::max(std::hypot(re(i, j), im(i, j)), opts.db_floor));
  const double mn = db.minCoeff(), mx = db.maxCoeff();
  for (int rep = 0; rep < 10; ++rep) {
    RngState pick(90 + rep);
    const Index i = pick.uniform_int(0, 9), j = pick.uniform_int(0, 5);
    const int c = pick.uniform_int(0, 2);
    auto col = lut.color((db(i, j) - mn) / (mx - mn));
    CHECK(img.chan[c](i, j) == doctest::Approx(col[c]).epsilon(1e-9));
  }

  // Finite differences through the dB path.
  std::array<Mat, 3> weights;
  for (int c = 0; c < 3; ++c) weights[c] = random_plane(10, 6, 95 + c, 1.0);
  auto loss_of = [&](const Mat& r, const Mat& i2) {
    const TFImage im2 = render_image(r, i2, lut, 10, 6, opts);
    double acc = 0.0;
    for (int c = 0; c < 3; ++c)
      acc += (im2.chan[c].array() * weights[c].array()).sum();
    return acc;
  };
  auto [dre, dim] = render_backward(re, im, lut, weights, 10, 6, opts);
  Index rmin, cmin, rmax, cmax;
  db.minCoeff(&rmin, &cmin);
  db.maxCoeff(&rmax, &cmax);
  const double step = 1e-6;
  RngState pick(99);
  int checked = 0;
  while (checked < 10) {
    const Index r = pick.uniform_int(0, 9), c = pick.uniform_int(0, 5);
    if ((r == rmin && c == cmin) || (r == rmax && c == cmax)) continue;
    const double t = (db(r, c) - mn) / (mx - mn) * 63.0;
    if (std::abs(t - std::round(t)) < 1e-2) continue;
    Mat r2 = re;
    r2(r, c) += step;
    const double up = loss_of(r2, im);
    r2(r, c) -= 2 * step;
    const double dn = loss_of(r2, im);
    const double fd = (up - dn) / (2 * step);
    const double an = dre(r, c);
    if (std::max(std::abs(fd), std::abs(an)) < 1e-12) {
      ++checked;
      continue;
    }
    CHECK(std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)) < 1e-4);
    ++checked;
  }
}

TEST_CASE("ppm export: golden bytes with round-half-up quantization") {
  std::array<Mat, 3> px;
  for (int c = 0; c < 3; ++c) px[c] = Mat::Zero(2, 2);
  // pixel (0,0) = (0, 0.5, 1), pixel (0,1) = (0.25, 0.75, 0.002)
  px[1](0, 0) = 0.5;
  px[2](0, 0) = 1.0;
  px[0](0, 1) = 0.25;
  px[1](0, 1) = 0.75;
  px[2](0, 1) = 0.002;

  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / "tfadv_test.ppm";
  write_ppm(p, px);
  std::ifstream f(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), {});
  const std::string header = "P6\n2 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 12);
  CHECK(bytes.substr(0, header.size()) == header);
  const auto* d = reinterpret_cast<const unsigned char*>(bytes.data() +
                                                         header.size());
  // (0,0): 0 -> 0, 0.5 -> 128 (127.5 rounds up), 1.0 -> 255
  CHECK(d[0] == 0);
  CHECK(d[1] == 128);
  CHECK(d[2] == 255);
  // (0,1): 0.25*255+0.5 = 64.25 -> 64; 0.75*255+0.5 = 191.75 -> 191;
  // 0.002*255+0.5 = 1.01 -> 1
  CHECK(d[3] == 64);
  CHECK(d[4] == 191);
  CHECK(d[5] == 1);
  fs::remove(p);
}

TEST_CASE("png export: signature and nonempty payload") {
  std::array<Mat, 3> px;
  for (int c = 0; c < 3; ++c) px[c] = Mat::Constant(4, 5, 0.25 * (c + 1));
  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / "tfadv_test.png";
  write_png(p, px);
  std::ifstream f(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), {});
  REQUIRE(bytes.size() > 8);
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  CHECK(std::memcmp(bytes.data(), sig, 8) == 0);
  fs::remove(p);
}
