#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tfadv/tfa.hpp>
#include <tfadv/waveforms.hpp>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

using namespace tfadv;

namespace {

Vec random_signal(Index n, std::uint64_t seed) {
  RngState rng(seed);
  Vec x(n);
  for (Index i = 0; i < n; ++i) x[i] = rng.normal();
  return x;
}

// Oracle: direct DFT of one hann-windowed frame, same scaling as stft().
CVec frame_dft_oracle(const Vec& padded, const WindowSpec& w, Index frame) {
  const Vec h = w.window();
  CVec out(w.fft_size);
  for (Index k = 0; k < w.fft_size; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (Index n = 0; n < w.length; ++n) {
      const Index q = frame * w.hop + n;
      const double v = (q < padded.size()) ? padded[q] : 0.0;
      const double ph = -2.0 * M_PI * double(k) * double(n) / double(w.fft_size);
      acc += v * h[n] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    out[k] = acc * grid_scale(w);
  }
  return out;
}

}  // namespace

TEST_CASE("window spec validation") {
  WindowSpec ok;  // defaults: hann 128/32/128
  CHECK_NOTHROW(ok.validate());

  WindowSpec bad = ok;
  bad.hop = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.hop = 48;  // does not divide length
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.hop = 128;  // no overlap: reconstruction impossible with hann
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.fft_size = 64;  // smaller than window
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("stft: zero signal gives an all-zero grid") {
  WindowSpec w;
  StftGrid g = stft(Vec::Zero(1024), w);
  CHECK(g.data.rows() == w.fft_size);
  CHECK(g.original_length == 1024);
  CHECK(g.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stft matches the direct windowed-DFT oracle frame by frame") {
  WindowSpec w;
  const Vec x = random_signal(1024, 21);
  StftGrid g = stft(x, w);

  // Rebuild the padded signal the same way stft() does.
  const Index pad = w.length / 2;
  Vec padded = Vec::Zero(1024 + 2 * pad);
  padded.segment(pad, 1024) = x;

  for (Index m : {Index(0), Index(5), g.data.cols() - 1}) {
    CVec oracle = frame_dft_oracle(padded, w, m);
    CHECK((g.data.col(m) - oracle).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("stft: cosine at an integer bin peaks at that bin in every frame") {
  WindowSpec w;
  const Index k0 = 24;
  Vec x(1024);
  for (Index n = 0; n < 1024; ++n)
    x[n] = std::cos(2.0 * M_PI * double(k0) * double(n) / double(w.fft_size));
  StftGrid g = stft(x, w);
  // Interior frames fully overlap the signal; boundary frames see the pad.
  const Index first = w.length / w.hop, last = g.data.cols() - first - 1;
  for (Index m = first; m <= last; ++m) {
    Index arg = 0;
    g.data.col(m).cwiseAbs().maxCoeff(&arg);
    // Conjugate mirror has the same magnitude; accept either peak.
    const bool at_k0 = (arg == k0) || (arg == w.fft_size - k0);
    CHECK(at_k0);
  }
}

TEST_CASE("stft: conjugate symmetry of every frame for real input") {
  WindowSpec w;
  const Vec x = random_signal(1024, 33);
  StftGrid g = stft(x, w);
  for (Index m = 0; m < g.data.cols(); ++m) {
    for (Index k = 1; k < w.fft_size; ++k) {
      const std::complex<double> a = g.data(k, m);
      const std::complex<double> b = std::conj(g.data(w.fft_size - k, m));
      CHECK(std::abs(a - b) < 1e-9);
    }
    CHECK(std::abs(g.data(0, m).imag()) < 1e-12);
  }
}

TEST_CASE("istft: round trip relative error < 1e-6 (oracle property)") {
  WindowSpec w;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const Vec x = random_signal(1024, seed);
    const CVec back = istft(stft(x, w));
    REQUIRE(back.size() == 1024);
    double num = 0.0;
    for (Index i = 0; i < 1024; ++i)
      num += std::norm(back[i] - std::complex<double>(x[i], 0.0));
    const double rel = std::sqrt(num) / x.norm();
    CHECK(rel < 1e-6);
  }
}

TEST_CASE("istft: all-zero grid gives an all-zero signal") {
  WindowSpec w;
  StftGrid g = stft(Vec::Zero(512), w);
  const CVec y = istft(g);
  CHECK(y.size() == 512);
  for (Index i = 0; i < y.size(); ++i) CHECK(std::abs(y[i]) == 0.0);
}

TEST_CASE("linearity: istft(grid(x) + grid(y)) = x + y") {
  WindowSpec w;
  const Vec x = random_signal(1024, 8), y = random_signal(1024, 9);
  StftGrid gx = stft(x, w), gy = stft(y, w);
  StftGrid gsum = gx;
  gsum.data += gy.data;
  const CVec back = istft(gsum);
  for (Index i = 0; i < 1024; ++i)
    CHECK(std::abs(back[i] - std::complex<double>(x[i] + y[i], 0.0)) < 1e-9);
}

TEST_CASE("parseval-style energy identity under the window normalization") {
  WindowSpec w;
  const Vec x = random_signal(1024, 44);
  StftGrid g = stft(x, w);

  const Vec h = w.window();
  const double s = grid_scale(w);
  const Index pad = w.length / 2;
  Vec padded = Vec::Zero(1024 + 2 * pad);
  padded.segment(pad, 1024) = x;

  // Time-domain side: sum over frames of ||windowed frame||^2, scaled by
  // fft_size * s^2 to match the grid's normalization.
  double time_side = 0.0;
  for (Index m = 0; m < g.data.cols(); ++m) {
    for (Index n = 0; n < w.length; ++n) {
      const Index q = m * w.hop + n;
      const double v = (q < padded.size()) ? padded[q] : 0.0;
      time_side += v * v * h[n] * h[n];
    }
  }
  time_side *= double(w.fft_size) * s * s;

  const double freq_side = g.data.cwiseAbs2().sum();
  CHECK(freq_side == doctest::Approx(time_side).epsilon(1e-6));
}

TEST_CASE("split/join: lossless round trip, zero imag for real grids") {
  WindowSpec w;
  const Vec x = random_signal(1024, 55);
  StftGrid g = stft(x, w);
  auto [re, im] = split_complex(g);
  StftGrid g2 = join_complex(re, im, w, g.original_length);
  CHECK(g.data == g2.data);  // bitwise

  // Magnitude from planes equals elementwise sqrt(re^2 + im^2).
  for (Index m = 0; m < g.data.cols(); ++m)
    for (Index k = 0; k < g.data.rows(); ++k) {
      const double mag = std::sqrt(re(k, m) * re(k, m) + im(k, m) * im(k, m));
      CHECK(mag == doctest::Approx(std::abs(g.data(k, m))).epsilon(1e-12));
    }

  // Purely real grid -> imag plane all zero.
  StftGrid gr = g;
  gr.data = g.data.real().cast<std::complex<double>>();
  auto [re2, im2] = split_complex(gr);
  CHECK(im2.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(join_complex(re, Mat::Zero(2, 2), w, g.original_length),
                  ConfigError);
}

TEST_CASE("grid io: TFGRD001 round trip and corrupt magic") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "tfadv_grid_io";
  fs::create_directories(dir);

  WindowSpec w;
  const Vec x = random_signal(1024, 66);
  StftGrid g = stft(x, w);
  const fs::path p = dir / "grid.tfg";
  write_grid(p, g);
  StftGrid back = read_grid(p);
  CHECK(back.data.rows() == g.data.rows());
  CHECK(back.data.cols() == g.data.cols());
  CHECK(back.original_length == g.original_length);
  CHECK(back.window.length == w.length);
  for (Index m = 0; m < g.data.cols(); ++m)
    for (Index k = 0; k < g.data.rows(); ++k) {
      CHECK(back.data(k, m).real() == double(float(g.data(k, m).real())));
      CHECK(back.data(k, m).imag() == double(float(g.data(k, m).imag())));
    }

  std::ofstream bad(dir / "bad.tfg", std::ios::binary);
  bad.write("XXXXXXXX", 8);
  bad.close();
  CHECK_THROWS_AS(read_grid(dir / "bad.tfg"), FormatError);

  fs::remove_all(dir);
}
