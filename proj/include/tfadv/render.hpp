#pragma once

#include <tfadv/common.hpp>

#include <array>
#include <filesystem>
#include <utility>

namespace tfadv {

// Per-image magnitude normalization constants. Recorded so a rendered image
// can be traced back to its grid scale; gradients treat them as constants.
struct NormalizationRecord {
  double min_mag = 0.0;
  double max_mag = 0.0;
};

// Colormap lookup table with piecewise-linear interpolation between rows.
struct ColorLut {
  Mat table;  // n x 3, all entries in [0,1]

  static ColorLut parula();  // embedded 64-entry table
  static ColorLut from_csv(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;
  void validate() const;

  Eigen::Vector3d color(double u) const;  // u clamped to [0,1]
  Eigen::Vector3d slope(double u) const;  // d color / d u on the segment
};

// RGB time-frequency image in [0,1], H x W per channel.
struct TFImage {
  std::array<Mat, 3> chan;
  NormalizationRecord norm;
  Index src_bins = 0;
  Index src_frames = 0;

  Index height() const { return chan[0].rows(); }
  Index width() const { return chan[0].cols(); }
};

// Bilinear resize with endpoints mapped to endpoints. Shared by the image
// pipeline and the input-diversity transform.
Mat resize_matrix(Index src, Index dst);  // dst x src interpolation weights
Mat resize_bilinear(const Mat& src, Index out_h, Index out_w);

// Magnitude scaling ahead of the min-max normalization. Linear is the
// default pipeline; the dB mode maps 20*log10(max(m, floor)).
struct RenderOptions {
  bool db_scale = false;
  double db_floor = 1e-6;
};

// magnitude -> per-image min-max normalize -> LUT -> bilinear resize.
// Throws NumericError when the magnitude field is constant (max == min).
TFImage render_image(const Mat& re, const Mat& im, const ColorLut& lut,
                     Index out_h = 64, Index out_w = 64,
                     const RenderOptions& opts = {});

// Exact vector-Jacobian product of render_image: resize transpose,
// active-segment LUT slope, 1/(max-min) normalization with the min/max
// treated as constants, and d|z|/d(re,im) with zero at |z| = 0 (in dB mode
// also below the floor).
std::pair<Mat, Mat> render_backward(const Mat& re, const Mat& im,
                                    const ColorLut& lut,
                                    const std::array<Mat, 3>& d_pixels,
                                    Index out_h, Index out_w,
                                    const RenderOptions& opts = {});

// Binary P6, 8-bit, round-half-up quantization (the bit-exact contract).
void write_ppm(const std::filesystem::path& path,
               const std::array<Mat, 3>& pixels);
void write_ppm(const std::filesystem::path& path, const TFImage& img);

// 8-bit RGB PNG (zlib-compressed, filter 0).
void write_png(const std::filesystem::path& path,
               const std::array<Mat, 3>& pixels);
void write_png(const std::filesystem::path& path, const TFImage& img);

}  // namespace tfadv
