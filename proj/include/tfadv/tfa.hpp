#pragma once

#include <tfadv/common.hpp>
#include <tfadv/waveforms.hpp>

#include <filesystem>
#include <utility>

namespace tfadv {

// Analysis window. Only the periodic hann kind is supported; the hop must
// divide the length with at least 2x overlap so overlap-add reconstruction
// is exact (hann is zero at its endpoints, so hop == length cannot work).
struct WindowSpec {
  Index length = 128;
  Index hop = 32;
  Index fft_size = 128;

  void validate() const;
  Vec window() const;  // periodic hann, `length` samples

  bool operator==(const WindowSpec&) const = default;
};

// Analysis coefficient normalization (applied on the forward transform,
// undone by the inverse). Rendering min-max normalizes magnitudes, so the
// constant never shows up in images; it fixes the numeric range the plane
// optimizer works in.
double grid_scale(const WindowSpec& w);

// Complex time-frequency grid: fft_size rows (full two-sided spectrum),
// one column per frame.
struct StftGrid {
  CMat data;
  WindowSpec window;
  Index original_length = 0;
};

// Number of analysis frames for a signal of length n, including the
// half-window padding on both sides.
Index num_frames(const WindowSpec& w, Index n);

StftGrid stft(const Vec& x, const WindowSpec& w);
StftGrid stft(const TimeSignal& sig, const WindowSpec& w);

// Overlap-add inverse, normalized by the window-squared sum; returns
// original_length samples. Complex in general: perturbed grids need not be
// conjugate-symmetric.
CVec istft(const StftGrid& grid);

std::pair<Mat, Mat> split_complex(const StftGrid& grid);
StftGrid join_complex(const Mat& re, const Mat& im, const WindowSpec& w,
                      Index original_length);

// TFGRD001 container: header {magic "TFGRD001", bins u32, frames u32,
// win_length u32, hop u32, fft_size u32, original_length u32} followed by
// column-major interleaved (re, im) little-endian f32 pairs.
void write_grid(const std::filesystem::path& path, const StftGrid& grid);
StftGrid read_grid(const std::filesystem::path& path);

}  // namespace tfadv
