#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kedmd/types.hpp"

namespace kedmd::plot {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// RGB raster with a white background and (0, 0) at the top-left.
class Canvas {
 public:
  Canvas(int width, int height);

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] Rgb at(int x, int y) const;

  void set(int x, int y, Rgb c);
  void line(double x0, double y0, double x1, double y1, Rgb c);
  void dot(double x, double y, int radius, Rgb c);
  void cross(double x, double y, int half, Rgb c);
  void rect(int x0, int y0, int x1, int y1, Rgb c);

  /// Writes an 8-bit RGB PNG; throws IoError.
  void save(const std::filesystem::path& path) const;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

/// Maps t in [0, 1] onto a blue-to-red ramp.
[[nodiscard]] Rgb ramp(double t);

/// One polyline per series on a log10 y-axis; non-finite or nonpositive points are skipped.
void loss_curves(const std::filesystem::path& path, const std::vector<std::vector<double>>& series);

/// Eigenvalues on the complex plane with the unit circle; dots coloured by residual, crosses for `overlay`.
void spectrum(const std::filesystem::path& path, const CVector& eigenvalues, const std::vector<double>& residuals,
              const CVector& overlay = {});

/// Rows are time, columns are space; values mapped linearly onto the colour ramp.
void heatmap(const std::filesystem::path& path, const Matrix& values);

/// First two state components of each predicted (red) and true (blue) trajectory.
void phase_portrait(const std::filesystem::path& path, const std::vector<Matrix>& predicted,
                    const std::vector<Matrix>& truth);

}  // namespace kedmd::plot
