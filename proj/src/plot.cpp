#include "kedmd/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include "kedmd/errors.hpp"
#include "kedmd/systems.hpp"

namespace kedmd::plot {
namespace {

constexpr int kWidth = 800;
constexpr int kHeight = 600;
constexpr int kMargin = 40;
constexpr Rgb kAxis{90, 90, 90};
constexpr Rgb kGrid{225, 225, 225};

const Rgb kPalette[] = {{31, 119, 180}, {214, 39, 40},  {44, 160, 44},  {255, 127, 14},
                        {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};

/// Affine map from data box onto the plotting area inside the margins.
struct Frame {
  double x0, x1, y0, y1;
  int w, h;

  [[nodiscard]] double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (w - 2 * kMargin); }
  [[nodiscard]] double py(double y) const { return h - kMargin - (y - y0) / (y1 - y0) * (h - 2 * kMargin); }
};

void pad(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

void draw_box(Canvas& c) {
  const int r = c.width() - kMargin;
  const int b = c.height() - kMargin;
  c.line(kMargin, kMargin, r, kMargin, kAxis);
  c.line(kMargin, b, r, b, kAxis);
  c.line(kMargin, kMargin, kMargin, b, kAxis);
  c.line(r, kMargin, r, b, kAxis);
}

}  // namespace

Canvas::Canvas(int width, int height)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 3, 255) {
  if (width < 1 || height < 1) throw InvalidArgument("canvas size must be positive");
}

Rgb Canvas::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  pixels_[i] = c.r;
  pixels_[i + 1] = c.g;
  pixels_[i + 2] = c.b;
}

void Canvas::line(double x0, double y0, double x1, double y1, Rgb c) {
  if (!std::isfinite(x0) || !std::isfinite(y0) || !std::isfinite(x1) || !std::isfinite(y1)) return;
  const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  const int n = std::min(static_cast<int>(std::ceil(len)), 4 * (width_ + height_));
  for (int s = 0; s <= n; ++s) {
    const double t = n == 0 ? 0.0 : static_cast<double>(s) / n;
    set(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

void Canvas::dot(double x, double y, int radius, Rgb c) {
  if (!std::isfinite(x) || !std::isfinite(y)) return;
  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) set(cx + dx, cy + dy, c);
    }
  }
}

void Canvas::cross(double x, double y, int half, Rgb c) {
  line(x - half, y - half, x + half, y + half, c);
  line(x - half, y + half, x + half, y - half, c);
}

void Canvas::rect(int x0, int y0, int x1, int y1, Rgb c) {
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, c);
  }
}

void Canvas::save(const std::filesystem::path& path) const {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width_), static_cast<png_uint_32>(height_), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height_; ++y) {
    png_write_row(png, pixels_.data() + static_cast<std::size_t>(y) * width_ * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Rgb ramp(double t) {
  if (!std::isfinite(t)) t = 1.0;
  t = std::clamp(t, 0.0, 1.0);
  const auto ch = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); };
  return {ch(1.5 * t - 0.25 + 0.25 * t), ch(1.0 - 2.0 * std::abs(t - 0.5)), ch(1.25 - 1.5 * t)};
}

void loss_curves(const std::filesystem::path& path, const std::vector<std::vector<double>>& series) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t longest = 0;
  for (const auto& s : series) {
    longest = std::max(longest, s.size());
    for (double v : s) {
      if (std::isfinite(v) && v > 0.0) {
        lo = std::min(lo, std::log10(v));
        hi = std::max(hi, std::log10(v));
      }
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  lo = std::floor(lo);
  hi = std::ceil(hi);
  if (hi <= lo) hi = lo + 1.0;
  Canvas c(kWidth, kHeight);
  const Frame f{0.0, std::max<double>(1.0, static_cast<double>(longest) - 1.0), lo, hi, kWidth, kHeight};
  for (double d = lo; d <= hi; d += 1.0) c.line(f.px(f.x0), f.py(d), f.px(f.x1), f.py(d), kGrid);
  draw_box(c);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Rgb col = kPalette[k % std::size(kPalette)];
    bool have_prev = false;
    double px = 0.0, py = 0.0;
    for (std::size_t i = 0; i < series[k].size(); ++i) {
      const double v = series[k][i];
      if (!(std::isfinite(v) && v > 0.0)) {
        have_prev = false;
        continue;
      }
      const double x = f.px(static_cast<double>(i));
      const double y = f.py(std::log10(v));
      if (have_prev) c.line(px, py, x, y, col);
      c.dot(x, y, 1, col);
      px = x;
      py = y;
      have_prev = true;
    }
  }
  c.save(path);
}

void spectrum(const std::filesystem::path& path, const CVector& eigenvalues, const std::vector<double>& residuals,
              const CVector& overlay) {
  double r = 1.1;
  for (const auto& z : eigenvalues) {
    if (std::isfinite(std::abs(z))) r = std::max(r, 1.05 * std::abs(z));
  }
  Canvas c(kHeight, kHeight);
  const Frame f{-r, r, -r, r, kHeight, kHeight};
  c.line(f.px(-r), f.py(0), f.px(r), f.py(0), kGrid);
  c.line(f.px(0), f.py(-r), f.px(0), f.py(r), kGrid);
  for (int i = 0; i < 720; ++i) {
    const double a = kTwoPi * i / 720.0;
    const double b = kTwoPi * (i + 1) / 720.0;
    c.line(f.px(std::cos(a)), f.py(std::sin(a)), f.px(std::cos(b)), f.py(std::sin(b)), kAxis);
  }
  draw_box(c);
  double rmax = 0.0;
  for (double v : residuals) {
    if (std::isfinite(v)) rmax = std::max(rmax, v);
  }
  for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
    const double res = static_cast<std::size_t>(j) < residuals.size() ? residuals[static_cast<std::size_t>(j)] : 0.0;
    const Rgb col = ramp(rmax > 0.0 ? res / rmax : 0.0);
    c.dot(f.px(eigenvalues[j].real()), f.py(eigenvalues[j].imag()), 4, col);
  }
  for (const auto& z : overlay) c.cross(f.px(z.real()), f.py(z.imag()), 6, Rgb{0, 0, 0});
  c.save(path);
}

void heatmap(const std::filesystem::path& path, const Matrix& values) {
  if (values.size() == 0) {
    Canvas(1, 1).save(path);
    return;
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const int cw = std::max(1, kWidth / static_cast<int>(values.cols()));
  const int ch = std::max(1, kHeight / static_cast<int>(values.rows()));
  Canvas c(cw * static_cast<int>(values.cols()), ch * static_cast<int>(values.rows()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      const auto x = static_cast<int>(j) * cw;
      const auto y = static_cast<int>(i) * ch;
      c.rect(x, y, x + cw, y + ch, ramp((values(i, j) - lo) / (hi - lo)));
    }
  }
  c.save(path);
}

void phase_portrait(const std::filesystem::path& path, const std::vector<Matrix>& predicted,
                    const std::vector<Matrix>& truth) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto extend = [&](const std::vector<Matrix>& set) {
    for (const auto& m : set) {
      if (m.cols() < 1) continue;
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double a = m(i, 0);
        const double b = m.cols() > 1 ? m(i, 1) : 0.0;
        if (!std::isfinite(a) || !std::isfinite(b)) continue;
        x0 = std::min(x0, a);
        x1 = std::max(x1, a);
        y0 = std::min(y0, b);
        y1 = std::max(y1, b);
      }
    }
  };
  extend(truth);
  extend(predicted);
  if (!std::isfinite(x0)) x0 = x1 = y0 = y1 = 0.0;
  pad(x0, x1);
  pad(y0, y1);
  Canvas c(kHeight, kHeight);
  const Frame f{x0, x1, y0, y1, kHeight, kHeight};
  draw_box(c);
  auto draw = [&](const std::vector<Matrix>& set, Rgb col) {
    for (const auto& m : set) {
      if (m.cols() < 1) continue;
      for (Eigen::Index i = 1; i < m.rows(); ++i) {
        const double b0 = m.cols() > 1 ? m(i - 1, 1) : 0.0;
        const double b1 = m.cols() > 1 ? m(i, 1) : 0.0;
        c.line(f.px(m(i - 1, 0)), f.py(b0), f.px(m(i, 0)), f.py(b1), col);
      }
    }
  };
  draw(truth, Rgb{31, 119, 180});
  draw(predicted, Rgb{214, 39, 40});
  c.save(path);
}

}  // namespace kedmd::plot
