#pragma once

#include <array>
#include <vector>

#include "mml/core.hpp"
#include "mml/rng.hpp"

namespace mml {

// Classic 2-D gradient noise: hashed unit gradients on the integer lattice,
// quintic fade, bilinear blend. Output is zero-mean and bounded by sqrt(2)/2.
class Perlin2D {
 public:
  explicit Perlin2D(uint64_t seed) {
    Rng rng(splitmix64(seed ^ 0x9d2c5680ULL));
    for (int i = 0; i < 256; ++i) perm_[i] = i;
    for (int i = 255; i > 0; --i)
      std::swap(perm_[i], perm_[rng.uniform_int(0, i)]);
    for (int i = 0; i < 256; ++i) perm_[256 + i] = perm_[i];
  }

  double noise(double x, double y) const {
    const int xi = int(std::floor(x)), yi = int(std::floor(y));
    const double xf = x - xi, yf = y - yi;
    const double u = fade(xf), v = fade(yf);
    const double d00 = grad_dot(hash(xi, yi), xf, yf);
    const double d10 = grad_dot(hash(xi + 1, yi), xf - 1, yf);
    const double d01 = grad_dot(hash(xi, yi + 1), xf, yf - 1);
    const double d11 = grad_dot(hash(xi + 1, yi + 1), xf - 1, yf - 1);
    return lerp(lerp(d00, d10, u), lerp(d01, d11, u), v);
  }

 private:
  static double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }
  static double lerp(double a, double b, double t) { return a + t * (b - a); }

  int hash(int x, int y) const { return perm_[(perm_[x & 255] + y) & 255]; }

  static double grad_dot(int h, double dx, double dy) {
    static constexpr double s = 0.70710678118654752;
    switch (h & 7) {
      case 0: return dx;
      case 1: return -dx;
      case 2: return dy;
      case 3: return -dy;
      case 4: return s * (dx + dy);
      case 5: return s * (dx - dy);
      case 6: return s * (-dx + dy);
      default: return s * (-dx - dy);
    }
  }

  std::array<int, 512> perm_;
};

enum class TerrainMode { flat, perlin };

// Heightfield with bilinear queries; perlin mode samples gradient noise
// scaled so |height| <= amplitude, flat mode is identically zero.
class Terrain {
 public:
  Terrain() = default;

  static Terrain flat(double friction = 0.8) {
    Terrain t;
    t.mode_ = TerrainMode::flat;
    t.friction_ = friction;
    return t;
  }

  static Terrain perlin(double frequency, double amplitude, uint64_t seed,
                        double friction = 0.8, double half_extent = 8.0, double cell = 0.05) {
    if (!(frequency >= 0.0) || !(amplitude >= 0.0))
      throw ConfigError("terrain: frequency and amplitude must be >= 0");
    Terrain t;
    t.mode_ = TerrainMode::perlin;
    t.friction_ = friction;
    t.frequency_ = frequency;
    t.amplitude_ = amplitude;
    t.seed_ = seed;
    t.half_extent_ = half_extent;
    t.cell_ = cell;
    if (amplitude > 0.0 && frequency > 0.0) {
      const Perlin2D noise(seed);
      t.n_ = int(std::round(2.0 * half_extent / cell)) + 1;
      t.grid_.resize(size_t(t.n_) * t.n_);
      // Unit-gradient 2-D Perlin is bounded by sqrt(2)/2; rescale to amplitude.
      const double gain = amplitude * 1.41421356237309505;
      for (int iy = 0; iy < t.n_; ++iy)
        for (int ix = 0; ix < t.n_; ++ix) {
          const double x = -half_extent + ix * cell;
          const double y = -half_extent + iy * cell;
          t.grid_[size_t(iy) * t.n_ + ix] = gain * noise.noise(frequency * x, frequency * y);
        }
    }
    return t;
  }

  TerrainMode mode() const { return mode_; }
  double friction() const { return friction_; }
  void set_friction(double mu) { friction_ = mu; }
  double frequency() const { return frequency_; }
  double amplitude() const { return amplitude_; }
  uint64_t seed() const { return seed_; }

  double height(double x, double y) const {
    if (grid_.empty()) return 0.0;
    const double gx = clamp((x + half_extent_) / cell_, 0.0, double(n_ - 1));
    const double gy = clamp((y + half_extent_) / cell_, 0.0, double(n_ - 1));
    const int x0 = std::min(int(gx), n_ - 2), y0 = std::min(int(gy), n_ - 2);
    const double tx = gx - x0, ty = gy - y0;
    const double h00 = grid_[size_t(y0) * n_ + x0];
    const double h10 = grid_[size_t(y0) * n_ + x0 + 1];
    const double h01 = grid_[size_t(y0 + 1) * n_ + x0];
    const double h11 = grid_[size_t(y0 + 1) * n_ + x0 + 1];
    return (1 - ty) * ((1 - tx) * h00 + tx * h10) + ty * ((1 - tx) * h01 + tx * h11);
  }

 private:
  TerrainMode mode_ = TerrainMode::flat;
  double friction_ = 0.8;
  double frequency_ = 0.0;
  double amplitude_ = 0.0;
  uint64_t seed_ = 0;
  double half_extent_ = 8.0;
  double cell_ = 0.05;
  int n_ = 0;
  std::vector<double> grid_;
};

}  // namespace mml
