#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "gazetail/common.hpp"
#include "gazetail/ingest.hpp"

namespace gazetail {

enum class Metric { euclidean, hyperbolic };

inline std::string to_string(Metric m) {
  return m == Metric::euclidean ? "euclidean" : "hyperbolic";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "euclidean") return Metric::euclidean;
  if (s == "hyperbolic") return Metric::hyperbolic;
  throw Error("unknown metric '" + std::string(s) + "' (expected euclidean|hyperbolic)");
}

/// Point of the Poincare unit disc, z = u + i v, |z| < 1.
struct DiscPoint {
  double u = 0.0;
  double v = 0.0;
};

struct StepLength {
  double value = 0.0;  // pixels (euclidean) or hyperbolic units
  Metric metric = Metric::euclidean;
};

inline constexpr double kDiscClampEps = 1e-9;
inline constexpr double kDefaultDiscMargin = 0.95;

/// Affine pixel -> disc map: the screen centre goes to the origin and the
/// half-diagonal to radius `margin`. Overshoot is clamped to radius 1 - 1e-9.
inline DiscPoint to_disc(const EyeSample& s, double screen_w, double screen_h,
                         double margin = kDefaultDiscMargin) {
  if (!(screen_w > 0) || !(screen_h > 0)) throw Error("to_disc: screen size must be positive");
  if (!(margin > 0) || margin > 1) throw Error("to_disc: margin must lie in (0, 1]");
  if (!std::isfinite(s.x) || !std::isfinite(s.y)) throw Error("to_disc: non-finite coordinates");
  const double half_diag = 0.5 * std::hypot(screen_w, screen_h);
  const double scale = margin / half_diag;
  double u = (s.x - 0.5 * screen_w) * scale;
  double v = (s.y - 0.5 * screen_h) * scale;
  const double r = std::hypot(u, v);
  constexpr double rmax = 1.0 - kDiscClampEps;
  if (r > rmax) {
    u *= rmax / r;
    v *= rmax / r;
  }
  return {u, v};
}

inline StepLength euclidean_distance(const EyeSample& a, const EyeSample& b) {
  if (!std::isfinite(a.x) || !std::isfinite(a.y) || !std::isfinite(b.x) || !std::isfinite(b.y))
    throw Error("euclidean_distance: non-finite coordinates");
  return {std::hypot(a.x - b.x, a.y - b.y), Metric::euclidean};
}

/// arctanh |(z - w) / (1 - z conj(w))|.
///
/// Evaluated through 1 - r^2 = (1 - |z|^2)(1 - |w|^2) / |1 - z conj(w)|^2 so
/// points close to the boundary keep full relative precision. The expression
/// is written out by hand (no std::complex) so that swapping the arguments
/// yields bit-identical results.
inline StepLength hyperbolic_distance(DiscPoint a, DiscPoint b) {
  const double na = a.u * a.u + a.v * a.v;
  const double nb = b.u * b.u + b.v * b.v;
  if (!(na < 1.0) || !(nb < 1.0))
    throw Error("hyperbolic_distance: point on or outside the unit circle");
  // z conj(w): real part symmetric, imaginary part antisymmetric in (z, w).
  const double re = a.u * b.u + a.v * b.v;
  const double im = a.v * b.u - a.u * b.v;
  const double den = std::hypot(1.0 - re, im);
  const double num = std::hypot(a.u - b.u, a.v - b.v);
  if (num == 0.0) return {0.0, Metric::hyperbolic};
  const double r = num / den;
  const double one_minus_r2 = ((1.0 - na) * (1.0 - nb)) / (den * den);
  const double one_minus_r = one_minus_r2 / (1.0 + r);
  // atanh(r) = 0.5 * log((1 + r) / (1 - r)) = 0.5 * log1p(2r / (1 - r))
  return {0.5 * std::log1p(2.0 * r / one_minus_r), Metric::hyperbolic};
}

}  // namespace gazetail
