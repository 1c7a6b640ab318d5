#pragma once

#include <cmath>
#include <cstdint>

namespace mvsfm {

// Frame classification carried by the motion-vector sidecar. The container
// layer never entropy-decodes frame headers, so this is the only kind source.
enum class FrameKind : uint8_t { Key = 0, Inter = 1 };

// Subpixel image position in pixel units.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }

  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

}  // namespace mvsfm
