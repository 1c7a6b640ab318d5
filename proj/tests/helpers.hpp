#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "mvsfm/image.hpp"
#include "mvsfm/motionfield.hpp"
#include "mvsfm/trajectory.hpp"

namespace mvsfm::test {

// O(n^2) exhaustive nearest-neighbor oracles; any accelerated index inside
// the library must reproduce these exactly.
inline double brute_chamfer(std::span<const Eigen::Vector3d> a,
                            std::span<const Eigen::Vector3d> b, bool squared = false) {
  auto directed = [&](std::span<const Eigen::Vector3d> from,
                      std::span<const Eigen::Vector3d> to) {
    double sum = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      sum += squared ? best : std::sqrt(best);
    }
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

inline double brute_hausdorff(std::span<const Eigen::Vector3d> a,
                              std::span<const Eigen::Vector3d> b) {
  auto directed = [&](std::span<const Eigen::Vector3d> from,
                      std::span<const Eigen::Vector3d> to) {
    double worst = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

// Separable Gaussian blur with reflected borders (test-side reference).
inline LumaImage gaussian_blur(const LumaImage& src, double sigma) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[static_cast<size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= sum;

  auto reflect = [](int v, int n) {
    while (v < 0 || v >= n) {
      if (v < 0) v = -v - 1;
      if (v >= n) v = 2 * n - v - 1;
    }
    return v;
  };

  int w = static_cast<int>(src.width), h = static_cast<int>(src.height);
  std::vector<double> tmp(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<size_t>(i + radius)] *
               src.at(static_cast<uint32_t>(reflect(x + i, w)), static_cast<uint32_t>(y));
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  LumaImage out = LumaImage::filled(src.width, src.height, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<size_t>(i + radius)] *
               tmp[static_cast<size_t>(reflect(y + i, h)) * w + x];
      out.at(static_cast<uint32_t>(x), static_cast<uint32_t>(y)) =
          static_cast<uint8_t>(std::clamp(std::lround(acc), 0l, 255l));
    }
  return out;
}

// Random block partition of a 4-aligned frame: greedy large tiles, random
// quadtree splits, random intra leaves, random motion. Used by the ZOH
// brute-force comparisons and the container round-trip fixtures.
inline BlockMotionField random_partition(uint32_t width, uint32_t height,
                                         std::mt19937_64& rng, uint32_t frame_index = 1,
                                         double p_split = 0.4, double p_intra = 0.2) {
  BlockMotionField field;
  field.frame_index = frame_index;
  field.frame_kind = FrameKind::Inter;
  field.width = width;
  field.height = height;

  auto chance = [&](double p) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
  };
  auto random_mv = [&]() {
    auto draw = [&]() { return static_cast<int16_t>(static_cast<int64_t>(rng() % 513) - 256); };
    return MotionVector{draw(), draw()};
  };

  // Split a w x h region at (x, y) into legal block sizes.
  std::function<void(uint32_t, uint32_t, uint32_t, uint32_t)> emit =
      [&](uint32_t x, uint32_t y, uint32_t w, uint32_t h) {
        bool splittable = w > 4 || h > 4;
        if (splittable && chance(p_split)) {
          uint32_t hw = w > 4 ? w / 2 : w;
          uint32_t hh = h > 4 ? h / 2 : h;
          for (uint32_t oy = 0; oy < h; oy += hh)
            for (uint32_t ox = 0; ox < w; ox += hw)
              emit(x + ox, y + oy, std::min(hw, w - ox), std::min(hh, h - oy));
          return;
        }
        if (chance(p_intra)) {
          field.intra_rects.push_back(
              {x, y, static_cast<uint16_t>(w), static_cast<uint16_t>(h)});
        } else {
          field.blocks.push_back({x, y, static_cast<uint16_t>(w),
                                  static_cast<uint16_t>(h), random_mv(),
                                  static_cast<uint8_t>(1 + rng() % 2)});
        }
      };

  // Top-level tiling in up-to-64px tiles (power-of-two extents only).
  uint32_t y = 0;
  while (y < height) {
    uint32_t th = 64;
    while (th > height - y) th /= 2;
    if (th < 4) th = 4;
    uint32_t x = 0;
    while (x < width) {
      uint32_t tw = 64;
      while (tw > width - x) tw /= 2;
      if (tw < 4) tw = 4;
      emit(x, y, tw, th);
      x += tw;
    }
    y += th;
  }
  return field;
}

// Single full-frame block; the whole dense grid carries one motion vector.
inline BlockMotionField uniform_field(uint32_t frame_index, uint32_t size,
                                      MotionVector mv, uint8_t ref_offset = 1) {
  BlockMotionField field;
  field.frame_index = frame_index;
  field.frame_kind = FrameKind::Inter;
  field.width = size;
  field.height = size;
  field.blocks.push_back({0, 0, static_cast<uint16_t>(size),
                          static_cast<uint16_t>(size), mv, ref_offset});
  return field;
}

inline BlockMotionField key_field(uint32_t size) {
  BlockMotionField field;
  field.frame_index = 0;
  field.frame_kind = FrameKind::Key;
  field.width = size;
  field.height = size;
  return field;
}

// Naive mirror of the match-emission contract, used as the oracle for
// trajectories_to_matches and the manifest count checks.
struct NaiveMatchResult {
  std::map<uint32_t, std::vector<Vec2>> keypoints;
  std::map<FramePair, std::vector<IndexPair>> matches;
};

inline NaiveMatchResult naive_matches(std::span<const Trajectory> trajectories,
                                      const TrackParams& params) {
  NaiveMatchResult result;
  std::map<uint32_t, std::map<std::pair<int64_t, int64_t>, uint32_t>> dedup;

  auto intern = [&](uint32_t frame, Vec2 pos) -> uint32_t {
    std::pair<int64_t, int64_t> key{std::llround(pos.x * 2.0), std::llround(pos.y * 2.0)};
    auto& table = dedup[frame];
    auto it = table.find(key);
    if (it != table.end()) return it->second;
    auto idx = static_cast<uint32_t>(result.keypoints[frame].size());
    table.emplace(key, idx);
    result.keypoints[frame].push_back(pos);
    return idx;
  };

  std::vector<std::vector<uint32_t>> kp(trajectories.size());
  for (size_t i = 0; i < trajectories.size(); ++i)
    for (const auto& s : trajectories[i].samples)
      kp[i].push_back(intern(s.frame_index, s.position));

  std::vector<uint32_t> order(trajectories.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    return trajectories[a].samples.size() > trajectories[b].samples.size();
  });

  std::map<FramePair, std::pair<std::set<uint32_t>, std::set<uint32_t>>> used;
  for (uint32_t id : order) {
    const auto& samples = trajectories[id].samples;
    for (size_t i = 0; i < samples.size(); ++i) {
      for (size_t j = i + 1; j < samples.size(); ++j) {
        uint32_t fa = samples[i].frame_index, fb = samples[j].frame_index;
        if (params.pair_span_cap != 0 && fb - fa > params.pair_span_cap) continue;
        auto& [ua, ub] = used[{fa, fb}];
        uint32_t ia = kp[id][i], ib = kp[id][j];
        if (ua.contains(ia) || ub.contains(ib)) continue;
        ua.insert(ia);
        ub.insert(ib);
        result.matches[{fa, fb}].emplace_back(ia, ib);
      }
    }
  }
  for (auto& [key, list] : result.matches) std::sort(list.begin(), list.end());
  return result;
}

}  // namespace mvsfm::test
