#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "mvsfm/common.hpp"
#include "mvsfm/error.hpp"
#include "mvsfm/image.hpp"
#include "mvsfm/synth.hpp"

namespace mvsfm {

struct ReprojStats {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;  // nearest-rank (ceil) convention
  size_t count = 0;
};

struct CloudDistance {
  double chamfer = 0.0;
  double hausdorff = 0.0;
};

struct SharpnessScore {
  double q = 0.0;
  uint32_t patch_size = 8;
  double anisotropy_threshold = 0.5;
};

struct QParams {
  uint32_t patch_size = 8;
  double anisotropy_threshold = 0.5;
};

// A 3D point with the pixel observations that support it.
struct TrackedPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::vector<std::pair<uint32_t, Vec2>> observations;  // (frame, pixel)
};

// Per-observation Euclidean pixel residuals between each track's projected
// point and its observed pixels.
ReprojStats reprojection_error(std::span<const TrackedPoint> tracks,
                               std::span<const Pose> poses, const Intrinsics& intrinsics);

// Symmetric mean nearest-neighbor distance, 0.5*(mean_a + mean_b). Euclidean
// by default; squared=true averages squared distances instead.
double chamfer(std::span<const Eigen::Vector3d> a, std::span<const Eigen::Vector3d> b,
               bool squared = false);

// max(directed max NN distance in either direction).
double hausdorff(std::span<const Eigen::Vector3d> a, std::span<const Eigen::Vector3d> b);

// Optional gauge alignment of a onto b before cloud comparison. Equal-sized
// clouds align with the Umeyama similarity transform over index-corresponded
// points; otherwise a is shifted and scaled to match b's centroid and RMS
// radius. Returns the transformed copy of a.
std::vector<Eigen::Vector3d> align_similarity(std::span<const Eigen::Vector3d> a,
                                              std::span<const Eigen::Vector3d> b);

struct Psnr {
  double db = 0.0;
  bool is_infinite = false;
};

// PSNR over 8-bit luma; identical inputs report the infinite marker.
Psnr psnr_y(const LumaImage& reference, const LumaImage& test);

// No-reference sharpness: per non-overlapping patch, stack central-difference
// gradients into an Nx2 matrix, take singular values s1 >= s2 and coherence
// R = (s1-s2)/(s1+s2); the score is the mean of s1*R over patches with
// R above the anisotropy threshold (0 when none qualify).
SharpnessScore q_metric(const LumaImage& image, const QParams& params = {});

double delta_q(const LumaImage& reference, const LumaImage& test,
               const QParams& params = {});

}  // namespace mvsfm
