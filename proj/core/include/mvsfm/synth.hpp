#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvsfm/common.hpp"
#include "mvsfm/error.hpp"
#include "mvsfm/motionfield.hpp"

namespace mvsfm {

struct Intrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  uint32_t width = 0, height = 0;
};

// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
  bool is_valid_rotation(double tol = 1e-9) const;
};

enum class MotionPattern { Lateral, Orbit, Forward };

std::optional<MotionPattern> parse_motion_pattern(std::string_view name);
std::string_view to_string(MotionPattern pattern);

// Knobs behind generate_scene's defaults. min_separation_px is enforced on
// the projections across every frame so that ground-truth correspondence by
// nearest observation stays unambiguous.
struct SceneParams {
  Intrinsics intrinsics{2400.0, 2400.0, 320.0, 320.0, 640, 640};
  double box_lateral = 0.42;   // points in [-box_lateral, box_lateral]^2 ...
  double box_near = 4.0;       // ... x [box_near, box_far] in front of camera 0
  double box_far = 6.0;
  double min_separation_px = 16.0;
  double lateral_step = 0.02;   // per-frame camera shift, scene units
  double forward_step = 0.05;
  double orbit_sweep_rad = 0.30;  // total sweep across the sequence
  double orbit_radius = 5.0;      // distance of the orbit from the box center
};

struct Scene {
  Intrinsics intrinsics;
  std::vector<Pose> poses;
  std::vector<Eigen::Vector3d> points;
  uint64_t seed = 0;
  MotionPattern motion = MotionPattern::Orbit;
};

struct Observation {
  uint32_t frame_index = 0;
  uint32_t point_id = 0;
  Vec2 pixel;
  double depth = 0.0;
};

Scene generate_scene(uint32_t n_points, uint32_t n_frames, MotionPattern motion,
                     uint64_t seed, const SceneParams& params = {});

// Pinhole projection of every point visible in the given frame.
std::vector<Observation> project(const Scene& scene, uint32_t frame_index);

// All frames at once, ordered by (frame, point).
std::vector<Observation> project_all(const Scene& scene);

// Renders ground-truth block motion fields: frame 0 is a key frame; each
// later frame tiles into 16x16 blocks (split down to 4x4 under conflicting
// flow), blocks take the backward displacement of their dominant observation
// rounded to 1/8 pel, and unobserved blocks become intra rects.
std::vector<BlockMotionField> render_mv_fields(const Scene& scene, double noise_sigma_px);

// Two-view DLT triangulation.
Eigen::Vector3d triangulate_pair(const Observation& obs_a, const Observation& obs_b,
                                 const Pose& pose_a, const Pose& pose_b,
                                 const Intrinsics& intrinsics);

// Multi-view DLT over any number of rays (used when a track spans many
// frames). Requires at least two distinct poses.
Eigen::Vector3d triangulate_multiview(std::span<const Vec2> pixels,
                                      std::span<const Pose> poses,
                                      const Intrinsics& intrinsics);

Vec2 project_point(const Eigen::Vector3d& point, const Pose& pose,
                   const Intrinsics& intrinsics, double* depth_out = nullptr);

// scene.json serialization (documented fixture format).
std::string scene_to_json(const Scene& scene, bool with_observations = true);
Scene scene_from_json(const std::string& text);
void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

}  // namespace mvsfm
