#include "mvsfm/synth.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"

namespace mvsfm {

namespace {

using json = nlohmann::ordered_json;

// Deterministic uniforms/normals straight from mt19937_64 draws; the
// standard distributions are implementation-defined and would break
// cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double canonical() {  // [0,1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

  double normal(double sigma) {
    if (have_spare_) {
      have_spare_ = false;
      return spare_ * sigma;
    }
    double u1 = 1.0 - canonical();  // (0,1], keeps the log finite
    double u2 = canonical();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a) * sigma;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t x = seed ^ (salt + 0x9e3779b97f4a7c15ull);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

Pose look_at(const Eigen::Vector3d& camera_center, const Eigen::Vector3d& target) {
  Eigen::Vector3d z = (target - camera_center).normalized();
  Eigen::Vector3d x = Eigen::Vector3d(0, 1, 0).cross(z).normalized();
  Eigen::Vector3d y = z.cross(x);
  Pose pose;
  pose.rotation.row(0) = x;
  pose.rotation.row(1) = y;
  pose.rotation.row(2) = z;
  pose.translation = -pose.rotation * camera_center;
  return pose;
}

std::vector<Pose> make_poses(uint32_t n_frames, MotionPattern motion,
                             const SceneParams& p) {
  std::vector<Pose> poses;
  poses.reserve(n_frames);
  const Eigen::Vector3d box_center(0, 0, (p.box_near + p.box_far) / 2.0);
  for (uint32_t t = 0; t < n_frames; ++t) {
    switch (motion) {
      case MotionPattern::Lateral: {
        Pose pose;
        pose.translation = Eigen::Vector3d(-p.lateral_step * t, 0, 0);
        poses.push_back(pose);
        break;
      }
      case MotionPattern::Forward: {
        Pose pose;
        pose.translation = Eigen::Vector3d(0, 0, -p.forward_step * t);
        poses.push_back(pose);
        break;
      }
      case MotionPattern::Orbit: {
        double phi = n_frames > 1
                         ? -p.orbit_sweep_rad / 2.0 +
                               p.orbit_sweep_rad * static_cast<double>(t) / (n_frames - 1)
                         : 0.0;
        Eigen::Vector3d center =
            box_center + p.orbit_radius * Eigen::Vector3d(std::sin(phi), 0.0,
                                                          -std::cos(phi));
        poses.push_back(look_at(center, box_center));
        break;
      }
    }
  }
  return poses;
}

std::optional<Observation> project_one(const Eigen::Vector3d& point, const Pose& pose,
                                       const Intrinsics& k, uint32_t frame,
                                       uint32_t point_id) {
  Eigen::Vector3d cam = pose.rotation * point + pose.translation;
  if (cam.z() <= 0.0) return std::nullopt;
  double u = k.fx * cam.x() / cam.z() + k.cx;
  double v = k.fy * cam.y() / cam.z() + k.cy;
  if (!(u >= 0.0 && v >= 0.0 && u < k.width && v < k.height)) return std::nullopt;
  return Observation{frame, point_id, {u, v}, cam.z()};
}

// Axis decomposition into codec-legal tile extents, largest-first.
std::vector<uint32_t> tile_sizes(uint32_t extent, uint32_t max_size) {
  std::vector<uint32_t> sizes;
  uint32_t pos = 0;
  while (pos < extent) {
    uint32_t remaining = extent - pos;
    uint32_t s = max_size;
    while (s > remaining) s /= 2;
    if (s < 4) s = 4;  // frames are 4-aligned by contract
    sizes.push_back(s);
    pos += s;
  }
  return sizes;
}

int16_t to_eighth_pel(double px) {
  double v = std::llround(px * 8.0);
  v = std::clamp(v, -32767.0, 32767.0);
  return static_cast<int16_t>(v);
}

}  // namespace

bool Pose::is_valid_rotation(double tol) const {
  Eigen::Matrix3d rtr = rotation.transpose() * rotation;
  if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

std::optional<MotionPattern> parse_motion_pattern(std::string_view name) {
  if (name == "lateral") return MotionPattern::Lateral;
  if (name == "orbit") return MotionPattern::Orbit;
  if (name == "forward") return MotionPattern::Forward;
  return std::nullopt;
}

std::string_view to_string(MotionPattern pattern) {
  switch (pattern) {
    case MotionPattern::Lateral: return "lateral";
    case MotionPattern::Orbit: return "orbit";
    case MotionPattern::Forward: return "forward";
  }
  return "orbit";
}

Scene generate_scene(uint32_t n_points, uint32_t n_frames, MotionPattern motion,
                     uint64_t seed, const SceneParams& params) {
  if (n_points < 1) fail(ErrorCode::InvariantViolation, "n_points must be >= 1");
  if (n_frames < 2) fail(ErrorCode::InvariantViolation, "a scene needs >= 2 frames");

  Scene scene;
  scene.intrinsics = params.intrinsics;
  scene.seed = seed;
  scene.motion = motion;
  scene.poses = make_poses(n_frames, motion, params);

  double max_baseline = 0.0;
  for (const Pose& pose : scene.poses)
    max_baseline = std::max(max_baseline,
                            (pose.center() - scene.poses[0].center()).norm());
  if (max_baseline < 1e-12)
    fail(ErrorCode::DegenerateMotion, "zero baseline across all frames");

  // Uniform box sampling with a projected minimum-separation constraint in
  // every frame, so nearest-observation correspondence stays unambiguous.
  Rng rng(mix_seed(seed, 0));
  std::vector<std::vector<Vec2>> placed(n_frames);
  const double margin = 8.0;
  const uint64_t max_attempts = 200000;
  uint64_t attempts = 0;
  while (scene.points.size() < n_points) {
    if (++attempts > max_attempts)
      fail(ErrorCode::InvariantViolation,
           "could not place " + std::to_string(n_points) +
               " points with min separation " +
               std::to_string(params.min_separation_px) + "px");
    Eigen::Vector3d candidate(rng.uniform(-params.box_lateral, params.box_lateral),
                              rng.uniform(-params.box_lateral, params.box_lateral),
                              rng.uniform(params.box_near, params.box_far));
    bool ok = true;
    std::vector<Vec2> projections(n_frames);
    for (uint32_t t = 0; t < n_frames && ok; ++t) {
      auto obs = project_one(candidate, scene.poses[t], scene.intrinsics, t, 0);
      if (!obs || obs->pixel.x < margin || obs->pixel.y < margin ||
          obs->pixel.x >= scene.intrinsics.width - margin ||
          obs->pixel.y >= scene.intrinsics.height - margin) {
        ok = false;
        break;
      }
      projections[t] = obs->pixel;
      for (const Vec2& other : placed[t]) {
        if (distance(obs->pixel, other) < params.min_separation_px) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) continue;
    for (uint32_t t = 0; t < n_frames; ++t) placed[t].push_back(projections[t]);
    scene.points.push_back(candidate);
  }
  return scene;
}

std::vector<Observation> project(const Scene& scene, uint32_t frame_index) {
  if (frame_index >= scene.poses.size())
    fail(ErrorCode::OutOfBounds, "frame " + std::to_string(frame_index) + " of " +
                                     std::to_string(scene.poses.size()));
  std::vector<Observation> observations;
  for (uint32_t p = 0; p < scene.points.size(); ++p) {
    auto obs = project_one(scene.points[p], scene.poses[frame_index], scene.intrinsics,
                           frame_index, p);
    if (obs) observations.push_back(*obs);
  }
  return observations;
}

std::vector<Observation> project_all(const Scene& scene) {
  std::vector<Observation> all;
  for (uint32_t t = 0; t < scene.poses.size(); ++t) {
    auto obs = project(scene, t);
    all.insert(all.end(), obs.begin(), obs.end());
  }
  return all;
}

namespace {

struct FlowSample {
  Vec2 pixel;   // position in the current frame
  Vec2 flow;    // backward displacement in pixels (previous - current)
};

constexpr double kConflictingFlowPx = 1.0;

void emit_tile(uint32_t x, uint32_t y, uint32_t w, uint32_t h,
               const std::vector<FlowSample>& samples, Rng& noise, double sigma,
               BlockMotionField& field) {
  std::vector<const FlowSample*> inside;
  for (const auto& s : samples) {
    if (s.pixel.x >= x && s.pixel.x < x + w && s.pixel.y >= y && s.pixel.y < y + h)
      inside.push_back(&s);
  }
  if (inside.empty()) {
    field.intra_rects.push_back({x, y, static_cast<uint16_t>(w), static_cast<uint16_t>(h)});
    return;
  }

  bool conflict = false;
  for (size_t i = 0; i < inside.size() && !conflict; ++i)
    for (size_t j = i + 1; j < inside.size(); ++j)
      if (distance(inside[i]->flow, inside[j]->flow) > kConflictingFlowPx) {
        conflict = true;
        break;
      }

  if (conflict && (w > 4 || h > 4)) {
    uint32_t hw = w > 4 ? w / 2 : w;
    uint32_t hh = h > 4 ? h / 2 : h;
    for (uint32_t oy = 0; oy < h; oy += hh)
      for (uint32_t ox = 0; ox < w; ox += hw)
        emit_tile(x + ox, y + oy, std::min(hw, w - ox), std::min(hh, h - oy), samples,
                  noise, sigma, field);
    return;
  }

  // Dominant observation: nearest to the tile center.
  Vec2 center{x + w / 2.0, y + h / 2.0};
  const FlowSample* dominant = inside[0];
  double best = distance(dominant->pixel, center);
  for (const auto* s : inside) {
    double d = distance(s->pixel, center);
    if (d < best) {
      best = d;
      dominant = s;
    }
  }

  Vec2 flow = dominant->flow;
  if (sigma > 0.0) flow = flow + Vec2{noise.normal(sigma), noise.normal(sigma)};
  MotionBlock block;
  block.x = x;
  block.y = y;
  block.w = static_cast<uint16_t>(w);
  block.h = static_cast<uint16_t>(h);
  block.mv = {to_eighth_pel(flow.x), to_eighth_pel(flow.y)};
  block.ref_offset = 1;
  field.blocks.push_back(block);
}

}  // namespace

std::vector<BlockMotionField> render_mv_fields(const Scene& scene, double noise_sigma_px) {
  const auto n_frames = static_cast<uint32_t>(scene.poses.size());
  const Intrinsics& k = scene.intrinsics;

  // pixel positions per frame, indexed by point id (absent when not visible)
  std::vector<std::vector<std::optional<Vec2>>> pixels(
      n_frames, std::vector<std::optional<Vec2>>(scene.points.size()));
  for (uint32_t t = 0; t < n_frames; ++t)
    for (const auto& obs : project(scene, t)) pixels[t][obs.point_id] = obs.pixel;

  std::vector<BlockMotionField> fields;
  fields.reserve(n_frames);

  BlockMotionField key;
  key.frame_index = 0;
  key.frame_kind = FrameKind::Key;
  key.width = k.width;
  key.height = k.height;
  fields.push_back(key);

  const auto col_sizes = tile_sizes(k.width, 16);
  const auto row_sizes = tile_sizes(k.height, 16);

  for (uint32_t t = 1; t < n_frames; ++t) {
    BlockMotionField field;
    field.frame_index = t;
    field.frame_kind = FrameKind::Inter;
    field.width = k.width;
    field.height = k.height;

    std::vector<FlowSample> samples;
    for (uint32_t p = 0; p < scene.points.size(); ++p) {
      if (!pixels[t][p] || !pixels[t - 1][p]) continue;  // needs both endpoints
      samples.push_back({*pixels[t][p], *pixels[t - 1][p] - *pixels[t][p]});
    }

    Rng noise(mix_seed(scene.seed, 0x4d56ull << 32 | t));
    uint32_t y = 0;
    for (uint32_t th : row_sizes) {
      uint32_t x = 0;
      for (uint32_t tw : col_sizes) {
        emit_tile(x, y, tw, th, samples, noise, noise_sigma_px, field);
        x += tw;
      }
      y += th;
    }
    fields.push_back(std::move(field));
  }
  return fields;
}

namespace {

Eigen::Matrix<double, 3, 4> projection_matrix(const Pose& pose, const Intrinsics& k) {
  Eigen::Matrix3d intr;
  intr << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = pose.rotation;
  rt.col(3) = pose.translation;
  return intr * rt;
}

}  // namespace

Eigen::Vector3d triangulate_pair(const Observation& obs_a, const Observation& obs_b,
                                 const Pose& pose_a, const Pose& pose_b,
                                 const Intrinsics& intrinsics) {
  if ((pose_a.center() - pose_b.center()).norm() < 1e-9)
    fail(ErrorCode::DegenerateBaseline, "camera centers coincide");

  Eigen::Matrix<double, 3, 4> pa = projection_matrix(pose_a, intrinsics);
  Eigen::Matrix<double, 3, 4> pb = projection_matrix(pose_b, intrinsics);

  Eigen::Matrix4d design;
  design.row(0) = obs_a.pixel.x * pa.row(2) - pa.row(0);
  design.row(1) = obs_a.pixel.y * pa.row(2) - pa.row(1);
  design.row(2) = obs_b.pixel.x * pb.row(2) - pb.row(0);
  design.row(3) = obs_b.pixel.y * pb.row(2) - pb.row(1);

  Eigen::JacobiSVD<Eigen::Matrix4d> svd(design, Eigen::ComputeFullV);
  Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-15)
    fail(ErrorCode::DegenerateBaseline, "triangulated point at infinity");
  Eigen::Vector3d point = h.head<3>() / h(3);

  for (const Pose* pose : {&pose_a, &pose_b}) {
    double depth = (pose->rotation * point + pose->translation).z();
    if (depth <= 0.0)
      fail(ErrorCode::BehindCamera,
           "triangulated depth " + std::to_string(depth) + " behind a view");
  }
  return point;
}

Eigen::Vector3d triangulate_multiview(std::span<const Vec2> pixels,
                                      std::span<const Pose> poses,
                                      const Intrinsics& intrinsics) {
  if (pixels.size() != poses.size() || pixels.size() < 2)
    fail(ErrorCode::InvariantViolation, "need >= 2 matched pixel/pose rows");
  double max_baseline = 0.0;
  for (size_t i = 1; i < poses.size(); ++i)
    max_baseline =
        std::max(max_baseline, (poses[i].center() - poses[0].center()).norm());
  if (max_baseline < 1e-9)
    fail(ErrorCode::DegenerateBaseline, "all camera centers coincide");

  Eigen::MatrixXd design(2 * pixels.size(), 4);
  for (size_t i = 0; i < pixels.size(); ++i) {
    Eigen::Matrix<double, 3, 4> p = projection_matrix(poses[i], intrinsics);
    design.row(static_cast<Eigen::Index>(2 * i)) = pixels[i].x * p.row(2) - p.row(0);
    design.row(static_cast<Eigen::Index>(2 * i + 1)) = pixels[i].y * p.row(2) - p.row(1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinV);
  Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-15)
    fail(ErrorCode::DegenerateBaseline, "triangulated point at infinity");
  return h.head<3>() / h(3);
}

Vec2 project_point(const Eigen::Vector3d& point, const Pose& pose,
                   const Intrinsics& intrinsics, double* depth_out) {
  Eigen::Vector3d cam = pose.rotation * point + pose.translation;
  if (depth_out) *depth_out = cam.z();
  return {intrinsics.fx * cam.x() / cam.z() + intrinsics.cx,
          intrinsics.fy * cam.y() / cam.z() + intrinsics.cy};
}

std::string scene_to_json(const Scene& scene, bool with_observations) {
  json j;
  j["seed"] = scene.seed;
  j["motion"] = std::string(to_string(scene.motion));
  j["intrinsics"] = {{"fx", scene.intrinsics.fx}, {"fy", scene.intrinsics.fy},
                     {"cx", scene.intrinsics.cx}, {"cy", scene.intrinsics.cy},
                     {"width", scene.intrinsics.width},
                     {"height", scene.intrinsics.height}};
  j["poses"] = json::array();
  for (const Pose& pose : scene.poses) {
    json jp;
    jp["rotation"] = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) jp["rotation"].push_back(pose.rotation(r, c));
    jp["translation"] = {pose.translation.x(), pose.translation.y(),
                         pose.translation.z()};
    j["poses"].push_back(std::move(jp));
  }
  j["points"] = json::array();
  for (const auto& p : scene.points) j["points"].push_back({p.x(), p.y(), p.z()});
  if (with_observations) {
    j["observations"] = json::array();
    for (const auto& obs : project_all(scene)) {
      j["observations"].push_back({{"frame", obs.frame_index},
                                   {"point", obs.point_id},
                                   {"u", obs.pixel.x},
                                   {"v", obs.pixel.y},
                                   {"depth", obs.depth}});
    }
  }
  return j.dump(2) + "\n";
}

Scene scene_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::TypeError, std::string("scene json: ") + e.what());
  }
  try {
    Scene scene;
    scene.seed = j.value("seed", 0ull);
    if (auto motion = parse_motion_pattern(j.value("motion", "orbit")))
      scene.motion = *motion;
    const auto& k = j.at("intrinsics");
    scene.intrinsics = {k.at("fx"), k.at("fy"), k.at("cx"), k.at("cy"),
                        k.at("width"), k.at("height")};
    for (const auto& jp : j.at("poses")) {
      Pose pose;
      const auto& r = jp.at("rotation");
      for (int i = 0; i < 9; ++i) pose.rotation(i / 3, i % 3) = r.at(i);
      const auto& t = jp.at("translation");
      pose.translation = Eigen::Vector3d(t.at(0), t.at(1), t.at(2));
      if (!pose.is_valid_rotation())
        fail(ErrorCode::InvariantViolation, "pose rotation is not orthonormal");
      scene.poses.push_back(pose);
    }
    for (const auto& p : j.at("points"))
      scene.points.emplace_back(p.at(0), p.at(1), p.at(2));
    if (scene.poses.size() < 2)
      fail(ErrorCode::InvariantViolation, "scene needs >= 2 poses");
    return scene;
  } catch (const json::exception& e) {
    fail(ErrorCode::TypeError, std::string("scene json: ") + e.what());
  }
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  write_file_text(path, scene_to_json(scene));
}

Scene load_scene(const std::filesystem::path& path) {
  return scene_from_json(read_file_text(path));
}

}  // namespace mvsfm
