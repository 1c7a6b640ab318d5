#include "doctest.h"

#include <random>

#include "helpers.hpp"
#include "mvsfm/metrics.hpp"
#include "mvsfm/synth.hpp"
#include "mvsfm/trajectory.hpp"

using namespace mvsfm;

namespace {

Scene tiny_manual_scene() {
  Scene scene;
  scene.intrinsics = {100.0, 100.0, 0.0, 0.0, 100, 100};
  scene.poses.resize(2);
  return scene;
}

std::vector<DenseMotionField> upsample_all(const std::vector<BlockMotionField>& fields) {
  std::vector<DenseMotionField> dense;
  for (const auto& f : fields) dense.push_back(upsample_zoh(f));
  return dense;
}

}  // namespace

TEST_CASE("generate_scene motion patterns") {
  SUBCASE("lateral poses differ only in x translation") {
    Scene scene = generate_scene(1, 2, MotionPattern::Lateral, 7);
    REQUIRE(scene.poses.size() == 2);
    CHECK(scene.poses[0].rotation.isApprox(scene.poses[1].rotation));
    CHECK(scene.poses[0].translation.y() == scene.poses[1].translation.y());
    CHECK(scene.poses[0].translation.z() == scene.poses[1].translation.z());
    CHECK(scene.poses[0].translation.x() != scene.poses[1].translation.x());
  }
  SUBCASE("deterministic for a fixed seed") {
    Scene a = generate_scene(120, 10, MotionPattern::Orbit, 1);
    Scene b = generate_scene(120, 10, MotionPattern::Orbit, 1);
    CHECK(scene_to_json(a) == scene_to_json(b));
  }
  SUBCASE("forward scenes keep positive depth in frame 0") {
    Scene scene = generate_scene(100, 12, MotionPattern::Forward, 3);
    for (const auto& p : scene.points) {
      Eigen::Vector3d cam = scene.poses[0].rotation * p + scene.poses[0].translation;
      CHECK(cam.z() > 0.0);
    }
  }
  SUBCASE("degenerate motion is rejected") {
    SceneParams params;
    params.lateral_step = 0.0;
    CHECK_THROWS_AS(generate_scene(10, 4, MotionPattern::Lateral, 1, params), Error);
  }
  SUBCASE("orbit poses are orthonormal and look at the scene") {
    Scene scene = generate_scene(50, 8, MotionPattern::Orbit, 5);
    for (const auto& pose : scene.poses) CHECK(pose.is_valid_rotation());
  }
  SUBCASE("projected separation holds in every frame") {
    SceneParams params;
    Scene scene = generate_scene(80, 10, MotionPattern::Orbit, 9, params);
    for (uint32_t t = 0; t < 10; ++t) {
      auto obs = project(scene, t);
      REQUIRE(obs.size() == 80);  // placement guarantees all-frame visibility
      for (size_t i = 0; i < obs.size(); ++i)
        for (size_t j = i + 1; j < obs.size(); ++j)
          CHECK(distance(obs[i].pixel, obs[j].pixel) >=
                params.min_separation_px - 1e-9);
    }
  }
}

TEST_CASE("project implements the pinhole model") {
  Scene scene = tiny_manual_scene();
  scene.points = {{0, 0, 5}, {1, 0, 5}, {0, 0, -1}};
  auto obs = project(scene, 0);
  REQUIRE(obs.size() == 2);  // the point behind the camera is omitted
  CHECK(obs[0].point_id == 0);
  CHECK(obs[0].pixel.x == doctest::Approx(0.0));
  CHECK(obs[0].pixel.y == doctest::Approx(0.0));
  CHECK(obs[0].depth == doctest::Approx(5.0));
  CHECK(obs[1].point_id == 1);
  CHECK(obs[1].pixel.x == doctest::Approx(20.0));  // u = 100 * 1/5
  CHECK(obs[1].pixel.y == doctest::Approx(0.0));
}

TEST_CASE("render_mv_fields produces backward vectors") {
  SUBCASE("one pixel per frame rightward content motion gives mv (-8,0)") {
    Scene scene;
    scene.intrinsics = {100.0, 100.0, 32.0, 32.0, 64, 64};
    // camera slides -x so the projection moves +1 px per frame
    for (uint32_t t = 0; t < 4; ++t) {
      Pose pose;
      pose.translation = Eigen::Vector3d(0.05 * t, 0.0, 0.0);
      scene.poses.push_back(pose);
    }
    scene.points = {{-0.5, 0.0, 5.0}};
    auto fields = render_mv_fields(scene, 0.0);
    REQUIRE(fields.size() == 4);
    CHECK(fields[0].frame_kind == FrameKind::Key);
    for (size_t t = 1; t < 4; ++t) {
      REQUIRE(fields[t].blocks.size() == 1);
      CHECK(fields[t].blocks[0].mv == MotionVector{-8, 0});
      CHECK(fields[t].blocks[0].ref_offset == 1);
    }
  }
  SUBCASE("duplicated poses give zero motion") {
    Scene scene;
    scene.intrinsics = {100.0, 100.0, 32.0, 32.0, 64, 64};
    scene.poses.resize(3);  // identical identity poses
    scene.points = {{0.0, 0.0, 5.0}, {0.4, 0.3, 4.0}};
    auto fields = render_mv_fields(scene, 0.0);
    for (size_t t = 1; t < fields.size(); ++t)
      for (const auto& b : fields[t].blocks) CHECK(b.mv == MotionVector{0, 0});
  }
  SUBCASE("rendered fields satisfy the tiling invariant") {
    Scene scene = generate_scene(60, 6, MotionPattern::Orbit, 11);
    auto fields = render_mv_fields(scene, 0.5);
    std::vector<uint8_t> bytes;
    CHECK_NOTHROW(write_mvf(fields, bytes));  // writer re-validates tiling
    auto loaded = load_mvf(bytes);
    CHECK(loaded == fields);
  }
  SUBCASE("backward consistency within block quantization") {
    Scene scene = generate_scene(40, 5, MotionPattern::Orbit, 13);
    auto fields = render_mv_fields(scene, 0.0);
    std::vector<std::vector<std::optional<Vec2>>> pixels(
        scene.poses.size(), std::vector<std::optional<Vec2>>(scene.points.size()));
    for (uint32_t t = 0; t < scene.poses.size(); ++t)
      for (const auto& obs : project(scene, t)) pixels[t][obs.point_id] = obs.pixel;

    for (uint32_t t = 1; t < fields.size(); ++t) {
      auto dense = upsample_zoh(fields[t]);
      for (uint32_t p = 0; p < scene.points.size(); ++p) {
        if (!pixels[t][p] || !pixels[t - 1][p]) continue;
        auto cell = mv_at(dense, *pixels[t][p]);
        if (!cell) continue;  // another point dominated this block
        Vec2 reconstructed = *pixels[t][p] + cell->mv.to_pixels();
        // half diagonal of a 16x16 block plus rounding
        CHECK(distance(reconstructed, *pixels[t - 1][p]) <= 16.0 * 0.7072 + 0.09);
      }
    }
  }
  SUBCASE("deterministic rendering, including noise") {
    Scene scene = generate_scene(30, 4, MotionPattern::Orbit, 17);
    auto a = render_mv_fields(scene, 0.3);
    auto b = render_mv_fields(scene, 0.3);
    CHECK(a == b);
  }
}

TEST_CASE("triangulate_pair closed forms") {
  Intrinsics k{100.0, 100.0, 0.0, 0.0, 100, 100};
  Pose left, right;
  left.translation = Eigen::Vector3d(1, 0, 0);    // center (-1,0,0)
  right.translation = Eigen::Vector3d(-1, 0, 0);  // center (1,0,0)

  SUBCASE("symmetric stereo") {
    Observation a{0, 0, {20.0, 0.0}, 0.0};
    Observation b{1, 0, {-20.0, 0.0}, 0.0};
    Eigen::Vector3d point = triangulate_pair(a, b, left, right, k);
    CHECK(point.x() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(point.y() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(point.z() == doctest::Approx(5.0).epsilon(1e-9));
  }
  SUBCASE("identical poses are degenerate") {
    Observation a{0, 0, {20.0, 0.0}, 0.0};
    CHECK_THROWS_AS(triangulate_pair(a, a, left, left, k), Error);
  }
  SUBCASE("points behind the cameras are rejected") {
    Observation a{0, 0, {20.0, 0.0}, 0.0};
    Observation b{1, 0, {20.0, 0.0}, 0.0};
    // parallel-ish rays meeting behind: build from a mirrored geometry
    Observation am{0, 0, {-20.0, 0.0}, 0.0};
    Observation bm{1, 0, {20.0, 0.0}, 0.0};
    CHECK_THROWS_AS(triangulate_pair(am, bm, left, right, k), Error);
    (void)a;
    (void)b;
  }
}

TEST_CASE("triangulation inverts projection") {
  Scene scene = generate_scene(50, 6, MotionPattern::Orbit, 19);
  auto frame0 = project(scene, 0);
  auto frame5 = project(scene, 5);
  REQUIRE(frame0.size() == scene.points.size());
  REQUIRE(frame5.size() == scene.points.size());
  for (uint32_t p = 0; p < scene.points.size(); ++p) {
    Eigen::Vector3d recovered = triangulate_pair(frame0[p], frame5[p], scene.poses[0],
                                                 scene.poses[5], scene.intrinsics);
    CHECK((recovered - scene.points[p]).norm() < 1e-6);
  }

  SUBCASE("multiview agrees") {
    for (uint32_t p = 0; p < 10; ++p) {
      std::vector<Vec2> pixels;
      std::vector<Pose> poses;
      for (uint32_t t = 0; t < scene.poses.size(); ++t) {
        auto obs = project(scene, t);
        pixels.push_back(obs[p].pixel);
        poses.push_back(scene.poses[t]);
      }
      Eigen::Vector3d recovered = triangulate_multiview(pixels, poses, scene.intrinsics);
      CHECK((recovered - scene.points[p]).norm() < 1e-6);
    }
  }
}

TEST_CASE("scene json round-trips") {
  Scene scene = generate_scene(25, 5, MotionPattern::Forward, 23);
  std::string text = scene_to_json(scene);
  Scene loaded = scene_from_json(text);
  CHECK(loaded.seed == scene.seed);
  CHECK(loaded.motion == scene.motion);
  REQUIRE(loaded.points.size() == scene.points.size());
  REQUIRE(loaded.poses.size() == scene.poses.size());
  for (size_t i = 0; i < scene.points.size(); ++i)
    CHECK((loaded.points[i] - scene.points[i]).norm() < 1e-12);
  for (size_t i = 0; i < scene.poses.size(); ++i) {
    CHECK((loaded.poses[i].rotation - scene.poses[i].rotation).norm() < 1e-12);
    CHECK((loaded.poses[i].translation - scene.poses[i].translation).norm() < 1e-12);
  }
  CHECK(scene_to_json(loaded) == text);
}

TEST_CASE("end-to-end oracle at reduced scale") {
  // 200 points, 12 frames, noiseless: upsample -> track -> triangulate with
  // the true poses recovers the cloud to well under 1e-2 scene units.
  Scene scene = generate_scene(200, 12, MotionPattern::Orbit, 2);
  auto fields = render_mv_fields(scene, 0.0);
  auto dense = upsample_all(fields);

  TrackParams params;
  auto trajectories = filter_persistent(build_trajectories(dense, params), params);
  REQUIRE(!trajectories.empty());

  std::vector<Eigen::Vector3d> recovered;
  for (const auto& t : trajectories) {
    std::vector<Vec2> pixels;
    std::vector<Pose> poses;
    for (const auto& s : t.samples) {
      pixels.push_back(s.position);
      poses.push_back(scene.poses[s.frame_index]);
    }
    recovered.push_back(triangulate_multiview(pixels, poses, scene.intrinsics));
  }
  REQUIRE(!recovered.empty());
  double d = chamfer(recovered, scene.points);
  CHECK(d < 1e-2);
}
