#include "doctest.h"

#include <random>

#include "helpers.hpp"
#include "mvsfm/trajectory.hpp"

using namespace mvsfm;

namespace {

std::vector<DenseMotionField> upsample_all(const std::vector<BlockMotionField>& fields) {
  std::vector<DenseMotionField> dense;
  dense.reserve(fields.size());
  for (const auto& f : fields) dense.push_back(upsample_zoh(f));
  return dense;
}

// Uniform-motion sequence: key frame 0, then constant-mv inter frames.
std::vector<DenseMotionField> constant_fields(uint32_t size, uint32_t frames,
                                              MotionVector mv) {
  std::vector<BlockMotionField> fields{test::key_field(size)};
  for (uint32_t t = 1; t <= frames; ++t)
    fields.push_back(test::uniform_field(t, size, mv));
  return upsample_all(fields);
}

const Trajectory* find_starting_at(const std::vector<Trajectory>& trajectories,
                                   Vec2 pos, uint32_t frame = 0) {
  for (const auto& t : trajectories)
    if (t.samples.front().frame_index == frame &&
        distance(t.samples.front().position, pos) < 1e-12)
      return &t;
  return nullptr;
}

// Exhaustive tracker with the same linking contract but naive per-cell
// scanning and immediate claiming; the reference for unique-cell fields.
std::vector<Trajectory> naive_tracker(std::span<const DenseMotionField> fields,
                                      const TrackParams& params) {
  struct Chain {
    std::vector<TrajectorySample> samples;
    bool extended_this_frame = false;
  };
  std::vector<Chain> chains;
  const double gate = params.min_mv_magnitude_px * 8.0;

  for (const auto& field : fields) {
    for (auto& c : chains) c.extended_this_frame = false;
    const uint32_t t = field.frame_index;
    for (uint32_t cy = 0; cy < field.grid_h; ++cy) {
      for (uint32_t cx = 0; cx < field.grid_w; ++cx) {
        const DenseCell& cell = field.cell(cx, cy);
        if (!cell.valid || t < cell.ref_offset) continue;
        double cw = std::min<double>(4.0, field.width - 4.0 * cx);
        double ch = std::min<double>(4.0, field.height - 4.0 * cy);
        Vec2 center{4.0 * cx + cw / 2.0, 4.0 * cy + ch / 2.0};
        Vec2 source = center + cell.mv.to_pixels();
        uint32_t src_frame = t - cell.ref_offset;

        int best = -1;
        double best_dist = 0.0;
        for (size_t i = 0; i < chains.size(); ++i) {
          const auto& head = chains[i].samples.back();
          if (chains[i].extended_this_frame || head.frame_index != src_frame) continue;
          double d = distance(head.position, source);
          if (d > params.link_radius) continue;
          double mag = cell.mv.magnitude_eighth_pel();
          if (mag > gate) {
            double head_mag = head.mv->magnitude_eighth_pel();
            if (head_mag <= gate) continue;
            if (cosine_difference(*head.mv, cell.mv) > params.cos_diff_threshold)
              continue;
          }
          if (best < 0 || d < best_dist) {
            best = static_cast<int>(i);
            best_dist = d;
          }
        }
        if (best >= 0) {
          Vec2 next = chains[static_cast<size_t>(best)].samples.back().position -
                      cell.mv.to_pixels();
          if (next.x >= 0 && next.y >= 0 && next.x < field.width &&
              next.y < field.height) {
            chains[static_cast<size_t>(best)].samples.push_back({t, next, cell.mv});
            chains[static_cast<size_t>(best)].extended_this_frame = true;
            continue;
          }
        }
        bool seed_ok = source.x >= 0 && source.y >= 0 && source.x < field.width &&
                       source.y < field.height;
        if (seed_ok) {
          Chain chain;
          chain.samples.push_back({src_frame, source, std::nullopt});
          chain.samples.push_back({t, center, cell.mv});
          chain.extended_this_frame = true;
          chains.push_back(std::move(chain));
        }
      }
    }
  }
  std::vector<Trajectory> out;
  for (auto& c : chains) out.push_back({std::move(c.samples), TerminationReason::EndOfSequence});
  return out;
}

std::multiset<std::vector<std::tuple<uint32_t, double, double>>> sample_sets(
    const std::vector<Trajectory>& trajectories) {
  std::multiset<std::vector<std::tuple<uint32_t, double, double>>> sets;
  for (const auto& t : trajectories) {
    std::vector<std::tuple<uint32_t, double, double>> s;
    for (const auto& sample : t.samples)
      s.emplace_back(sample.frame_index, sample.position.x, sample.position.y);
    sets.insert(std::move(s));
  }
  return sets;
}

}  // namespace

TEST_CASE("cosine_difference basics") {
  CHECK(cosine_difference({8, 0}, {8, 0}) == doctest::Approx(0.0));
  CHECK(cosine_difference({8, 0}, {0, 8}) == doctest::Approx(1.0));
  CHECK(cosine_difference({8, 0}, {-8, 0}) == doctest::Approx(2.0));
  CHECK(cosine_difference({0, 0}, {0, 0}) == doctest::Approx(0.0));
  CHECK(cosine_difference({0, 0}, {8, 0}) == doctest::Approx(2.0));

  SUBCASE("scale invariance") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
      MotionVector a{static_cast<int16_t>(1 + rng() % 50),
                     static_cast<int16_t>(static_cast<int64_t>(rng() % 101) - 50)};
      MotionVector b{static_cast<int16_t>(static_cast<int64_t>(rng() % 101) - 50),
                     static_cast<int16_t>(1 + rng() % 50)};
      int16_t k = static_cast<int16_t>(2 + rng() % 5);
      MotionVector ka{static_cast<int16_t>(k * a.dx), static_cast<int16_t>(k * a.dy)};
      MotionVector kb{static_cast<int16_t>(k * b.dx), static_cast<int16_t>(k * b.dy)};
      CHECK(cosine_difference(ka, kb) ==
            doctest::Approx(cosine_difference(a, b)).epsilon(1e-12));
    }
  }
  SUBCASE("gate convention") {
    // both below the gate -> 0; exactly one below -> 2
    CHECK(cosine_difference({1, 0}, {0, 1}, 0.25) == doctest::Approx(0.0));
    CHECK(cosine_difference({1, 0}, {80, 0}, 0.25) == doctest::Approx(2.0));
  }
}

TEST_CASE("constant motion accumulates one pixel per frame") {
  // mv (-8,0) is a backward vector of -1 px: content moves +1 px per frame.
  auto fields = constant_fields(64, 4, {-8, 0});
  TrackParams params;
  auto trajectories = build_trajectories(fields, params);

  // The chain seeded by cell (2,2) starts at its motion-compensated source
  // (9,10) and advances +1 px/frame: x = 9,10,11,12,13 over frames 0..4.
  const Trajectory* t = find_starting_at(trajectories, {9.0, 10.0});
  REQUIRE(t != nullptr);
  REQUIRE(t->samples.size() == 5);
  for (uint32_t k = 0; k < 5; ++k) {
    CHECK(t->samples[k].frame_index == k);
    CHECK(t->samples[k].position.x == doctest::Approx(9.0 + k));
    CHECK(t->samples[k].position.y == doctest::Approx(10.0));
  }
  CHECK(t->terminated_reason == TerminationReason::EndOfSequence);

  SUBCASE("interior columns march to the end of the sequence") {
    size_t full = 0;
    for (const auto& traj : trajectories)
      if (traj.samples.size() == 5) {
        ++full;
        CHECK(traj.terminated_reason == TerminationReason::EndOfSequence);
      }
    CHECK(full == 15 * 16);  // 15 interior columns per row
  }
  SUBCASE("the rightmost column walks out of the frame") {
    const Trajectory* edge = find_starting_at(trajectories, {61.0, 10.0});
    REQUIRE(edge != nullptr);
    CHECK(edge->samples.size() == 3);
    CHECK(edge->terminated_reason == TerminationReason::OutOfFrame);
  }
}

TEST_CASE("orthogonal flip breaks trajectories at the flip frame") {
  std::vector<BlockMotionField> block_fields{test::key_field(64)};
  for (uint32_t t = 1; t <= 2; ++t)
    block_fields.push_back(test::uniform_field(t, 64, {-8, 0}));
  for (uint32_t t = 3; t <= 4; ++t)
    block_fields.push_back(test::uniform_field(t, 64, {0, -8}));
  auto fields = upsample_all(block_fields);

  TrackParams params;  // tau = 0.3
  auto trajectories = build_trajectories(fields, params);
  size_t broken = 0, restarted = 0;
  for (const auto& t : trajectories) {
    if (t.samples.front().frame_index == 0) {
      CHECK(t.samples.back().frame_index == 2);
      CHECK(t.terminated_reason == TerminationReason::CosineBreak);
      ++broken;
    } else {
      // new chains seeded at the flip: source sample at frame 2, then 3, 4
      CHECK(t.samples.front().frame_index == 2);
      CHECK(t.samples.back().frame_index == 4);
      ++restarted;
    }
  }
  CHECK(broken > 0);
  CHECK(restarted > 0);
}

TEST_CASE("direction threshold separates break from survive") {
  // ~63 degree turn: cos((-32,0),(-32,-64)) = 0.4472, difference 0.5528.
  // Both vectors are whole multiples of 4 px, so chains stay lattice-aligned
  // and linking never fails on proximity.
  CHECK(cosine_difference({-32, 0}, {-32, -64}) == doctest::Approx(0.5528).epsilon(1e-3));

  const uint32_t flip_frame = 3;
  std::vector<BlockMotionField> block_fields{test::key_field(128)};
  for (uint32_t t = 1; t <= 5; ++t)
    block_fields.push_back(test::uniform_field(
        t, 128, t < flip_frame ? MotionVector{-32, 0} : MotionVector{-32, -64}));
  auto fields = upsample_all(block_fields);

  SUBCASE("tau 0.3 terminates at the flip") {
    TrackParams params;
    params.cos_diff_threshold = 0.3;
    auto trajectories = build_trajectories(fields, params);
    const Trajectory* t = find_starting_at(trajectories, {14.0, 18.0});
    REQUIRE(t != nullptr);
    CHECK(t->samples.back().frame_index == flip_frame - 1);
    CHECK(t->terminated_reason == TerminationReason::CosineBreak);
  }
  SUBCASE("tau 0.6 survives the flip") {
    TrackParams params;
    params.cos_diff_threshold = 0.6;
    auto trajectories = build_trajectories(fields, params);
    const Trajectory* t = find_starting_at(trajectories, {14.0, 18.0});
    REQUIRE(t != nullptr);
    CHECK(t->samples.back().frame_index == 5);
    CHECK(t->terminated_reason == TerminationReason::EndOfSequence);
    // positions keep accumulating through the turn
    CHECK(t->samples[3].position.x == doctest::Approx(26.0));
    CHECK(t->samples[3].position.y == doctest::Approx(26.0));
  }
}

TEST_CASE("magnitude gate handles static-to-moving onsets") {
  std::vector<BlockMotionField> block_fields{test::key_field(64)};
  for (uint32_t t = 1; t <= 2; ++t)
    block_fields.push_back(test::uniform_field(t, 64, {0, 0}));
  for (uint32_t t = 3; t <= 4; ++t)
    block_fields.push_back(test::uniform_field(t, 64, {-32, 0}));
  auto fields = upsample_all(block_fields);

  TrackParams params;
  auto trajectories = build_trajectories(fields, params);
  size_t gated = 0;
  for (const auto& t : trajectories) {
    if (t.samples.front().frame_index == 0) {
      CHECK(t.samples.back().frame_index == 2);
      CHECK(t.terminated_reason == TerminationReason::MagnitudeGate);
      ++gated;
    }
  }
  CHECK(gated > 0);
}

TEST_CASE("tracks entering an intra region stop with InvalidCell") {
  std::vector<BlockMotionField> block_fields{test::key_field(64)};
  for (uint32_t t = 1; t <= 2; ++t)
    block_fields.push_back(test::uniform_field(t, 64, {0, 0}));
  BlockMotionField half;
  half.frame_index = 3;
  half.frame_kind = FrameKind::Inter;
  half.width = 64;
  half.height = 64;
  half.blocks.push_back({0, 0, 32, 64, {0, 0}, 1});
  half.intra_rects.push_back({32, 0, 32, 64});
  block_fields.push_back(half);
  auto fields = upsample_all(block_fields);

  TrackParams params;
  auto trajectories = build_trajectories(fields, params);
  const Trajectory* right = find_starting_at(trajectories, {50.0, 10.0});
  REQUIRE(right != nullptr);
  CHECK(right->samples.back().frame_index == 2);
  CHECK(right->terminated_reason == TerminationReason::InvalidCell);
  const Trajectory* left = find_starting_at(trajectories, {10.0, 10.0});
  REQUIRE(left != nullptr);
  CHECK(left->samples.back().frame_index == 3);
}

TEST_CASE("unsorted fields are rejected") {
  auto fields = constant_fields(64, 2, {-8, 0});
  std::swap(fields[0], fields[1]);
  TrackParams params;
  CHECK_THROWS_AS(build_trajectories(fields, params), Error);
}

TEST_CASE("multi-frame backward references skip ref_offset frames") {
  // frame 2 links directly back to frame 0 (ref_offset 2)
  std::vector<BlockMotionField> block_fields{test::key_field(64),
                                             test::uniform_field(1, 64, {0, 0})};
  block_fields.push_back(test::uniform_field(2, 64, {-16, 0}, 2));
  auto fields = upsample_all(block_fields);
  TrackParams params;
  auto trajectories = build_trajectories(fields, params);
  bool found_gap = false;
  for (const auto& t : trajectories) {
    for (size_t i = 1; i < t.samples.size(); ++i) {
      uint32_t gap = t.samples[i].frame_index - t.samples[i - 1].frame_index;
      if (gap == 2) found_gap = true;
      CHECK((gap == 1 || gap == 2));
    }
  }
  CHECK(found_gap);
}

TEST_CASE("chain invariants hold on random-ish motion") {
  std::mt19937_64 rng(57);
  std::vector<BlockMotionField> block_fields{test::key_field(128)};
  for (uint32_t t = 1; t <= 6; ++t)
    block_fields.push_back(test::random_partition(128, 128, rng, t, 0.5, 0.15));
  auto fields = upsample_all(block_fields);

  TrackParams params;
  auto trajectories = build_trajectories(fields, params);
  REQUIRE(!trajectories.empty());
  for (const auto& t : trajectories) {
    REQUIRE(t.samples.size() >= 2);
    CHECK_FALSE(t.samples.front().mv.has_value());
    for (size_t k = 1; k < t.samples.size(); ++k) {
      CHECK(t.samples[k].frame_index > t.samples[k - 1].frame_index);
      REQUIRE(t.samples[k].mv.has_value());
      // motion-compensated chain constraint
      Vec2 reconstructed = t.samples[k].position + t.samples[k].mv->to_pixels();
      CHECK(distance(t.samples[k - 1].position, reconstructed) <=
            params.link_radius + 1e-9);
      // interior extensions with usable directions stay under tau
      if (k + 1 < t.samples.size()) {
        double gate = params.min_mv_magnitude_px * 8.0;
        if (t.samples[k].mv->magnitude_eighth_pel() > gate &&
            t.samples[k + 1].mv->magnitude_eighth_pel() > gate) {
          CHECK(cosine_difference(*t.samples[k].mv, *t.samples[k + 1].mv) <=
                params.cos_diff_threshold + 1e-12);
        }
      }
    }
    for (const auto& s : t.samples) {
      CHECK(s.position.x >= 0.0);
      CHECK(s.position.y >= 0.0);
      CHECK(s.position.x < 128.0);
      CHECK(s.position.y < 128.0);
    }
  }
}

TEST_CASE("build_trajectories matches the exhaustive tracker on unique-cell fields") {
  // A few points, one valid cell per point per frame, integer velocities.
  struct Mover {
    Vec2 start;
    Vec2 velocity;  // px per frame
  };
  std::vector<Mover> movers{{{10, 10}, {1, 0}},  {{30, 40}, {0, 2}},
                            {{50, 20}, {2, 1}},  {{70, 70}, {-1, 1}},
                            {{90, 50}, {-2, 0}}, {{20, 80}, {1, -1}}};

  std::vector<DenseMotionField> fields;
  for (uint32_t t = 0; t < 8; ++t) {
    DenseMotionField field;
    field.frame_index = t;
    field.width = 128;
    field.height = 128;
    field.grid_w = 32;
    field.grid_h = 32;
    field.cells.assign(32 * 32, DenseCell{});
    if (t > 0) {
      for (const auto& m : movers) {
        Vec2 pos = m.start + static_cast<double>(t) * m.velocity;
        auto cx = static_cast<uint32_t>(pos.x / 4.0);
        auto cy = static_cast<uint32_t>(pos.y / 4.0);
        MotionVector mv{static_cast<int16_t>(std::llround(-m.velocity.x * 8)),
                        static_cast<int16_t>(std::llround(-m.velocity.y * 8))};
        field.cell(cx, cy) = {mv, 1, true};
      }
    }
    fields.push_back(std::move(field));
  }

  TrackParams params;
  auto fast = build_trajectories(fields, params);
  auto naive = naive_tracker(fields, params);
  CHECK(sample_sets(fast) == sample_sets(naive));
}

TEST_CASE("filter_persistent keeps spans of min_span_frames or more") {
  auto make = [](std::initializer_list<uint32_t> frames) {
    Trajectory t;
    for (uint32_t f : frames) t.samples.push_back({f, {0, 0}, std::nullopt});
    return t;
  };
  std::vector<Trajectory> trajectories;
  trajectories.push_back(make({0, 1}));
  trajectories.push_back(make({0, 1, 2}));
  trajectories.push_back(make({0, 1, 2, 3}));
  trajectories.push_back(make({2, 3, 4, 5, 6, 7, 8}));

  TrackParams params;  // min_span_frames = 4: strictly more than 3 frames
  auto kept = filter_persistent(trajectories, params);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].samples.size() == 4);
  CHECK(kept[1].samples.size() == 7);

  SUBCASE("empty input") {
    CHECK(filter_persistent({}, params).empty());
  }
  SUBCASE("three-frame span is removed, four-frame kept") {
    std::vector<Trajectory> pair;
    pair.push_back(make({0, 1, 2}));
    pair.push_back(make({0, 1, 2, 3}));
    auto result = filter_persistent(pair, params);
    REQUIRE(result.size() == 1);
    CHECK(result[0].samples.size() == 4);
  }
}

TEST_CASE("trajectories_to_matches emits capped frame pairs") {
  auto make_traj = [](std::initializer_list<std::pair<uint32_t, Vec2>> samples) {
    Trajectory t;
    for (const auto& [f, p] : samples) t.samples.push_back({f, p, std::nullopt});
    return t;
  };

  SUBCASE("span cap 2 gives 5 matches over 4 frames") {
    std::vector<Trajectory> trajectories{make_traj(
        {{0, {1, 1}}, {1, {2, 1}}, {2, {3, 1}}, {3, {4, 1}}})};
    TrackParams params;
    params.pair_span_cap = 2;
    auto tables = trajectories_to_matches(trajectories, params);
    CHECK(tables.matches.total_matches() == 5);
    std::vector<FramePair> expected{{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}};
    for (const auto& pair : expected) {
      REQUIRE(tables.matches.pairs.contains(pair));
      CHECK(tables.matches.pairs.at(pair).size() == 1);
    }
  }
  SUBCASE("unlimited cap gives C(4,2)") {
    std::vector<Trajectory> trajectories{make_traj(
        {{0, {1, 1}}, {1, {2, 1}}, {2, {3, 1}}, {3, {4, 1}}})};
    TrackParams params;
    params.pair_span_cap = 0;
    auto tables = trajectories_to_matches(trajectories, params);
    CHECK(tables.matches.total_matches() == 6);
  }
  SUBCASE("colliding keypoints are shared and conflicts resolved") {
    // both trajectories pass through the same quantized spot in frame 2
    std::vector<Trajectory> trajectories{
        make_traj({{0, {1, 1}}, {1, {2, 1}}, {2, {10, 10}}, {3, {4, 1}}, {4, {5, 1}}}),
        make_traj({{1, {8, 8}}, {2, {10.1, 9.9}}, {3, {12, 12}}})};
    TrackParams params;
    auto tables = trajectories_to_matches(trajectories, params);

    const ImageKeypoints* frame2 = tables.find_frame(2);
    REQUIRE(frame2 != nullptr);
    // one keypoint at the shared quantized position
    size_t near = 0;
    for (const auto& kp : frame2->keypoints)
      if (distance(kp, {10, 10}) < 0.5) ++near;
    CHECK(near == 1);

    // invariants: indices valid, one-to-one per pair, no duplicates
    for (const auto& [pair, matches] : tables.matches.pairs) {
      const ImageKeypoints* fa = tables.find_frame(pair.first);
      const ImageKeypoints* fb = tables.find_frame(pair.second);
      REQUIRE(fa != nullptr);
      REQUIRE(fb != nullptr);
      std::set<uint32_t> seen_a, seen_b;
      std::set<IndexPair> seen_pairs;
      for (const auto& m : matches) {
        CHECK(m.first < fa->keypoints.size());
        CHECK(m.second < fb->keypoints.size());
        CHECK(seen_a.insert(m.first).second);
        CHECK(seen_b.insert(m.second).second);
        CHECK(seen_pairs.insert(m).second);
      }
    }

    // the longer trajectory owns the contested keypoint's matches
    auto naive = test::naive_matches(trajectories, params);
    REQUIRE(naive.matches.size() == tables.matches.pairs.size());
    for (const auto& [pair, matches] : naive.matches) {
      REQUIRE(tables.matches.pairs.contains(pair));
      CHECK(tables.matches.pairs.at(pair) == matches);
    }
  }
}

TEST_CASE("match emission equals the naive mirror on tracker output") {
  auto fields = constant_fields(64, 6, {-8, 0});
  TrackParams params;
  auto trajectories = filter_persistent(build_trajectories(fields, params), params);
  REQUIRE(!trajectories.empty());
  auto tables = trajectories_to_matches(trajectories, params);
  auto naive = test::naive_matches(trajectories, params);
  REQUIRE(tables.matches.pairs.size() == naive.matches.size());
  for (const auto& [pair, matches] : naive.matches)
    CHECK(tables.matches.pairs.at(pair) == matches);
  size_t naive_total = 0;
  for (const auto& [pair, matches] : naive.matches) naive_total += matches.size();
  CHECK(tables.matches.total_matches() == naive_total);
}
