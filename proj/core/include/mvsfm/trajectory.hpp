#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "mvsfm/common.hpp"
#include "mvsfm/motionfield.hpp"

namespace mvsfm {

struct TrackParams {
  // Cosine-difference termination threshold in [0,2]. The source material
  // leaves the value open; 0.3 allows ~45 degrees of direction change
  // between consecutive motion-compensated vectors.
  double cos_diff_threshold = 0.3;
  // Tracks must span at least this many distinct frames (strictly more than
  // 3 with the default).
  uint32_t min_span_frames = 4;
  // Motion-compensated linking tolerance in pixels.
  double link_radius = 2.0;
  // Emit matches only for frame pairs at most this far apart; 0 = unlimited.
  uint32_t pair_span_cap = 8;
  // Below this magnitude a vector's direction is noise; such cells link on
  // proximity alone.
  double min_mv_magnitude_px = 0.25;
};

enum class TerminationReason : uint8_t {
  CosineBreak,
  InvalidCell,
  OutOfFrame,
  EndOfSequence,
  MagnitudeGate,
};

std::string_view to_string(TerminationReason reason);

struct TrajectorySample {
  uint32_t frame_index = 0;
  Vec2 position;
  // The backward motion vector of the cell that produced this sample; the
  // seed sample at the chain's start has none. For adjacent samples,
  // position[k] == position[k+1] + mv[k+1]/8 exactly.
  std::optional<MotionVector> mv;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  TerminationReason terminated_reason = TerminationReason::EndOfSequence;

  uint32_t first_frame() const { return samples.front().frame_index; }
  uint32_t last_frame() const { return samples.back().frame_index; }
  size_t span_frames() const { return samples.size(); }
};

struct ImageKeypoints {
  uint32_t frame_index = 0;
  std::vector<Vec2> keypoints;
  // Quantized position -> keypoint index (0.5 px quantum).
  std::map<std::pair<int64_t, int64_t>, uint32_t> dedup_index;

  uint32_t intern(Vec2 pos);
};

using FramePair = std::pair<uint32_t, uint32_t>;
using IndexPair = std::pair<uint32_t, uint32_t>;

struct MatchSet {
  std::map<FramePair, std::vector<IndexPair>> pairs;

  size_t total_matches() const;
};

// 1 - cos(angle) between two motion vectors, in [0,2]. Vectors with
// magnitude below the gate (1/8-pel units derived from min_mag_px) have no
// usable direction: both below -> 0, exactly one below -> 2.
double cosine_difference(MotionVector a, MotionVector b, double min_mag_px = 0.0);

// Chains dense fields into trajectories by accumulating backward motion
// vectors. Fields must be sorted by frame_index.
std::vector<Trajectory> build_trajectories(std::span<const DenseMotionField> fields,
                                           const TrackParams& params);

// Keeps trajectories spanning at least params.min_span_frames distinct frames.
std::vector<Trajectory> filter_persistent(std::vector<Trajectory> trajectories,
                                          const TrackParams& params);

struct MatchTables {
  std::vector<ImageKeypoints> frames;  // sorted by frame_index
  MatchSet matches;

  const ImageKeypoints* find_frame(uint32_t frame_index) const;
};

// Registers every sample as a (deduplicated) keypoint and emits one match per
// frame pair along each trajectory, capped by pair_span_cap. One-to-one
// conflicts within a frame pair go to the longer trajectory, then lower id.
MatchTables trajectories_to_matches(std::span<const Trajectory> trajectories,
                                    const TrackParams& params);

}  // namespace mvsfm
