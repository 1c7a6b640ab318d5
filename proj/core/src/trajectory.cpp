#include "mvsfm/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace mvsfm {

namespace {

constexpr double kBucketSize = 4.0;

int64_t bucket_key(double x, double y) {
  auto bx = static_cast<int64_t>(std::floor(x / kBucketSize));
  auto by = static_cast<int64_t>(std::floor(y / kBucketSize));
  return (bx << 32) ^ (by & 0xffffffffll);
}

// Spatial hash over trajectory head positions of a single frame.
struct HeadIndex {
  std::unordered_map<int64_t, std::vector<uint32_t>> buckets;

  void insert(Vec2 pos, uint32_t id) { buckets[bucket_key(pos.x, pos.y)].push_back(id); }

  void erase(Vec2 pos, uint32_t id) {
    auto it = buckets.find(bucket_key(pos.x, pos.y));
    if (it == buckets.end()) return;
    auto& v = it->second;
    v.erase(std::remove(v.begin(), v.end(), id), v.end());
  }

  template <typename Fn>
  void for_each_near(Vec2 pos, double radius, Fn&& fn) const {
    auto bx0 = static_cast<int64_t>(std::floor((pos.x - radius) / kBucketSize));
    auto bx1 = static_cast<int64_t>(std::floor((pos.x + radius) / kBucketSize));
    auto by0 = static_cast<int64_t>(std::floor((pos.y - radius) / kBucketSize));
    auto by1 = static_cast<int64_t>(std::floor((pos.y + radius) / kBucketSize));
    for (int64_t by = by0; by <= by1; ++by) {
      for (int64_t bx = bx0; bx <= bx1; ++bx) {
        auto it = buckets.find((bx << 32) ^ (by & 0xffffffffll));
        if (it == buckets.end()) continue;
        for (uint32_t id : it->second) fn(id);
      }
    }
  }
};

struct Builder {
  std::vector<TrajectorySample> samples;
  // Reason recorded when a link attempt rejected this head; cleared when a
  // later cell does extend it. Distance of the rejecting cell breaks ties.
  std::optional<TerminationReason> pending;
  double pending_dist = 0.0;

  const TrajectorySample& head() const { return samples.back(); }
};

enum class DirectionVerdict { Ok, CosineBreak, MagnitudeGate };

// Direction compatibility for linking. A sub-gate current vector carries no
// usable direction and links on proximity alone; a significant vector behind
// a sub-gate head is a motion onset and breaks the track.
DirectionVerdict check_direction(MotionVector head_mv, MotionVector mv,
                                 const TrackParams& params) {
  const double gate = params.min_mv_magnitude_px * 8.0;
  const double mag = mv.magnitude_eighth_pel();
  if (mag <= gate) return DirectionVerdict::Ok;
  const double head_mag = head_mv.magnitude_eighth_pel();
  if (head_mag <= gate) return DirectionVerdict::MagnitudeGate;
  const double dot = static_cast<double>(head_mv.dx) * mv.dx +
                     static_cast<double>(head_mv.dy) * mv.dy;
  const double diff = 1.0 - dot / (head_mag * mag);
  return diff > params.cos_diff_threshold ? DirectionVerdict::CosineBreak
                                          : DirectionVerdict::Ok;
}

Vec2 cell_center(const DenseMotionField& field, uint32_t cx, uint32_t cy) {
  double cw = std::min<double>(4.0, field.width - 4.0 * cx);
  double ch = std::min<double>(4.0, field.height - 4.0 * cy);
  return {4.0 * cx + cw / 2.0, 4.0 * cy + ch / 2.0};
}

bool in_frame(const DenseMotionField& field, Vec2 pos) {
  return pos.x >= 0.0 && pos.y >= 0.0 && pos.x < field.width && pos.y < field.height;
}

}  // namespace

std::string_view to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::CosineBreak: return "CosineBreak";
    case TerminationReason::InvalidCell: return "InvalidCell";
    case TerminationReason::OutOfFrame: return "OutOfFrame";
    case TerminationReason::EndOfSequence: return "EndOfSequence";
    case TerminationReason::MagnitudeGate: return "MagnitudeGate";
  }
  return "Unknown";
}

double cosine_difference(MotionVector a, MotionVector b, double min_mag_px) {
  const double gate = min_mag_px * 8.0;
  const double ma = a.magnitude_eighth_pel();
  const double mb = b.magnitude_eighth_pel();
  const bool a_low = ma <= gate;
  const bool b_low = mb <= gate;
  if (a_low && b_low) return 0.0;  // static content is self-consistent
  if (a_low || b_low) return 2.0;  // a start/stop without direction info
  const double dot = static_cast<double>(a.dx) * b.dx + static_cast<double>(a.dy) * b.dy;
  return 1.0 - dot / (ma * mb);
}

std::vector<Trajectory> build_trajectories(std::span<const DenseMotionField> fields,
                                           const TrackParams& params) {
  for (size_t i = 1; i < fields.size(); ++i) {
    if (fields[i].frame_index <= fields[i - 1].frame_index)
      fail(ErrorCode::UnsortedFields,
           "field " + std::to_string(i) + " (frame " +
               std::to_string(fields[i].frame_index) + ") not after frame " +
               std::to_string(fields[i - 1].frame_index));
  }
  if (fields.empty()) return {};

  std::vector<Builder> builders;
  std::unordered_map<uint32_t, HeadIndex> heads_by_frame;
  std::unordered_map<uint32_t, const DenseMotionField*> field_by_frame;
  for (const auto& f : fields) field_by_frame[f.frame_index] = &f;

  struct Candidate {
    double dist;
    uint32_t traj;
    uint32_t cell;  // row-major cell index within the current frame
  };
  struct CellInfo {
    Vec2 center;
    Vec2 source;
    MotionVector mv;
    uint32_t ref_offset;
    bool seedable;  // source frame exists and source position is in frame
    uint32_t src_frame;
  };

  for (const auto& field : fields) {
    const uint32_t t = field.frame_index;

    std::vector<Candidate> candidates;
    std::unordered_map<uint32_t, CellInfo> cell_infos;

    for (uint32_t cy = 0; cy < field.grid_h; ++cy) {
      for (uint32_t cx = 0; cx < field.grid_w; ++cx) {
        const DenseCell& cell = field.cell(cx, cy);
        if (!cell.valid) continue;
        const uint32_t cell_id = cy * field.grid_w + cx;

        CellInfo info;
        info.center = cell_center(field, cx, cy);
        info.mv = cell.mv;
        info.ref_offset = cell.ref_offset;
        info.source = info.center + cell.mv.to_pixels();
        info.seedable = t >= cell.ref_offset && in_frame(field, info.source);
        info.src_frame = t >= cell.ref_offset ? t - cell.ref_offset : 0;

        if (t >= cell.ref_offset) {
          auto heads = heads_by_frame.find(info.src_frame);
          if (heads != heads_by_frame.end()) {
            heads->second.for_each_near(info.source, params.link_radius, [&](uint32_t id) {
              Builder& b = builders[id];
              double d = distance(b.head().position, info.source);
              if (d > params.link_radius) return;
              DirectionVerdict verdict = check_direction(*b.head().mv, cell.mv, params);
              if (verdict == DirectionVerdict::Ok) {
                candidates.push_back({d, id, cell_id});
              } else {
                // Remember why the nearest rejecting cell refused this head.
                TerminationReason why = verdict == DirectionVerdict::CosineBreak
                                            ? TerminationReason::CosineBreak
                                            : TerminationReason::MagnitudeGate;
                if (!b.pending || d < b.pending_dist) {
                  b.pending = why;
                  b.pending_dist = d;
                }
              }
            });
          }
        }
        cell_infos.emplace(cell_id, info);
      }
    }

    // Deterministic conflict resolution regardless of evaluation order:
    // nearest link first, then lowest trajectory id, then cell scan order.
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      if (a.traj != b.traj) return a.traj < b.traj;
      return a.cell < b.cell;
    });

    std::unordered_set<uint32_t> cell_linked;
    std::unordered_set<uint32_t> traj_claimed;  // one extension per frame
    for (const Candidate& cand : candidates) {
      if (cell_linked.contains(cand.cell) || traj_claimed.contains(cand.traj)) continue;
      Builder& b = builders[cand.traj];
      const CellInfo& info = cell_infos.at(cand.cell);
      Vec2 next = b.head().position - info.mv.to_pixels();
      if (!in_frame(field, next)) {
        if (!b.pending || cand.dist < b.pending_dist) {
          b.pending = TerminationReason::OutOfFrame;
          b.pending_dist = cand.dist;
        }
        continue;
      }
      heads_by_frame[info.src_frame].erase(b.head().position, cand.traj);
      b.samples.push_back({t, next, info.mv});
      b.pending.reset();
      heads_by_frame[t].insert(next, cand.traj);
      cell_linked.insert(cand.cell);
      traj_claimed.insert(cand.traj);
    }

    // Unlinked cells seed new two-sample trajectories.
    for (uint32_t cy = 0; cy < field.grid_h; ++cy) {
      for (uint32_t cx = 0; cx < field.grid_w; ++cx) {
        const uint32_t cell_id = cy * field.grid_w + cx;
        auto it = cell_infos.find(cell_id);
        if (it == cell_infos.end()) continue;
        const CellInfo& info = it->second;
        if (cell_linked.contains(cell_id) || !info.seedable) continue;
        auto id = static_cast<uint32_t>(builders.size());
        Builder b;
        b.samples.push_back({info.src_frame, info.source, std::nullopt});
        b.samples.push_back({t, info.center, info.mv});
        builders.push_back(std::move(b));
        heads_by_frame[t].insert(info.center, id);
      }
    }
  }

  // Assign termination reasons. Heads that reached the final frame ended with
  // the sequence; otherwise a recorded link rejection wins, and failing that
  // the cell the head sits in at the next frame tells the story.
  const uint32_t last_frame = fields.back().frame_index;
  std::vector<Trajectory> result;
  result.reserve(builders.size());
  for (Builder& b : builders) {
    Trajectory traj;
    traj.samples = std::move(b.samples);
    const uint32_t head_frame = traj.samples.back().frame_index;
    if (head_frame >= last_frame) {
      traj.terminated_reason = TerminationReason::EndOfSequence;
    } else if (b.pending) {
      traj.terminated_reason = *b.pending;
    } else {
      auto next = field_by_frame.find(head_frame + 1);
      if (next == field_by_frame.end()) {
        traj.terminated_reason = TerminationReason::EndOfSequence;
      } else {
        const DenseMotionField& nf = *next->second;
        Vec2 pos = traj.samples.back().position;
        auto cx = static_cast<uint32_t>(std::floor(pos.x / 4.0));
        auto cy = static_cast<uint32_t>(std::floor(pos.y / 4.0));
        if (cx >= nf.grid_w || cy >= nf.grid_h || !nf.cell(cx, cy).valid) {
          traj.terminated_reason = TerminationReason::InvalidCell;
        } else {
          Vec2 cont = pos - nf.cell(cx, cy).mv.to_pixels();
          traj.terminated_reason = in_frame(nf, cont)
                                       ? TerminationReason::InvalidCell
                                       : TerminationReason::OutOfFrame;
        }
      }
    }
    result.push_back(std::move(traj));
  }
  return result;
}

std::vector<Trajectory> filter_persistent(std::vector<Trajectory> trajectories,
                                          const TrackParams& params) {
  std::erase_if(trajectories, [&](const Trajectory& t) {
    return t.span_frames() < params.min_span_frames;
  });
  return trajectories;
}

uint32_t ImageKeypoints::intern(Vec2 pos) {
  // 0.5 px dedup quantum, below the downstream matcher's tolerance.
  std::pair<int64_t, int64_t> key{std::llround(pos.x * 2.0), std::llround(pos.y * 2.0)};
  auto [it, inserted] = dedup_index.try_emplace(key, static_cast<uint32_t>(keypoints.size()));
  if (inserted) keypoints.push_back(pos);
  return it->second;
}

size_t MatchSet::total_matches() const {
  size_t n = 0;
  for (const auto& [key, matches] : pairs) n += matches.size();
  return n;
}

const ImageKeypoints* MatchTables::find_frame(uint32_t frame_index) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), frame_index,
                             [](const ImageKeypoints& kp, uint32_t f) {
                               return kp.frame_index < f;
                             });
  if (it == frames.end() || it->frame_index != frame_index) return nullptr;
  return &*it;
}

MatchTables trajectories_to_matches(std::span<const Trajectory> trajectories,
                                    const TrackParams& params) {
  MatchTables tables;
  std::map<uint32_t, ImageKeypoints> frames;

  // keypoint index per (trajectory, sample)
  std::vector<std::vector<uint32_t>> kp_index(trajectories.size());
  for (size_t i = 0; i < trajectories.size(); ++i) {
    kp_index[i].reserve(trajectories[i].samples.size());
    for (const auto& s : trajectories[i].samples) {
      auto [it, inserted] = frames.try_emplace(s.frame_index);
      if (inserted) it->second.frame_index = s.frame_index;
      kp_index[i].push_back(it->second.intern(s.position));
    }
  }

  // Longer trajectories claim their matches first; ids break ties.
  std::vector<uint32_t> order(trajectories.size());
  for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (trajectories[a].samples.size() != trajectories[b].samples.size())
      return trajectories[a].samples.size() > trajectories[b].samples.size();
    return a < b;
  });

  struct PairClaims {
    std::unordered_set<uint32_t> used_a;
    std::unordered_set<uint32_t> used_b;
  };
  std::map<FramePair, PairClaims> claims;

  for (uint32_t id : order) {
    const auto& samples = trajectories[id].samples;
    for (size_t i = 0; i < samples.size(); ++i) {
      for (size_t j = i + 1; j < samples.size(); ++j) {
        uint32_t fa = samples[i].frame_index;
        uint32_t fb = samples[j].frame_index;
        if (params.pair_span_cap != 0 && fb - fa > params.pair_span_cap) break;
        FramePair key{fa, fb};
        PairClaims& claim = claims[key];
        uint32_t ia = kp_index[id][i];
        uint32_t ib = kp_index[id][j];
        if (claim.used_a.contains(ia) || claim.used_b.contains(ib)) continue;
        claim.used_a.insert(ia);
        claim.used_b.insert(ib);
        tables.matches.pairs[key].emplace_back(ia, ib);
      }
    }
  }

  for (auto& [key, matches] : tables.matches.pairs) std::sort(matches.begin(), matches.end());

  tables.frames.reserve(frames.size());
  for (auto& [f, kp] : frames) tables.frames.push_back(std::move(kp));
  return tables;
}

}  // namespace mvsfm
