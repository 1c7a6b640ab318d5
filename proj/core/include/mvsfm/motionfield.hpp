#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mvsfm/common.hpp"
#include "mvsfm/container.hpp"
#include "mvsfm/error.hpp"

namespace mvsfm {

// Codec motion is kept in 1/8-pel integers end to end; conversion to pixel
// units happens only inside trajectory arithmetic, so accumulation stays on
// exact dyadic rationals.
struct MotionVector {
  int16_t dx = 0;  // 1/8-pel
  int16_t dy = 0;  // 1/8-pel

  friend bool operator==(const MotionVector&, const MotionVector&) = default;

  double magnitude_eighth_pel() const;
  Vec2 to_pixels() const { return {dx / 8.0, dy / 8.0}; }
};

// One coded block of the non-uniform partition. Backward reference only:
// ref_offset is the positive frame distance to the reference.
struct MotionBlock {
  uint32_t x = 0;
  uint32_t y = 0;
  uint16_t w = 0;
  uint16_t h = 0;
  MotionVector mv;
  uint8_t ref_offset = 1;

  friend bool operator==(const MotionBlock&, const MotionBlock&) = default;
};

struct IntraRect {
  uint32_t x = 0;
  uint32_t y = 0;
  uint16_t w = 0;
  uint16_t h = 0;

  friend bool operator==(const IntraRect&, const IntraRect&) = default;
};

// Per-frame motion at native block granularity. Blocks plus intra rects tile
// inter frames exactly; key frames carry neither.
struct BlockMotionField {
  uint32_t frame_index = 0;
  FrameKind frame_kind = FrameKind::Inter;
  uint32_t width = 0;
  uint32_t height = 0;
  std::vector<MotionBlock> blocks;
  std::vector<IntraRect> intra_rects;

  friend bool operator==(const BlockMotionField&, const BlockMotionField&) = default;

  uint32_t grid_w() const { return (width + 3) / 4; }
  uint32_t grid_h() const { return (height + 3) / 4; }
};

struct DenseCell {
  MotionVector mv;
  uint8_t ref_offset = 0;
  bool valid = false;
};

// Motion sampled on the 4x4-pixel grid after zero-order-hold upsampling.
struct DenseMotionField {
  uint32_t frame_index = 0;
  uint32_t width = 0;
  uint32_t height = 0;
  uint32_t grid_w = 0;
  uint32_t grid_h = 0;
  std::vector<DenseCell> cells;  // row-major grid_h x grid_w

  const DenseCell& cell(uint32_t cx, uint32_t cy) const {
    return cells[static_cast<size_t>(cy) * grid_w + cx];
  }
  DenseCell& cell(uint32_t cx, uint32_t cy) {
    return cells[static_cast<size_t>(cy) * grid_w + cx];
  }

  size_t valid_count() const;
};

inline constexpr char kMvfMagic[4] = {'M', 'V', 'F', '1'};
inline constexpr uint32_t kMvfVersion = 1;

// MVF sidecar reader/writer (layout: 16-byte preamble, then per-frame block
// and intra-rect records, all little-endian). load verifies the tiling
// invariant for inter frames; write rejects fields that break any invariant.
std::vector<BlockMotionField> load_mvf(std::span<const uint8_t> bytes);
std::vector<BlockMotionField> load_mvf_file(const std::filesystem::path& path);
size_t write_mvf(std::span<const BlockMotionField> fields, std::vector<uint8_t>& out);
void write_mvf_file(std::span<const BlockMotionField> fields,
                    const std::filesystem::path& path);

// Zero-order hold: every 4x4 cell whose top-left pixel lies inside a block
// copies that block's motion verbatim; intra-covered cells are invalid.
DenseMotionField upsample_zoh(const BlockMotionField& field);

// Cell lookup at a subpixel position (floor convention on cell boundaries).
std::optional<DenseCell> mv_at(const DenseMotionField& field, Vec2 pos);

// Profile checks that need block-level data on top of the frame kinds:
// backward-only references and motionless key frames.
ValidationReport validate_stream_profile(std::span<const BlockMotionField> fields);

std::vector<FrameKind> frame_kinds(std::span<const BlockMotionField> fields);

}  // namespace mvsfm
