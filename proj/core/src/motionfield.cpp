#include "mvsfm/motionfield.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mvsfm {

namespace {

bool allowed_block_dim(uint16_t d) {
  switch (d) {
    case 4:
    case 8:
    case 16:
    case 32:
    case 64:
    case 128: return true;
    default: return false;
  }
}

struct TilingIssue {
  ErrorCode code;        // TilingGap or TilingOverlap
  uint32_t cx = 0, cy = 0;
};

// Paints blocks and intra rects onto the 4x4 cell grid by the top-left-pixel
// rule and reports the first cell covered zero or more than one time.
// Scanning is row-major so "first" is well defined.
std::optional<TilingIssue> check_tiling(const BlockMotionField& field) {
  const uint32_t gw = field.grid_w(), gh = field.grid_h();
  std::vector<uint8_t> cover(static_cast<size_t>(gw) * gh, 0);

  auto paint = [&](uint32_t x, uint32_t y, uint32_t w, uint32_t h) {
    // Clamp to the frame; blocks at the frame edge legitimately overhang.
    uint32_t x1 = std::min<uint32_t>(x + w, field.width);
    uint32_t y1 = std::min<uint32_t>(y + h, field.height);
    if (x >= x1 || y >= y1) return;
    uint32_t cx0 = (x + 3) / 4;          // first cell whose top-left pixel >= x
    uint32_t cy0 = (y + 3) / 4;
    uint32_t cx1 = (x1 + 3) / 4;         // cells with top-left pixel < x1
    uint32_t cy1 = (y1 + 3) / 4;
    for (uint32_t cy = cy0; cy < cy1; ++cy)
      for (uint32_t cx = cx0; cx < cx1; ++cx)
        ++cover[static_cast<size_t>(cy) * gw + cx];
  };

  for (const auto& b : field.blocks) paint(b.x, b.y, b.w, b.h);
  for (const auto& r : field.intra_rects) paint(r.x, r.y, r.w, r.h);

  for (uint32_t cy = 0; cy < gh; ++cy) {
    for (uint32_t cx = 0; cx < gw; ++cx) {
      uint8_t c = cover[static_cast<size_t>(cy) * gw + cx];
      if (c == 0) return TilingIssue{ErrorCode::TilingGap, cx, cy};
      if (c > 1) return TilingIssue{ErrorCode::TilingOverlap, cx, cy};
    }
  }
  return std::nullopt;
}

std::string cell_str(uint32_t cx, uint32_t cy) {
  return "cell (" + std::to_string(cx) + "," + std::to_string(cy) + ")";
}

void check_write_invariants(const BlockMotionField& field) {
  auto ctx = [&](const std::string& what) {
    return "frame " + std::to_string(field.frame_index) + ": " + what;
  };
  if (field.width == 0 || field.height == 0)
    fail(ErrorCode::InvariantViolation, ctx("zero frame dimension"));
  if (field.frame_kind == FrameKind::Key) {
    if (!field.blocks.empty())
      fail(ErrorCode::InvariantViolation, ctx("key frame carries motion blocks"));
    if (!field.intra_rects.empty())
      fail(ErrorCode::InvariantViolation, ctx("key frame carries intra rects"));
    return;
  }
  for (const auto& b : field.blocks) {
    if (!allowed_block_dim(b.w) || !allowed_block_dim(b.h))
      fail(ErrorCode::InvariantViolation,
           ctx("block size " + std::to_string(b.w) + "x" + std::to_string(b.h) +
               " outside {4,8,16,32,64,128}"));
    if (b.x % 4 != 0 || b.y % 4 != 0)
      fail(ErrorCode::InvariantViolation,
           ctx("block origin (" + std::to_string(b.x) + "," + std::to_string(b.y) +
               ") not 4-aligned"));
    if (b.x >= field.width || b.y >= field.height)
      fail(ErrorCode::InvariantViolation, ctx("block origin outside the frame"));
    if (b.ref_offset < 1)
      fail(ErrorCode::InvariantViolation, ctx("ref_offset 0 (backward-only profile)"));
  }
  if (auto issue = check_tiling(field)) {
    fail(ErrorCode::InvariantViolation,
         ctx((issue->code == ErrorCode::TilingGap ? "tiling gap at "
                                                  : "tiling overlap at ") +
             cell_str(issue->cx, issue->cy)));
  }
}

}  // namespace

double MotionVector::magnitude_eighth_pel() const {
  return std::hypot(static_cast<double>(dx), static_cast<double>(dy));
}

size_t DenseMotionField::valid_count() const {
  return static_cast<size_t>(
      std::count_if(cells.begin(), cells.end(), [](const DenseCell& c) { return c.valid; }));
}

std::vector<BlockMotionField> load_mvf(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 16)
    fail(ErrorCode::TruncatedRecord, "MVF preamble needs 16 bytes");
  auto magic = r.read_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMvfMagic))
    fail(ErrorCode::BadMagic, "expected MVF1");
  uint32_t version = r.read_u32le();
  if (version != kMvfVersion)
    fail(ErrorCode::VersionUnsupported, "MVF version " + std::to_string(version));
  uint32_t frame_count = r.read_u32le();
  r.skip(4);  // reserved

  std::vector<BlockMotionField> fields;
  fields.reserve(frame_count);
  for (uint32_t f = 0; f < frame_count; ++f) {
    auto ctx = [&](const std::string& what) {
      return "frame record " + std::to_string(f) + ": " + what;
    };
    if (r.remaining() < 24) fail(ErrorCode::TruncatedRecord, ctx("frame header"));
    BlockMotionField field;
    field.frame_index = r.read_u32le();
    uint8_t kind = r.read_u8();
    if (kind > 1)
      fail(ErrorCode::InvariantViolation, ctx("frame_kind byte " + std::to_string(kind)));
    field.frame_kind = static_cast<FrameKind>(kind);
    r.skip(3);
    field.width = r.read_u32le();
    field.height = r.read_u32le();
    uint32_t block_count = r.read_u32le();
    uint32_t rect_count = r.read_u32le();

    if (r.remaining() < static_cast<size_t>(block_count) * 20)
      fail(ErrorCode::TruncatedRecord, ctx("block records"));
    field.blocks.reserve(block_count);
    for (uint32_t i = 0; i < block_count; ++i) {
      MotionBlock b;
      b.x = r.read_u32le();
      b.y = r.read_u32le();
      b.w = r.read_u16le();
      b.h = r.read_u16le();
      b.mv.dx = r.read_i16le();
      b.mv.dy = r.read_i16le();
      b.ref_offset = r.read_u8();
      r.skip(3);
      if (!allowed_block_dim(b.w) || !allowed_block_dim(b.h))
        fail(ErrorCode::InvariantViolation,
             ctx("block size " + std::to_string(b.w) + "x" + std::to_string(b.h)));
      if (b.x % 4 != 0 || b.y % 4 != 0)
        fail(ErrorCode::InvariantViolation, ctx("block origin not 4-aligned"));
      field.blocks.push_back(b);
    }

    if (r.remaining() < static_cast<size_t>(rect_count) * 12)
      fail(ErrorCode::TruncatedRecord, ctx("intra rect records"));
    field.intra_rects.reserve(rect_count);
    for (uint32_t i = 0; i < rect_count; ++i) {
      IntraRect rect;
      rect.x = r.read_u32le();
      rect.y = r.read_u32le();
      rect.w = r.read_u16le();
      rect.h = r.read_u16le();
      field.intra_rects.push_back(rect);
    }

    // Key frames are wholly intra by convention and skip the tiling check.
    if (field.frame_kind == FrameKind::Inter) {
      if (auto issue = check_tiling(field)) {
        fail(issue->code, "frame " + std::to_string(field.frame_index) + ": " +
                              cell_str(issue->cx, issue->cy));
      }
    }
    fields.push_back(std::move(field));
  }
  return fields;
}

std::vector<BlockMotionField> load_mvf_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return load_mvf(bytes);
}

size_t write_mvf(std::span<const BlockMotionField> fields, std::vector<uint8_t>& out) {
  for (const auto& field : fields) check_write_invariants(field);

  size_t start = out.size();
  ByteWriter w(out);
  for (char c : kMvfMagic) w.put_u8(static_cast<uint8_t>(c));
  w.put_u32le(kMvfVersion);
  w.put_u32le(static_cast<uint32_t>(fields.size()));
  w.put_u32le(0);
  for (const auto& field : fields) {
    w.put_u32le(field.frame_index);
    w.put_u8(static_cast<uint8_t>(field.frame_kind));
    w.put_u8(0);
    w.put_u8(0);
    w.put_u8(0);
    w.put_u32le(field.width);
    w.put_u32le(field.height);
    w.put_u32le(static_cast<uint32_t>(field.blocks.size()));
    w.put_u32le(static_cast<uint32_t>(field.intra_rects.size()));
    for (const auto& b : field.blocks) {
      w.put_u32le(b.x);
      w.put_u32le(b.y);
      w.put_u16le(b.w);
      w.put_u16le(b.h);
      w.put_i16le(b.mv.dx);
      w.put_i16le(b.mv.dy);
      w.put_u8(b.ref_offset);
      w.put_u8(0);
      w.put_u8(0);
      w.put_u8(0);
    }
    for (const auto& rect : field.intra_rects) {
      w.put_u32le(rect.x);
      w.put_u32le(rect.y);
      w.put_u16le(rect.w);
      w.put_u16le(rect.h);
    }
  }
  return out.size() - start;
}

void write_mvf_file(std::span<const BlockMotionField> fields,
                    const std::filesystem::path& path) {
  std::vector<uint8_t> bytes;
  write_mvf(fields, bytes);
  write_file_bytes(path, bytes);
}

DenseMotionField upsample_zoh(const BlockMotionField& field) {
  DenseMotionField dense;
  dense.frame_index = field.frame_index;
  dense.width = field.width;
  dense.height = field.height;
  dense.grid_w = field.grid_w();
  dense.grid_h = field.grid_h();
  dense.cells.assign(static_cast<size_t>(dense.grid_w) * dense.grid_h, DenseCell{});
  if (field.frame_kind == FrameKind::Key) return dense;

  for (const auto& b : field.blocks) {
    uint32_t x1 = std::min<uint32_t>(b.x + b.w, field.width);
    uint32_t y1 = std::min<uint32_t>(b.y + b.h, field.height);
    if (b.x >= x1 || b.y >= y1) continue;
    uint32_t cx0 = (b.x + 3) / 4, cx1 = (x1 + 3) / 4;
    uint32_t cy0 = (b.y + 3) / 4, cy1 = (y1 + 3) / 4;
    for (uint32_t cy = cy0; cy < cy1; ++cy) {
      for (uint32_t cx = cx0; cx < cx1; ++cx) {
        DenseCell& cell = dense.cell(cx, cy);
        cell.mv = b.mv;
        cell.ref_offset = b.ref_offset;
        cell.valid = b.ref_offset >= 1;  // forward/self references never track
      }
    }
  }
  // Intra rects stay invalid; nothing to paint.
  return dense;
}

std::optional<DenseCell> mv_at(const DenseMotionField& field, Vec2 pos) {
  if (!(pos.x >= 0.0 && pos.y >= 0.0 && pos.x < field.width && pos.y < field.height))
    fail(ErrorCode::OutOfBounds,
         "position (" + std::to_string(pos.x) + "," + std::to_string(pos.y) +
             ") outside " + std::to_string(field.width) + "x" +
             std::to_string(field.height));
  auto cx = static_cast<uint32_t>(std::floor(pos.x / 4.0));
  auto cy = static_cast<uint32_t>(std::floor(pos.y / 4.0));
  const DenseCell& cell = field.cell(cx, cy);
  if (!cell.valid) return std::nullopt;
  return cell;
}

ValidationReport validate_stream_profile(std::span<const BlockMotionField> fields) {
  std::vector<FrameKind> kinds;
  kinds.reserve(fields.size());
  for (const auto& f : fields) kinds.push_back(f.frame_kind);
  ValidationReport report = validate_stream_profile(kinds);

  for (const auto& f : fields) {
    if (f.frame_kind == FrameKind::Key && !f.blocks.empty()) {
      report.violations.push_back({ViolationCode::KeyFrameWithMotion, f.frame_index,
                                   "key frame carries " +
                                       std::to_string(f.blocks.size()) +
                                       " motion blocks"});
    }
    for (const auto& b : f.blocks) {
      if (b.ref_offset < 1) {
        report.violations.push_back(
            {ViolationCode::ForwardReference, f.frame_index,
             "block at (" + std::to_string(b.x) + "," + std::to_string(b.y) +
                 ") has ref_offset 0 (backward-only profile)"});
        break;  // one finding per frame is enough
      }
    }
  }
  report.conforms = report.violations.empty();
  return report;
}

std::vector<FrameKind> frame_kinds(std::span<const BlockMotionField> fields) {
  std::vector<FrameKind> kinds;
  kinds.reserve(fields.size());
  for (const auto& f : fields) kinds.push_back(f.frame_kind);
  return kinds;
}

}  // namespace mvsfm
