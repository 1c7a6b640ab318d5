#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvsfm/bytes.hpp"
#include "mvsfm/common.hpp"
#include "mvsfm/error.hpp"

namespace mvsfm {

// IVF container and AV1 OBU header layer. Parsing stops at OBU headers;
// entropy-coded payloads are never decoded.

inline constexpr size_t kIvfHeaderSize = 32;
inline constexpr size_t kIvfFrameHeaderSize = 12;

struct StreamInfo {
  std::array<char, 4> fourcc{'A', 'V', '0', '1'};
  uint16_t width = 0;
  uint16_t height = 0;
  uint32_t timebase_num = 1;
  uint32_t timebase_den = 30;
  uint32_t frame_count_declared = 0;
  uint16_t header_len = kIvfHeaderSize;

  friend bool operator==(const StreamInfo&, const StreamInfo&) = default;
};

struct FramePacket {
  uint32_t index = 0;
  uint64_t pts = 0;
  std::vector<uint8_t> payload;

  size_t size() const noexcept { return payload.size(); }
};

enum class ObuType : uint8_t {
  SequenceHeader,
  FrameHeader,
  Frame,
  TileGroup,
  TemporalDelimiter,
  Metadata,
  Padding,
  Other,
};

std::string_view to_string(ObuType type);

struct ObuInfo {
  ObuType obu_type = ObuType::Other;
  uint8_t raw_type = 0;  // 4-bit code from the header, kept for Other
  bool has_extension = false;
  std::optional<uint64_t> declared_size;  // present iff the size flag was set
  uint8_t header_bytes = 1;               // 1, or 2 with the extension byte
  size_t payload_size = 0;                // bytes consumed after the header
};

enum class ViolationCode {
  NoFrames,
  MissingLeadingKeyFrame,
  ExtraKeyFrame,
  KeyFrameWithMotion,
  ForwardReference,
};

std::string_view to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  uint32_t frame_index = 0;
  std::string message;
};

// Result of checking a stream against the single-keyframe, backward-only
// encoding profile. conforms is true iff violations is empty.
struct ValidationReport {
  uint32_t key_frame_count = 0;
  uint32_t inter_frame_count = 0;
  std::vector<Violation> violations;
  bool conforms = false;
};

// --- IVF ---

// Reads the 32-byte IVF file header and advances the reader past it.
StreamInfo parse_ivf_header(ByteReader& reader);
StreamInfo parse_ivf_header(std::span<const uint8_t> bytes);

std::array<uint8_t, kIvfHeaderSize> write_ivf_header(const StreamInfo& info);

// Reads frame packets from the current position to end of input. A declared
// frame count that disagrees with the actual packet count is not an error
// here; callers surface it as a warning.
std::vector<FramePacket> read_ivf_frames(ByteReader& reader);

void append_ivf_frame(std::vector<uint8_t>& out, uint64_t pts,
                      std::span<const uint8_t> payload);

struct IvfFile {
  StreamInfo info;
  std::vector<FramePacket> frames;
};

IvfFile load_ivf(std::span<const uint8_t> bytes);

// --- OBU headers ---

// Walks the OBU headers of one temporal unit (one IVF packet payload).
// Consumes exactly the payload or raises one of the container errors.
std::vector<ObuInfo> parse_obus(std::span<const uint8_t> payload);

// --- Profile validation ---

// Spec profile: exactly one key frame, it is frame 0, everything after is
// an inter frame. Frame kinds come from the motion-vector sidecar.
ValidationReport validate_stream_profile(std::span<const FrameKind> frame_kinds);

}  // namespace mvsfm
