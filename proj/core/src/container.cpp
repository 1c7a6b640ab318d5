#include "mvsfm/container.hpp"

#include <fstream>

namespace mvsfm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedCodec: return "UnsupportedCodec";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::BadHeaderLen: return "BadHeaderLen";
    case ErrorCode::TruncatedFrame: return "TruncatedFrame";
    case ErrorCode::ForbiddenBitSet: return "ForbiddenBitSet";
    case ErrorCode::Leb128Overflow: return "Leb128Overflow";
    case ErrorCode::SizeOverrun: return "SizeOverrun";
    case ErrorCode::MissingSizeField: return "MissingSizeField";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::TilingGap: return "TilingGap";
    case ErrorCode::TilingOverlap: return "TilingOverlap";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::UnsortedFields: return "UnsortedFields";
    case ErrorCode::SinkFailure: return "SinkFailure";
    case ErrorCode::MissingImageName: return "MissingImageName";
    case ErrorCode::NonFinitePoint: return "NonFinitePoint";
    case ErrorCode::DegenerateMotion: return "DegenerateMotion";
    case ErrorCode::DegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::EmptyTracks: return "EmptyTracks";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

std::string_view to_string(ObuType type) {
  switch (type) {
    case ObuType::SequenceHeader: return "SequenceHeader";
    case ObuType::FrameHeader: return "FrameHeader";
    case ObuType::Frame: return "Frame";
    case ObuType::TileGroup: return "TileGroup";
    case ObuType::TemporalDelimiter: return "TemporalDelimiter";
    case ObuType::Metadata: return "Metadata";
    case ObuType::Padding: return "Padding";
    case ObuType::Other: return "Other";
  }
  return "Other";
}

std::string_view to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::NoFrames: return "NoFrames";
    case ViolationCode::MissingLeadingKeyFrame: return "MissingLeadingKeyFrame";
    case ViolationCode::ExtraKeyFrame: return "ExtraKeyFrame";
    case ViolationCode::KeyFrameWithMotion: return "KeyFrameWithMotion";
    case ViolationCode::ForwardReference: return "ForwardReference";
  }
  return "UnknownViolation";
}

// --- bytes.hpp out-of-line pieces ---

Leb128 read_leb128(ByteReader& reader) {
  Leb128 result;
  for (size_t i = 0; i < 8; ++i) {
    if (reader.eof())
      fail(ErrorCode::SizeOverrun, "payload ends inside a LEB128 size field");
    uint8_t byte = reader.read_u8();
    result.value |= static_cast<uint64_t>(byte & 0x7f) << (7 * i);
    ++result.length;
    if ((byte & 0x80) == 0) {
      if (result.value > 0xffffffffull)
        fail(ErrorCode::Leb128Overflow,
             "obu_size " + std::to_string(result.value) + " exceeds 2^32-1");
      return result;
    }
  }
  fail(ErrorCode::Leb128Overflow, "LEB128 continuation past 8 bytes");
}

void write_leb128(ByteWriter& writer, uint64_t value) {
  do {
    uint8_t byte = value & 0x7f;
    value >>= 7;
    if (value != 0) byte |= 0x80;
    writer.put_u8(byte);
  } while (value != 0);
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

void write_file_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

uint64_t fnv1a64(std::span<const uint8_t> bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a64_hex(std::span<const uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  uint64_t h = fnv1a64(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// --- IVF ---

StreamInfo parse_ivf_header(ByteReader& reader) {
  if (reader.remaining() < kIvfHeaderSize)
    fail(ErrorCode::Truncated, "IVF header needs 32 bytes, have " +
                                   std::to_string(reader.remaining()));
  auto magic = reader.read_bytes(4);
  if (!(magic[0] == 'D' && magic[1] == 'K' && magic[2] == 'I' && magic[3] == 'F'))
    fail(ErrorCode::BadMagic, "expected DKIF");
  uint16_t version = reader.read_u16le();
  uint16_t header_len = reader.read_u16le();
  if (header_len != kIvfHeaderSize)
    fail(ErrorCode::BadHeaderLen,
         "declared header length " + std::to_string(header_len) + ", expected 32");

  StreamInfo info;
  info.header_len = header_len;
  auto fourcc = reader.read_bytes(4);
  std::copy(fourcc.begin(), fourcc.end(), info.fourcc.begin());
  info.width = reader.read_u16le();
  info.height = reader.read_u16le();
  info.timebase_den = reader.read_u32le();
  info.timebase_num = reader.read_u32le();
  info.frame_count_declared = reader.read_u32le();
  reader.skip(4);  // reserved
  (void)version;   // v0 is the only version in the wild; header_len pins layout

  if (std::string_view(info.fourcc.data(), 4) != "AV01")
    fail(ErrorCode::UnsupportedCodec,
         "fourcc " + std::string(info.fourcc.data(), 4) + ", only AV01 accepted");
  if (info.width < 16 || info.height < 16)
    fail(ErrorCode::InvariantViolation,
         "stream dimensions " + std::to_string(info.width) + "x" +
             std::to_string(info.height) + " below the 16px minimum");
  return info;
}

StreamInfo parse_ivf_header(std::span<const uint8_t> bytes) {
  ByteReader reader(bytes);
  return parse_ivf_header(reader);
}

std::array<uint8_t, kIvfHeaderSize> write_ivf_header(const StreamInfo& info) {
  std::vector<uint8_t> bytes;
  bytes.reserve(kIvfHeaderSize);
  ByteWriter w(bytes);
  w.put_u8('D');
  w.put_u8('K');
  w.put_u8('I');
  w.put_u8('F');
  w.put_u16le(0);  // version
  w.put_u16le(info.header_len);
  for (char c : info.fourcc) w.put_u8(static_cast<uint8_t>(c));
  w.put_u16le(info.width);
  w.put_u16le(info.height);
  w.put_u32le(info.timebase_den);
  w.put_u32le(info.timebase_num);
  w.put_u32le(info.frame_count_declared);
  w.put_u32le(0);  // reserved
  std::array<uint8_t, kIvfHeaderSize> out{};
  std::copy(bytes.begin(), bytes.end(), out.begin());
  return out;
}

std::vector<FramePacket> read_ivf_frames(ByteReader& reader) {
  std::vector<FramePacket> frames;
  uint32_t index = 0;
  while (!reader.eof()) {
    if (reader.remaining() < kIvfFrameHeaderSize)
      fail(ErrorCode::TruncatedFrame,
           "frame " + std::to_string(index) + ": header needs 12 bytes, have " +
               std::to_string(reader.remaining()));
    uint32_t size = reader.read_u32le();
    uint64_t pts = reader.read_u64le();
    if (size > reader.remaining())
      fail(ErrorCode::TruncatedFrame,
           "frame " + std::to_string(index) + ": declared size " +
               std::to_string(size) + " exceeds remaining " +
               std::to_string(reader.remaining()) + " bytes");
    auto payload = reader.read_bytes(size);
    FramePacket packet;
    packet.index = index++;
    packet.pts = pts;
    packet.payload.assign(payload.begin(), payload.end());
    frames.push_back(std::move(packet));
  }
  return frames;
}

void append_ivf_frame(std::vector<uint8_t>& out, uint64_t pts,
                      std::span<const uint8_t> payload) {
  ByteWriter w(out);
  w.put_u32le(static_cast<uint32_t>(payload.size()));
  w.put_u64le(pts);
  w.put_bytes(payload);
}

IvfFile load_ivf(std::span<const uint8_t> bytes) {
  ByteReader reader(bytes);
  IvfFile file;
  file.info = parse_ivf_header(reader);
  file.frames = read_ivf_frames(reader);
  return file;
}

// --- OBU headers ---

namespace {

ObuType classify_obu(uint8_t code) {
  switch (code) {
    case 1: return ObuType::SequenceHeader;
    case 2: return ObuType::TemporalDelimiter;
    case 3: return ObuType::FrameHeader;
    case 4: return ObuType::TileGroup;
    case 5: return ObuType::Metadata;
    case 6: return ObuType::Frame;
    case 15: return ObuType::Padding;
    default: return ObuType::Other;
  }
}

// OBU types whose payload is empty by definition; for these a missing size
// field still leaves the boundary known.
bool payload_always_empty(ObuType type) {
  return type == ObuType::TemporalDelimiter;
}

}  // namespace

std::vector<ObuInfo> parse_obus(std::span<const uint8_t> payload) {
  std::vector<ObuInfo> obus;
  ByteReader reader(payload);
  while (!reader.eof()) {
    size_t obu_index = obus.size();
    uint8_t header = reader.read_u8();
    if (header & 0x80)
      fail(ErrorCode::ForbiddenBitSet,
           "obu " + std::to_string(obu_index) + ": forbidden bit set");

    ObuInfo obu;
    obu.raw_type = (header >> 3) & 0x0f;
    obu.obu_type = classify_obu(obu.raw_type);
    obu.has_extension = (header & 0x04) != 0;
    bool has_size = (header & 0x02) != 0;
    obu.header_bytes = 1;
    if (obu.has_extension) {
      if (reader.eof())
        fail(ErrorCode::SizeOverrun,
             "obu " + std::to_string(obu_index) + ": payload ends inside extension byte");
      reader.skip(1);
      obu.header_bytes = 2;
    }

    if (has_size) {
      Leb128 size = read_leb128(reader);
      obu.declared_size = size.value;
      if (size.value > reader.remaining())
        fail(ErrorCode::SizeOverrun,
             "obu " + std::to_string(obu_index) + ": declared size " +
                 std::to_string(size.value) + " exceeds remaining " +
                 std::to_string(reader.remaining()) + " bytes");
      obu.payload_size = size.value;
      reader.skip(size.value);
    } else if (payload_always_empty(obu.obu_type) && !reader.eof()) {
      // More OBUs follow this one, so it was not final: unsupported here.
      fail(ErrorCode::MissingSizeField,
           "obu " + std::to_string(obu_index) + " (" +
               std::string(to_string(obu.obu_type)) +
               "): size field absent on a non-final OBU");
    } else {
      // Size-less final OBU: the rest of the temporal unit is its payload.
      obu.payload_size = reader.remaining();
      reader.skip(obu.payload_size);
    }
    obus.push_back(obu);
  }
  return obus;
}

// --- Profile validation ---

ValidationReport validate_stream_profile(std::span<const FrameKind> frame_kinds) {
  ValidationReport report;
  if (frame_kinds.empty()) {
    report.violations.push_back({ViolationCode::NoFrames, 0, "stream has no frames"});
    report.conforms = false;
    return report;
  }
  for (size_t i = 0; i < frame_kinds.size(); ++i) {
    if (frame_kinds[i] == FrameKind::Key)
      ++report.key_frame_count;
    else
      ++report.inter_frame_count;
  }
  if (frame_kinds[0] != FrameKind::Key)
    report.violations.push_back(
        {ViolationCode::MissingLeadingKeyFrame, 0, "frame 0 is not a key frame"});
  for (size_t i = 1; i < frame_kinds.size(); ++i) {
    if (frame_kinds[i] == FrameKind::Key)
      report.violations.push_back(
          {ViolationCode::ExtraKeyFrame, static_cast<uint32_t>(i),
           "key frame after frame 0 (single intra-frame profile)"});
  }
  report.conforms = report.violations.empty();
  return report;
}

}  // namespace mvsfm
