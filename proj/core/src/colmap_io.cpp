#include "mvsfm/colmap_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mvsfm {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void check_sink(const std::ostream& sink, const char* what) {
  if (!sink) fail(ErrorCode::SinkFailure, std::string("write failed in ") + what);
}

}  // namespace

std::string default_image_name(uint32_t frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06u.png", frame_index);
  return buf;
}

size_t write_feature_file(const FeatureFileSpec& spec, std::ostream& sink) {
  sink << spec.keypoints.size() << " " << kDescriptorDim << "\n";
  for (const Vec2& kp : spec.keypoints) {
    sink << fixed6(kp.x) << " " << fixed6(kp.y) << " " << fixed6(spec.scale_default)
         << " " << fixed6(spec.orientation_default);
    for (uint32_t d = 0; d < kDescriptorDim; ++d) sink << " 0";
    sink << "\n";
  }
  check_sink(sink, "write_feature_file");
  return spec.keypoints.size() + 1;
}

size_t write_match_file(const MatchSet& matches,
                        const std::map<uint32_t, std::string>& image_names,
                        std::ostream& sink) {
  size_t pair_count = 0;
  for (const auto& [pair, index_pairs] : matches.pairs) {
    auto name_a = image_names.find(pair.first);
    auto name_b = image_names.find(pair.second);
    if (name_a == image_names.end())
      fail(ErrorCode::MissingImageName, "frame " + std::to_string(pair.first));
    if (name_b == image_names.end())
      fail(ErrorCode::MissingImageName, "frame " + std::to_string(pair.second));
    sink << name_a->second << " " << name_b->second << "\n";
    for (const auto& [ia, ib] : index_pairs) sink << ia << " " << ib << "\n";
    sink << "\n";
    ++pair_count;
  }
  check_sink(sink, "write_match_file");
  return pair_count;
}

size_t write_ply(const PointCloudFile& cloud, std::ostream& sink) {
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    if (!cloud.points[i].allFinite())
      fail(ErrorCode::NonFinitePoint, "point " + std::to_string(i));
  }
  const bool with_color = !cloud.colors.empty();
  const bool with_track = !cloud.track_lengths.empty();
  if (with_color && cloud.colors.size() != cloud.points.size())
    fail(ErrorCode::InvariantViolation, "color count != point count");
  if (with_track && cloud.track_lengths.size() != cloud.points.size())
    fail(ErrorCode::InvariantViolation, "track length count != point count");

  sink << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size() << "\n"
       << "property float x\nproperty float y\nproperty float z\n";
  if (with_color)
    sink << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (with_track) sink << "property int track_length\n";
  sink << "end_header\n";
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    sink << fixed6(p.x()) << " " << fixed6(p.y()) << " " << fixed6(p.z());
    if (with_color)
      sink << " " << static_cast<int>(cloud.colors[i][0]) << " "
           << static_cast<int>(cloud.colors[i][1]) << " "
           << static_cast<int>(cloud.colors[i][2]);
    if (with_track) sink << " " << cloud.track_lengths[i];
    sink << "\n";
  }
  check_sink(sink, "write_ply");
  return cloud.points.size();
}

FeatureFileSpec read_feature_file(std::istream& source, const std::string& image_name) {
  FeatureFileSpec spec;
  spec.image_name = image_name;
  size_t n = 0;
  uint32_t dim = 0;
  if (!(source >> n >> dim))
    fail(ErrorCode::TypeError, image_name + ": bad feature file header");
  if (dim != kDescriptorDim)
    fail(ErrorCode::TypeError,
         image_name + ": descriptor dim " + std::to_string(dim) + ", expected 128");
  spec.keypoints.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    double x = 0, y = 0, scale = 0, orientation = 0;
    if (!(source >> x >> y >> scale >> orientation))
      fail(ErrorCode::TypeError, image_name + ": truncated keypoint row");
    int d = 0;
    for (uint32_t j = 0; j < dim; ++j) {
      if (!(source >> d) || d < 0 || d > 255)
        fail(ErrorCode::TypeError, image_name + ": bad descriptor entry");
    }
    spec.keypoints.push_back({x, y});
    spec.scale_default = scale;
    spec.orientation_default = orientation;
  }
  return spec;
}

MatchSet read_match_file(std::istream& source,
                         const std::map<std::string, uint32_t>& frame_by_name) {
  MatchSet matches;
  std::string line;
  std::optional<FramePair> current;
  while (std::getline(source, line)) {
    if (line.empty()) {
      current.reset();
      continue;
    }
    std::istringstream row(line);
    if (!current) {
      std::string a, b;
      if (!(row >> a >> b))
        fail(ErrorCode::TypeError, "bad match pair header: " + line);
      auto fa = frame_by_name.find(a);
      auto fb = frame_by_name.find(b);
      if (fa == frame_by_name.end() || fb == frame_by_name.end())
        fail(ErrorCode::MissingImageName, line);
      current = FramePair{fa->second, fb->second};
      matches.pairs.try_emplace(*current);
    } else {
      uint32_t ia = 0, ib = 0;
      if (!(row >> ia >> ib)) fail(ErrorCode::TypeError, "bad match row: " + line);
      matches.pairs[*current].emplace_back(ia, ib);
    }
  }
  return matches;
}

PointCloudFile read_ply(std::istream& source) {
  PointCloudFile cloud;
  std::string line;
  size_t vertex_count = 0;
  bool with_color = false, with_track = false;
  if (!std::getline(source, line) || line != "ply")
    fail(ErrorCode::BadMagic, "not a PLY file");
  while (std::getline(source, line)) {
    if (line == "end_header") break;
    std::istringstream row(line);
    std::string word;
    row >> word;
    if (word == "element") {
      std::string kind;
      row >> kind >> vertex_count;
      if (kind != "vertex") fail(ErrorCode::TypeError, "unsupported element " + kind);
    } else if (word == "property") {
      std::string type, name;
      row >> type >> name;
      if (name == "red") with_color = true;
      if (name == "track_length") with_track = true;
    } else if (word == "format") {
      std::string format;
      row >> format;
      if (format != "ascii") fail(ErrorCode::TypeError, "only ascii PLY supported");
    }
  }
  for (size_t i = 0; i < vertex_count; ++i) {
    double x = 0, y = 0, z = 0;
    if (!(source >> x >> y >> z))
      fail(ErrorCode::TypeError, "truncated PLY vertex " + std::to_string(i));
    cloud.points.emplace_back(x, y, z);
    if (with_color) {
      int r = 0, g = 0, b = 0;
      source >> r >> g >> b;
      cloud.colors.push_back({static_cast<uint8_t>(r), static_cast<uint8_t>(g),
                              static_cast<uint8_t>(b)});
    }
    if (with_track) {
      uint32_t t = 0;
      source >> t;
      cloud.track_lengths.push_back(t);
    }
  }
  return cloud;
}

PointCloudFile read_ply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return read_ply(in);
}

void write_ply_file(const PointCloudFile& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  write_ply(cloud, out);
}

}  // namespace mvsfm
