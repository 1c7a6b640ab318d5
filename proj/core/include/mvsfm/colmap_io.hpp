#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mvsfm/error.hpp"
#include "mvsfm/trajectory.hpp"

namespace mvsfm {

// COLMAP text-import writers. Formatting is pinned (6 decimals, fixed
// ordering) so identical inputs always produce byte-identical files.

inline constexpr uint32_t kDescriptorDim = 128;

struct FeatureFileSpec {
  std::string image_name;
  std::vector<Vec2> keypoints;
  double scale_default = 1.0;
  double orientation_default = 0.0;
};

struct PointCloudFile {
  std::vector<Eigen::Vector3d> points;
  std::vector<std::array<uint8_t, 3>> colors;      // empty or one per point
  std::vector<uint32_t> track_lengths;             // empty or one per point
};

// "N 128" header plus one keypoint row per line; descriptors are zeros since
// matching happens upstream of COLMAP. Returns the number of lines written.
size_t write_feature_file(const FeatureFileSpec& spec, std::ostream& sink);

// Raw-match blocks: "name_a name_b", one "i j" line per match, blank line.
// Pairs come out in ascending (a,b) order. Returns the pair count.
size_t write_match_file(const MatchSet& matches,
                        const std::map<uint32_t, std::string>& image_names,
                        std::ostream& sink);

// ASCII PLY (optionally with uchar colors and int track lengths). Returns the
// point count.
size_t write_ply(const PointCloudFile& cloud, std::ostream& sink);

// Parse-back readers for round-trip verification and for the export CLI.
FeatureFileSpec read_feature_file(std::istream& source, const std::string& image_name);
MatchSet read_match_file(std::istream& source,
                         const std::map<std::string, uint32_t>& frame_by_name);
PointCloudFile read_ply(std::istream& source);
PointCloudFile read_ply_file(const std::filesystem::path& path);
void write_ply_file(const PointCloudFile& cloud, const std::filesystem::path& path);

std::string default_image_name(uint32_t frame_index);  // frame_%06d.png

}  // namespace mvsfm
