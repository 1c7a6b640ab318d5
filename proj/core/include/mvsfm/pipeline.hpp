#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvsfm/colmap_io.hpp"
#include "mvsfm/trajectory.hpp"

namespace mvsfm {

struct EmitSet {
  bool features = true;
  bool matches = true;
  bool trajectories = true;
  bool ply = false;

  friend bool operator==(const EmitSet&, const EmitSet&) = default;
};

struct PipelineConfig {
  TrackParams track;
  std::string mvf_path;
  std::string ivf_path;        // optional, inspected for the manifest only
  std::string scene_path;      // optional ground-truth scene; required for ply
  std::string output_dir;
  std::string name_manifest;   // optional frame-index -> image-name map
  EmitSet emit;
  std::string log_level = "info";
};

// Flat `key = value` config text; # starts a comment. Unknown keys and
// unparseable values are hard errors. Precedence: defaults < file < flags.
PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const std::map<std::string, std::string>& overrides);

PipelineConfig parse_config_text(const std::string& text,
                                 const std::map<std::string, std::string>& overrides);

struct RunManifest {
  std::string tool_version;
  PipelineConfig config;
  std::map<std::string, std::string> input_digests;
  uint32_t frames = 0;
  size_t blocks = 0;
  size_t valid_cells = 0;
  size_t trajectories_before = 0;
  size_t trajectories_after = 0;
  std::map<uint32_t, size_t> keypoints_per_frame;
  size_t match_pairs = 0;
  size_t total_matches = 0;
  std::map<std::string, double> durations_ms;
};

std::string manifest_to_json(const RunManifest& manifest);

// extract -> upsample -> track -> filter -> match -> export, by file only.
// Writes the requested artifacts plus manifest.json into output_dir.
RunManifest run_pipeline(const PipelineConfig& config);

// Staged track artifacts shared between `track`, `export`, and `eval`.
void write_trajectories_jsonl(std::span<const Trajectory> trajectories,
                              std::ostream& sink);
std::vector<Trajectory> read_trajectories_jsonl(std::istream& source);

std::string tracks_to_json(const MatchTables& tables, const TrackParams& params);
MatchTables tracks_from_json(const std::string& text, TrackParams* params_out = nullptr);

// Frame-index -> image-name map: manifest file when given (one name per
// line, line i names frame i), frame_%06d.png otherwise.
std::map<uint32_t, std::string> resolve_image_names(
    std::span<const uint32_t> frame_indices, const std::string& name_manifest_path);

}  // namespace mvsfm
