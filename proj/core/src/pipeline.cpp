#include "mvsfm/pipeline.hpp"
#include <atomic>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "mvsfm/motionfield.hpp"
#include "mvsfm/synth.hpp"
#include "mvsfm/version.hpp"

namespace mvsfm {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  size_t e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::TypeError, key + " = " + value + " (expected a number)");
  }
}

uint32_t parse_uint(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    unsigned long v = std::stoul(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<uint32_t>(v);
  } catch (const std::exception&) {
    fail(ErrorCode::TypeError, key + " = " + value + " (expected a non-negative integer)");
  }
}

EmitSet parse_emit(const std::string& key, const std::string& value) {
  EmitSet emit{false, false, false, false};
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if (item == "features") emit.features = true;
    else if (item == "matches") emit.matches = true;
    else if (item == "trajectories") emit.trajectories = true;
    else if (item == "ply") emit.ply = true;
    else fail(ErrorCode::TypeError, key + ": unknown artifact '" + item + "'");
  }
  return emit;
}

void apply_key(PipelineConfig& config, const std::string& key, const std::string& value,
               const std::string& where) {
  if (key == "tau") config.track.cos_diff_threshold = parse_double(key, value);
  else if (key == "min_frames") config.track.min_span_frames = parse_uint(key, value);
  else if (key == "link_radius") config.track.link_radius = parse_double(key, value);
  else if (key == "pair_span") config.track.pair_span_cap = parse_uint(key, value);
  else if (key == "min_mv") config.track.min_mv_magnitude_px = parse_double(key, value);
  else if (key == "mvf") config.mvf_path = value;
  else if (key == "ivf") config.ivf_path = value;
  else if (key == "scene") config.scene_path = value;
  else if (key == "out") config.output_dir = value;
  else if (key == "name_manifest") config.name_manifest = value;
  else if (key == "emit") config.emit = parse_emit(key, value);
  else if (key == "log_level") config.log_level = value;
  else fail(ErrorCode::UnknownKey, where + ": '" + key + "'");
}

size_t thread_cap() {
  if (const char* env = std::getenv("MVSFM_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<size_t>(v);
  }
  size_t hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

template <typename Fn>
void parallel_for(size_t count, Fn&& fn) {
  size_t threads = std::min(thread_cap(), count);
  if (threads <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::atomic<size_t> next{0};
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

class StageTimer {
 public:
  explicit StageTimer(RunManifest& manifest) : manifest_(manifest) {}

  template <typename Fn>
  auto time(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record(stage, start);
    } else {
      auto result = fn();
      record(stage, start);
      return result;
    }
  }

 private:
  void record(const std::string& stage,
              std::chrono::steady_clock::time_point start) {
    auto end = std::chrono::steady_clock::now();
    manifest_.durations_ms[stage] =
        std::chrono::duration<double, std::milli>(end - start).count();
  }

  RunManifest& manifest_;
};

json config_to_json(const PipelineConfig& config) {
  json j;
  j["tau"] = config.track.cos_diff_threshold;
  j["min_frames"] = config.track.min_span_frames;
  j["link_radius"] = config.track.link_radius;
  j["pair_span"] = config.track.pair_span_cap;
  j["min_mv"] = config.track.min_mv_magnitude_px;
  j["mvf"] = config.mvf_path;
  j["ivf"] = config.ivf_path;
  j["scene"] = config.scene_path;
  j["out"] = config.output_dir;
  j["name_manifest"] = config.name_manifest;
  std::vector<std::string> emit;
  if (config.emit.features) emit.push_back("features");
  if (config.emit.matches) emit.push_back("matches");
  if (config.emit.trajectories) emit.push_back("trajectories");
  if (config.emit.ply) emit.push_back("ply");
  j["emit"] = emit;
  j["log_level"] = config.log_level;
  return j;
}

}  // namespace

PipelineConfig parse_config_text(const std::string& text,
                                 const std::map<std::string, std::string>& overrides) {
  PipelineConfig config;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::TypeError, "line " + std::to_string(line_no) +
                                     ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    apply_key(config, key, value, "line " + std::to_string(line_no));
  }
  for (const auto& [key, value] : overrides) apply_key(config, key, value, "flag");
  return config;
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const std::map<std::string, std::string>& overrides) {
  std::string text;
  if (path) text = read_file_text(*path);
  return parse_config_text(text, overrides);
}

std::map<uint32_t, std::string> resolve_image_names(
    std::span<const uint32_t> frame_indices, const std::string& name_manifest_path) {
  std::map<uint32_t, std::string> names;
  if (name_manifest_path.empty()) {
    for (uint32_t f : frame_indices) names[f] = default_image_name(f);
    return names;
  }
  std::vector<std::string> lines;
  std::istringstream in(read_file_text(name_manifest_path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  for (uint32_t f : frame_indices) {
    if (f >= lines.size() || lines[f].empty())
      fail(ErrorCode::MissingImageName,
           "frame " + std::to_string(f) + " has no entry in " + name_manifest_path);
    names[f] = lines[f];
  }
  return names;
}

void write_trajectories_jsonl(std::span<const Trajectory> trajectories,
                              std::ostream& sink) {
  for (size_t id = 0; id < trajectories.size(); ++id) {
    const Trajectory& t = trajectories[id];
    json j;
    j["id"] = id;
    j["reason"] = std::string(to_string(t.terminated_reason));
    j["frames"] = json::array();
    j["positions"] = json::array();
    j["mvs"] = json::array();
    for (const auto& s : t.samples) {
      j["frames"].push_back(s.frame_index);
      j["positions"].push_back({s.position.x, s.position.y});
      if (s.mv)
        j["mvs"].push_back({s.mv->dx, s.mv->dy});
      else
        j["mvs"].push_back(nullptr);
    }
    sink << j.dump() << "\n";
  }
  if (!sink) fail(ErrorCode::SinkFailure, "write_trajectories_jsonl");
}

std::vector<Trajectory> read_trajectories_jsonl(std::istream& source) {
  std::vector<Trajectory> trajectories;
  std::string line;
  while (std::getline(source, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line);
    Trajectory t;
    std::string reason = j.at("reason");
    for (auto r : {TerminationReason::CosineBreak, TerminationReason::InvalidCell,
                   TerminationReason::OutOfFrame, TerminationReason::EndOfSequence,
                   TerminationReason::MagnitudeGate}) {
      if (reason == to_string(r)) t.terminated_reason = r;
    }
    const auto& frames = j.at("frames");
    const auto& positions = j.at("positions");
    const auto& mvs = j.at("mvs");
    for (size_t i = 0; i < frames.size(); ++i) {
      TrajectorySample s;
      s.frame_index = frames.at(i);
      s.position = {positions.at(i).at(0), positions.at(i).at(1)};
      if (!mvs.at(i).is_null())
        s.mv = MotionVector{mvs.at(i).at(0), mvs.at(i).at(1)};
      t.samples.push_back(s);
    }
    trajectories.push_back(std::move(t));
  }
  return trajectories;
}

std::string tracks_to_json(const MatchTables& tables, const TrackParams& params) {
  json j;
  j["params"] = {{"tau", params.cos_diff_threshold},
                 {"min_frames", params.min_span_frames},
                 {"link_radius", params.link_radius},
                 {"pair_span", params.pair_span_cap},
                 {"min_mv", params.min_mv_magnitude_px}};
  j["frames"] = json::array();
  for (const auto& frame : tables.frames) {
    json jf;
    jf["frame"] = frame.frame_index;
    jf["keypoints"] = json::array();
    for (const Vec2& kp : frame.keypoints) jf["keypoints"].push_back({kp.x, kp.y});
    j["frames"].push_back(std::move(jf));
  }
  j["matches"] = json::array();
  for (const auto& [pair, index_pairs] : tables.matches.pairs) {
    json jm;
    jm["a"] = pair.first;
    jm["b"] = pair.second;
    jm["pairs"] = json::array();
    for (const auto& [ia, ib] : index_pairs) jm["pairs"].push_back({ia, ib});
    j["matches"].push_back(std::move(jm));
  }
  return j.dump(2) + "\n";
}

MatchTables tracks_from_json(const std::string& text, TrackParams* params_out) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::TypeError, std::string("tracks json: ") + e.what());
  }
  MatchTables tables;
  try {
    if (params_out && j.contains("params")) {
      const auto& p = j["params"];
      params_out->cos_diff_threshold = p.value("tau", params_out->cos_diff_threshold);
      params_out->min_span_frames = p.value("min_frames", params_out->min_span_frames);
      params_out->link_radius = p.value("link_radius", params_out->link_radius);
      params_out->pair_span_cap = p.value("pair_span", params_out->pair_span_cap);
      params_out->min_mv_magnitude_px = p.value("min_mv", params_out->min_mv_magnitude_px);
    }
    for (const auto& jf : j.at("frames")) {
      ImageKeypoints frame;
      frame.frame_index = jf.at("frame");
      for (const auto& kp : jf.at("keypoints"))
        frame.intern({kp.at(0), kp.at(1)});
      tables.frames.push_back(std::move(frame));
    }
    for (const auto& jm : j.at("matches")) {
      FramePair key{jm.at("a"), jm.at("b")};
      auto& dst = tables.matches.pairs[key];
      for (const auto& pr : jm.at("pairs")) dst.emplace_back(pr.at(0), pr.at(1));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::TypeError, std::string("tracks json: ") + e.what());
  }
  return tables;
}

std::string manifest_to_json(const RunManifest& manifest) {
  json j;
  j["tool_version"] = manifest.tool_version;
  j["config"] = config_to_json(manifest.config);
  j["inputs"] = manifest.input_digests;
  j["counts"]["frames"] = manifest.frames;
  j["counts"]["blocks"] = manifest.blocks;
  j["counts"]["valid_cells"] = manifest.valid_cells;
  j["counts"]["trajectories_before_filter"] = manifest.trajectories_before;
  j["counts"]["trajectories_after_filter"] = manifest.trajectories_after;
  json kp = json::object();
  for (const auto& [frame, count] : manifest.keypoints_per_frame)
    kp[std::to_string(frame)] = count;
  j["counts"]["keypoints_per_frame"] = kp;
  j["counts"]["match_pairs"] = manifest.match_pairs;
  j["counts"]["total_matches"] = manifest.total_matches;
  j["durations_ms"] = manifest.durations_ms;
  return j.dump(2) + "\n";
}

RunManifest run_pipeline(const PipelineConfig& config) {
  if (config.mvf_path.empty())
    fail(ErrorCode::MissingInput, "mvf path is required");
  if (!fs::exists(config.mvf_path))
    fail(ErrorCode::MissingInput, "mvf file not found: " + config.mvf_path);
  if (config.output_dir.empty())
    fail(ErrorCode::MissingInput, "output directory is required");
  if (config.emit.ply && config.scene_path.empty())
    fail(ErrorCode::MissingInput,
         "emit=ply needs a scene file with poses (scene = path/to/scene.json)");

  RunManifest manifest;
  manifest.tool_version = kVersion;
  manifest.config = config;
  StageTimer timer(manifest);

  auto mvf_bytes = read_file_bytes(config.mvf_path);
  manifest.input_digests["mvf"] = "fnv1a64:" + fnv1a64_hex(mvf_bytes);
  if (!config.scene_path.empty()) {
    auto scene_bytes = read_file_bytes(config.scene_path);
    manifest.input_digests["scene"] = "fnv1a64:" + fnv1a64_hex(scene_bytes);
  }
  if (!config.name_manifest.empty()) {
    auto name_bytes = read_file_bytes(config.name_manifest);
    manifest.input_digests["name_manifest"] = "fnv1a64:" + fnv1a64_hex(name_bytes);
  }

  auto fields = timer.time("extract", [&] { return load_mvf(mvf_bytes); });
  manifest.frames = static_cast<uint32_t>(fields.size());
  for (const auto& f : fields) manifest.blocks += f.blocks.size();

  std::vector<DenseMotionField> dense(fields.size());
  timer.time("upsample", [&] {
    parallel_for(fields.size(), [&](size_t i) { dense[i] = upsample_zoh(fields[i]); });
  });
  for (const auto& d : dense) manifest.valid_cells += d.valid_count();

  auto trajectories = timer.time("track", [&] {
    return build_trajectories(dense, config.track);
  });
  manifest.trajectories_before = trajectories.size();
  trajectories = filter_persistent(std::move(trajectories), config.track);
  manifest.trajectories_after = trajectories.size();

  auto tables = timer.time("match", [&] {
    return trajectories_to_matches(trajectories, config.track);
  });
  for (const auto& frame : tables.frames)
    manifest.keypoints_per_frame[frame.frame_index] = frame.keypoints.size();
  manifest.match_pairs = tables.matches.pairs.size();
  manifest.total_matches = tables.matches.total_matches();

  timer.time("export", [&] {
    fs::create_directories(config.output_dir);
    fs::path out(config.output_dir);

    if (config.emit.trajectories) {
      std::ofstream sink(out / "trajectories.jsonl", std::ios::trunc);
      if (!sink) fail(ErrorCode::IoError, "cannot write trajectories.jsonl");
      write_trajectories_jsonl(trajectories, sink);
    }

    write_file_text((out / "tracks.json").string(),
                    tracks_to_json(tables, config.track));

    std::vector<uint32_t> frame_indices;
    for (const auto& frame : tables.frames) frame_indices.push_back(frame.frame_index);
    auto names = resolve_image_names(frame_indices, config.name_manifest);

    if (config.emit.features) {
      for (const auto& frame : tables.frames) {
        FeatureFileSpec spec;
        spec.image_name = names.at(frame.frame_index);
        spec.keypoints = frame.keypoints;
        std::ofstream sink(out / (spec.image_name + ".txt"), std::ios::trunc);
        if (!sink) fail(ErrorCode::IoError, "cannot write feature file");
        write_feature_file(spec, sink);
      }
    }

    if (config.emit.matches) {
      std::ofstream sink(out / "matches.txt", std::ios::trunc);
      if (!sink) fail(ErrorCode::IoError, "cannot write matches.txt");
      write_match_file(tables.matches, names, sink);
    }

    if (config.emit.ply) {
      Scene scene = load_scene(config.scene_path);
      PointCloudFile cloud;
      for (const auto& t : trajectories) {
        std::vector<Vec2> pixels;
        std::vector<Pose> poses;
        for (const auto& s : t.samples) {
          if (s.frame_index < scene.poses.size()) {
            pixels.push_back(s.position);
            poses.push_back(scene.poses[s.frame_index]);
          }
        }
        if (pixels.size() < 2) continue;
        try {
          cloud.points.push_back(
              triangulate_multiview(pixels, poses, scene.intrinsics));
          cloud.track_lengths.push_back(static_cast<uint32_t>(pixels.size()));
        } catch (const Error&) {
          // degenerate track; skip
        }
      }
      write_ply_file(cloud, out / "cloud.ply");
    }
  });

  write_file_text((fs::path(config.output_dir) / "manifest.json").string(),
                  manifest_to_json(manifest));
  return manifest;
}

}  // namespace mvsfm
