#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "spf/detect.hpp"
#include "spf/simulate.hpp"
#include "spf/tracker.hpp"

namespace spf {

/// `key = value` lines with `#` comments.
struct KeyValues {
    std::map<std::string, std::string> entries;
    std::string source;
};

KeyValues parse_key_values(const std::string& text, const std::string& source = "<string>");
KeyValues read_key_values(const std::filesystem::path& path);

/// Both appliers reject keys they do not know.
void apply_track_config(const KeyValues& kv, TrackConfig& cfg);
void apply_sim_config(const KeyValues& kv, SimConfig& cfg);

/// Single-line `key=value` summary used in result headers.
std::string describe(const TrackConfig& cfg);

/// Parses "a,b,c" into three numbers.
Vec3 parse_triple(const std::string& text);
std::array<long, 3> parse_long_triple(const std::string& text);

// Centroids: one "k x y z" line per cell, physical coordinates.
void write_centroids(const std::filesystem::path& path, const Positions& centroids);
Positions read_centroids(const std::filesystem::path& path);

// Tracking result: "# ..." header, then "t k x y z status" in index space.
void write_result(const std::filesystem::path& path, const TrackResult& r);
TrackResult read_result(const std::filesystem::path& path);

// Ground truth: "# z_scale s" header, then "t k x y z visible" in index space.
void write_truth(const std::filesystem::path& path, const GroundTruth& gt);
GroundTruth read_truth(const std::filesystem::path& path);

}  // namespace spf
