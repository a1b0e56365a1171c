#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vtk/common.hpp"
#include "vtk/matrix.hpp"

namespace vtk {

enum class StreamKind {
    visual_feature,
    tactile_feature,
    joint_pos,
    joint_vel,
    ee_pose,
    gripper,
    action_command,
};

// 0 means the dimension is declared by the manifest (feature streams).
int fixed_dim(StreamKind kind);
StreamKind parse_stream_kind(const std::string& tag);
std::string stream_kind_tag(StreamKind kind);

struct RawStream {
    StreamKind kind = StreamKind::joint_pos;
    Vec timestamps;       // seconds, non-decreasing
    Matrix records;       // samples x dim
    double nominal_rate = 0.0;  // Hz

    int dim() const { return records.cols; }
    int samples() const { return records.rows; }
    double first_t() const { return timestamps.front(); }
    double last_t() const { return timestamps.back(); }
};

struct Episode {
    std::string id;
    std::map<std::string, RawStream> streams;
    std::map<std::string, std::string> skill_axes;  // axis letter -> value tag

    // max over streams of (last - first timestamp)
    double duration() const;
};

struct Issue {
    std::string kind;    // dimension | non_monotonic | non_finite | gap | empty | no_streams
    std::string stream;  // empty for episode-level issues
    long long row_begin = -1;
    long long row_end = -1;
    std::string message;
};

struct ValidateConfig {
    double gap_factor = 10.0;  // gap issue when dt > gap_factor / nominal_rate
};

// Reads manifest.json plus the stream CSVs it declares. Duplicate
// timestamps with identical records are collapsed; anything else that
// breaks a RawStream invariant throws.
Episode load_episode(const std::filesystem::path& dir);

std::vector<Issue> validate_episode(const Episode& ep, const ValidateConfig& cfg = {});

// Writes manifest.json + one CSV per stream. Rejects episodes that fail
// structural validation (RejectedInvalid).
void write_episode(const Episode& ep, const std::filesystem::path& dir);

}  // namespace vtk
