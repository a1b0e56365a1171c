#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "vtk/episode.hpp"

namespace vtk {

enum class ResampleMethod { linear, zero_order_hold };

ResampleMethod default_method(StreamKind kind);  // ZOH for action_command and gripper

struct AlignedEpisode {
    std::string id;
    double rate = 0.0;                    // Hz
    Vec timeline;                         // t0 + k/rate
    std::map<std::string, Matrix> columns;  // stream -> frames x dim
    std::map<std::string, StreamKind> kinds;

    int frames() const { return static_cast<int>(timeline.size()); }
};

struct ResampleOptions {
    bool clamp_edges = true;  // queries outside the span take the endpoint value
};

// Evaluates the stream at each timeline point. linear: exact piecewise
// linear interpolation; zero_order_hold: latest sample at-or-before t.
Matrix resample(const RawStream& s, const Vec& timeline, ResampleMethod m,
                const ResampleOptions& opts = {});

// Resamples every stream onto a uniform timeline over the intersection of
// stream spans. Quaternion components of ee_pose are renormalized per frame
// after linear interpolation.
AlignedEpisode align_episode(const Episode& ep, double rate);

struct JitterThresholds {
    double max_missing_fraction = 0.05;
    double max_gap_factor = 5.0;  // in nominal periods
};

struct StreamJitter {
    double missing_fraction = 0.0;  // in [0,1]
    double max_gap = 0.0;           // seconds
    double jitter_std = 0.0;        // std of inter-sample deltas, seconds
    bool pass = true;
};

struct JitterReport {
    std::map<std::string, StreamJitter> per_stream;
    bool pass = true;  // all streams pass
};

JitterReport jitter_stats(const Episode& ep, const JitterThresholds& thresholds = {});

struct SyncedRecord {
    double t = 0.0;  // source timestamp
    Vec values;
};

struct SyncedTuple {
    double t = 0.0;  // query time
    std::map<std::string, SyncedRecord> records;
};

// Sliding window of recent observations; latest() returns, per stream, the
// newest record at-or-before the query time. One lock keeps tuples
// consistent under one-writer-per-stream concurrency.
class ObservationBuffer {
public:
    ObservationBuffer(std::vector<std::string> streams, double window_seconds,
                      double staleness_bound);

    void push(const std::string& stream, double t, Vec record);

    // Throws StreamStale naming the first stream with no fresh record.
    SyncedTuple latest(double t_query) const;

    size_t total_samples() const;

private:
    struct Sample {
        double t;
        Vec values;
    };
    mutable std::mutex mutex_;
    std::map<std::string, std::deque<Sample>> buffers_;
    double window_;
    double staleness_;
    double t_newest_ = -std::numeric_limits<double>::infinity();
};

// External format: aligned.csv (t + stream.v{i} columns) plus
// aligned_manifest.json with rate, overlap window and per-stream method.
void write_aligned(const AlignedEpisode& ae, const std::filesystem::path& dir);
AlignedEpisode load_aligned(const std::filesystem::path& dir);

}  // namespace vtk
