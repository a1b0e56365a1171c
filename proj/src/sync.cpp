#include "vtk/sync.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "vtk/csv.hpp"

namespace vtk {

namespace fs = std::filesystem;
using nlohmann::json;

ResampleMethod default_method(StreamKind kind) {
    switch (kind) {
        case StreamKind::action_command:
        case StreamKind::gripper:
            return ResampleMethod::zero_order_hold;
        default:
            return ResampleMethod::linear;
    }
}

Matrix resample(const RawStream& s, const Vec& timeline, ResampleMethod m,
                const ResampleOptions& opts) {
    if (s.samples() == 0) throw Error("EmptyStream", "cannot resample an empty stream");
    const int dim = s.dim();
    Matrix out(static_cast<int>(timeline.size()), dim);

    for (size_t q = 0; q < timeline.size(); ++q) {
        double t = timeline[q];
        if (!opts.clamp_edges && (t < s.first_t() || t > s.last_t())) {
            throw Error("TimelineOutOfRange",
                        "query t=" + format_double(t) + " outside [" + format_double(s.first_t()) +
                            ", " + format_double(s.last_t()) + "]");
        }
        // index of last sample with timestamp <= t (clamped into range)
        auto it = std::upper_bound(s.timestamps.begin(), s.timestamps.end(), t);
        long long lo = static_cast<long long>(it - s.timestamps.begin()) - 1;
        double* orow = out.row(static_cast<int>(q));
        if (lo < 0) {  // before first sample: clamp
            const double* rec = s.records.row(0);
            std::copy(rec, rec + dim, orow);
            continue;
        }
        if (m == ResampleMethod::zero_order_hold || lo + 1 >= s.samples()) {
            const double* rec = s.records.row(static_cast<int>(lo));
            std::copy(rec, rec + dim, orow);
            continue;
        }
        double t0 = s.timestamps[static_cast<size_t>(lo)];
        double t1 = s.timestamps[static_cast<size_t>(lo) + 1];
        const double* r0 = s.records.row(static_cast<int>(lo));
        const double* r1 = s.records.row(static_cast<int>(lo) + 1);
        if (t1 == t0) {
            std::copy(r0, r0 + dim, orow);
            continue;
        }
        double w = (t - t0) / (t1 - t0);
        for (int c = 0; c < dim; ++c) orow[c] = r0[c] + w * (r1[c] - r0[c]);
    }
    return out;
}

namespace {

// ee_pose layout is (x,y,z,qw,qx,qy,qz) per arm; renormalize each quaternion.
void renormalize_ee_pose(Matrix& cols) {
    if (cols.cols != 14) return;
    static constexpr int quat_offsets[2] = {3, 10};
    for (int r = 0; r < cols.rows; ++r) {
        double* row = cols.row(r);
        for (int off : quat_offsets) {
            double n = 0.0;
            for (int c = off; c < off + 4; ++c) n += row[c] * row[c];
            n = std::sqrt(n);
            if (n > 0.0) {
                for (int c = off; c < off + 4; ++c) row[c] /= n;
            }
        }
    }
}

}  // namespace

AlignedEpisode align_episode(const Episode& ep, double rate) {
    if (rate <= 0.0) throw Error("BadConfig", "rate must be positive");
    if (ep.streams.empty()) throw Error("NoOverlap", "episode has no streams");

    double start = -std::numeric_limits<double>::infinity();
    double end = std::numeric_limits<double>::infinity();
    for (const auto& [name, s] : ep.streams) {
        if (s.samples() == 0) throw Error("EmptyStream", "stream '" + name + "' is empty");
        start = std::max(start, s.first_t());
        end = std::min(end, s.last_t());
    }
    if (!(end > start)) {
        throw Error("NoOverlap", "streams share no overlap window of positive length");
    }

    double overlap = end - start;
    // floor(overlap*rate)+1 frames; the epsilon absorbs representation error
    // when overlap*rate is an exact integer.
    long long count = static_cast<long long>(std::floor(overlap * rate + 1e-9)) + 1;
    AlignedEpisode ae;
    ae.id = ep.id;
    ae.rate = rate;
    ae.timeline.resize(static_cast<size_t>(count));
    for (long long k = 0; k < count; ++k) {
        ae.timeline[static_cast<size_t>(k)] = start + static_cast<double>(k) / rate;
    }

    for (const auto& [name, s] : ep.streams) {
        ResampleMethod m = default_method(s.kind);
        Matrix cols = resample(s, ae.timeline, m);
        if (s.kind == StreamKind::ee_pose && m == ResampleMethod::linear) {
            renormalize_ee_pose(cols);
        }
        ae.columns[name] = std::move(cols);
        ae.kinds[name] = s.kind;
    }
    return ae;
}

JitterReport jitter_stats(const Episode& ep, const JitterThresholds& thresholds) {
    JitterReport report;
    for (const auto& [name, s] : ep.streams) {
        StreamJitter j;
        int n = s.samples();
        if (n >= 2) {
            double span = s.last_t() - s.first_t();
            if (s.nominal_rate > 0.0 && span > 0.0) {
                double expected = std::floor(span * s.nominal_rate + 1e-9) + 1.0;
                j.missing_fraction = clamp((expected - n) / expected, 0.0, 1.0);
            }
            double sum = 0.0, sum_sq = 0.0;
            for (int r = 1; r < n; ++r) {
                double dt = s.timestamps[static_cast<size_t>(r)] - s.timestamps[static_cast<size_t>(r) - 1];
                j.max_gap = std::max(j.max_gap, dt);
                sum += dt;
            }
            double mean = sum / (n - 1);
            for (int r = 1; r < n; ++r) {
                double dt = s.timestamps[static_cast<size_t>(r)] - s.timestamps[static_cast<size_t>(r) - 1];
                sum_sq += (dt - mean) * (dt - mean);
            }
            j.jitter_std = std::sqrt(sum_sq / (n - 1));
        }
        double theta_gap = s.nominal_rate > 0.0
                               ? thresholds.max_gap_factor / s.nominal_rate
                               : std::numeric_limits<double>::infinity();
        j.pass = j.missing_fraction <= thresholds.max_missing_fraction && j.max_gap <= theta_gap;
        report.pass = report.pass && j.pass;
        report.per_stream[name] = j;
    }
    return report;
}

ObservationBuffer::ObservationBuffer(std::vector<std::string> streams, double window_seconds,
                                     double staleness_bound)
    : window_(window_seconds), staleness_(staleness_bound) {
    for (auto& name : streams) buffers_[std::move(name)];
}

void ObservationBuffer::push(const std::string& stream, double t, Vec record) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = buffers_.find(stream);
    if (it == buffers_.end()) throw Error("MissingStream", "buffer has no stream '" + stream + "'");
    it->second.push_back({t, std::move(record)});
    t_newest_ = std::max(t_newest_, t);
    double cutoff = t_newest_ - window_;
    for (auto& [name, buf] : buffers_) {
        while (!buf.empty() && buf.front().t < cutoff) buf.pop_front();
    }
}

SyncedTuple ObservationBuffer::latest(double t_query) const {
    std::lock_guard<std::mutex> lock(mutex_);
    SyncedTuple tuple;
    tuple.t = t_query;
    for (const auto& [name, buf] : buffers_) {
        const Sample* best = nullptr;
        for (auto it = buf.rbegin(); it != buf.rend(); ++it) {
            if (it->t <= t_query) { best = &*it; break; }
        }
        if (best == nullptr || t_query - best->t > staleness_) {
            throw Error("StreamStale", "stream '" + name + "' has no record within " +
                                           format_double(staleness_) + " s of t=" +
                                           format_double(t_query));
        }
        tuple.records[name] = {best->t, best->values};
    }
    return tuple;
}

size_t ObservationBuffer::total_samples() const {
    std::lock_guard<std::mutex> lock(mutex_);
    size_t n = 0;
    for (const auto& [name, buf] : buffers_) n += buf.size();
    return n;
}

void write_aligned(const AlignedEpisode& ae, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("IoFailure", "cannot create " + dir.string());

    std::vector<std::string> header{"t"};
    for (const auto& [name, cols] : ae.columns) {
        for (int c = 0; c < cols.cols; ++c) {
            header.push_back(name + ".v" + std::to_string(c));
        }
    }
    std::vector<Vec> rows;
    rows.reserve(ae.timeline.size());
    for (int r = 0; r < ae.frames(); ++r) {
        Vec row;
        row.reserve(header.size());
        row.push_back(ae.timeline[static_cast<size_t>(r)]);
        for (const auto& [name, cols] : ae.columns) {
            const double* rec = cols.row(r);
            row.insert(row.end(), rec, rec + cols.cols);
        }
        rows.push_back(std::move(row));
    }
    write_numeric_csv(dir / "aligned.csv", header, rows);

    json manifest;
    manifest["id"] = ae.id;
    manifest["rate_hz"] = ae.rate;
    if (!ae.timeline.empty()) {
        manifest["window"] = {ae.timeline.front(), ae.timeline.back()};
    }
    json streams = json::object();
    for (const auto& [name, cols] : ae.columns) {
        StreamKind kind = ae.kinds.at(name);
        streams[name] = {{"kind", stream_kind_tag(kind)},
                         {"dim", cols.cols},
                         {"method", default_method(kind) == ResampleMethod::linear
                                        ? "linear"
                                        : "zero_order_hold"}};
    }
    manifest["streams"] = streams;
    std::ofstream out(dir / "aligned_manifest.json", std::ios::binary);
    if (!out) throw Error("IoFailure", "cannot write aligned manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

AlignedEpisode load_aligned(const fs::path& dir) {
    std::ifstream in(dir / "aligned_manifest.json");
    if (!in) throw Error("MissingManifest", "no aligned_manifest.json in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("BadManifest", std::string("aligned_manifest.json: ") + e.what());
    }

    AlignedEpisode ae;
    CsvTable table = read_numeric_csv(dir / "aligned.csv");
    try {
        ae.id = manifest.at("id").get<std::string>();
        ae.rate = manifest.at("rate_hz").get<double>();
        size_t col = 1;  // skip t
        for (auto& [name, entry] : manifest.at("streams").items()) {
            int dim = entry.at("dim").get<int>();
            StreamKind kind = parse_stream_kind(entry.at("kind").get<std::string>());
            Matrix cols(static_cast<int>(table.rows.size()), dim);
            for (size_t r = 0; r < table.rows.size(); ++r) {
                if (col + static_cast<size_t>(dim) > table.rows[r].size()) {
                    throw Error("BadManifest", "aligned.csv narrower than manifest claims");
                }
                for (int c = 0; c < dim; ++c) {
                    cols.at(static_cast<int>(r), c) = table.rows[r][col + static_cast<size_t>(c)];
                }
            }
            col += static_cast<size_t>(dim);
            ae.columns[name] = std::move(cols);
            ae.kinds[name] = kind;
        }
    } catch (const json::exception& e) {
        throw Error("BadManifest", std::string("aligned_manifest.json: ") + e.what());
    }
    ae.timeline.reserve(table.rows.size());
    for (const auto& row : table.rows) ae.timeline.push_back(row[0]);
    return ae;
}

}  // namespace vtk
