#include "vtk/episode.hpp"

#include <fstream>

#include "json.hpp"
#include "vtk/csv.hpp"

namespace vtk {

namespace fs = std::filesystem;
using nlohmann::json;

int fixed_dim(StreamKind kind) {
    switch (kind) {
        case StreamKind::joint_pos: return 14;
        case StreamKind::joint_vel: return 14;
        case StreamKind::ee_pose: return 14;  // 7 per arm
        case StreamKind::gripper: return 2;
        case StreamKind::action_command: return 14;
        case StreamKind::visual_feature:
        case StreamKind::tactile_feature: return 0;
    }
    return 0;
}

StreamKind parse_stream_kind(const std::string& tag) {
    if (tag == "visual_feature") return StreamKind::visual_feature;
    if (tag == "tactile_feature") return StreamKind::tactile_feature;
    if (tag == "joint_pos") return StreamKind::joint_pos;
    if (tag == "joint_vel") return StreamKind::joint_vel;
    if (tag == "ee_pose") return StreamKind::ee_pose;
    if (tag == "gripper") return StreamKind::gripper;
    if (tag == "action_command") return StreamKind::action_command;
    throw Error("BadManifest", "unknown stream kind '" + tag + "'");
}

std::string stream_kind_tag(StreamKind kind) {
    switch (kind) {
        case StreamKind::visual_feature: return "visual_feature";
        case StreamKind::tactile_feature: return "tactile_feature";
        case StreamKind::joint_pos: return "joint_pos";
        case StreamKind::joint_vel: return "joint_vel";
        case StreamKind::ee_pose: return "ee_pose";
        case StreamKind::gripper: return "gripper";
        case StreamKind::action_command: return "action_command";
    }
    return "?";
}

double Episode::duration() const {
    double d = 0.0;
    for (const auto& [name, s] : streams) {
        if (s.samples() > 0) d = std::max(d, s.last_t() - s.first_t());
    }
    return d;
}

namespace {

std::vector<std::string> stream_header(int dim) {
    std::vector<std::string> h;
    h.reserve(static_cast<size_t>(dim) + 1);
    h.emplace_back("t");
    for (int i = 0; i < dim; ++i) h.push_back("v" + std::to_string(i));
    return h;
}

void check_declared_dim(const std::string& name, StreamKind kind, int dim) {
    int want = fixed_dim(kind);
    if (want > 0 && dim != want) {
        throw Error("DimensionMismatch", "stream '" + name + "' kind " + stream_kind_tag(kind) +
                                             " requires dim " + std::to_string(want) + ", got " +
                                             std::to_string(dim));
    }
    if (want == 0 && dim < 1) {
        throw Error("DimensionMismatch",
                    "feature stream '" + name + "' must declare dim >= 1");
    }
}

bool rows_equal(const Matrix& m, int a, int b) {
    for (int c = 0; c < m.cols; ++c) {
        if (m.at(a, c) != m.at(b, c)) return false;
    }
    return true;
}

RawStream load_stream(const std::string& name, StreamKind kind, int declared_dim,
                      double nominal_rate, const fs::path& file) {
    CsvTable table = read_numeric_csv(file);
    auto want_header = stream_header(declared_dim);
    if (table.header.size() != want_header.size()) {
        throw Error("DimensionMismatch",
                    "stream '" + name + "': declared dim " + std::to_string(declared_dim) +
                        " but file has " + std::to_string(table.header.size() - 1) +
                        " value columns");
    }
    if (table.header != want_header) {
        throw Error("BadManifest", "stream '" + name + "': header must be t,v0,...,v" +
                                       std::to_string(declared_dim - 1));
    }

    RawStream s;
    s.kind = kind;
    s.nominal_rate = nominal_rate;
    s.records = Matrix(0, declared_dim);
    s.records.data.reserve(table.rows.size() * static_cast<size_t>(declared_dim));
    s.timestamps.reserve(table.rows.size());

    for (size_t r = 0; r < table.rows.size(); ++r) {
        const Vec& row = table.rows[r];
        for (double v : row) {
            if (!std::isfinite(v)) {
                throw Error("NonFiniteValue",
                            "stream '" + name + "' row " + std::to_string(r) + " has a non-finite value");
            }
        }
        double t = row[0];
        if (!s.timestamps.empty()) {
            double prev = s.timestamps.back();
            if (t < prev) {
                throw Error("NonMonotonicTimestamps",
                            "stream '" + name + "' row " + std::to_string(r) + ": t decreases");
            }
            if (t == prev) {
                // collapse duplicate timestamps with identical records
                bool same = true;
                int last = s.records.rows - 1;
                for (int c = 0; c < declared_dim; ++c) {
                    if (s.records.at(last, c) != row[static_cast<size_t>(c) + 1]) { same = false; break; }
                }
                if (same) continue;
                throw Error("NonMonotonicTimestamps",
                            "stream '" + name + "' row " + std::to_string(r) +
                                ": duplicate timestamp with differing records");
            }
        }
        s.timestamps.push_back(t);
        s.records.rows += 1;
        s.records.data.insert(s.records.data.end(), row.begin() + 1, row.end());
    }
    if (s.samples() == 0) {
        throw Error("EmptyStream", "stream '" + name + "' has no samples");
    }
    return s;
}

}  // namespace

Episode load_episode(const fs::path& dir) {
    fs::path manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw Error("MissingManifest", "no manifest.json in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("BadManifest", std::string("manifest.json: ") + e.what());
    }

    Episode ep;
    try {
        ep.id = manifest.at("id").get<std::string>();
        if (manifest.contains("skill_axes")) {
            for (auto& [axis, value] : manifest.at("skill_axes").items()) {
                ep.skill_axes[axis] = value.get<std::string>();
            }
        }
        for (const auto& entry : manifest.at("streams")) {
            auto name = entry.at("name").get<std::string>();
            auto kind = parse_stream_kind(entry.at("kind").get<std::string>());
            int dim = entry.at("dim").get<int>();
            double rate = entry.at("nominal_rate_hz").get<double>();
            auto file = entry.at("file").get<std::string>();
            check_declared_dim(name, kind, dim);
            fs::path stream_path = dir / file;
            if (!fs::exists(stream_path)) {
                throw Error("IoFailure", "manifest declares missing file " + stream_path.string());
            }
            ep.streams[name] = load_stream(name, kind, dim, rate, stream_path);
        }
    } catch (const json::exception& e) {
        throw Error("BadManifest", std::string("manifest.json: ") + e.what());
    }
    if (ep.streams.empty()) {
        throw Error("BadManifest", "manifest declares no streams");
    }
    return ep;
}

std::vector<Issue> validate_episode(const Episode& ep, const ValidateConfig& cfg) {
    std::vector<Issue> issues;
    if (ep.streams.empty()) {
        issues.push_back({"no_streams", "", -1, -1, "episode has no streams"});
        return issues;
    }
    for (const auto& [name, s] : ep.streams) {
        if (s.samples() == 0) {
            issues.push_back({"empty", name, -1, -1, "stream has no samples"});
            continue;
        }
        int want = fixed_dim(s.kind);
        if ((want > 0 && s.dim() != want) || (want == 0 && s.dim() < 1)) {
            issues.push_back({"dimension", name, -1, -1,
                              "kind " + stream_kind_tag(s.kind) + " with dim " +
                                  std::to_string(s.dim())});
        }
        if (static_cast<int>(s.timestamps.size()) != s.samples()) {
            issues.push_back({"dimension", name, -1, -1, "timestamp/record count mismatch"});
            continue;
        }
        for (int r = 0; r < s.samples(); ++r) {
            bool finite = std::isfinite(s.timestamps[static_cast<size_t>(r)]);
            for (int c = 0; finite && c < s.dim(); ++c) {
                finite = std::isfinite(s.records.at(r, c));
            }
            if (!finite) {
                issues.push_back({"non_finite", name, r, r, "non-finite value"});
            }
        }
        for (int r = 1; r < s.samples(); ++r) {
            double prev = s.timestamps[static_cast<size_t>(r) - 1];
            double cur = s.timestamps[static_cast<size_t>(r)];
            if (cur < prev) {
                issues.push_back({"non_monotonic", name, r - 1, r, "timestamps decrease"});
            } else if (cur == prev && !rows_equal(s.records, r - 1, r)) {
                issues.push_back({"non_monotonic", name, r - 1, r,
                                  "duplicate timestamp with differing records"});
            }
        }
        if (s.nominal_rate > 0.0) {
            double max_dt = cfg.gap_factor / s.nominal_rate;
            for (int r = 1; r < s.samples(); ++r) {
                double dt = s.timestamps[static_cast<size_t>(r)] - s.timestamps[static_cast<size_t>(r) - 1];
                if (dt > max_dt) {
                    issues.push_back({"gap", name, r - 1, r,
                                      "gap of " + format_double(dt) + " s exceeds " +
                                          format_double(max_dt) + " s"});
                }
            }
        }
    }
    return issues;
}

void write_episode(const Episode& ep, const fs::path& dir) {
    // gaps are a quality concern, not a validity one; everything else rejects
    ValidateConfig no_gap_cfg;
    no_gap_cfg.gap_factor = std::numeric_limits<double>::infinity();
    auto issues = validate_episode(ep, no_gap_cfg);
    if (!issues.empty()) {
        throw Error("RejectedInvalid",
                    "episode '" + ep.id + "' fails validation: " + issues.front().kind +
                        " in stream '" + issues.front().stream + "'");
    }

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("IoFailure", "cannot create " + dir.string());

    json manifest;
    manifest["id"] = ep.id;
    if (!ep.skill_axes.empty()) {
        json axes = json::object();
        for (const auto& [axis, value] : ep.skill_axes) axes[axis] = value;
        manifest["skill_axes"] = axes;
    }
    json streams = json::array();
    for (const auto& [name, s] : ep.streams) {
        std::string file = name + ".csv";
        streams.push_back({{"name", name},
                           {"kind", stream_kind_tag(s.kind)},
                           {"dim", s.dim()},
                           {"nominal_rate_hz", s.nominal_rate},
                           {"file", file}});
        std::vector<Vec> rows;
        rows.reserve(static_cast<size_t>(s.samples()));
        for (int r = 0; r < s.samples(); ++r) {
            Vec row;
            row.reserve(static_cast<size_t>(s.dim()) + 1);
            row.push_back(s.timestamps[static_cast<size_t>(r)]);
            const double* rec = s.records.row(r);
            row.insert(row.end(), rec, rec + s.dim());
            rows.push_back(std::move(row));
        }
        write_numeric_csv(dir / file, stream_header(s.dim()), rows);
    }
    manifest["streams"] = streams;

    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw Error("IoFailure", "cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw Error("IoFailure", "manifest write failed in " + dir.string());
}

}  // namespace vtk
