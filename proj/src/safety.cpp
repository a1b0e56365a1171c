#include "vtk/safety.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "vtk/csv.hpp"

namespace vtk {

using nlohmann::json;

void SafetyConfig::validate() const {
    if (q_min.size() != q_max.size() || q_min.empty()) {
        throw Error("BadConfig", "joint limit vectors must match and be non-empty");
    }
    for (size_t i = 0; i < q_min.size(); ++i) {
        if (!(q_min[i] < q_max[i])) {
            throw Error("BadConfig", "q_min must be elementwise below q_max");
        }
    }
    if (!(v_max > 0.0)) throw Error("BadConfig", "v_max must be positive");
    if (!(dt > 0.0)) throw Error("BadConfig", "dt must be positive");
}

SafetyConfig load_safety_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoFailure", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("BadConfig", std::string("safety config: ") + e.what());
    }
    SafetyConfig cfg;
    try {
        if (doc.contains("q_min")) cfg.q_min = doc.at("q_min").get<Vec>();
        if (doc.contains("q_max")) cfg.q_max = doc.at("q_max").get<Vec>();
        if (doc.contains("v_max")) cfg.v_max = doc.at("v_max").get<double>();
        if (doc.contains("dt")) cfg.dt = doc.at("dt").get<double>();
        if (doc.contains("interpolation")) cfg.interpolation = doc.at("interpolation").get<bool>();
        if (doc.contains("velocity_mode")) {
            auto mode = doc.at("velocity_mode").get<std::string>();
            if (mode == "norm") cfg.velocity_mode = VelocityMode::norm_rescale;
            else if (mode == "per_joint") cfg.velocity_mode = VelocityMode::per_joint_clamp;
            else throw Error("BadConfig", "velocity_mode must be 'norm' or 'per_joint'");
        }
    } catch (const json::exception& e) {
        throw Error("BadConfig", std::string("safety config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void save_safety_config(const SafetyConfig& cfg, const std::filesystem::path& path) {
    json doc;
    doc["q_min"] = cfg.q_min;
    doc["q_max"] = cfg.q_max;
    doc["v_max"] = cfg.v_max;
    doc["dt"] = cfg.dt;
    doc["interpolation"] = cfg.interpolation;
    doc["velocity_mode"] =
        cfg.velocity_mode == VelocityMode::norm_rescale ? "norm" : "per_joint";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoFailure", "cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

Vec apply_delta(const Vec& q_last, const Vec& a_delta) {
    if (q_last.size() != a_delta.size()) {
        throw Error("ShapeMismatch", "delta dimension does not match configuration");
    }
    if (!all_finite(q_last) || !all_finite(a_delta)) {
        throw Error("NonFinite", "apply_delta inputs must be finite");
    }
    Vec q(q_last.size());
    for (size_t i = 0; i < q.size(); ++i) q[i] = q_last[i] + a_delta[i];
    return q;
}

Vec clip_joints(const Vec& q, const SafetyConfig& cfg) {
    Vec out(q.size());
    for (size_t i = 0; i < q.size(); ++i) out[i] = clamp(q[i], cfg.q_min[i], cfg.q_max[i]);
    return out;
}

Vec limit_velocity(const Vec& q_cmd, const Vec& q_prev, const SafetyConfig& cfg) {
    const double bound = cfg.v_max * cfg.dt;
    Vec out(q_cmd.size());
    if (cfg.velocity_mode == VelocityMode::per_joint_clamp) {
        for (size_t i = 0; i < q_cmd.size(); ++i) {
            out[i] = q_prev[i] + clamp(q_cmd[i] - q_prev[i], -bound, bound);
        }
        return out;
    }
    double norm = 0.0;
    for (size_t i = 0; i < q_cmd.size(); ++i) {
        double d = q_cmd[i] - q_prev[i];
        norm += d * d;
    }
    norm = std::sqrt(norm);
    if (norm <= bound) return q_cmd;
    double scale = bound / norm;
    for (size_t i = 0; i < q_cmd.size(); ++i) {
        out[i] = q_prev[i] + (q_cmd[i] - q_prev[i]) * scale;
    }
    return out;
}

Vec interpolate(const Vec& q_prev, const Vec& q_cmd, double t, double t_k, double t_k1) {
    if (!(t_k < t_k1)) throw Error("DegenerateInterval", "t_k must precede t_k1");
    if (t < t_k || t > t_k1) {
        throw Error("TimelineOutOfRange", "t outside [t_k, t_k1]");
    }
    double w = (t - t_k) / (t_k1 - t_k);
    // two-coefficient form keeps both endpoints exact
    Vec out(q_prev.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - w) * q_prev[i] + w * q_cmd[i];
    return out;
}

SafetyTrace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoFailure", "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error("ParseFailure", "empty trace: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_fields(line);
    if (header.size() < 3 || header.front() != "t" || header.back() != "mode") {
        throw Error("ParseFailure", "trace header must be t,a0,...,mode");
    }
    const int dim = static_cast<int>(header.size()) - 2;

    SafetyTrace trace;
    trace.actions = Matrix(0, dim);
    bool mode_set = false;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw Error("ParseFailure", path.string() + ":" + std::to_string(lineno) +
                                            ": wrong field count");
        }
        trace.t.push_back(parse_double(fields[0]));
        for (int c = 0; c < dim; ++c) {
            trace.actions.data.push_back(parse_double(fields[static_cast<size_t>(c) + 1]));
        }
        trace.actions.rows += 1;
        const std::string& mode = fields.back();
        ActionMode m;
        if (mode == "absolute") m = ActionMode::absolute;
        else if (mode == "delta") m = ActionMode::delta;
        else throw Error("ParseFailure", "mode must be 'absolute' or 'delta', got '" + mode + "'");
        if (mode_set && m != trace.mode) {
            throw Error("ParseFailure", "trace mixes absolute and delta rows");
        }
        trace.mode = m;
        mode_set = true;
    }
    return trace;
}

void write_commands(const std::filesystem::path& path, const Vec& t, const Matrix& commands) {
    std::vector<std::string> header{"t"};
    for (int c = 0; c < commands.cols; ++c) header.push_back("q" + std::to_string(c));
    std::vector<Vec> rows;
    rows.reserve(static_cast<size_t>(commands.rows));
    for (int r = 0; r < commands.rows; ++r) {
        Vec row;
        row.reserve(static_cast<size_t>(commands.cols) + 1);
        row.push_back(t[static_cast<size_t>(r)]);
        const double* rec = commands.row(r);
        row.insert(row.end(), rec, rec + commands.cols);
        rows.push_back(std::move(row));
    }
    write_numeric_csv(path, header, rows);
}

Matrix pipeline(const SafetyTrace& trace, const Vec& q0, const SafetyConfig& cfg) {
    cfg.validate();
    if (q0.size() != cfg.q_min.size()) {
        throw Error("ShapeMismatch", "q0 dimension does not match joint limits");
    }
    if (trace.actions.cols != static_cast<int>(q0.size())) {
        throw Error("ShapeMismatch", "trace dimension does not match q0");
    }
    Matrix out(trace.actions.rows, trace.actions.cols);
    Vec q_last = q0;  // post-safety command, so clipping cannot wind up
    Vec q_prev = q0;
    for (int step = 0; step < trace.actions.rows; ++step) {
        Vec a = trace.actions.row_vec(step);
        if (!all_finite(a)) {
            throw Error("NonFinite", "trace step " + std::to_string(step) + " is non-finite");
        }
        Vec target = trace.mode == ActionMode::delta ? apply_delta(q_last, a) : a;
        Vec cmd = limit_velocity(clip_joints(target, cfg), q_prev, cfg);
        out.set_row(step, cmd);
        q_last = cmd;
        q_prev = cmd;
    }
    return out;
}

}  // namespace vtk
