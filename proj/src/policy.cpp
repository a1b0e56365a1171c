#include "vtk/policy.hpp"

#include <fstream>

#include "json.hpp"

namespace vtk {

using nlohmann::json;

ValidationDataset::ValidationDataset(std::vector<AlignedEpisode> episodes)
    : episodes_(std::move(episodes)) {
    if (episodes_.empty()) throw Error("MissingActionStream", "no episodes given");
    const AlignedEpisode& first = episodes_.front();
    for (const auto& [name, kind] : first.kinds) {
        if (kind == StreamKind::action_command) {
            action_stream_ = name;
        } else {
            obs_streams_.push_back(name);
            obs_dim_ += first.columns.at(name).cols;
        }
    }
    if (action_stream_.empty()) {
        throw Error("MissingActionStream", "dataset has no action_command stream");
    }
    action_dim_ = first.columns.at(action_stream_).cols;
    for (const auto& ep : episodes_) {
        if (ep.kinds.find(action_stream_) == ep.kinds.end()) {
            throw Error("MissingActionStream",
                        "episode '" + ep.id + "' lacks stream '" + action_stream_ + "'");
        }
        for (const auto& name : obs_streams_) {
            if (ep.columns.find(name) == ep.columns.end()) {
                throw Error("MissingStream", "episode '" + ep.id + "' lacks stream '" + name + "'");
            }
        }
    }
}

int ValidationDataset::episode_frames(int episode) const {
    return episodes_[static_cast<size_t>(episode)].frames();
}

std::vector<ValidationDataset::FrameId> ValidationDataset::valid_frames(int n_obs_steps) const {
    std::vector<FrameId> frames;
    for (int e = 0; e < episode_count(); ++e) {
        for (int t = n_obs_steps - 1; t < episode_frames(e); ++t) {
            frames.push_back({e, t});
        }
    }
    return frames;
}

Matrix ValidationDataset::obs_window(FrameId f, int n_obs_steps) const {
    const AlignedEpisode& ep = episodes_[static_cast<size_t>(f.episode)];
    Matrix window(n_obs_steps, obs_dim_);
    for (int k = 0; k < n_obs_steps; ++k) {
        int t = f.t - (n_obs_steps - 1) + k;
        if (t < 0 || t >= ep.frames()) {
            throw Error("EpisodeTooShort", "observation window out of range");
        }
        double* out = window.row(k);
        for (const auto& name : obs_streams_) {
            const Matrix& cols = ep.columns.at(name);
            const double* src = cols.row(t);
            std::copy(src, src + cols.cols, out);
            out += cols.cols;
        }
    }
    return window;
}

Vec ValidationDataset::expert_action(FrameId f) const {
    const AlignedEpisode& ep = episodes_[static_cast<size_t>(f.episode)];
    return ep.columns.at(action_stream_).row_vec(f.t);
}

Vec NoisyExpertPolicy::act(const ObsWindow& obs) {
    Vec a = obs.expert;
    for (double& v : a) v += rng_.gaussian(0.0, sigma_);
    return a;
}

LinearPolicy::LinearPolicy(Matrix weights, Vec bias, int n_obs_steps)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
    n_obs_steps_ = n_obs_steps;
}

Vec LinearPolicy::act(const ObsWindow& obs) {
    if (static_cast<int>(obs.frames.data.size()) != weights_.cols) {
        throw Error("ShapeMismatch", "observation window does not match trained weights");
    }
    Vec out = bias_;
    for (int r = 0; r < weights_.rows; ++r) {
        const double* wrow = weights_.row(r);
        double s = 0.0;
        for (size_t c = 0; c < obs.frames.data.size(); ++c) s += wrow[c] * obs.frames.data[c];
        out[static_cast<size_t>(r)] += s;
    }
    return out;
}

namespace {

// in-place SPD solve via Cholesky; rhs has one column per action dim
Matrix solve_spd(Matrix a, Matrix rhs) {
    const int n = a.rows;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a.at(i, j);
            for (int k = 0; k < j; ++k) s -= a.at(i, k) * a.at(j, k);
            if (i == j) {
                if (s <= 0.0) throw Error("NonFinite", "normal equations not positive definite");
                a.at(i, i) = std::sqrt(s);
            } else {
                a.at(i, j) = s / a.at(j, j);
            }
        }
    }
    for (int c = 0; c < rhs.cols; ++c) {
        for (int i = 0; i < n; ++i) {
            double s = rhs.at(i, c);
            for (int k = 0; k < i; ++k) s -= a.at(i, k) * rhs.at(k, c);
            rhs.at(i, c) = s / a.at(i, i);
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = rhs.at(i, c);
            for (int k = i + 1; k < n; ++k) s -= a.at(k, i) * rhs.at(k, c);
            rhs.at(i, c) = s / a.at(i, i);
        }
    }
    return rhs;
}

}  // namespace

LinearPolicy LinearPolicy::fit(const ValidationDataset& ds, int n_obs_steps, double ridge) {
    auto frames = ds.valid_frames(n_obs_steps);
    if (frames.empty()) throw Error("EpisodeTooShort", "no frames to fit on");
    const int p = n_obs_steps * ds.obs_dim() + 1;  // + bias column
    const int d = ds.action_dim();

    Matrix ata(p, p);
    Matrix aty(p, d);
    Vec row(static_cast<size_t>(p));
    for (const auto& f : frames) {
        Matrix w = ds.obs_window(f, n_obs_steps);
        std::copy(w.data.begin(), w.data.end(), row.begin());
        row[static_cast<size_t>(p) - 1] = 1.0;
        Vec y = ds.expert_action(f);
        for (int i = 0; i < p; ++i) {
            const double ri = row[static_cast<size_t>(i)];
            if (ri == 0.0) continue;
            double* arow = ata.row(i);
            for (int j = 0; j < p; ++j) arow[j] += ri * row[static_cast<size_t>(j)];
            double* yrow = aty.row(i);
            for (int j = 0; j < d; ++j) yrow[j] += ri * y[static_cast<size_t>(j)];
        }
    }
    for (int i = 0; i < p; ++i) ata.at(i, i) += ridge;

    Matrix x = solve_spd(std::move(ata), std::move(aty));  // p x d
    Matrix weights(d, p - 1);
    Vec bias(static_cast<size_t>(d));
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < p - 1; ++c) weights.at(r, c) = x.at(c, r);
        bias[static_cast<size_t>(r)] = x.at(p - 1, r);
    }
    return LinearPolicy(std::move(weights), std::move(bias), n_obs_steps);
}

void LinearPolicy::save(const std::filesystem::path& path) const {
    json doc;
    doc["policy"] = "linear";
    doc["n_obs_steps"] = n_obs_steps_;
    doc["bias"] = bias_;
    json rows = json::array();
    for (int r = 0; r < weights_.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < weights_.cols; ++c) row.push_back(weights_.at(r, c));
        rows.push_back(std::move(row));
    }
    doc["weights"] = rows;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoFailure", "cannot write " + path.string());
    out << doc.dump(1) << '\n';
}

LinearPolicy LinearPolicy::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoFailure", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
        Matrix w;
        const auto& rows = doc.at("weights");
        w.rows = static_cast<int>(rows.size());
        w.cols = w.rows ? static_cast<int>(rows.at(0).size()) : 0;
        for (const auto& row : rows) {
            for (const auto& v : row) w.data.push_back(v.get<double>());
        }
        return LinearPolicy(std::move(w), doc.at("bias").get<Vec>(),
                            doc.at("n_obs_steps").get<int>());
    } catch (const json::exception& e) {
        throw Error("BadCheckpoint", std::string("policy checkpoint: ") + e.what());
    }
}

std::unique_ptr<PolicyAdapter> load_policy_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoFailure", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
        auto kind = doc.at("policy").get<std::string>();
        if (kind == "linear") {
            return std::make_unique<LinearPolicy>(LinearPolicy::load(path));
        }
        if (kind == "constant") {
            return std::make_unique<ConstantPolicy>(doc.at("action").get<Vec>(),
                                                    doc.value("n_obs_steps", 1));
        }
        throw Error("BadCheckpoint", "unsupported external policy kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw Error("BadCheckpoint", std::string("policy checkpoint: ") + e.what());
    }
}

std::unique_ptr<PolicyAdapter> make_policy(const std::string& spec, const ValidationDataset* ds,
                                           uint64_t seed, int n_obs_steps) {
    if (spec == "replay") return std::make_unique<ReplayExpertPolicy>(n_obs_steps);
    if (spec.rfind("noisy", 0) == 0) {
        double sigma = 0.05;
        auto colon = spec.find(':');
        if (colon != std::string::npos) sigma = parse_double(spec.substr(colon + 1));
        return std::make_unique<NoisyExpertPolicy>(sigma, seed, n_obs_steps);
    }
    if (spec.rfind("constant", 0) == 0) {
        Vec a(14, 0.0);
        auto colon = spec.find(':');
        if (colon != std::string::npos) {
            a.clear();
            std::string rest = spec.substr(colon + 1);
            size_t start = 0;
            while (start <= rest.size()) {
                size_t comma = rest.find(',', start);
                std::string field = comma == std::string::npos ? rest.substr(start)
                                                               : rest.substr(start, comma - start);
                a.push_back(parse_double(field));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
        }
        return std::make_unique<ConstantPolicy>(std::move(a), n_obs_steps);
    }
    if (spec == "linear") {
        if (!ds) throw Error("BadConfig", "linear policy needs a dataset to fit on");
        return std::make_unique<LinearPolicy>(LinearPolicy::fit(*ds, n_obs_steps));
    }
    if (spec.size() > 5 && spec.substr(spec.size() - 5) == ".json") {
        return load_policy_checkpoint(spec);
    }
    throw Error("UnknownPolicy", "policy spec '" + spec + "' not recognized");
}

}  // namespace vtk
