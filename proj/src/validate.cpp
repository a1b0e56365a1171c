#include "vtk/validate.hpp"

#include <cmath>

namespace vtk {

Layer1Report layer1(PolicyAdapter& policy, const ValidationDataset& ds, long long n_samples,
                    uint64_t seed, double mae_threshold) {
    if (n_samples < 1) throw Error("BadConfig", "n_samples must be >= 1");
    const int n_obs = policy.n_obs_steps();
    auto frames = ds.valid_frames(n_obs);
    if (frames.empty()) throw Error("EpisodeTooShort", "no frames with a full observation window");

    Rng rng(seed);
    std::vector<size_t> picks;
    if (n_samples <= static_cast<long long>(frames.size())) {
        picks = rng.sample_without_replacement(frames.size(), static_cast<size_t>(n_samples));
    } else {
        picks.reserve(static_cast<size_t>(n_samples));
        for (long long i = 0; i < n_samples; ++i) picks.push_back(rng.below(frames.size()));
    }

    const int d = ds.action_dim();
    Layer1Report rep;
    rep.per_dim_mae.assign(static_cast<size_t>(d), 0.0);
    double abs_sum = 0.0, sq_sum = 0.0;
    double a_sum = 0.0, a_sq_sum = 0.0;
    long long count = 0;
    long long frame_ordinal = 0;
    for (size_t pick : picks) {
        auto f = frames[pick];
        ObsWindow obs{ds.obs_window(f, n_obs), ds.expert_action(f), frame_ordinal++};
        Vec pred = policy.act(obs);
        if (static_cast<int>(pred.size()) != d) {
            throw Error("ShapeMismatch", "policy returned action of wrong dimension");
        }
        for (int j = 0; j < d; ++j) {
            double e = pred[static_cast<size_t>(j)] - obs.expert[static_cast<size_t>(j)];
            abs_sum += std::abs(e);
            sq_sum += e * e;
            rep.per_dim_mae[static_cast<size_t>(j)] += std::abs(e);
            double a = obs.expert[static_cast<size_t>(j)];
            a_sum += a;
            a_sq_sum += a * a;
        }
        count += d;
    }
    rep.n_frames = static_cast<long long>(picks.size());
    rep.mae = abs_sum / static_cast<double>(count);
    rep.mse = sq_sum / static_cast<double>(count);
    for (double& v : rep.per_dim_mae) v /= static_cast<double>(rep.n_frames);
    // sigma over the flattened sampled expert actions (population)
    double a_mean = a_sum / static_cast<double>(count);
    double var = a_sq_sum / static_cast<double>(count) - a_mean * a_mean;
    double sigma = std::sqrt(std::max(var, 0.0));
    rep.expert_similarity = 1.0 - rep.mae / (sigma + 1e-8);
    rep.pass = rep.mae < mae_threshold;
    return rep;
}

namespace {

struct Layer2Accum {
    int dim = 0;
    Vec sum, sq, lo, hi;
    double diff_sum = 0.0;
    long long diff_count = 0;
    double jerk_sum = 0.0;
    long long jerk_count = 0;
    double energy_sum = 0.0;
    long long frames = 0;
    long long pos_viol = 0, vel_viol = 0, acc_viol = 0;

    void add(const Matrix& a, const Layer2Bounds& b) {
        if (a.rows < 4) throw Error("TooShort", "jerk needs at least 4 actions");
        if (dim == 0) {
            dim = a.cols;
            sum.assign(static_cast<size_t>(dim), 0.0);
            sq.assign(static_cast<size_t>(dim), 0.0);
            lo.assign(static_cast<size_t>(dim), std::numeric_limits<double>::infinity());
            hi.assign(static_cast<size_t>(dim), -std::numeric_limits<double>::infinity());
        } else if (a.cols != dim) {
            throw Error("ShapeMismatch", "action sequences disagree on dimension");
        }
        for (int t = 0; t < a.rows; ++t) {
            const double* row = a.row(t);
            double energy = 0.0;
            bool pos_bad = false;
            for (int j = 0; j < dim; ++j) {
                double v = row[j];
                sum[static_cast<size_t>(j)] += v;
                sq[static_cast<size_t>(j)] += v * v;
                lo[static_cast<size_t>(j)] = std::min(lo[static_cast<size_t>(j)], v);
                hi[static_cast<size_t>(j)] = std::max(hi[static_cast<size_t>(j)], v);
                energy += v * v;
                if (v < b.pos_min || v > b.pos_max) pos_bad = true;
            }
            energy_sum += energy;
            if (pos_bad) ++pos_viol;
        }
        frames += a.rows;
        for (int t = 0; t + 1 < a.rows; ++t) {
            bool vel_bad = false;
            for (int j = 0; j < dim; ++j) {
                double dv = std::abs(a.at(t + 1, j) - a.at(t, j));
                diff_sum += dv;
                if (dv > b.vel_max) vel_bad = true;
            }
            diff_count += dim;
            if (vel_bad) ++vel_viol;
        }
        for (int t = 0; t + 2 < a.rows; ++t) {
            bool acc_bad = false;
            for (int j = 0; j < dim; ++j) {
                double dd = std::abs(a.at(t + 2, j) - 2.0 * a.at(t + 1, j) + a.at(t, j));
                if (dd > b.acc_max) acc_bad = true;
            }
            if (acc_bad) ++acc_viol;
        }
        // valid stencil positions: t-1 >= 0 and t+2 <= rows-1
        for (int t = 1; t + 2 < a.rows; ++t) {
            for (int j = 0; j < dim; ++j) {
                double jerk = a.at(t + 2, j) - 3.0 * a.at(t + 1, j) + 3.0 * a.at(t, j) - a.at(t - 1, j);
                jerk_sum += std::abs(jerk);
            }
            jerk_count += dim;
        }
    }

    Layer2Report finish() const {
        Layer2Report rep;
        rep.n_frames = frames;
        rep.mean.assign(static_cast<size_t>(dim), 0.0);
        rep.stddev.assign(static_cast<size_t>(dim), 0.0);
        rep.range.assign(static_cast<size_t>(dim), 0.0);
        for (int j = 0; j < dim; ++j) {
            double m = sum[static_cast<size_t>(j)] / static_cast<double>(frames);
            double var = sq[static_cast<size_t>(j)] / static_cast<double>(frames) - m * m;
            rep.mean[static_cast<size_t>(j)] = m;
            rep.stddev[static_cast<size_t>(j)] = std::sqrt(std::max(var, 0.0));
            rep.range[static_cast<size_t>(j)] = hi[static_cast<size_t>(j)] - lo[static_cast<size_t>(j)];
        }
        rep.action_diff_mean = diff_count ? diff_sum / static_cast<double>(diff_count) : 0.0;
        rep.jerk_mean = jerk_count ? jerk_sum / static_cast<double>(jerk_count) : 0.0;
        rep.smoothness_score = 1.0 / (1.0 + rep.jerk_mean);
        rep.energy_mean = energy_sum / static_cast<double>(frames);
        rep.position_violations = pos_viol;
        rep.velocity_violations = vel_viol;
        rep.acceleration_violations = acc_viol;
        return rep;
    }
};

}  // namespace

Layer2Report layer2(const Matrix& actions, const Layer2Bounds& bounds) {
    Layer2Accum acc;
    acc.add(actions, bounds);
    return acc.finish();
}

Layer2Report layer2_multi(const std::vector<Matrix>& sequences, const Layer2Bounds& bounds) {
    if (sequences.empty()) throw Error("TooShort", "no action sequences");
    Layer2Accum acc;
    for (const auto& s : sequences) acc.add(s, bounds);
    return acc.finish();
}

Layer3Report layer3(PolicyAdapter& policy, const ValidationDataset& ds, int episode, int k_steps,
                    double growth_threshold) {
    if (episode < 0 || episode >= ds.episode_count()) {
        throw Error("IndexOutOfRange", "episode index out of range");
    }
    const int n_obs = policy.n_obs_steps();
    const int len = ds.episode_frames(episode);
    if (!(len > k_steps + n_obs)) {
        throw Error("EpisodeTooShort", "episode of " + std::to_string(len) +
                                           " frames cannot run K=" + std::to_string(k_steps) +
                                           " with n_obs_steps=" + std::to_string(n_obs));
    }
    Layer3Report rep;
    rep.error_curve.reserve(static_cast<size_t>(k_steps) + 1);
    const int start = n_obs - 1;
    for (int t = 0; t <= k_steps; ++t) {
        ValidationDataset::FrameId f{episode, start + t};
        ObsWindow obs{ds.obs_window(f, n_obs), ds.expert_action(f), t};
        Vec pred = policy.act(obs);
        double err = 0.0;
        for (size_t j = 0; j < pred.size(); ++j) err += std::abs(pred[j] - obs.expert[j]);
        rep.error_curve.push_back(err / static_cast<double>(pred.size()));
    }
    rep.final_error = rep.error_curve.back();
    rep.error_growth = rep.error_curve.back() - rep.error_curve.front();
    rep.pass = rep.error_growth < growth_threshold;
    return rep;
}

Layer4Report layer4(PolicyAdapter& policy, const ObsWindow& obs, long long k_repeats) {
    if (k_repeats < 2) throw Error("BadConfig", "layer4 needs K >= 2 repeats");
    Layer4Report rep;
    rep.repeats = k_repeats;
    Vec sum, sq;
    int d = 0;
    for (long long k = 0; k < k_repeats; ++k) {
        Vec a = policy.act(obs);
        if (sum.empty()) {
            d = static_cast<int>(a.size());
            sum.assign(a.size(), 0.0);
            sq.assign(a.size(), 0.0);
        }
        for (size_t j = 0; j < a.size(); ++j) {
            sum[j] += a[j];
            sq[j] += a[j] * a[j];
        }
    }
    rep.per_dim_variance.assign(static_cast<size_t>(d), 0.0);
    double total = 0.0;
    for (int j = 0; j < d; ++j) {
        double m = sum[static_cast<size_t>(j)] / static_cast<double>(k_repeats);
        double var = sq[static_cast<size_t>(j)] / static_cast<double>(k_repeats) - m * m;
        var = std::max(var, 0.0);
        rep.per_dim_variance[static_cast<size_t>(j)] = var;
        total += var;
    }
    rep.mean_variance = total / static_cast<double>(d);
    rep.consistency_score = 1.0 - std::min(rep.mean_variance, 1.0);
    rep.classification = classify_variance(rep.mean_variance);
    return rep;
}

std::string classify_variance(double v) {
    if (v < 0.001) return "Very Low";
    if (v < 0.01) return "Low";
    if (v < 0.05) return "Medium";
    if (v < 0.1) return "High";
    return "Very High";
}

OverallScore overall(const Layer1Report& l1, const Layer2Report& l2, const Layer3Report& l3,
                     const Layer4Report& l4, const GradeThresholds& grades) {
    OverallScore s;
    s.reconstruction = 0.40 * clamp(l1.expert_similarity, 0.0, 1.0);
    s.smoothness = 0.30 * (1.0 / (1.0 + l2.jerk_mean));
    s.stability = 0.20 * (1.0 / (1.0 + 100.0 * std::max(l3.error_growth, 0.0)));
    s.consistency = 0.10 * (1.0 - std::min(l4.mean_variance, 1.0));
    // paired so the perfect fixture sums to exactly 1.0 in double arithmetic
    s.overall = (s.reconstruction + s.consistency) + (s.smoothness + s.stability);
    if (s.overall >= grades.excellent) s.grade = "Excellent";
    else if (s.overall >= grades.good) s.grade = "Good";
    else if (s.overall >= grades.fair) s.grade = "Fair";
    else s.grade = "Poor";
    return s;
}

ValidationReport run_validation(PolicyAdapter& policy, const ValidationDataset& ds,
                                const ValidationConfig& cfg) {
    ValidationReport rep;
    rep.policy = policy.describe();
    rep.n_obs_steps = policy.n_obs_steps();
    const int n_obs = policy.n_obs_steps();

    if (cfg.run_layer1) {
        rep.l1 = layer1(policy, ds, cfg.n_samples, cfg.seed, cfg.mae_threshold);
    }
    if (cfg.run_layer2) {
        // teacher-forced prediction sequences, one per episode
        std::vector<Matrix> sequences;
        long long ordinal = 0;
        for (int e = 0; e < ds.episode_count(); ++e) {
            const int len = ds.episode_frames(e);
            if (len - (n_obs - 1) < 4) continue;
            Matrix seq(len - (n_obs - 1), ds.action_dim());
            for (int t = n_obs - 1; t < len; ++t) {
                ValidationDataset::FrameId f{e, t};
                ObsWindow obs{ds.obs_window(f, n_obs), ds.expert_action(f), ordinal++};
                seq.set_row(t - (n_obs - 1), policy.act(obs));
            }
            sequences.push_back(std::move(seq));
        }
        if (sequences.empty()) throw Error("TooShort", "no episode long enough for layer 2");
        rep.l2 = layer2_multi(sequences, cfg.bounds);
    }
    if (cfg.run_layer3) {
        int longest = 0;
        for (int e = 1; e < ds.episode_count(); ++e) {
            if (ds.episode_frames(e) > ds.episode_frames(longest)) longest = e;
        }
        int k = std::min(cfg.k_rollout, ds.episode_frames(longest) - n_obs - 1);
        if (k < 1) throw Error("EpisodeTooShort", "no episode long enough for layer 3");
        rep.l3 = layer3(policy, ds, longest, k, cfg.growth_threshold);
    }
    if (cfg.run_layer4) {
        auto frames = ds.valid_frames(n_obs);
        if (frames.empty()) throw Error("EpisodeTooShort", "no frames for layer 4");
        auto f = frames[frames.size() / 2];
        ObsWindow obs{ds.obs_window(f, n_obs), ds.expert_action(f), 0};
        rep.l4 = layer4(policy, obs, cfg.k_repeats);
    }
    if (rep.l1 && rep.l2 && rep.l3 && rep.l4) {
        rep.score = overall(*rep.l1, *rep.l2, *rep.l3, *rep.l4, cfg.grades);
    }
    return rep;
}

}  // namespace vtk
