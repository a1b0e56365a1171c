#include "vtk/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace vtk {

std::string anomaly_kind_tag(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::sigma_spike: return "sigma_spike";
        case AnomalyKind::distribution_shift: return "distribution_shift";
        case AnomalyKind::cross_modal_conflict: return "cross_modal_conflict";
    }
    return "?";
}

std::string weak_label_tag(WeakLabelKind kind) {
    switch (kind) {
        case WeakLabelKind::contact_onset: return "contact_onset";
        case WeakLabelKind::anomalous_interaction: return "anomalous_interaction";
        case WeakLabelKind::failed_demonstration: return "failed_demonstration";
    }
    return "?";
}

namespace {

// Rolling window moments around an anchor close to the window mean, resynced
// from scratch periodically so update drift stays far below 1e-9 relative.
class RollingWindow {
public:
    void push(double x) {
        buf_.push_back(x);
        double d = x - anchor_;
        sum_ += d;
        sum_sq_ += d * d;
        bump();
    }

    void pop_front() {
        double d = buf_.front() - anchor_;
        sum_ -= d;
        sum_sq_ -= d * d;
        buf_.pop_front();
        bump();
    }

    size_t size() const { return buf_.size(); }

    double mean() const { return anchor_ + sum_ / static_cast<double>(buf_.size()); }

    double variance() const {
        double n = static_cast<double>(buf_.size());
        double centered_mean = sum_ / n;
        double v = sum_sq_ / n - centered_mean * centered_mean;
        return v > 0.0 ? v : 0.0;
    }

    void resync() {
        anchor_ = 0.0;
        for (double v : buf_) anchor_ += v;
        anchor_ /= static_cast<double>(buf_.size());
        sum_ = 0.0;
        sum_sq_ = 0.0;
        for (double v : buf_) {
            double d = v - anchor_;
            sum_ += d;
            sum_sq_ += d * d;
        }
        updates_ = 0;
    }

private:
    void bump() {
        if (++updates_ >= 4096 && !buf_.empty()) resync();
    }

    std::deque<double> buf_;
    double anchor_ = 0.0;
    double sum_ = 0.0;
    double sum_sq_ = 0.0;
    int updates_ = 0;
};

}  // namespace

SlidingStats sliding_stats(const Vec& series, int window) {
    const int n = static_cast<int>(series.size());
    if (window < 2) throw Error("BadConfig", "window must be >= 2");
    if (n < window) {
        throw Error("WindowTooLarge", "series of " + std::to_string(n) +
                                          " samples cannot fill a window of " +
                                          std::to_string(window));
    }
    SlidingStats out;
    out.window = window;
    out.first_index = window - 1;
    out.means.reserve(static_cast<size_t>(n - window + 1));
    out.variances.reserve(static_cast<size_t>(n - window + 1));
    for (int end = window - 1; end < n; ++end) {
        double sum = 0.0;
        for (int i = end - window + 1; i <= end; ++i) sum += series[static_cast<size_t>(i)];
        double mean = sum / window;
        double sq = 0.0;
        for (int i = end - window + 1; i <= end; ++i) {
            double d = series[static_cast<size_t>(i)] - mean;
            sq += d * d;
        }
        out.means.push_back(mean);
        out.variances.push_back(sq / window);
    }
    return out;
}

std::vector<AnomalyEvent> detect_sigma(const Vec& series, const SigmaConfig& cfg,
                                       const Vec* timestamps, const std::string& stream,
                                       int channel) {
    const int n = static_cast<int>(series.size());
    if (cfg.window < 2) throw Error("BadConfig", "window must be >= 2");
    if (cfg.n_sigma <= 0.0) throw Error("BadConfig", "n_sigma must be positive");
    if (n < cfg.window) {
        throw Error("WindowTooLarge", "series of " + std::to_string(n) +
                                          " samples cannot fill a window of " +
                                          std::to_string(cfg.window));
    }
    auto at_time = [&](int i) {
        return timestamps ? (*timestamps)[static_cast<size_t>(i)] : static_cast<double>(i);
    };

    std::vector<AnomalyEvent> events;
    RollingWindow window;  // last cfg.window accepted samples
    bool open = false;
    AnomalyEvent cur;
    auto close_event = [&]() {
        if (open) {
            events.push_back(cur);
            open = false;
        }
    };

    for (int i = 0; i < n; ++i) {
        double x = series[static_cast<size_t>(i)];
        if (static_cast<int>(window.size()) < cfg.window) {
            // warm-up: no verdicts until a full window of accepted samples
            window.push(x);
            if (static_cast<int>(window.size()) == cfg.window) window.resync();
            continue;
        }
        double denom = std::sqrt(window.variance() + cfg.eps_var);
        double z = std::abs(x - window.mean()) / denom;
        if (z > cfg.n_sigma) {
            if (open) {
                cur.t_end = at_time(i);
                cur.score = std::max(cur.score, z);
            } else {
                open = true;
                cur = AnomalyEvent{stream, channel, at_time(i), at_time(i),
                                   AnomalyKind::sigma_spike, z};
            }
            if (!cfg.masked_update) {
                window.pop_front();
                window.push(x);
            }
        } else {
            close_event();
            window.pop_front();
            window.push(x);
        }
    }
    close_event();
    return events;
}

std::vector<AnomalyEvent> scan_episode(const Episode& ep, const SigmaConfig& cfg) {
    std::vector<AnomalyEvent> events;
    for (const auto& [name, s] : ep.streams) {
        if (s.samples() < cfg.window) continue;
        for (int c = 0; c < s.dim(); ++c) {
            Vec series(static_cast<size_t>(s.samples()));
            for (int r = 0; r < s.samples(); ++r) series[static_cast<size_t>(r)] = s.records.at(r, c);
            auto ev = detect_sigma(series, cfg, &s.timestamps, name, c);
            events.insert(events.end(), ev.begin(), ev.end());
        }
    }
    return events;
}

std::vector<AnomalyEvent> scan_aligned(const AlignedEpisode& ae, const SigmaConfig& cfg) {
    std::vector<AnomalyEvent> events;
    for (const auto& [name, cols] : ae.columns) {
        if (cols.rows < cfg.window) continue;
        for (int c = 0; c < cols.cols; ++c) {
            Vec series(static_cast<size_t>(cols.rows));
            for (int r = 0; r < cols.rows; ++r) series[static_cast<size_t>(r)] = cols.at(r, c);
            auto ev = detect_sigma(series, cfg, &ae.timeline, name, c);
            events.insert(events.end(), ev.begin(), ev.end());
        }
    }
    return events;
}

namespace {

const std::string* find_stream_by_kind(const AlignedEpisode& ae, StreamKind kind) {
    for (const auto& [name, k] : ae.kinds) {
        if (k == kind) return &name;
    }
    return nullptr;
}

Vec magnitude_series(const Matrix& cols) {
    Vec mag(static_cast<size_t>(cols.rows));
    for (int r = 0; r < cols.rows; ++r) {
        double s = 0.0;
        const double* row = cols.row(r);
        for (int c = 0; c < cols.cols; ++c) s += row[c] * row[c];
        mag[static_cast<size_t>(r)] = std::sqrt(s);
    }
    return mag;
}

// mean + k*std over the first `seconds` of the series (at least one frame)
double calibrated_threshold(const Vec& series, const Vec& timeline, double seconds, double k) {
    size_t n = 1;
    while (n < series.size() && timeline[n] - timeline[0] <= seconds) ++n;
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += series[i];
    double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (size_t i = 0; i < n; ++i) sq += (series[i] - mean) * (series[i] - mean);
    return mean + k * std::sqrt(sq / static_cast<double>(n));
}

}  // namespace

std::vector<WeakLabel> label_events(const AlignedEpisode& ae, const LabelRules& rules) {
    std::vector<WeakLabel> labels;
    if (ae.frames() == 0) return labels;

    if (rules.contact_rule) {
        const std::string* tactile = find_stream_by_kind(ae, StreamKind::tactile_feature);
        if (!tactile) {
            throw Error("MissingStream", "contact rule requires a tactile_feature stream");
        }
        Vec mag = magnitude_series(ae.columns.at(*tactile));
        double threshold = rules.contact_threshold
                               ? *rules.contact_threshold
                               : calibrated_threshold(mag, ae.timeline, rules.calibration_seconds,
                                                      rules.calibration_sigma);
        const int n = static_cast<int>(mag.size());
        for (int t = 1; t < n; ++t) {
            if (mag[static_cast<size_t>(t)] > threshold && mag[static_cast<size_t>(t) - 1] <= threshold) {
                int held = 0;
                for (int u = t; u < n && mag[static_cast<size_t>(u)] > threshold; ++u) ++held;
                if (held >= rules.hold_frames) {
                    labels.push_back({WeakLabelKind::contact_onset,
                                      ae.timeline[static_cast<size_t>(t)],
                                      "tactile_magnitude_rise"});
                    break;  // first onset only
                }
            }
        }
    }

    if (rules.failure_rule || rules.interaction_rule) {
        double t_final = ae.timeline.front() +
                         (1.0 - rules.final_fraction) * (ae.timeline.back() - ae.timeline.front());
        auto events = scan_aligned(ae, rules.sigma);
        bool failed_emitted = false;
        for (const auto& ev : events) {
            if (ev.t_end >= t_final) {
                if (rules.failure_rule && !failed_emitted) {
                    labels.push_back({WeakLabelKind::failed_demonstration, ev.t_start,
                                      "sigma_event_in_final_window"});
                    failed_emitted = true;
                }
            } else if (rules.interaction_rule) {
                labels.push_back({WeakLabelKind::anomalous_interaction, ev.t_start,
                                  "sigma_event_mid_episode"});
            }
        }
    }

    std::stable_sort(labels.begin(), labels.end(),
                     [](const WeakLabel& a, const WeakLabel& b) { return a.t < b.t; });
    return labels;
}

std::vector<AnomalyEvent> cross_modal_check(const AlignedEpisode& ae,
                                            const CrossModalConfig& cfg) {
    if (ae.columns.size() < 2) {
        throw Error("MissingStream", "cross-modal check needs at least two streams");
    }
    const std::string* gripper = find_stream_by_kind(ae, StreamKind::gripper);
    const std::string* tactile = find_stream_by_kind(ae, StreamKind::tactile_feature);
    if (!gripper || !tactile) {
        throw Error("MissingStream", "cross-modal check requires gripper and tactile_feature streams");
    }

    const Matrix& grip = ae.columns.at(*gripper);
    Vec mag = magnitude_series(ae.columns.at(*tactile));
    double contact_thr = cfg.tactile_contact_threshold
                             ? *cfg.tactile_contact_threshold
                             : calibrated_threshold(mag, ae.timeline, cfg.calibration_seconds,
                                                    cfg.calibration_sigma);

    const int n = ae.frames();
    std::vector<char> closed(static_cast<size_t>(n), 0);
    std::vector<char> contact(static_cast<size_t>(n), 0);
    for (int c = 0; c < grip.cols; ++c) {
        double lo = grip.at(0, c), hi = grip.at(0, c);
        for (int r = 1; r < n; ++r) {
            lo = std::min(lo, grip.at(r, c));
            hi = std::max(hi, grip.at(r, c));
        }
        double close_thr = cfg.gripper_close_threshold ? *cfg.gripper_close_threshold
                                                       : 0.5 * (lo + hi);
        for (int r = 0; r < n; ++r) {
            if (grip.at(r, c) < close_thr) closed[static_cast<size_t>(r)] = 1;
        }
    }
    for (int r = 0; r < n; ++r) {
        if (mag[static_cast<size_t>(r)] > contact_thr) contact[static_cast<size_t>(r)] = 1;
    }

    auto any_in_lag = [&](const std::vector<char>& flags, int center) {
        double t0 = ae.timeline[static_cast<size_t>(center)];
        for (int r = 0; r < n; ++r) {
            if (std::abs(ae.timeline[static_cast<size_t>(r)] - t0) <= cfg.lag &&
                flags[static_cast<size_t>(r)]) {
                return true;
            }
        }
        return false;
    };

    std::vector<AnomalyEvent> conflicts;
    auto emit = [&](const std::string& stream, int t) {
        double t0 = ae.timeline[static_cast<size_t>(t)];
        conflicts.push_back({stream, -1, t0, std::min(t0 + cfg.lag, ae.timeline.back()),
                             AnomalyKind::cross_modal_conflict, 0.0});
    };
    for (int t = 1; t < n; ++t) {
        if (closed[static_cast<size_t>(t)] && !closed[static_cast<size_t>(t) - 1] &&
            !any_in_lag(contact, t)) {
            emit(*gripper, t);
        }
        if (contact[static_cast<size_t>(t)] && !contact[static_cast<size_t>(t) - 1] &&
            !any_in_lag(closed, t)) {
            emit(*tactile, t);
        }
    }
    return conflicts;
}

}  // namespace vtk
