#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vtk/episode.hpp"
#include "vtk/sync.hpp"

namespace vtk {

// Windowed mean/variance (population) over the trailing W samples.
// stats at index i describe the window ending at sample i; the first W-1
// positions have no full window.
struct SlidingStats {
    int window = 0;
    int first_index = 0;  // == window - 1
    Vec means;            // means[i - first_index] for i in [first_index, len)
    Vec variances;

    double mean_at(int i) const { return means[static_cast<size_t>(i - first_index)]; }
    double var_at(int i) const { return variances[static_cast<size_t>(i - first_index)]; }
};

SlidingStats sliding_stats(const Vec& series, int window);

enum class AnomalyKind { sigma_spike, distribution_shift, cross_modal_conflict };
std::string anomaly_kind_tag(AnomalyKind kind);

struct AnomalyEvent {
    std::string stream;
    int channel = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    AnomalyKind kind = AnomalyKind::sigma_spike;
    double score = 0.0;  // max |z| over the event
};

struct SigmaConfig {
    int window = 100;
    double n_sigma = 3.0;
    double eps_var = 1e-12;
    // masked: flagged samples never enter the window, so a spike cannot
    // inflate its own baseline. Masking truncates the window distribution
    // and lifts the false-positive rate slightly above 2*Phi(-n).
    bool masked_update = true;
};

// n-sigma rule against the trailing window of *accepted* samples: a flagged
// sample is excluded from later window statistics so a spike cannot inflate
// its own baseline. Consecutive flags merge into one event. Spans are in
// `timestamps` units when given, sample indices otherwise.
std::vector<AnomalyEvent> detect_sigma(const Vec& series, const SigmaConfig& cfg,
                                       const Vec* timestamps = nullptr,
                                       const std::string& stream = "", int channel = 0);

// Runs detect_sigma over every channel of every stream.
std::vector<AnomalyEvent> scan_episode(const Episode& ep, const SigmaConfig& cfg);
std::vector<AnomalyEvent> scan_aligned(const AlignedEpisode& ae, const SigmaConfig& cfg);

enum class WeakLabelKind { contact_onset, anomalous_interaction, failed_demonstration };
std::string weak_label_tag(WeakLabelKind kind);

struct WeakLabel {
    WeakLabelKind kind = WeakLabelKind::contact_onset;
    double t = 0.0;
    std::string rule;  // exactly one rule id per label
};

struct LabelRules {
    bool contact_rule = true;
    bool failure_rule = true;
    bool interaction_rule = true;
    // contact threshold: explicit value, or self-calibrated as
    // mean + calibration_sigma * std of the first calibration_seconds
    std::optional<double> contact_threshold;
    double calibration_seconds = 0.5;
    double calibration_sigma = 4.0;
    int hold_frames = 3;          // H: frames the magnitude must stay above
    double final_fraction = 0.10;  // failed demo if a sigma event ends here
    SigmaConfig sigma;
};

std::vector<WeakLabel> label_events(const AlignedEpisode& ae, const LabelRules& rules = {});

struct CrossModalConfig {
    double lag = 0.5;  // seconds
    std::optional<double> gripper_close_threshold;  // default: per-channel midpoint
    std::optional<double> tactile_contact_threshold;  // default: self-calibrated
    double calibration_seconds = 0.5;
    double calibration_sigma = 4.0;
};

// Flags gripper closures without tactile contact inside the lag window, and
// tactile contact while the gripper stays open.
std::vector<AnomalyEvent> cross_modal_check(const AlignedEpisode& ae,
                                            const CrossModalConfig& cfg = {});

}  // namespace vtk
