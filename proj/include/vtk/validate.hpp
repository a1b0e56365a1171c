#pragma once

#include <optional>

#include "vtk/policy.hpp"

namespace vtk {

struct Layer1Report {
    double mae = 0.0;
    double mse = 0.0;
    double expert_similarity = 0.0;  // 1 - MAE / (sigma(a) + eps)
    Vec per_dim_mae;
    long long n_frames = 0;
    bool pass = false;  // MAE strictly below the threshold
};

// Samples n_samples frames (without replacement when possible), runs the
// policy on each observation window and compares against expert actions.
Layer1Report layer1(PolicyAdapter& policy, const ValidationDataset& ds, long long n_samples,
                    uint64_t seed, double mae_threshold = 0.05);

struct Layer2Bounds {
    double pos_min = -M_PI;
    double pos_max = M_PI;
    double vel_max = 0.5;  // |delta a| per step
    double acc_max = 0.5;  // |delta^2 a| per step
};

struct Layer2Report {
    Vec mean, stddev, range;  // per dim
    double action_diff_mean = 0.0;
    double jerk_mean = 0.0;  // mean |a_{t+2} - 3a_{t+1} + 3a_t - a_{t-1}|
    double smoothness_score = 1.0;
    double energy_mean = 0.0;  // mean ||a||_2^2
    long long position_violations = 0;
    long long velocity_violations = 0;
    long long acceleration_violations = 0;
    long long n_frames = 0;
};

Layer2Report layer2(const Matrix& actions, const Layer2Bounds& bounds = {});
Layer2Report layer2_multi(const std::vector<Matrix>& sequences, const Layer2Bounds& bounds = {});

struct Layer3Report {
    Vec error_curve;  // E(0..K)
    double final_error = 0.0;
    double error_growth = 0.0;  // E(K) - E(0)
    bool pass = false;          // growth strictly below the threshold
};

// Teacher-forced rollout: K+1 predictions fed ground-truth observations.
Layer3Report layer3(PolicyAdapter& policy, const ValidationDataset& ds, int episode, int k_steps,
                    double growth_threshold = 0.1);

struct Layer4Report {
    Vec per_dim_variance;  // population variance over repeats
    double mean_variance = 0.0;
    double consistency_score = 1.0;
    std::string classification;
    long long repeats = 0;
};

// Repeats inference on one fixed observation and measures output variance.
Layer4Report layer4(PolicyAdapter& policy, const ObsWindow& obs, long long k_repeats);

// Half-open bands: <0.001 Very Low, [0.001,0.01) Low, [0.01,0.05) Medium,
// [0.05,0.1) High, >=0.1 Very High.
std::string classify_variance(double mean_variance);

struct GradeThresholds {
    double excellent = 0.85;
    double good = 0.70;
    double fair = 0.55;
};

struct OverallScore {
    double reconstruction = 0.0;  // 0.40 x clamp(ES, 0, 1)
    double smoothness = 0.0;      // 0.30 x 1/(1+jerk)
    double stability = 0.0;       // 0.20 x 1/(1+100 max(growth, 0))
    double consistency = 0.0;     // 0.10 x (1 - min(var, 1))
    double overall = 0.0;
    std::string grade;
};

OverallScore overall(const Layer1Report& l1, const Layer2Report& l2, const Layer3Report& l3,
                     const Layer4Report& l4, const GradeThresholds& grades = {});

struct ValidationConfig {
    bool run_layer1 = true, run_layer2 = true, run_layer3 = true, run_layer4 = true;
    long long n_samples = 1000;
    uint64_t seed = 0;
    int k_rollout = 100;       // clipped to what the episode allows
    long long k_repeats = 100;
    double mae_threshold = 0.05;
    double growth_threshold = 0.1;
    Layer2Bounds bounds;
    GradeThresholds grades;
};

struct ValidationReport {
    std::string policy;
    int n_obs_steps = 1;
    std::optional<Layer1Report> l1;
    std::optional<Layer2Report> l2;
    std::optional<Layer3Report> l3;
    std::optional<Layer4Report> l4;
    std::optional<OverallScore> score;  // present when all four layers ran
};

ValidationReport run_validation(PolicyAdapter& policy, const ValidationDataset& ds,
                                const ValidationConfig& cfg = {});

}  // namespace vtk
