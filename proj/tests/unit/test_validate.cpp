#include "doctest.h"
#include "support/testutil.hpp"
#include "vtk/validate.hpp"

using namespace vtk;
using vtktest::make_stream;

namespace {

// smooth expert: action_command affine in t with dyadic base and slope so
// third differences vanish exactly in double arithmetic
ValidationDataset smooth_dataset(int frames, double slope = 0.0009765625 /* 2^-10 */) {
    AlignedEpisode ae;
    ae.id = "expert";
    ae.rate = 30.0;
    Matrix act(frames, 14);
    Matrix joints(frames, 14);
    for (int r = 0; r < frames; ++r) {
        ae.timeline.push_back(r / 30.0);
        for (int c = 0; c < 14; ++c) {
            act.at(r, c) = 0.125 * c + slope * r;
            joints.at(r, c) = 0.125 * c + slope * r;
        }
    }
    ae.columns["action"] = act;
    ae.kinds["action"] = StreamKind::action_command;
    ae.columns["joints"] = joints;
    ae.kinds["joints"] = StreamKind::joint_pos;
    return ValidationDataset({ae});
}

// all-zero expert: per-dim prediction errors pass through exactly
ValidationDataset zeros_dataset(int frames) {
    AlignedEpisode ae;
    ae.id = "zeros";
    ae.rate = 30.0;
    for (int r = 0; r < frames; ++r) ae.timeline.push_back(r / 30.0);
    ae.columns["action"] = Matrix(frames, 14);
    ae.kinds["action"] = StreamKind::action_command;
    ae.columns["joints"] = Matrix(frames, 14);
    ae.kinds["joints"] = StreamKind::joint_pos;
    return ValidationDataset({ae});
}

struct OffsetPolicy final : PolicyAdapter {
    double offset;
    explicit OffsetPolicy(double off) : offset(off) {}
    Vec act(const ObsWindow& obs) override {
        Vec a = obs.expert;
        for (double& v : a) v += offset;
        return a;
    }
    std::string describe() const override { return "offset"; }
};

struct DriftPolicy final : PolicyAdapter {
    double per_step;
    explicit DriftPolicy(double d) : per_step(d) {}
    Vec act(const ObsWindow& obs) override {
        Vec a = obs.expert;
        for (double& v : a) v += per_step * static_cast<double>(obs.frame_id);
        return a;
    }
    std::string describe() const override { return "drift"; }
};

struct DecayErrorPolicy final : PolicyAdapter {
    // error 0.2 at t=0 decaying linearly to 0.1 at t=K
    int k;
    explicit DecayErrorPolicy(int k_steps) : k(k_steps) {}
    Vec act(const ObsWindow& obs) override {
        Vec a = obs.expert;
        double err = 0.2 - 0.1 * static_cast<double>(obs.frame_id) / k;
        for (double& v : a) v += err;
        return a;
    }
    std::string describe() const override { return "decay"; }
};

}  // namespace

TEST_CASE("layer1: replay expert reconstructs exactly") {
    ValidationDataset ds = smooth_dataset(200);
    ReplayExpertPolicy policy;
    Layer1Report rep = layer1(policy, ds, 100, 1);
    CHECK(rep.mae == 0.0);
    CHECK(rep.mse == 0.0);
    CHECK(rep.expert_similarity == 1.0);
    CHECK(rep.pass);
    CHECK(rep.n_frames == 100);
    for (double v : rep.per_dim_mae) CHECK(v == 0.0);
}

TEST_CASE("layer1: constant +0.1 offset gives MAE 0.1, MSE 0.01") {
    ValidationDataset ds = smooth_dataset(200);
    OffsetPolicy policy(0.1);
    Layer1Report rep = layer1(policy, ds, 150, 2);
    CHECK(rep.mae == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rep.mse == doctest::Approx(0.01).epsilon(1e-12));
    for (double v : rep.per_dim_mae) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("layer1: noisy expert MAE matches the half-normal mean") {
    ValidationDataset ds = smooth_dataset(600);
    NoisyExpertPolicy policy(0.05, 123);
    // >= 1e4 frames via sampling with replacement over all dims
    Layer1Report rep = layer1(policy, ds, 10000, 3);
    const double expect = 0.05 * std::sqrt(2.0 / M_PI);  // half-normal mean oracle
    CHECK(std::abs(rep.mae - expect) / expect <= 0.05);
    CHECK(rep.n_frames == 10000);
}

TEST_CASE("layer1: pass flag flips exactly at the 0.05 threshold") {
    // zero expert + one sampled frame: MAE is the offset, bit-exact
    ValidationDataset ds = zeros_dataset(60);
    OffsetPolicy at_threshold(0.05);
    Layer1Report rep = layer1(at_threshold, ds, 1, 4);
    REQUIRE(rep.mae == 0.05);
    CHECK_FALSE(rep.pass);
    OffsetPolicy just_below(0.049);
    CHECK(layer1(just_below, ds, 1, 4).pass);
}

TEST_CASE("layer2: affine sequence has zero jerk and smoothness 1") {
    const int n = 50;
    Matrix actions(n, 14);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < 14; ++c) actions.at(r, c) = 0.3 + 0.002 * r * (c + 1);
    }
    Layer2Report rep = layer2(actions);
    CHECK(rep.jerk_mean <= 1e-12);
    CHECK(rep.smoothness_score == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.action_diff_mean > 0.0);
}

TEST_CASE("layer2: alternating +-1 has jerk 8 and smoothness 1/9") {
    const int n = 40;
    Matrix actions(n, 1);
    for (int r = 0; r < n; ++r) actions.at(r, 0) = (r % 2 == 0) ? 1.0 : -1.0;
    Layer2Bounds loose;
    loose.vel_max = 10.0;
    loose.acc_max = 10.0;
    Layer2Report rep = layer2(actions, loose);
    CHECK(rep.jerk_mean == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(rep.smoothness_score == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    CHECK(rep.action_diff_mean == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("layer2: unit-norm constant action has energy 1") {
    const int n = 10;
    Matrix actions(n, 14);
    for (int r = 0; r < n; ++r) actions.at(r, 3) = 1.0;
    Layer2Report rep = layer2(actions);
    CHECK(rep.energy_mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.position_violations == 0);
}

TEST_CASE("layer2: violation counters fire per category") {
    Matrix actions(6, 2);
    // row 2 breaks position; the jump also breaks velocity/acceleration
    for (int r = 0; r < 6; ++r) actions.at(r, 0) = r == 2 ? 4.0 : 0.0;
    Layer2Bounds b;
    b.pos_min = -M_PI;
    b.pos_max = M_PI;
    b.vel_max = 0.5;
    b.acc_max = 0.5;
    Layer2Report rep = layer2(actions, b);
    CHECK(rep.position_violations == 1);
    CHECK(rep.velocity_violations == 2);      // up-jump and down-jump
    CHECK(rep.acceleration_violations == 3);  // stencils touching the spike
}

TEST_CASE("layer2: too-short sequence") {
    try {
        layer2(Matrix(3, 14));
        FAIL("expected TooShort");
    } catch (const Error& e) {
        CHECK(e.kind() == "TooShort");
    }
}

TEST_CASE("layer3: replay expert has an identically zero error curve") {
    ValidationDataset ds = smooth_dataset(200);
    ReplayExpertPolicy policy;
    Layer3Report rep = layer3(policy, ds, 0, 100);
    CHECK(rep.error_curve.size() == 101);
    for (double e : rep.error_curve) CHECK(e == 0.0);
    CHECK(rep.final_error == 0.0);
    CHECK(rep.error_growth == 0.0);
    CHECK(rep.pass);
}

TEST_CASE("layer3: constructed drift grows by exactly 0.01 per step") {
    ValidationDataset ds = smooth_dataset(200);
    DriftPolicy policy(0.01);
    const int k = 50;
    Layer3Report rep = layer3(policy, ds, 0, k);
    CHECK(rep.error_curve.front() == 0.0);
    CHECK(rep.error_growth == doctest::Approx(0.01 * k).epsilon(1e-12));
    CHECK(rep.final_error == doctest::Approx(0.01 * k).epsilon(1e-12));
    CHECK_FALSE(rep.pass);  // 0.5 growth
}

TEST_CASE("layer3: negative growth passes and is reported as-is") {
    ValidationDataset ds = smooth_dataset(200);
    const int k = 80;
    DecayErrorPolicy policy(k);
    Layer3Report rep = layer3(policy, ds, 0, k);
    CHECK(rep.error_growth == doctest::Approx(-0.1).epsilon(1e-9));
    CHECK(rep.pass);
}

TEST_CASE("layer3: pass flips exactly at growth 0.1") {
    // zero expert: the final step carries a per-dim error of exactly 0.1,
    // whose 14-dim mean is still exactly 0.1
    ValidationDataset ds = zeros_dataset(60);
    const int k = 10;
    struct FinalStepError final : PolicyAdapter {
        int k;
        double err;
        FinalStepError(int k_steps, double e) : k(k_steps), err(e) {}
        Vec act(const ObsWindow& obs) override {
            Vec a = obs.expert;
            if (obs.frame_id == k) {
                for (double& v : a) v += err;
            }
            return a;
        }
        std::string describe() const override { return "final-step-error"; }
    };
    FinalStepError at_threshold(k, 0.1);
    Layer3Report rep = layer3(at_threshold, ds, 0, k);
    REQUIRE(rep.error_growth == 0.1);
    CHECK_FALSE(rep.pass);
    FinalStepError just_below(k, 0.099);
    CHECK(layer3(just_below, ds, 0, k).pass);
}

TEST_CASE("layer3: episode too short") {
    ValidationDataset ds = smooth_dataset(30);
    ReplayExpertPolicy policy;
    try {
        layer3(policy, ds, 0, 40);
        FAIL("expected EpisodeTooShort");
    } catch (const Error& e) {
        CHECK(e.kind() == "EpisodeTooShort");
    }
}

TEST_CASE("layer4: deterministic policy has exactly zero variance") {
    ValidationDataset ds = smooth_dataset(60);
    ReplayExpertPolicy policy;
    auto frames = ds.valid_frames(1);
    ObsWindow obs{ds.obs_window(frames[10], 1), ds.expert_action(frames[10]), 0};
    Layer4Report rep = layer4(policy, obs, 500);
    CHECK(rep.mean_variance == 0.0);
    for (double v : rep.per_dim_variance) CHECK(v == 0.0);
    CHECK(rep.classification == "Very Low");
    CHECK(rep.consistency_score == 1.0);
}

TEST_CASE("layer4: noisy sigma=0.1 lands near variance 0.01") {
    ValidationDataset ds = smooth_dataset(60);
    NoisyExpertPolicy policy(0.1, 31);
    auto frames = ds.valid_frames(1);
    ObsWindow obs{ds.obs_window(frames[5], 1), ds.expert_action(frames[5]), 0};
    Layer4Report rep = layer4(policy, obs, 10000);
    CHECK(std::abs(rep.mean_variance - 0.01) / 0.01 <= 0.10);
    CHECK(rep.classification == classify_variance(rep.mean_variance));
}

TEST_CASE("layer4: needs at least two repeats") {
    ValidationDataset ds = smooth_dataset(60);
    ReplayExpertPolicy policy;
    auto frames = ds.valid_frames(1);
    ObsWindow obs{ds.obs_window(frames[0], 1), ds.expert_action(frames[0]), 0};
    CHECK_THROWS_AS(layer4(policy, obs, 1), Error);
}

TEST_CASE("classification boundaries are half-open as stated") {
    CHECK(classify_variance(0.0) == "Very Low");
    CHECK(classify_variance(0.0009999) == "Very Low");
    CHECK(classify_variance(0.001) == "Low");
    CHECK(classify_variance(0.0099999) == "Low");
    CHECK(classify_variance(0.01) == "Medium");  // exact boundary
    CHECK(classify_variance(0.02) == "Medium");
    CHECK(classify_variance(0.0499999) == "Medium");
    CHECK(classify_variance(0.05) == "High");
    CHECK(classify_variance(0.1) == "Very High");
    CHECK(classify_variance(3.0) == "Very High");
}

TEST_CASE("overall: perfect layers sum to exactly 1.0") {
    Layer1Report l1;
    l1.expert_similarity = 1.0;
    Layer2Report l2;
    l2.jerk_mean = 0.0;
    Layer3Report l3;
    l3.error_growth = 0.0;
    Layer4Report l4;
    l4.mean_variance = 0.0;
    OverallScore s = overall(l1, l2, l3, l4);
    CHECK(s.reconstruction == 0.40);
    CHECK(s.smoothness == 0.30);
    CHECK(s.stability == 0.20);
    CHECK(s.consistency == 0.10);
    CHECK(s.overall == 1.0);
    CHECK(s.grade == "Excellent");
}

TEST_CASE("overall: lower envelope approaches 0") {
    Layer1Report l1;
    l1.expert_similarity = 0.0;
    Layer2Report l2;
    l2.jerk_mean = 1e9;
    Layer3Report l3;
    l3.error_growth = 1e9;
    Layer4Report l4;
    l4.mean_variance = 5.0;
    OverallScore s = overall(l1, l2, l3, l4);
    CHECK(s.overall <= 1e-9);
    CHECK(s.grade == "Poor");
}

TEST_CASE("overall: Diffusion-style row reproduces the component values") {
    Layer1Report l1;
    l1.expert_similarity = 0.848;
    Layer3Report l3;
    l3.error_growth = 0.0002;
    Layer4Report l4;
    l4.mean_variance = 0.0001;
    Layer2Report l2;  // jerk untabulated; smoothness left aside
    OverallScore s = overall(l1, l2, l3, l4);
    CHECK(s.reconstruction == doctest::Approx(0.3392).epsilon(1e-12));
    CHECK(s.stability == doctest::Approx(0.2 / 1.02).epsilon(1e-9));   // 0.19608
    CHECK(s.consistency == doctest::Approx(0.09999).epsilon(1e-9));
}

TEST_CASE("overall: monotone in each input, holding the others fixed") {
    Layer1Report l1a, l1b;
    l1a.expert_similarity = 0.5;
    l1b.expert_similarity = 0.7;
    Layer2Report l2a, l2b;
    l2a.jerk_mean = 0.2;
    l2b.jerk_mean = 0.5;
    Layer3Report l3a, l3b;
    l3a.error_growth = 0.01;
    l3b.error_growth = 0.2;
    Layer4Report l4a, l4b;
    l4a.mean_variance = 0.01;
    l4b.mean_variance = 0.2;
    CHECK(overall(l1b, l2a, l3a, l4a).overall > overall(l1a, l2a, l3a, l4a).overall);
    CHECK(overall(l1a, l2b, l3a, l4a).overall < overall(l1a, l2a, l3a, l4a).overall);
    CHECK(overall(l1a, l2a, l3b, l4a).overall < overall(l1a, l2a, l3a, l4a).overall);
    CHECK(overall(l1a, l2a, l3a, l4b).overall < overall(l1a, l2a, l3a, l4a).overall);
    // negative growth is treated as fully stable
    Layer3Report neg;
    neg.error_growth = -0.5;
    CHECK(overall(l1a, l2a, neg, l4a).stability == 0.20);
}

TEST_CASE("run_validation: replay on a zero-jerk expert scores exactly 1.0") {
    ValidationDataset ds = smooth_dataset(300);
    ReplayExpertPolicy policy;
    ValidationConfig cfg;
    cfg.n_samples = 200;
    cfg.k_rollout = 60;
    cfg.k_repeats = 50;
    ValidationReport rep = run_validation(policy, ds, cfg);
    REQUIRE(rep.score.has_value());
    CHECK(rep.l1->mae == 0.0);
    CHECK(rep.l2->jerk_mean <= 1e-12);
    CHECK(rep.l3->error_growth == 0.0);
    CHECK(rep.l4->mean_variance == 0.0);
    CHECK(rep.score->overall == 1.0);
    CHECK(rep.score->grade == "Excellent");
}

TEST_CASE("run_validation: layer subset omits the overall score") {
    ValidationDataset ds = smooth_dataset(120);
    ReplayExpertPolicy policy;
    ValidationConfig cfg;
    cfg.run_layer3 = false;
    cfg.n_samples = 20;
    cfg.k_repeats = 10;
    ValidationReport rep = run_validation(policy, ds, cfg);
    CHECK(rep.l1.has_value());
    CHECK_FALSE(rep.l3.has_value());
    CHECK_FALSE(rep.score.has_value());
}

TEST_CASE("linear policy: fits an affine expert almost exactly") {
    ValidationDataset ds = smooth_dataset(400);
    LinearPolicy policy = LinearPolicy::fit(ds, 1);
    Layer1Report rep = layer1(policy, ds, 200, 8);
    CHECK(rep.mae <= 1e-6);  // expert is an affine function of the observation
    CHECK(rep.pass);
}

TEST_CASE("dataset without action_command stream is rejected") {
    AlignedEpisode ae;
    ae.id = "no-action";
    ae.rate = 30.0;
    for (int r = 0; r < 10; ++r) ae.timeline.push_back(r / 30.0);
    ae.columns["j"] = Matrix(10, 14);
    ae.kinds["j"] = StreamKind::joint_pos;
    try {
        ValidationDataset ds({ae});
        FAIL("expected MissingActionStream");
    } catch (const Error& e) {
        CHECK(e.kind() == "MissingActionStream");
    }
}
