#pragma once

#include <memory>
#include <string>

#include "vtk/matrix.hpp"
#include "vtk/rng.hpp"
#include "vtk/sync.hpp"

namespace vtk {

// Aligned episodes prepared for policy validation: one action_command
// stream (the expert actions) plus the remaining streams concatenated, in
// name order, as the observation vector.
class ValidationDataset {
public:
    explicit ValidationDataset(std::vector<AlignedEpisode> episodes);

    struct FrameId {
        int episode;
        int t;
    };

    int episode_count() const { return static_cast<int>(episodes_.size()); }
    int episode_frames(int episode) const;
    int obs_dim() const { return obs_dim_; }
    int action_dim() const { return action_dim_; }

    // frames with a full observation window, over all episodes, in order
    std::vector<FrameId> valid_frames(int n_obs_steps) const;

    Matrix obs_window(FrameId f, int n_obs_steps) const;  // n_obs x obs_dim, oldest first
    Vec expert_action(FrameId f) const;

    const std::vector<std::string>& obs_streams() const { return obs_streams_; }

private:
    std::vector<AlignedEpisode> episodes_;
    std::vector<std::string> obs_streams_;
    std::string action_stream_;
    int obs_dim_ = 0;
    int action_dim_ = 0;
};

struct ObsWindow {
    Matrix frames;       // n_obs_steps x obs_dim, oldest first
    Vec expert;          // ground-truth action for the newest frame
    long long frame_id;  // global ordinal, for replay-style adapters
};

class PolicyAdapter {
public:
    virtual ~PolicyAdapter() = default;
    virtual Vec act(const ObsWindow& obs) = 0;
    virtual bool stochastic() const { return false; }
    virtual std::string describe() const = 0;
    int n_obs_steps() const { return n_obs_steps_; }

protected:
    int n_obs_steps_ = 1;
};

// Echoes the expert action for its frame exactly.
class ReplayExpertPolicy final : public PolicyAdapter {
public:
    explicit ReplayExpertPolicy(int n_obs_steps = 1) { n_obs_steps_ = n_obs_steps; }
    Vec act(const ObsWindow& obs) override { return obs.expert; }
    std::string describe() const override { return "replay_expert"; }
};

// Expert action plus i.i.d. Gaussian noise per dimension.
class NoisyExpertPolicy final : public PolicyAdapter {
public:
    NoisyExpertPolicy(double sigma, uint64_t seed, int n_obs_steps = 1)
        : sigma_(sigma), rng_(seed) {
        n_obs_steps_ = n_obs_steps;
    }
    Vec act(const ObsWindow& obs) override;
    bool stochastic() const override { return true; }
    std::string describe() const override { return "noisy_expert(sigma=" + format_double(sigma_) + ")"; }

private:
    double sigma_;
    Rng rng_;
};

class ConstantPolicy final : public PolicyAdapter {
public:
    explicit ConstantPolicy(Vec action, int n_obs_steps = 1) : action_(std::move(action)) {
        n_obs_steps_ = n_obs_steps;
    }
    Vec act(const ObsWindow&) override { return action_; }
    std::string describe() const override { return "constant"; }

private:
    Vec action_;
};

// Ridge-regularized least squares from the flattened observation window to
// the 14-dim action.
class LinearPolicy final : public PolicyAdapter {
public:
    LinearPolicy(Matrix weights, Vec bias, int n_obs_steps);

    static LinearPolicy fit(const ValidationDataset& ds, int n_obs_steps, double ridge = 1e-6);

    Vec act(const ObsWindow& obs) override;
    std::string describe() const override { return "linear_least_squares"; }

    void save(const std::filesystem::path& path) const;
    static LinearPolicy load(const std::filesystem::path& path);

private:
    Matrix weights_;  // action_dim x (n_obs * obs_dim)
    Vec bias_;
};

// External adapters arrive as JSON checkpoints ({"policy": "linear"| "constant", ...}).
std::unique_ptr<PolicyAdapter> load_policy_checkpoint(const std::filesystem::path& path);

// CLI policy specs: "replay", "noisy:<sigma>", "constant[:v0,...,v13]",
// "linear", or a path to a checkpoint. dataset is needed only for "linear".
std::unique_ptr<PolicyAdapter> make_policy(const std::string& spec, const ValidationDataset* ds,
                                           uint64_t seed, int n_obs_steps);

}  // namespace vtk
