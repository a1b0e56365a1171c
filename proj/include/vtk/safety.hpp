#pragma once

#include <filesystem>

#include "vtk/matrix.hpp"

namespace vtk {

enum class VelocityMode { norm_rescale, per_joint_clamp };

struct SafetyConfig {
    Vec q_min = Vec(14, -M_PI);
    Vec q_max = Vec(14, M_PI);
    double v_max = 1.0;  // rad/s, bound on ||delta q|| per control period
    double dt = 1.0 / 30.0;
    bool interpolation = true;
    VelocityMode velocity_mode = VelocityMode::norm_rescale;

    void validate() const;
};

SafetyConfig load_safety_config(const std::filesystem::path& path);
void save_safety_config(const SafetyConfig& cfg, const std::filesystem::path& path);

Vec apply_delta(const Vec& q_last, const Vec& a_delta);
Vec clip_joints(const Vec& q, const SafetyConfig& cfg);

// Rescales the step to ||delta q|| = v_max * dt when it exceeds the bound
// (direction preserved); per_joint_clamp clamps each joint's step instead.
Vec limit_velocity(const Vec& q_cmd, const Vec& q_prev, const SafetyConfig& cfg);

// Affine blend between consecutive inference outputs, exact at endpoints.
Vec interpolate(const Vec& q_prev, const Vec& q_cmd, double t, double t_k, double t_k1);

enum class ActionMode { absolute, delta };

struct SafetyTrace {
    Vec t;
    Matrix actions;  // steps x 14
    ActionMode mode = ActionMode::delta;
};

// CSV in: t,a0..a13,mode   CSV out: t,q0..q13
SafetyTrace load_trace(const std::filesystem::path& path);
void write_commands(const std::filesystem::path& path, const Vec& t, const Matrix& commands);

// integrate (delta mode) -> clip -> velocity-limit, updating q_last to the
// emitted command each step.
Matrix pipeline(const SafetyTrace& trace, const Vec& q0, const SafetyConfig& cfg);

}  // namespace vtk
