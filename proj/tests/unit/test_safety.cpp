#include <fstream>

#include "doctest.h"
#include "support/testutil.hpp"
#include "vtk/safety.hpp"

using namespace vtk;
using vtktest::TempDir;

namespace {

SafetyConfig tight_config() {
    SafetyConfig cfg;
    cfg.q_min = Vec(14, -1.0);
    cfg.q_max = Vec(14, 1.0);
    cfg.v_max = 3.0;
    cfg.dt = 1.0 / 30.0;  // bound 0.1 per step
    return cfg;
}

}  // namespace

TEST_CASE("apply_delta: fixtures and the elementwise-sum oracle") {
    Vec zero(14, 0.0);
    CHECK(apply_delta(zero, zero) == zero);
    CHECK(apply_delta(Vec(14, 0.5), Vec(14, -0.5)) == zero);
    Rng rng(90);
    Vec q(14), d(14);
    for (int i = 0; i < 14; ++i) {
        q[static_cast<size_t>(i)] = rng.gaussian();
        d[static_cast<size_t>(i)] = rng.gaussian();
    }
    Vec got = apply_delta(q, d);
    for (int i = 0; i < 14; ++i) {
        CHECK(got[static_cast<size_t>(i)] == q[static_cast<size_t>(i)] + d[static_cast<size_t>(i)]);
    }
    Vec bad = q;
    bad[3] = std::numeric_limits<double>::infinity();
    try {
        apply_delta(bad, d);
        FAIL("expected NonFinite");
    } catch (const Error& e) {
        CHECK(e.kind() == "NonFinite");
    }
}

TEST_CASE("clip_joints: clamps, leaves interior points, idempotent") {
    SafetyConfig cfg = tight_config();
    Vec q(14, 0.2);
    q[0] = 2.0;
    q[5] = -7.0;
    Vec c = clip_joints(q, cfg);
    CHECK(c[0] == 1.0);
    CHECK(c[5] == -1.0);
    CHECK(c[3] == 0.2);
    CHECK(clip_joints(c, cfg) == c);

    Rng rng(91);
    for (int trial = 0; trial < 200; ++trial) {
        Vec r(14);
        for (double& v : r) v = rng.gaussian() * 3.0;
        Vec once = clip_joints(r, cfg);
        CHECK(clip_joints(once, cfg) == once);
    }
}

TEST_CASE("limit_velocity: rescales to the bound, preserves direction") {
    SafetyConfig cfg = tight_config();
    Vec prev(14, 0.0);
    Vec cmd(14, 0.0);
    cmd[0] = 1.0;
    Vec lim = limit_velocity(cmd, prev, cfg);
    CHECK(lim[0] == doctest::Approx(0.1).epsilon(1e-12));
    for (int i = 1; i < 14; ++i) CHECK(lim[static_cast<size_t>(i)] == 0.0);

    Vec small(14, 0.0);
    small[2] = 0.05;
    CHECK(limit_velocity(small, prev, cfg) == small);

    Rng rng(92);
    const double bound = cfg.v_max * cfg.dt;
    for (int trial = 0; trial < 10000; ++trial) {
        Vec p(14), c(14);
        for (int i = 0; i < 14; ++i) {
            p[static_cast<size_t>(i)] = rng.gaussian();
            c[static_cast<size_t>(i)] = rng.gaussian();
        }
        Vec out = limit_velocity(c, p, cfg);
        double n = 0.0;
        for (int i = 0; i < 14; ++i) {
            double d = out[static_cast<size_t>(i)] - p[static_cast<size_t>(i)];
            n += d * d;
        }
        CHECK(std::sqrt(n) <= bound + 1e-12);
        // direction preserved: limited step is a non-negative multiple
        double dot_dir = 0.0, norm_raw = 0.0, norm_lim = 0.0;
        for (int i = 0; i < 14; ++i) {
            double raw = c[static_cast<size_t>(i)] - p[static_cast<size_t>(i)];
            double lim_step = out[static_cast<size_t>(i)] - p[static_cast<size_t>(i)];
            dot_dir += raw * lim_step;
            norm_raw += raw * raw;
            norm_lim += lim_step * lim_step;
        }
        CHECK(dot_dir >= 0.0);
        CHECK(dot_dir * dot_dir ==
              doctest::Approx(norm_raw * norm_lim).epsilon(1e-9));  // collinear
    }
}

TEST_CASE("limit_velocity: per-joint mode clamps each joint independently") {
    SafetyConfig cfg = tight_config();
    cfg.velocity_mode = VelocityMode::per_joint_clamp;
    Vec prev(14, 0.0);
    Vec cmd(14, 0.0);
    cmd[0] = 1.0;
    cmd[1] = -0.02;
    Vec out = limit_velocity(cmd, prev, cfg);
    CHECK(out[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(out[1] == -0.02);
}

TEST_CASE("interpolate: endpoints exact, midpoint averages, affine in t") {
    Vec a(14, 0.0), b(14, 0.0);
    for (int i = 0; i < 14; ++i) {
        a[static_cast<size_t>(i)] = i * 0.1;
        b[static_cast<size_t>(i)] = 1.0 - i * 0.05;
    }
    CHECK(interpolate(a, b, 2.0, 2.0, 3.0) == a);
    CHECK(interpolate(a, b, 3.0, 2.0, 3.0) == b);
    Vec mid = interpolate(a, b, 2.5, 2.0, 3.0);
    for (int i = 0; i < 14; ++i) {
        CHECK(mid[static_cast<size_t>(i)] ==
              doctest::Approx(0.5 * (a[static_cast<size_t>(i)] + b[static_cast<size_t>(i)]))
                  .epsilon(1e-12));
    }
    // affine: value at t is a + w (b - a)
    Rng rng(93);
    for (int trial = 0; trial < 50; ++trial) {
        double t = rng.uniform(2.0, 3.0);
        Vec v = interpolate(a, b, t, 2.0, 3.0);
        double w = (t - 2.0) / 1.0;
        for (int i = 0; i < 14; ++i) {
            CHECK(v[static_cast<size_t>(i)] ==
                  doctest::Approx(a[static_cast<size_t>(i)] +
                                  w * (b[static_cast<size_t>(i)] - a[static_cast<size_t>(i)]))
                      .epsilon(1e-12));
        }
    }
    try {
        interpolate(a, b, 2.0, 2.0, 2.0);
        FAIL("expected DegenerateInterval");
    } catch (const Error& e) {
        CHECK(e.kind() == "DegenerateInterval");
    }
}

TEST_CASE("pipeline: all-zero delta trace emits a constant q0") {
    SafetyConfig cfg = tight_config();
    SafetyTrace trace;
    trace.mode = ActionMode::delta;
    trace.actions = Matrix(20, 14);
    for (int r = 0; r < 20; ++r) trace.t.push_back(r * cfg.dt);
    Vec q0(14, 0.25);
    Matrix out = pipeline(trace, q0, cfg);
    for (int r = 0; r < out.rows; ++r) {
        CHECK(out.row_vec(r) == q0);
    }
}

TEST_CASE("pipeline: saturating ramp under a large constant delta") {
    SafetyConfig cfg = tight_config();
    cfg.velocity_mode = VelocityMode::norm_rescale;
    SafetyTrace trace;
    trace.mode = ActionMode::delta;
    const int steps = 60;
    trace.actions = Matrix(steps, 14);
    for (int r = 0; r < steps; ++r) {
        trace.t.push_back(r * cfg.dt);
        trace.actions.at(r, 0) = 1.0;  // only joint 0 moves
    }
    Vec q0(14, 0.0);
    Matrix out = pipeline(trace, q0, cfg);
    // oracle: ramp of exactly v_max dt = 0.1 per step until the limit at 1.0
    const double bound = cfg.v_max * cfg.dt;
    double expect = 0.0;
    for (int r = 0; r < steps; ++r) {
        expect = std::min(expect + bound, cfg.q_max[0]);
        CHECK(out.at(r, 0) == doctest::Approx(expect).epsilon(1e-12));
        for (int c = 1; c < 14; ++c) CHECK(out.at(r, c) == 0.0);
    }
    CHECK(out.at(steps - 1, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pipeline: absolute trace within limits passes through unchanged") {
    SafetyConfig cfg = tight_config();
    SafetyTrace trace;
    trace.mode = ActionMode::absolute;
    const int steps = 30;
    trace.actions = Matrix(steps, 14);
    Rng rng(94);
    Vec cur(14, 0.0);
    for (int r = 0; r < steps; ++r) {
        trace.t.push_back(r * cfg.dt);
        // small random walk, well inside both limits
        double norm = 0.0;
        Vec step(14);
        for (double& v : step) v = rng.gaussian();
        for (double v : step) norm += v * v;
        norm = std::sqrt(norm);
        for (int c = 0; c < 14; ++c) {
            cur[static_cast<size_t>(c)] =
                clamp(cur[static_cast<size_t>(c)] + step[static_cast<size_t>(c)] / norm * 0.05,
                      -0.9, 0.9);
            trace.actions.at(r, c) = cur[static_cast<size_t>(c)];
        }
    }
    Matrix out = pipeline(trace, Vec(14, 0.0), cfg);
    for (int r = 0; r < steps; ++r) {
        for (int c = 0; c < 14; ++c) CHECK(out.at(r, c) == trace.actions.at(r, c));
    }
}

TEST_CASE("pipeline: randomized traces always satisfy both limits") {
    SafetyConfig cfg = tight_config();
    Rng rng(95);
    const double bound = cfg.v_max * cfg.dt;
    for (int trial = 0; trial < 300; ++trial) {
        SafetyTrace trace;
        trace.mode = trial % 2 ? ActionMode::delta : ActionMode::absolute;
        const int steps = 40;
        trace.actions = Matrix(steps, 14);
        for (int r = 0; r < steps; ++r) {
            trace.t.push_back(r * cfg.dt);
            for (int c = 0; c < 14; ++c) {
                trace.actions.at(r, c) = rng.gaussian() * 2.0;
            }
        }
        Vec q0(14);
        for (double& v : q0) v = rng.uniform(-1.0, 1.0);
        Matrix out = pipeline(trace, q0, cfg);
        Vec prev = q0;
        for (int r = 0; r < steps; ++r) {
            double n = 0.0;
            for (int c = 0; c < 14; ++c) {
                double q = out.at(r, c);
                CHECK(q >= cfg.q_min[static_cast<size_t>(c)]);
                CHECK(q <= cfg.q_max[static_cast<size_t>(c)]);
                double d = q - prev[static_cast<size_t>(c)];
                n += d * d;
            }
            CHECK(std::sqrt(n) <= bound + 1e-12);
            prev = out.row_vec(r);
        }
    }
}

TEST_CASE("pipeline: non-finite action aborts with the step index") {
    SafetyConfig cfg = tight_config();
    SafetyTrace trace;
    trace.mode = ActionMode::delta;
    trace.actions = Matrix(5, 14);
    for (int r = 0; r < 5; ++r) trace.t.push_back(r * cfg.dt);
    trace.actions.at(3, 7) = std::numeric_limits<double>::quiet_NaN();
    try {
        pipeline(trace, Vec(14, 0.0), cfg);
        FAIL("expected NonFinite");
    } catch (const Error& e) {
        CHECK(e.kind() == "NonFinite");
        CHECK(std::string(e.what()).find("step 3") != std::string::npos);
    }
}

TEST_CASE("trace and config files round-trip") {
    TempDir dir("safety");
    SafetyConfig cfg = tight_config();
    cfg.velocity_mode = VelocityMode::per_joint_clamp;
    auto cfg_path = dir.path() / "cfg.json";
    save_safety_config(cfg, cfg_path);
    SafetyConfig back = load_safety_config(cfg_path);
    CHECK(back.q_min == cfg.q_min);
    CHECK(back.q_max == cfg.q_max);
    CHECK(back.v_max == cfg.v_max);
    CHECK(back.dt == cfg.dt);
    CHECK(back.velocity_mode == cfg.velocity_mode);

    SafetyTrace trace;
    trace.mode = ActionMode::delta;
    trace.actions = Matrix(4, 14);
    Rng rng(96);
    for (int r = 0; r < 4; ++r) {
        trace.t.push_back(0.1 * r);
        for (int c = 0; c < 14; ++c) trace.actions.at(r, c) = rng.gaussian();
    }
    auto trace_path = dir.path() / "trace.csv";
    {
        std::vector<std::string> header{"t"};
        for (int c = 0; c < 14; ++c) header.push_back("a" + std::to_string(c));
        header.push_back("mode");
        std::ofstream out(trace_path, std::ios::binary);
        for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << "\n";
        for (int r = 0; r < 4; ++r) {
            out << format_double(trace.t[static_cast<size_t>(r)]);
            for (int c = 0; c < 14; ++c) out << ',' << format_double(trace.actions.at(r, c));
            out << ",delta\n";
        }
    }
    SafetyTrace loaded = load_trace(trace_path);
    CHECK(loaded.mode == ActionMode::delta);
    CHECK(loaded.t == trace.t);
    CHECK(loaded.actions == trace.actions);

    Matrix cmds = pipeline(loaded, Vec(14, 0.0), cfg);
    auto out_path = dir.path() / "out.csv";
    write_commands(out_path, loaded.t, cmds);
    CHECK(std::filesystem::exists(out_path));
}
