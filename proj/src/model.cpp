#include "vtk/model.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

namespace vtk {

using nlohmann::json;

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * std::erfc(-x * kInvSqrt2); }

double gelu_grad(double x) {
    double phi = 0.5 * std::erfc(-x * kInvSqrt2);
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return phi + x * pdf;
}

int pair_index(Modality a, Modality b) {
    if (static_cast<int>(a) > static_cast<int>(b)) std::swap(a, b);
    if (a == Modality::visual && b == Modality::tactile) return 0;
    if (a == Modality::visual && b == Modality::pose) return 1;
    if (a == Modality::tactile && b == Modality::pose) return 2;
    throw Error("UnknownTask", "no fusion for identical modalities");
}

LinearLayer xavier_layer(int out_dim, int in_dim, Rng& rng) {
    LinearLayer l;
    l.w = Matrix(out_dim, in_dim);
    double limit = std::sqrt(6.0 / (in_dim + out_dim));
    for (double& v : l.w.data) v = rng.uniform(-limit, limit);
    l.b.assign(static_cast<size_t>(out_dim), 0.0);
    return l;
}

LinearLayer zero_layer(const LinearLayer& like) {
    LinearLayer l;
    l.w = Matrix(like.w.rows, like.w.cols);
    l.b.assign(like.b.size(), 0.0);
    return l;
}

// Y = X w^T + b for X (B x in), w (out x in)
Matrix linear_forward(const Matrix& x, const LinearLayer& l) {
    Matrix y = matmul_nt(x, l.w);
    for (int r = 0; r < y.rows; ++r) {
        double* row = y.row(r);
        for (int c = 0; c < y.cols; ++c) row[c] += l.b[static_cast<size_t>(c)];
    }
    return y;
}

// Accumulates dW += dY^T X and db += column sums of dY; returns dX.
Matrix linear_backward(const Matrix& x, const LinearLayer& l, const Matrix& dy,
                       LinearLayer& grad) {
    Matrix dw = matmul_tn(dy, x);
    for (size_t i = 0; i < dw.data.size(); ++i) grad.w.data[i] += dw.data[i];
    for (int r = 0; r < dy.rows; ++r) {
        const double* row = dy.row(r);
        for (int c = 0; c < dy.cols; ++c) grad.b[static_cast<size_t>(c)] += row[c];
    }
    return matmul_nn(dy, l.w);
}

// Row-wise u / ||u||; records norms. Throws ZeroVector on a zero row.
Matrix normalize_rows(const Matrix& u, Vec& norms) {
    Matrix z(u.rows, u.cols);
    norms.assign(static_cast<size_t>(u.rows), 0.0);
    for (int r = 0; r < u.rows; ++r) {
        const double* urow = u.row(r);
        double n = 0.0;
        for (int c = 0; c < u.cols; ++c) n += urow[c] * urow[c];
        n = std::sqrt(n);
        if (n == 0.0) throw Error("ZeroVector", "cannot normalize a zero embedding");
        norms[static_cast<size_t>(r)] = n;
        double* zrow = z.row(r);
        for (int c = 0; c < u.cols; ++c) zrow[c] = urow[c] / n;
    }
    return z;
}

// du = (dz - z (z . dz)) / ||u||
Matrix normalize_rows_backward(const Matrix& z, const Vec& norms, const Matrix& dz) {
    Matrix du(z.rows, z.cols);
    for (int r = 0; r < z.rows; ++r) {
        const double* zrow = z.row(r);
        const double* drow = dz.row(r);
        double inner = 0.0;
        for (int c = 0; c < z.cols; ++c) inner += zrow[c] * drow[c];
        double inv = 1.0 / norms[static_cast<size_t>(r)];
        double* orow = du.row(r);
        for (int c = 0; c < z.cols; ++c) orow[c] = (drow[c] - zrow[c] * inner) * inv;
    }
    return du;
}

struct PoseCache {
    Matrix xs;                    // standardized inputs, B x 14
    std::array<Matrix, 4> pre;    // pre-activations
    std::array<Matrix, 4> post;   // after GELU (and dropout)
    std::array<Matrix, 4> mask;   // dropout masks; empty when off
    Matrix u;                     // pre-normalization projection
    Vec unorm;
    Matrix z;
};

struct FeatCache {
    Matrix pooled;  // B x d_in
    Matrix u;
    Vec unorm;
    Matrix z;
};

struct FuseCache {
    Matrix concat;  // B x 2d
    Matrix u;
    Vec unorm;
    Matrix z;
};

PoseCache pose_forward(const AlignmentModel& m, const Matrix& x, Rng* dropout_rng) {
    PoseCache c;
    c.xs = Matrix(x.rows, kPoseDim);
    for (int r = 0; r < x.rows; ++r) {
        for (int j = 0; j < kPoseDim; ++j) {
            c.xs.at(r, j) = (x.at(r, j) - m.pose_mean[static_cast<size_t>(j)]) /
                            m.pose_scale[static_cast<size_t>(j)];
        }
    }
    const bool drop = dropout_rng != nullptr && m.dropout_p > 0.0;
    const double keep = 1.0 - m.dropout_p;
    Matrix h = c.xs;
    for (int l = 0; l < 4; ++l) {
        c.pre[static_cast<size_t>(l)] = linear_forward(h, m.pose_mlp[static_cast<size_t>(l)]);
        Matrix& a = c.pre[static_cast<size_t>(l)];
        Matrix post(a.rows, a.cols);
        for (size_t i = 0; i < a.data.size(); ++i) post.data[i] = gelu(a.data[i]);
        if (drop) {
            Matrix mask(a.rows, a.cols);
            for (size_t i = 0; i < mask.data.size(); ++i) {
                mask.data[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
            }
            for (size_t i = 0; i < post.data.size(); ++i) post.data[i] *= mask.data[i];
            c.mask[static_cast<size_t>(l)] = std::move(mask);
        }
        c.post[static_cast<size_t>(l)] = std::move(post);
        h = c.post[static_cast<size_t>(l)];
    }
    c.u = linear_forward(c.post[3], m.pose_proj);
    c.z = normalize_rows(c.u, c.unorm);
    return c;
}

void pose_backward(const AlignmentModel& m, const PoseCache& c, const Matrix& dz,
                   ModelGrads& g) {
    Matrix du = normalize_rows_backward(c.z, c.unorm, dz);
    Matrix dh = linear_backward(c.post[3], m.pose_proj, du, g.pose_proj);
    for (int l = 3; l >= 0; --l) {
        const Matrix& a = c.pre[static_cast<size_t>(l)];
        Matrix da(dh.rows, dh.cols);
        const bool drop = !c.mask[static_cast<size_t>(l)].data.empty();
        for (size_t i = 0; i < da.data.size(); ++i) {
            double v = dh.data[i];
            if (drop) v *= c.mask[static_cast<size_t>(l)].data[i];
            da.data[i] = v * gelu_grad(a.data[i]);
        }
        const Matrix& input = l == 0 ? c.xs : c.post[static_cast<size_t>(l) - 1];
        dh = linear_backward(input, m.pose_mlp[static_cast<size_t>(l)], da,
                             g.pose_mlp[static_cast<size_t>(l)]);
    }
}

Matrix pool_frames(const std::vector<Matrix>& stacks, int expect_dim) {
    Matrix pooled(static_cast<int>(stacks.size()), expect_dim);
    for (size_t i = 0; i < stacks.size(); ++i) {
        const Matrix& f = stacks[i];
        if (f.rows < 1) throw Error("EmptyStack", "feature stack needs at least one frame");
        if (f.cols != expect_dim) {
            throw Error("DimensionMismatch", "feature frame dim " + std::to_string(f.cols) +
                                                 " != projection input " +
                                                 std::to_string(expect_dim));
        }
        double* orow = pooled.row(static_cast<int>(i));
        for (int t = 0; t < f.rows; ++t) {
            const double* frow = f.row(t);
            for (int c = 0; c < expect_dim; ++c) orow[c] += frow[c];
        }
        for (int c = 0; c < expect_dim; ++c) orow[c] /= f.rows;
    }
    return pooled;
}

FeatCache feature_forward(const AlignmentModel& m, const std::vector<Matrix>& stacks,
                          Modality mod) {
    const LinearLayer& proj = mod == Modality::visual ? m.visual_proj : m.tactile_proj;
    FeatCache c;
    c.pooled = pool_frames(stacks, proj.w.cols);
    c.u = linear_forward(c.pooled, proj);
    c.z = normalize_rows(c.u, c.unorm);
    return c;
}

void feature_backward(const AlignmentModel& m, const FeatCache& c, Modality mod,
                      const Matrix& dz, ModelGrads& g) {
    const LinearLayer& proj = mod == Modality::visual ? m.visual_proj : m.tactile_proj;
    LinearLayer& grad = mod == Modality::visual ? g.visual_proj : g.tactile_proj;
    Matrix du = normalize_rows_backward(c.z, c.unorm, dz);
    (void)linear_backward(c.pooled, proj, du, grad);
}

FuseCache fuse_forward(const AlignmentModel& m, const Matrix& z1, const Matrix& z2,
                       int pair_idx) {
    const LinearLayer& layer = pair_idx == 0 ? m.fuse_vt : pair_idx == 1 ? m.fuse_vp : m.fuse_tp;
    FuseCache c;
    const int d = z1.cols;
    c.concat = Matrix(z1.rows, 2 * d);
    for (int r = 0; r < z1.rows; ++r) {
        std::copy(z1.row(r), z1.row(r) + d, c.concat.row(r));
        std::copy(z2.row(r), z2.row(r) + d, c.concat.row(r) + d);
    }
    c.u = linear_forward(c.concat, layer);
    c.z = normalize_rows(c.u, c.unorm);
    return c;
}

}  // namespace

const LinearLayer& AlignmentModel::fusion_for(Modality a, Modality b) const {
    switch (pair_index(a, b)) {
        case 0: return fuse_vt;
        case 1: return fuse_vp;
        default: return fuse_tp;
    }
}

LinearLayer& AlignmentModel::fusion_for(Modality a, Modality b) {
    switch (pair_index(a, b)) {
        case 0: return fuse_vt;
        case 1: return fuse_vp;
        default: return fuse_tp;
    }
}

AlignmentModel init_model(int dim, int hidden, int visual_dim, int tactile_dim, uint64_t seed) {
    if (dim < 1 || hidden < 1 || visual_dim < 1 || tactile_dim < 1) {
        throw Error("BadConfig", "model dimensions must be positive");
    }
    Rng rng(seed);
    AlignmentModel m;
    m.dim = dim;
    m.hidden = hidden;
    m.visual_dim = visual_dim;
    m.tactile_dim = tactile_dim;
    m.pose_mean.assign(kPoseDim, 0.0);
    m.pose_scale.assign(kPoseDim, 1.0);
    m.pose_mlp[0] = xavier_layer(hidden, kPoseDim, rng);
    for (int l = 1; l < 4; ++l) m.pose_mlp[static_cast<size_t>(l)] = xavier_layer(hidden, hidden, rng);
    m.pose_proj = xavier_layer(dim, hidden, rng);
    m.visual_proj = xavier_layer(dim, visual_dim, rng);
    m.tactile_proj = xavier_layer(dim, tactile_dim, rng);
    m.fuse_vt = xavier_layer(dim, 2 * dim, rng);
    m.fuse_vp = xavier_layer(dim, 2 * dim, rng);
    m.fuse_tp = xavier_layer(dim, 2 * dim, rng);
    m.alpha = kAlphaInit;
    return m;
}

ModelGrads zero_grads(const AlignmentModel& m) {
    ModelGrads g;
    for (int l = 0; l < 4; ++l) g.pose_mlp[static_cast<size_t>(l)] = zero_layer(m.pose_mlp[static_cast<size_t>(l)]);
    g.pose_proj = zero_layer(m.pose_proj);
    g.visual_proj = zero_layer(m.visual_proj);
    g.tactile_proj = zero_layer(m.tactile_proj);
    g.fuse_vt = zero_layer(m.fuse_vt);
    g.fuse_vp = zero_layer(m.fuse_vp);
    g.fuse_tp = zero_layer(m.fuse_tp);
    g.alpha = 0.0;
    return g;
}

namespace {

template <class M>
std::vector<ParamRef> refs_impl(M& m, double* alpha) {
    std::vector<ParamRef> refs;
    auto add = [&](const std::string& name, LinearLayer& l) {
        refs.push_back({name + ".w", l.w.data.data(), l.w.data.size(), true});
        refs.push_back({name + ".b", l.b.data(), l.b.size(), false});
    };
    for (int l = 0; l < 4; ++l) add("pose_mlp." + std::to_string(l), m.pose_mlp[static_cast<size_t>(l)]);
    add("pose_proj", m.pose_proj);
    add("visual_proj", m.visual_proj);
    add("tactile_proj", m.tactile_proj);
    add("fuse_vt", m.fuse_vt);
    add("fuse_vp", m.fuse_vp);
    add("fuse_tp", m.fuse_tp);
    refs.push_back({"alpha", alpha, 1, false});
    return refs;
}

}  // namespace

std::vector<ParamRef> param_refs(AlignmentModel& m) { return refs_impl(m, &m.alpha); }
std::vector<ParamRef> grad_refs(ModelGrads& g) { return refs_impl(g, &g.alpha); }

Vec l2_normalize(const Vec& v) {
    double n = norm2(v);
    if (n == 0.0) throw Error("ZeroVector", "cannot normalize the zero vector");
    Vec out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

double temperature(double alpha) { return std::exp(-clamp(alpha, 0.0, kAlphaMax)); }

Matrix similarity_matrix(const Matrix& zq, const Matrix& zt, double tau) {
    if (zq.cols != zt.cols || zq.rows != zt.rows) {
        throw Error("ShapeMismatch", "similarity_matrix needs matching B x d operands");
    }
    Matrix s = matmul_nt(zq, zt);
    for (double& v : s.data) v /= tau;
    return s;
}

double infonce_loss(const Matrix& s) {
    if (s.rows != s.cols || s.rows < 1) {
        throw Error("ShapeMismatch", "similarity matrix must be square and non-empty");
    }
    for (double v : s.data) {
        if (!std::isfinite(v)) throw Error("NonFinite", "similarity matrix has non-finite entries");
    }
    const int b = s.rows;
    double total = 0.0;
    // rows (query -> target)
    for (int i = 0; i < b; ++i) {
        const double* row = s.row(i);
        double m = row[0];
        for (int j = 1; j < b; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (int j = 0; j < b; ++j) sum += std::exp(row[j] - m);
        total += m + std::log(sum) - row[i];
    }
    // columns (target -> query)
    for (int j = 0; j < b; ++j) {
        double m = s.at(0, j);
        for (int i = 1; i < b; ++i) m = std::max(m, s.at(i, j));
        double sum = 0.0;
        for (int i = 0; i < b; ++i) sum += std::exp(s.at(i, j) - m);
        total += m + std::log(sum) - s.at(j, j);
    }
    double loss = total / (2.0 * b);
    if (!std::isfinite(loss)) throw Error("NonFinite", "InfoNCE loss is non-finite");
    return loss;
}

Vec encode_pose(const AlignmentModel& m, const Vec& x) {
    if (static_cast<int>(x.size()) != kPoseDim) {
        throw Error("DimensionMismatch",
                    "pose input must have dim 14, got " + std::to_string(x.size()));
    }
    if (!all_finite(x)) throw Error("NonFinite", "pose input has non-finite values");
    Matrix xm(1, kPoseDim);
    xm.set_row(0, x);
    PoseCache c = pose_forward(m, xm, nullptr);
    return c.z.row_vec(0);
}

Vec encode_feature(const AlignmentModel& m, const Matrix& frames, Modality mod) {
    if (mod == Modality::pose) {
        throw Error("DimensionMismatch", "pose is encoded by encode_pose, not encode_feature");
    }
    std::vector<Matrix> stacks{frames};
    FeatCache c = feature_forward(m, stacks, mod);
    return c.z.row_vec(0);
}

Vec fuse(const AlignmentModel& m, const Vec& z1, const Vec& z2, Modality m1, Modality m2) {
    if (static_cast<int>(z1.size()) != m.dim || static_cast<int>(z2.size()) != m.dim) {
        throw Error("DimensionMismatch", "fusion inputs must have the embedding dim");
    }
    const Vec* a = &z1;
    const Vec* b = &z2;
    if (static_cast<int>(m1) > static_cast<int>(m2)) std::swap(a, b);  // canonical slot order
    Matrix za(1, m.dim), zb(1, m.dim);
    za.set_row(0, *a);
    zb.set_row(0, *b);
    FuseCache c = fuse_forward(m, za, zb, pair_index(m1, m2));
    return c.z.row_vec(0);
}

Vec encode_side(const AlignmentModel& m, const Batch& batch, int i, const ModalitySide& side) {
    auto one = [&](Modality mod) -> Vec {
        switch (mod) {
            case Modality::pose: return encode_pose(m, batch.pose.row_vec(i));
            case Modality::visual:
                return encode_feature(m, batch.visual[static_cast<size_t>(i)], mod);
            case Modality::tactile:
                return encode_feature(m, batch.tactile[static_cast<size_t>(i)], mod);
        }
        throw Error("UnknownTask", "bad modality");
    };
    if (side.count == 1) return one(side.mods[0]);
    Vec z1 = one(side.mods[0]);
    Vec z2 = one(side.mods[1]);
    return fuse(m, z1, z2, side.mods[0], side.mods[1]);
}

namespace {

void validate_batch(const Batch& batch) {
    const int b = batch.size();
    if (b < 1) throw Error("ShapeMismatch", "batch is empty");
    if (batch.pose.cols != kPoseDim) {
        throw Error("DimensionMismatch", "pose inputs must be B x 14");
    }
    if (static_cast<int>(batch.visual.size()) != b ||
        static_cast<int>(batch.tactile.size()) != b) {
        throw Error("ShapeMismatch", "all modalities must share the batch size");
    }
}

}  // namespace

LossGrads loss_and_grads(const AlignmentModel& m, const Batch& batch,
                         std::span<const RetrievalTask> tasks, Rng* dropout_rng) {
    if (tasks.empty()) throw Error("UnknownTask", "no tasks given");
    validate_batch(batch);
    const int b = batch.size();
    const int d = m.dim;

    bool need[3] = {false, false, false};
    bool need_pair[3] = {false, false, false};
    for (const auto& task : tasks) {
        for (const ModalitySide* side : {&task.query, &task.target}) {
            for (int i = 0; i < side->count; ++i) need[static_cast<int>(side->mods[static_cast<size_t>(i)])] = true;
            if (side->count == 2) need_pair[pair_index(side->mods[0], side->mods[1])] = true;
        }
    }

    // forward all required encoders once; tasks share them
    PoseCache pose_cache;
    FeatCache vis_cache, tac_cache;
    if (need[static_cast<int>(Modality::pose)]) {
        if (!all_finite(batch.pose.data)) throw Error("NonFinite", "pose inputs non-finite");
        pose_cache = pose_forward(m, batch.pose, dropout_rng);
    }
    if (need[static_cast<int>(Modality::visual)]) {
        vis_cache = feature_forward(m, batch.visual, Modality::visual);
    }
    if (need[static_cast<int>(Modality::tactile)]) {
        tac_cache = feature_forward(m, batch.tactile, Modality::tactile);
    }
    auto z_of = [&](Modality mod) -> const Matrix& {
        switch (mod) {
            case Modality::visual: return vis_cache.z;
            case Modality::tactile: return tac_cache.z;
            case Modality::pose: return pose_cache.z;
        }
        throw Error("UnknownTask", "bad modality");
    };

    std::array<FuseCache, 3> fuse_cache;
    std::array<std::array<Modality, 2>, 3> pair_mods{};
    for (int p = 0; p < 3; ++p) {
        if (!need_pair[p]) continue;
        Modality a = p == 2 ? Modality::tactile : Modality::visual;
        Modality bb = p == 0 ? Modality::tactile : Modality::pose;
        pair_mods[static_cast<size_t>(p)] = {a, bb};
        fuse_cache[static_cast<size_t>(p)] = fuse_forward(m, z_of(a), z_of(bb), p);
    }

    Matrix dz_single[3];
    Matrix dz_pair[3];
    for (int i = 0; i < 3; ++i) {
        if (need[i]) dz_single[i] = Matrix(b, d);
        if (need_pair[i]) dz_pair[i] = Matrix(b, d);
    }

    const double a_clamped = clamp(m.alpha, 0.0, kAlphaMax);
    const double tau = std::exp(-a_clamped);
    const double inv_tau = 1.0 / tau;
    const bool alpha_interior = m.alpha >= 0.0 && m.alpha <= kAlphaMax;
    const double task_weight = 1.0 / static_cast<double>(tasks.size());

    LossGrads out;
    out.grads = zero_grads(m);

    for (const auto& task : tasks) {
        auto side_z = [&](const ModalitySide& side) -> const Matrix& {
            if (side.count == 1) return z_of(side.mods[0]);
            return fuse_cache[static_cast<size_t>(pair_index(side.mods[0], side.mods[1]))].z;
        };
        auto side_dz = [&](const ModalitySide& side) -> Matrix& {
            if (side.count == 1) return dz_single[static_cast<int>(side.mods[0])];
            return dz_pair[pair_index(side.mods[0], side.mods[1])];
        };
        const Matrix& zq = side_z(task.query);
        const Matrix& zt = side_z(task.target);

        Matrix s = similarity_matrix(zq, zt, tau);
        out.loss += task_weight * infonce_loss(s);

        // dL/dS = (P + Q - 2I) / 2B, P row softmax, Q column softmax
        Matrix ds(b, b);
        for (int i = 0; i < b; ++i) {
            const double* row = s.row(i);
            double mx = row[0];
            for (int j = 1; j < b; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (int j = 0; j < b; ++j) sum += std::exp(row[j] - mx);
            double* drow = ds.row(i);
            for (int j = 0; j < b; ++j) drow[j] = std::exp(row[j] - mx) / sum;
        }
        for (int j = 0; j < b; ++j) {
            double mx = s.at(0, j);
            for (int i = 1; i < b; ++i) mx = std::max(mx, s.at(i, j));
            double sum = 0.0;
            for (int i = 0; i < b; ++i) sum += std::exp(s.at(i, j) - mx);
            for (int i = 0; i < b; ++i) ds.at(i, j) += std::exp(s.at(i, j) - mx) / sum;
        }
        const double scale = task_weight / (2.0 * b);
        for (int i = 0; i < b; ++i) ds.at(i, i) -= 2.0;
        for (double& v : ds.data) v *= scale;

        if (alpha_interior) {
            double acc = 0.0;
            for (size_t i = 0; i < ds.data.size(); ++i) acc += ds.data[i] * s.data[i];
            out.grads.alpha += acc;
        }

        Matrix dq = matmul_nn(ds, zt);
        Matrix dt = matmul_tn(ds, zq);
        Matrix& q_acc = side_dz(task.query);
        Matrix& t_acc = side_dz(task.target);
        for (size_t i = 0; i < dq.data.size(); ++i) q_acc.data[i] += inv_tau * dq.data[i];
        for (size_t i = 0; i < dt.data.size(); ++i) t_acc.data[i] += inv_tau * dt.data[i];
    }

    // fused sides feed back into their constituent embeddings
    for (int p = 0; p < 3; ++p) {
        if (!need_pair[p]) continue;
        const FuseCache& fc = fuse_cache[static_cast<size_t>(p)];
        const LinearLayer& layer = p == 0 ? m.fuse_vt : p == 1 ? m.fuse_vp : m.fuse_tp;
        LinearLayer& grad = p == 0 ? out.grads.fuse_vt : p == 1 ? out.grads.fuse_vp : out.grads.fuse_tp;
        Matrix du = normalize_rows_backward(fc.z, fc.unorm, dz_pair[p]);
        Matrix dconcat = linear_backward(fc.concat, layer, du, grad);
        Matrix& dz_a = dz_single[static_cast<int>(pair_mods[static_cast<size_t>(p)][0])];
        Matrix& dz_b = dz_single[static_cast<int>(pair_mods[static_cast<size_t>(p)][1])];
        for (int r = 0; r < b; ++r) {
            const double* crow = dconcat.row(r);
            double* arow = dz_a.row(r);
            double* brow = dz_b.row(r);
            for (int c = 0; c < d; ++c) {
                arow[c] += crow[c];
                brow[c] += crow[c + d];
            }
        }
    }

    if (need[static_cast<int>(Modality::visual)]) {
        feature_backward(m, vis_cache, Modality::visual,
                         dz_single[static_cast<int>(Modality::visual)], out.grads);
    }
    if (need[static_cast<int>(Modality::tactile)]) {
        feature_backward(m, tac_cache, Modality::tactile,
                         dz_single[static_cast<int>(Modality::tactile)], out.grads);
    }
    if (need[static_cast<int>(Modality::pose)]) {
        pose_backward(m, pose_cache, dz_single[static_cast<int>(Modality::pose)], out.grads);
    }

    if (!std::isfinite(out.loss)) throw Error("NonFinite", "loss is non-finite");
    return out;
}

LossGrads loss_and_grads(const AlignmentModel& m, const Batch& batch, const RetrievalTask& task,
                         Rng* dropout_rng) {
    return loss_and_grads(m, batch, std::span<const RetrievalTask>(&task, 1), dropout_rng);
}

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    Matrix m;
    m.rows = static_cast<int>(j.size());
    m.cols = m.rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
    m.data.reserve(static_cast<size_t>(m.rows) * static_cast<size_t>(m.cols));
    for (const auto& row : j) {
        if (static_cast<int>(row.size()) != m.cols) {
            throw Error("BadCheckpoint", "ragged parameter matrix");
        }
        for (const auto& v : row) m.data.push_back(v.get<double>());
    }
    return m;
}

json layer_to_json(const LinearLayer& l) {
    return {{"w", matrix_to_json(l.w)}, {"b", l.b}};
}

LinearLayer layer_from_json(const json& j) {
    LinearLayer l;
    l.w = matrix_from_json(j.at("w"));
    l.b = j.at("b").get<Vec>();
    if (static_cast<int>(l.b.size()) != l.w.rows) {
        throw Error("BadCheckpoint", "bias size does not match weight rows");
    }
    return l;
}

}  // namespace

void save_model(const AlignmentModel& m, const std::filesystem::path& path) {
    json doc;
    doc["format"] = "alignment-model";
    doc["dim"] = m.dim;
    doc["hidden"] = m.hidden;
    doc["visual_dim"] = m.visual_dim;
    doc["tactile_dim"] = m.tactile_dim;
    doc["alpha"] = m.alpha;
    doc["dropout_p"] = m.dropout_p;
    doc["pose_mean"] = m.pose_mean;
    doc["pose_scale"] = m.pose_scale;
    json mlp = json::array();
    for (const auto& l : m.pose_mlp) mlp.push_back(layer_to_json(l));
    doc["pose_mlp"] = mlp;
    doc["pose_proj"] = layer_to_json(m.pose_proj);
    doc["visual_proj"] = layer_to_json(m.visual_proj);
    doc["tactile_proj"] = layer_to_json(m.tactile_proj);
    doc["fuse_vt"] = layer_to_json(m.fuse_vt);
    doc["fuse_vp"] = layer_to_json(m.fuse_vp);
    doc["fuse_tp"] = layer_to_json(m.fuse_tp);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoFailure", "cannot write " + path.string());
    out << doc.dump(1) << '\n';
    if (!out) throw Error("IoFailure", "write failed: " + path.string());
}

AlignmentModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoFailure", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("BadCheckpoint", std::string("model checkpoint: ") + e.what());
    }
    AlignmentModel m;
    try {
        if (doc.at("format").get<std::string>() != "alignment-model") {
            throw Error("BadCheckpoint", "not an alignment-model checkpoint");
        }
        m.dim = doc.at("dim").get<int>();
        m.hidden = doc.at("hidden").get<int>();
        m.visual_dim = doc.at("visual_dim").get<int>();
        m.tactile_dim = doc.at("tactile_dim").get<int>();
        m.alpha = doc.at("alpha").get<double>();
        m.dropout_p = doc.at("dropout_p").get<double>();
        m.pose_mean = doc.at("pose_mean").get<Vec>();
        m.pose_scale = doc.at("pose_scale").get<Vec>();
        const auto& mlp = doc.at("pose_mlp");
        if (mlp.size() != 4) throw Error("BadCheckpoint", "pose_mlp must have 4 layers");
        for (size_t l = 0; l < 4; ++l) m.pose_mlp[l] = layer_from_json(mlp.at(l));
        m.pose_proj = layer_from_json(doc.at("pose_proj"));
        m.visual_proj = layer_from_json(doc.at("visual_proj"));
        m.tactile_proj = layer_from_json(doc.at("tactile_proj"));
        m.fuse_vt = layer_from_json(doc.at("fuse_vt"));
        m.fuse_vp = layer_from_json(doc.at("fuse_vp"));
        m.fuse_tp = layer_from_json(doc.at("fuse_tp"));
    } catch (const json::exception& e) {
        throw Error("BadCheckpoint", std::string("model checkpoint: ") + e.what());
    }
    return m;
}

}  // namespace vtk
