#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vtk/matrix.hpp"
#include "vtk/rng.hpp"
#include "vtk/task.hpp"

namespace vtk {

inline constexpr int kPoseDim = 14;
inline const double kAlphaMax = std::log(100.0);  // tau in [0.01, 1.0]
inline const double kAlphaInit = std::log(1.0 / 0.07);

// y = w x + b, w laid out out_dim x in_dim. Doubles as a gradient holder.
struct LinearLayer {
    Matrix w;
    Vec b;
};

// Trainable state of the shared embedding space: pose MLP, per-modality
// projections over precomputed features, pairwise fusion maps and the
// log-inverse-temperature scalar.
struct AlignmentModel {
    int dim = 64;      // shared embedding dimension d
    int hidden = 128;  // pose MLP width
    int visual_dim = 0;
    int tactile_dim = 0;

    // fixed standardization of the 14-dim pose input (not trained)
    Vec pose_mean;
    Vec pose_scale;

    std::array<LinearLayer, 4> pose_mlp;  // 14->h, then h->h
    LinearLayer pose_proj;                // h -> d
    LinearLayer visual_proj;              // visual_dim -> d
    LinearLayer tactile_proj;             // tactile_dim -> d
    LinearLayer fuse_vt, fuse_vp, fuse_tp;  // d x 2d, canonical modality order

    double alpha = kAlphaInit;
    double dropout_p = 0.0;

    const LinearLayer& fusion_for(Modality a, Modality b) const;
    LinearLayer& fusion_for(Modality a, Modality b);
};

AlignmentModel init_model(int dim, int hidden, int visual_dim, int tactile_dim, uint64_t seed);

struct ModelGrads {
    std::array<LinearLayer, 4> pose_mlp;
    LinearLayer pose_proj, visual_proj, tactile_proj;
    LinearLayer fuse_vt, fuse_vp, fuse_tp;
    double alpha = 0.0;
};

ModelGrads zero_grads(const AlignmentModel& m);

// Flat view over trainable parameters, in a fixed order shared between the
// model and its gradients. decay marks tensors subject to weight decay.
struct ParamRef {
    std::string name;
    double* data;
    size_t size;
    bool decay;
};
std::vector<ParamRef> param_refs(AlignmentModel& m);
std::vector<ParamRef> grad_refs(ModelGrads& g);

struct Batch {
    Matrix pose;                 // B x 14
    std::vector<Matrix> visual;  // per sample: T x visual_dim
    std::vector<Matrix> tactile;

    int size() const { return pose.rows; }
};

Vec l2_normalize(const Vec& v);          // throws ZeroVector
double temperature(double alpha);        // tau = exp(-clamp(alpha, 0, ln 100))
Matrix similarity_matrix(const Matrix& zq, const Matrix& zt, double tau);
double infonce_loss(const Matrix& s);    // symmetric, max-subtracted softmax

Vec encode_pose(const AlignmentModel& m, const Vec& x);
Vec encode_feature(const AlignmentModel& m, const Matrix& frames, Modality mod);
Vec fuse(const AlignmentModel& m, const Vec& z1, const Vec& z2, Modality m1, Modality m2);

// Encodes one side of a task for sample i of the batch (fusing when the
// side holds two modalities).
Vec encode_side(const AlignmentModel& m, const Batch& batch, int i, const ModalitySide& side);

struct LossGrads {
    double loss = 0.0;
    ModelGrads grads;
};

// Manual reverse-mode differentiation through normalize, similarity,
// symmetric InfoNCE, fusion, projections and the pose MLP. The multi-task
// form averages the per-task losses. dropout_rng enables the seeded
// dropout toggle (training only).
LossGrads loss_and_grads(const AlignmentModel& m, const Batch& batch,
                         std::span<const RetrievalTask> tasks, Rng* dropout_rng = nullptr);
LossGrads loss_and_grads(const AlignmentModel& m, const Batch& batch, const RetrievalTask& task,
                         Rng* dropout_rng = nullptr);

// Checkpoints are JSON documents of named parameter tensors; doubles are
// serialized shortest-round-trip so load(save(m)) == m exactly.
void save_model(const AlignmentModel& m, const std::filesystem::path& path);
AlignmentModel load_model(const std::filesystem::path& path);

}  // namespace vtk
