#pragma once

#include <filesystem>

#include "vtk/model.hpp"

namespace vtk {

// Paired multimodal samples: per index one pose vector plus visual and
// tactile frame stacks of precomputed features.
struct PairedDataset {
    int frames_per_stack = 1;  // T
    int visual_dim = 0;
    int tactile_dim = 0;
    Matrix pose;                 // N x 14
    std::vector<Matrix> visual;  // N stacks, each T x visual_dim
    std::vector<Matrix> tactile;

    int size() const { return pose.rows; }
};

void save_paired(const PairedDataset& ds, const std::filesystem::path& dir);
PairedDataset load_paired(const std::filesystem::path& dir);

Batch batch_from(const PairedDataset& ds, const std::vector<size_t>& indices);

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double warmup_fraction = 0.05;
    long long total_steps = 1000;
    int batch_size = 64;
    uint64_t seed = 0;
    int dim = 64;
    int hidden = 128;
    bool dropout = false;     // seeded toggle, off for determinism
    double dropout_p = 0.1;
    std::vector<RetrievalTask> tasks;  // empty -> default_train_tasks()

    void validate() const;
};

// Linear warm-up to cfg.lr at step t_w, then cosine annealing to 0 at
// total_steps. step is 1-based.
double schedule_lr(const TrainConfig& cfg, long long step);

// Adaptive moments with decoupled weight decay; decay applies to weight
// matrices only, never to biases or alpha.
class AdamW {
public:
    AdamW(double beta1, double beta2, double eps, double weight_decay);
    void step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads, double lr);
    long long steps_taken() const { return t_; }

private:
    double beta1_, beta2_, eps_, weight_decay_;
    long long t_ = 0;
    std::vector<Vec> m_, v_;
};

struct TrainOutcome {
    AlignmentModel model;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    long long steps = 0;
};

// Mean multi-task loss over the dataset in sequential batches (no dropout).
double dataset_loss(const AlignmentModel& m, const PairedDataset& ds,
                    std::span<const RetrievalTask> tasks, int batch_size);

TrainOutcome train(const PairedDataset& data, const TrainConfig& cfg);

}  // namespace vtk
