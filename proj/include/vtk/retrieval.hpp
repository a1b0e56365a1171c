#pragma once

#include "vtk/model.hpp"
#include "vtk/train.hpp"

namespace vtk {

struct RetrievalReport {
    std::string task;  // "chance" for the analytic baseline
    long long gallery_size = 0;
    double r1 = 0.0;   // percent
    double r5 = 0.0;
    double r10 = 0.0;
    double map = 0.0;  // mean reciprocal rank, in percent
};

// 1 + number of gallery items at least as similar as the true target
// (pessimistic ties: tied items count as ahead).
int rank_of_target(const Vec& zq, const Matrix& gallery, int true_index);

double recall_at_k(const std::vector<int>& ranks, int k);
double mean_ap(const std::vector<int>& ranks);

// Analytic expectations under uniformly random ranking:
// E[R@k] = 100 k / N, E[mAP] = 100 H_N / N.
RetrievalReport chance_baseline(long long n);

RetrievalReport eval_task(const AlignmentModel& m, const PairedDataset& test,
                          const RetrievalTask& task);

}  // namespace vtk
