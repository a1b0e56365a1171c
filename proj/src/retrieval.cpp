#include "vtk/retrieval.hpp"

#include <cmath>

namespace vtk {

int rank_of_target(const Vec& zq, const Matrix& gallery, int true_index) {
    if (true_index < 0 || true_index >= gallery.rows) {
        throw Error("IndexOutOfRange", "true_index " + std::to_string(true_index) +
                                           " outside gallery of " + std::to_string(gallery.rows));
    }
    if (static_cast<int>(zq.size()) != gallery.cols) {
        throw Error("ShapeMismatch", "query dim does not match gallery");
    }
    const double* target = gallery.row(true_index);
    double s_true = 0.0;
    for (int c = 0; c < gallery.cols; ++c) s_true += zq[static_cast<size_t>(c)] * target[c];
    int ahead = 0;
    for (int r = 0; r < gallery.rows; ++r) {
        if (r == true_index) continue;
        const double* row = gallery.row(r);
        double s = 0.0;
        for (int c = 0; c < gallery.cols; ++c) s += zq[static_cast<size_t>(c)] * row[c];
        if (s >= s_true) ++ahead;
    }
    return 1 + ahead;
}

double recall_at_k(const std::vector<int>& ranks, int k) {
    if (ranks.empty()) throw Error("EmptyQuerySet", "no ranks to aggregate");
    if (k < 1) throw Error("BadConfig", "k must be >= 1");
    long long hit = 0;
    for (int r : ranks) {
        if (r <= k) ++hit;
    }
    return 100.0 * static_cast<double>(hit) / static_cast<double>(ranks.size());
}

double mean_ap(const std::vector<int>& ranks) {
    if (ranks.empty()) throw Error("EmptyQuerySet", "no ranks to aggregate");
    double sum = 0.0;
    for (int r : ranks) sum += 1.0 / static_cast<double>(r);
    return 100.0 * sum / static_cast<double>(ranks.size());
}

namespace {

double harmonic(long long n) {
    if (n <= 10000000LL) {
        double h = 0.0;
        for (long long i = 1; i <= n; ++i) h += 1.0 / static_cast<double>(i);
        return h;
    }
    // asymptotic expansion, error O(n^-4)
    constexpr double gamma = 0.57721566490153286061;
    double x = static_cast<double>(n);
    return std::log(x) + gamma + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x);
}

}  // namespace

RetrievalReport chance_baseline(long long n) {
    if (n < 1) throw Error("BadConfig", "gallery size must be >= 1");
    RetrievalReport rep;
    rep.task = "chance";
    rep.gallery_size = n;
    auto r_at = [n](long long k) {
        return 100.0 * static_cast<double>(std::min(k, n)) / static_cast<double>(n);
    };
    rep.r1 = r_at(1);
    rep.r5 = r_at(5);
    rep.r10 = r_at(10);
    rep.map = 100.0 * harmonic(n) / static_cast<double>(n);
    return rep;
}

RetrievalReport eval_task(const AlignmentModel& m, const PairedDataset& test,
                          const RetrievalTask& task) {
    const int n = test.size();
    if (n < 1) throw Error("EmptyQuerySet", "empty test set");
    if (test.visual_dim != m.visual_dim || test.tactile_dim != m.tactile_dim) {
        throw Error("ShapeMismatch", "test set feature dims do not match the model");
    }
    for (const ModalitySide* side : {&task.query, &task.target}) {
        if (side->count == 2) {
            const LinearLayer& f = m.fusion_for(side->mods[0], side->mods[1]);
            if (f.w.rows == 0) {
                throw Error("MissingFusionParameters",
                            "model lacks fusion for side " + side->name());
            }
        }
    }

    Batch all;
    all.pose = test.pose;
    all.visual = test.visual;
    all.tactile = test.tactile;
    Matrix queries(n, m.dim);
    Matrix gallery(n, m.dim);
    for (int i = 0; i < n; ++i) {
        queries.set_row(i, encode_side(m, all, i, task.query));
        gallery.set_row(i, encode_side(m, all, i, task.target));
    }

    std::vector<int> ranks;
    ranks.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        ranks.push_back(rank_of_target(queries.row_vec(i), gallery, i));
    }

    RetrievalReport rep;
    rep.task = task.name();
    rep.gallery_size = n;
    rep.r1 = recall_at_k(ranks, 1);
    rep.r5 = recall_at_k(ranks, 5);
    rep.r10 = recall_at_k(ranks, 10);
    rep.map = mean_ap(ranks);
    return rep;
}

}  // namespace vtk
