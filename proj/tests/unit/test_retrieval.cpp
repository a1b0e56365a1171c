#include <algorithm>
#include <cstdio>

#include "doctest.h"
#include "support/testutil.hpp"
#include "vtk/retrieval.hpp"

using namespace vtk;
using vtktest::make_shared_latent;

namespace {

std::string pct4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

TEST_CASE("rank_of_target: unique max ranks first, ties rank behind") {
    Matrix gallery(3, 2);
    gallery.set_row(0, l2_normalize({1.0, 0.0}));
    gallery.set_row(1, l2_normalize({0.0, 1.0}));
    gallery.set_row(2, l2_normalize({1.0, 1.0}));
    Vec q = l2_normalize({1.0, 0.05});
    CHECK(rank_of_target(q, gallery, 0) == 1);

    // true item tied with one other at the max
    Matrix tied(3, 2);
    tied.set_row(0, {1.0, 0.0});
    tied.set_row(1, {1.0, 0.0});
    tied.set_row(2, {0.0, 1.0});
    CHECK(rank_of_target({1.0, 0.0}, tied, 0) == 2);
    CHECK(rank_of_target({1.0, 0.0}, tied, 1) == 2);

    try {
        rank_of_target(q, gallery, 3);
        FAIL("expected IndexOutOfRange");
    } catch (const Error& e) {
        CHECK(e.kind() == "IndexOutOfRange");
    }
}

TEST_CASE("rank_of_target: agrees with a full-sort oracle") {
    Rng rng(70);
    const int n = 64, d = 8;
    Matrix gallery(n, d);
    for (int r = 0; r < n; ++r) {
        Vec v(d);
        for (double& x : v) x = rng.gaussian();
        gallery.set_row(r, l2_normalize(v));
    }
    for (int trial = 0; trial < 25; ++trial) {
        Vec q(d);
        for (double& x : q) x = rng.gaussian();
        q = l2_normalize(q);
        int true_index = static_cast<int>(rng.below(n));
        // oracle: argsort similarities descending, pessimistic tie handling
        Vec sims(n);
        for (int r = 0; r < n; ++r) {
            sims[static_cast<size_t>(r)] = dot(q, gallery.row_vec(r));
        }
        int oracle = 1;
        for (int r = 0; r < n; ++r) {
            if (r != true_index && sims[static_cast<size_t>(r)] >= sims[static_cast<size_t>(true_index)]) ++oracle;
        }
        CHECK(rank_of_target(q, gallery, true_index) == oracle);
    }
}

TEST_CASE("recall_at_k and mean_ap: worked examples") {
    std::vector<int> ranks{1, 2, 5};
    CHECK(recall_at_k(ranks, 1) == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
    CHECK(recall_at_k(ranks, 5) == 100.0);
    CHECK(recall_at_k({7, 9, 30}, 5) == 0.0);
    CHECK(mean_ap(ranks) == doctest::Approx(100.0 * (1.0 + 0.5 + 0.2) / 3.0).epsilon(1e-12));
    CHECK(mean_ap({1, 1, 1}) == 100.0);
    CHECK(mean_ap({25}) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK_THROWS_AS(recall_at_k({}, 1), Error);
    CHECK_THROWS_AS(mean_ap({}), Error);
}

TEST_CASE("chance_baseline: table row at N=15534 to four decimals") {
    RetrievalReport rep = chance_baseline(15534);
    CHECK(pct4(rep.r1) == "0.0064");
    CHECK(pct4(rep.r5) == "0.0322");
    CHECK(pct4(rep.r10) == "0.0644");
    CHECK(pct4(rep.map) == "0.0658");
}

TEST_CASE("chance_baseline: N=1 is all 100, small N caps R@k") {
    RetrievalReport rep = chance_baseline(1);
    CHECK(rep.r1 == 100.0);
    CHECK(rep.r5 == 100.0);
    CHECK(rep.map == 100.0);
    RetrievalReport three = chance_baseline(3);
    CHECK(three.r5 == 100.0);
    CHECK(three.map == doctest::Approx(100.0 * (1.0 + 0.5 + 1.0 / 3.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("chance_baseline: permutation Monte-Carlo agrees within 3 sigma") {
    Rng rng(71);
    for (long long n : {10LL, 100LL}) {
        const int trials = 100000;
        std::vector<int> ranks;
        ranks.reserve(trials);
        for (int t = 0; t < trials; ++t) {
            ranks.push_back(1 + static_cast<int>(rng.below(static_cast<uint64_t>(n))));
        }
        RetrievalReport expect = chance_baseline(n);
        double r1 = recall_at_k(ranks, 1);
        double map = mean_ap(ranks);
        double p = 1.0 / static_cast<double>(n);
        double sigma_r1 = 100.0 * std::sqrt(p * (1 - p) / trials);
        CHECK(std::abs(r1 - expect.r1) <= 3.0 * sigma_r1);
        // empirical sigma for the reciprocal-rank mean
        double mean_rr = 0.0, sq_rr = 0.0;
        for (int r : ranks) {
            double v = 1.0 / r;
            mean_rr += v;
            sq_rr += v * v;
        }
        mean_rr /= trials;
        double var_rr = sq_rr / trials - mean_rr * mean_rr;
        double sigma_map = 100.0 * std::sqrt(var_rr / trials);
        CHECK(std::abs(map - expect.map) <= 3.0 * sigma_map);
    }
}

TEST_CASE("eval_task: identical embedding sets on both sides retrieve at rank 1") {
    // same projection weights + identical inputs => query and gallery coincide
    PairedDataset ds = make_shared_latent(72, 40, {.latent_dim = 4,
                                                   .visual_dim = 6,
                                                   .tactile_dim = 6,
                                                   .frames_per_stack = 1,
                                                   .noise = 0.05});
    for (int i = 0; i < ds.size(); ++i) ds.tactile[static_cast<size_t>(i)] = ds.visual[static_cast<size_t>(i)];
    AlignmentModel m = init_model(8, 16, 6, 6, 73);
    m.tactile_proj = m.visual_proj;
    RetrievalReport rep = eval_task(m, ds, parse_task("V->T"));
    CHECK(rep.r1 == 100.0);
    CHECK(rep.map == 100.0);
    CHECK(rep.gallery_size == 40);
}

TEST_CASE("eval_task: untrained random model sits at chance level") {
    const int n = 1000;
    PairedDataset ds = make_shared_latent(74, n, {.latent_dim = 4,
                                                  .visual_dim = 8,
                                                  .tactile_dim = 8,
                                                  .frames_per_stack = 1,
                                                  .noise = 0.05});
    // random projections know nothing about the pairing; embeddings of the
    // two modalities are effectively independent
    AlignmentModel m = init_model(8, 16, 8, 8, 75);
    RetrievalReport rep = eval_task(m, ds, parse_task("V->T"));
    RetrievalReport expect = chance_baseline(n);
    double p = 1.0 / n;
    double sigma_r1 = 100.0 * std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(rep.r1 - expect.r1) <= 3.0 * sigma_r1 + 1e-9);
    // mAP: generous envelope via the empirical spread of 1/rank at chance
    CHECK(rep.map <= 5.0 * expect.map + 1.0);
}

TEST_CASE("eval_task: report invariants hold") {
    PairedDataset ds = make_shared_latent(76, 64, {.latent_dim = 4,
                                                   .visual_dim = 6,
                                                   .tactile_dim = 5,
                                                   .frames_per_stack = 2,
                                                   .noise = 0.05});
    AlignmentModel m = init_model(8, 16, 6, 5, 77);
    for (const auto& task : all_tasks()) {
        RetrievalReport rep = eval_task(m, ds, task);
        CHECK(rep.r1 <= rep.r5);
        CHECK(rep.r5 <= rep.r10);
        CHECK(rep.map >= rep.r1);
        CHECK(rep.map <= 100.0);
        CHECK(rep.r1 >= 0.0);
    }
}

TEST_CASE("eval_task: missing fusion parameters are reported") {
    PairedDataset ds = make_shared_latent(78, 8, {.latent_dim = 4,
                                                  .visual_dim = 6,
                                                  .tactile_dim = 5,
                                                  .frames_per_stack = 1,
                                                  .noise = 0.05});
    AlignmentModel m = init_model(8, 16, 6, 5, 79);
    m.fuse_vp = LinearLayer{};
    try {
        eval_task(m, ds, parse_task("VP->T"));
        FAIL("expected MissingFusionParameters");
    } catch (const Error& e) {
        CHECK(e.kind() == "MissingFusionParameters");
    }
}

TEST_CASE("rank value never decreases when the gallery grows") {
    Rng rng(80);
    const int d = 6;
    Matrix gallery(30, d);
    for (int r = 0; r < 30; ++r) {
        Vec v(d);
        for (double& x : v) x = rng.gaussian();
        gallery.set_row(r, l2_normalize(v));
    }
    Vec q(d);
    for (double& x : q) x = rng.gaussian();
    q = l2_normalize(q);
    int base = rank_of_target(q, gallery, 4);
    Matrix bigger(31, d);
    std::copy(gallery.data.begin(), gallery.data.end(), bigger.data.begin());
    Vec extra(d);
    for (double& x : extra) x = rng.gaussian();
    bigger.set_row(30, l2_normalize(extra));
    CHECK(rank_of_target(q, bigger, 4) >= base);
}

TEST_CASE("task parsing: all twelve configurations, arrows, rejects") {
    CHECK(all_tasks().size() == 12);
    CHECK(parse_task("V->T").name() == "V->T");
    CHECK(parse_task("vp->t").name() == "VP->T");
    CHECK(parse_task("T→VP").name() == "T->VP");
    for (const char* bad : {"QX->T", "V->V", "VT->V", "VTP->V", "V-T", ""}) {
        try {
            parse_task(bad);
            FAIL("expected UnknownTask for ", bad);
        } catch (const Error& e) {
            CHECK(e.kind() == "UnknownTask");
        }
    }
}
