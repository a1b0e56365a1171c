#pragma once

#include <array>
#include <string>
#include <vector>

#include "vtk/common.hpp"

namespace vtk {

enum class Modality { visual = 0, tactile = 1, pose = 2 };

inline char modality_letter(Modality m) {
    switch (m) {
        case Modality::visual: return 'V';
        case Modality::tactile: return 'T';
        case Modality::pose: return 'P';
    }
    return '?';
}

// One side of a retrieval task: one modality, or two fused in canonical
// (enum) order.
struct ModalitySide {
    int count = 0;
    std::array<Modality, 2> mods{};

    static ModalitySide single(Modality m) { return {1, {m, m}}; }
    static ModalitySide pair(Modality a, Modality b) {
        if (a == b) throw Error("UnknownTask", "fused side needs two distinct modalities");
        if (static_cast<int>(a) > static_cast<int>(b)) std::swap(a, b);
        return {2, {a, b}};
    }

    bool contains(Modality m) const {
        for (int i = 0; i < count; ++i) {
            if (mods[static_cast<size_t>(i)] == m) return true;
        }
        return false;
    }

    std::string name() const {
        std::string s;
        for (int i = 0; i < count; ++i) s += modality_letter(mods[static_cast<size_t>(i)]);
        return s;
    }

    bool operator==(const ModalitySide& o) const {
        if (count != o.count) return false;
        for (int i = 0; i < count; ++i) {
            if (mods[static_cast<size_t>(i)] != o.mods[static_cast<size_t>(i)]) return false;
        }
        return true;
    }
};

struct RetrievalTask {
    ModalitySide query;
    ModalitySide target;

    std::string name() const { return query.name() + "->" + target.name(); }
    bool trimodal() const { return query.count + target.count == 3; }
    bool operator==(const RetrievalTask& o) const {
        return query == o.query && target == o.target;
    }
};

// Accepts "V->T", "VP->T", ... (also the unicode arrow). Exactly the 6
// bimodal and 6 trimodal directions are valid.
RetrievalTask parse_task(const std::string& token);

// All 12 task configurations, bimodal first.
std::vector<RetrievalTask> all_tasks();

// The directions whose losses drive training: the 3 bimodal pairs plus the
// 3 two-to-one fused queries (symmetric InfoNCE covers both directions).
std::vector<RetrievalTask> default_train_tasks();

}  // namespace vtk
