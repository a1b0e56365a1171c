#include "vtk/task.hpp"

#include <algorithm>

namespace vtk {

namespace {

bool side_from_letters(const std::string& letters, ModalitySide& out) {
    if (letters.empty() || letters.size() > 2) return false;
    std::array<Modality, 2> mods{};
    for (size_t i = 0; i < letters.size(); ++i) {
        switch (letters[i]) {
            case 'V': case 'v': mods[i] = Modality::visual; break;
            case 'T': case 't': mods[i] = Modality::tactile; break;
            case 'P': case 'p': mods[i] = Modality::pose; break;
            default: return false;
        }
    }
    if (letters.size() == 1) {
        out = ModalitySide::single(mods[0]);
    } else {
        if (mods[0] == mods[1]) return false;
        out = ModalitySide::pair(mods[0], mods[1]);
    }
    return true;
}

}  // namespace

RetrievalTask parse_task(const std::string& token) {
    std::string norm = token;
    // tolerate the unicode arrow from table headers
    size_t pos;
    while ((pos = norm.find("→")) != std::string::npos) norm.replace(pos, 3, "->");
    pos = norm.find("->");
    if (pos == std::string::npos) {
        throw Error("UnknownTask", "task '" + token + "' is missing '->'");
    }
    ModalitySide q, t;
    if (!side_from_letters(norm.substr(0, pos), q) || !side_from_letters(norm.substr(pos + 2), t)) {
        throw Error("UnknownTask", "cannot parse task '" + token + "'");
    }
    RetrievalTask task{q, t};
    auto valid = all_tasks();
    if (std::find(valid.begin(), valid.end(), task) == valid.end()) {
        throw Error("UnknownTask", "'" + token + "' is not one of the 12 task configurations");
    }
    return task;
}

std::vector<RetrievalTask> all_tasks() {
    using M = Modality;
    auto s = [](M m) { return ModalitySide::single(m); };
    auto p = [](M a, M b) { return ModalitySide::pair(a, b); };
    return {
        {s(M::visual), s(M::tactile)},  {s(M::tactile), s(M::visual)},
        {s(M::tactile), s(M::pose)},    {s(M::pose), s(M::tactile)},
        {s(M::visual), s(M::pose)},     {s(M::pose), s(M::visual)},
        {p(M::visual, M::pose), s(M::tactile)},  {s(M::tactile), p(M::visual, M::pose)},
        {p(M::tactile, M::pose), s(M::visual)},  {s(M::visual), p(M::tactile, M::pose)},
        {p(M::visual, M::tactile), s(M::pose)},  {s(M::pose), p(M::visual, M::tactile)},
    };
}

std::vector<RetrievalTask> default_train_tasks() {
    using M = Modality;
    auto s = [](M m) { return ModalitySide::single(m); };
    auto p = [](M a, M b) { return ModalitySide::pair(a, b); };
    return {
        {s(M::visual), s(M::tactile)},
        {s(M::visual), s(M::pose)},
        {s(M::tactile), s(M::pose)},
        {p(M::visual, M::pose), s(M::tactile)},
        {p(M::tactile, M::pose), s(M::visual)},
        {p(M::visual, M::tactile), s(M::pose)},
    };
}

}  // namespace vtk
