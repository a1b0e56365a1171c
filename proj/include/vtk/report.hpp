#pragma once

#include <string>

#include "json.hpp"
#include "vtk/anomaly.hpp"
#include "vtk/retrieval.hpp"
#include "vtk/validate.hpp"

namespace vtk {

// Result-document builders; every CLI run emits one of these with a "kind"
// discriminator so render_report can pick a layout.
nlohmann::json retrieval_to_json(const RetrievalReport& rep);
nlohmann::json retrieval_set_to_json(const std::vector<RetrievalReport>& reps);
nlohmann::json validation_to_json(const ValidationReport& rep);
nlohmann::json event_to_json(const AnomalyEvent& ev);
nlohmann::json label_to_json(const WeakLabel& label);

// markdown: tables in the papers' layout (R@1/R@5/R@10/mAP columns; metric
// rows for validation). csv: plot-ready series (layer-3 error curve,
// per-dim MAE, one row per task).
std::string render_report(const nlohmann::json& doc, const std::string& format);

}  // namespace vtk
