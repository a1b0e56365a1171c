#include "vtk/report.hpp"

#include <cstdio>
#include <sstream>

namespace vtk {

using nlohmann::json;

namespace {

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

json retrieval_entry(const RetrievalReport& rep) {
    return {{"task", rep.task}, {"n", rep.gallery_size}, {"r1", rep.r1},
            {"r5", rep.r5},     {"r10", rep.r10},        {"map", rep.map}};
}

}  // namespace

json retrieval_to_json(const RetrievalReport& rep) {
    json doc = retrieval_entry(rep);
    doc["kind"] = "retrieval_report";
    return doc;
}

json retrieval_set_to_json(const std::vector<RetrievalReport>& reps) {
    json doc;
    doc["kind"] = "retrieval_report";
    json list = json::array();
    for (const auto& r : reps) list.push_back(retrieval_entry(r));
    doc["reports"] = list;
    return doc;
}

json validation_to_json(const ValidationReport& rep) {
    json doc;
    doc["kind"] = "validation_report";
    doc["policy"] = rep.policy;
    doc["n_obs_steps"] = rep.n_obs_steps;
    if (rep.l1) {
        doc["layer1"] = {{"mae", rep.l1->mae},
                         {"mse", rep.l1->mse},
                         {"expert_similarity", rep.l1->expert_similarity},
                         {"per_dim_mae", rep.l1->per_dim_mae},
                         {"n_frames", rep.l1->n_frames},
                         {"pass", rep.l1->pass}};
    }
    if (rep.l2) {
        doc["layer2"] = {{"mean", rep.l2->mean},
                         {"std", rep.l2->stddev},
                         {"range", rep.l2->range},
                         {"action_diff_mean", rep.l2->action_diff_mean},
                         {"jerk_mean", rep.l2->jerk_mean},
                         {"smoothness_score", rep.l2->smoothness_score},
                         {"energy_mean", rep.l2->energy_mean},
                         {"violations",
                          {{"position", rep.l2->position_violations},
                           {"velocity", rep.l2->velocity_violations},
                           {"acceleration", rep.l2->acceleration_violations}}},
                         {"n_frames", rep.l2->n_frames}};
    }
    if (rep.l3) {
        doc["layer3"] = {{"error_curve", rep.l3->error_curve},
                         {"final_error", rep.l3->final_error},
                         {"error_growth", rep.l3->error_growth},
                         {"pass", rep.l3->pass}};
    }
    if (rep.l4) {
        doc["layer4"] = {{"per_dim_variance", rep.l4->per_dim_variance},
                         {"mean_variance", rep.l4->mean_variance},
                         {"consistency_score", rep.l4->consistency_score},
                         {"classification", rep.l4->classification},
                         {"repeats", rep.l4->repeats}};
    }
    if (rep.score) {
        doc["score"] = {{"reconstruction", rep.score->reconstruction},
                        {"smoothness", rep.score->smoothness},
                        {"stability", rep.score->stability},
                        {"consistency", rep.score->consistency},
                        {"overall", rep.score->overall},
                        {"grade", rep.score->grade}};
    }
    return doc;
}

json event_to_json(const AnomalyEvent& ev) {
    return {{"stream", ev.stream},
            {"channel", ev.channel},
            {"span", {ev.t_start, ev.t_end}},
            {"kind", anomaly_kind_tag(ev.kind)},
            {"score", ev.score}};
}

json label_to_json(const WeakLabel& label) {
    return {{"kind", weak_label_tag(label.kind)}, {"t", label.t}, {"rule", label.rule}};
}

namespace {

void render_retrieval_md(const json& doc, std::ostringstream& out) {
    out << "| Task | R@1 | R@5 | R@10 | mAP |\n";
    out << "|------|-----|-----|------|-----|\n";
    auto row = [&](const json& e) {
        out << "| " << e.at("task").get<std::string>() << " | " << pct(e.at("r1").get<double>())
            << " | " << pct(e.at("r5").get<double>()) << " | " << pct(e.at("r10").get<double>())
            << " | " << pct(e.at("map").get<double>()) << " |\n";
    };
    if (doc.contains("reports")) {
        for (const auto& e : doc.at("reports")) row(e);
    } else {
        row(doc);
    }
}

void render_retrieval_csv(const json& doc, std::ostringstream& out) {
    out << "task,n,r1,r5,r10,map\n";
    auto row = [&](const json& e) {
        out << e.at("task").get<std::string>() << ',' << e.at("n").get<long long>() << ','
            << pct(e.at("r1").get<double>()) << ',' << pct(e.at("r5").get<double>()) << ','
            << pct(e.at("r10").get<double>()) << ',' << pct(e.at("map").get<double>()) << '\n';
    };
    if (doc.contains("reports")) {
        for (const auto& e : doc.at("reports")) row(e);
    } else {
        row(doc);
    }
}

void render_validation_md(const json& doc, std::ostringstream& out) {
    out << "| Metric | Value |\n|--------|-------|\n";
    out << "| n_obs_steps | " << doc.at("n_obs_steps").get<int>() << " |\n";
    auto emit = [&](const char* label, const json& v) {
        out << "| " << label << " | " << format_double(v.get<double>()) << " |\n";
    };
    if (doc.contains("layer1")) {
        emit("MAE", doc["layer1"]["mae"]);
        emit("MSE", doc["layer1"]["mse"]);
        emit("Expert Similarity", doc["layer1"]["expert_similarity"]);
    }
    if (doc.contains("layer2")) {
        emit("Action Diff Mean", doc["layer2"]["action_diff_mean"]);
        emit("Jerk Mean", doc["layer2"]["jerk_mean"]);
        emit("Smoothness Score", doc["layer2"]["smoothness_score"]);
    }
    if (doc.contains("layer3")) {
        emit("Final Error (Layer 3)", doc["layer3"]["final_error"]);
        emit("Error Growth (Layer 3)", doc["layer3"]["error_growth"]);
    }
    if (doc.contains("layer4")) {
        emit("Mean Variance (Layer 4)", doc["layer4"]["mean_variance"]);
        out << "| Consistency Class | " << doc["layer4"]["classification"].get<std::string>()
            << " |\n";
    }
    if (doc.contains("score")) {
        emit("Overall Score", doc["score"]["overall"]);
        out << "| Grade | " << doc["score"]["grade"].get<std::string>() << " |\n";
    }
}

void render_validation_csv(const json& doc, std::ostringstream& out) {
    if (doc.contains("layer3")) {
        out << "t,E_t\n";
        const auto& curve = doc["layer3"]["error_curve"];
        for (size_t t = 0; t < curve.size(); ++t) {
            out << t << ',' << format_double(curve.at(t).get<double>()) << '\n';
        }
        return;
    }
    if (doc.contains("layer1")) {
        out << "dim,mae\n";
        const auto& mae = doc["layer1"]["per_dim_mae"];
        for (size_t d = 0; d < mae.size(); ++d) {
            out << d << ',' << format_double(mae.at(d).get<double>()) << '\n';
        }
        return;
    }
    throw Error("MalformedDocument", "validation document has no plottable series");
}

void render_scan_md(const json& doc, std::ostringstream& out) {
    out << "| Stream | Channel | Kind | Span | Score |\n";
    out << "|--------|---------|------|------|-------|\n";
    for (const auto& e : doc.at("events")) {
        out << "| " << e.at("stream").get<std::string>() << " | " << e.at("channel").get<int>()
            << " | " << e.at("kind").get<std::string>() << " | ["
            << format_double(e.at("span").at(0).get<double>()) << ", "
            << format_double(e.at("span").at(1).get<double>()) << "] | "
            << format_double(e.at("score").get<double>()) << " |\n";
    }
}

void render_scan_csv(const json& doc, std::ostringstream& out) {
    out << "stream,channel,kind,t_start,t_end,score\n";
    for (const auto& e : doc.at("events")) {
        out << e.at("stream").get<std::string>() << ',' << e.at("channel").get<int>() << ','
            << e.at("kind").get<std::string>() << ','
            << format_double(e.at("span").at(0).get<double>()) << ','
            << format_double(e.at("span").at(1).get<double>()) << ','
            << format_double(e.at("score").get<double>()) << '\n';
    }
}

}  // namespace

std::string render_report(const json& doc, const std::string& format) {
    if (format != "markdown" && format != "csv") {
        throw Error("UnknownFormat", "format must be markdown or csv, got '" + format + "'");
    }
    if (!doc.is_object() || !doc.contains("kind") || !doc.at("kind").is_string()) {
        throw Error("MalformedDocument", "result document lacks a 'kind' field");
    }
    std::string kind = doc.at("kind").get<std::string>();
    std::ostringstream out;
    try {
        if (kind == "retrieval_report") {
            format == "markdown" ? render_retrieval_md(doc, out) : render_retrieval_csv(doc, out);
        } else if (kind == "validation_report") {
            format == "markdown" ? render_validation_md(doc, out)
                                 : render_validation_csv(doc, out);
        } else if (kind == "scan_report") {
            format == "markdown" ? render_scan_md(doc, out) : render_scan_csv(doc, out);
        } else {
            // generic fallback: key/value table of scalar fields
            if (format == "markdown") {
                out << "| Field | Value |\n|-------|-------|\n";
                for (const auto& [key, value] : doc.items()) {
                    if (value.is_primitive()) out << "| " << key << " | " << value.dump() << " |\n";
                }
            } else {
                out << "field,value\n";
                for (const auto& [key, value] : doc.items()) {
                    if (value.is_primitive()) out << key << ',' << value.dump() << '\n';
                }
            }
        }
    } catch (const json::exception& e) {
        throw Error("MalformedDocument", std::string("result document: ") + e.what());
    }
    return out.str();
}

}  // namespace vtk
