// vtkit — episode ingestion, alignment, anomaly scanning, contrastive
// alignment training, retrieval evaluation, policy validation and action
// safety simulation over one on-disk episode format.
//
// Every verb prints a single JSON result document to stdout and a short
// human summary to stderr. Exit codes: 0 success, 1 data/validation
// failure, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vtk/anomaly.hpp"
#include "vtk/episode.hpp"
#include "vtk/report.hpp"
#include "vtk/retrieval.hpp"
#include "vtk/safety.hpp"
#include "vtk/sync.hpp"
#include "vtk/train.hpp"
#include "vtk/validate.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

uint64_t default_seed() {
    if (const char* env = std::getenv("VTK_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw vtk::Error("BadFlag", "VTK_SEED is not an unsigned integer");
        }
    }
    return 0;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw vtk::Error("IoFailure", "cannot write " + path.string());
    out << text;
    if (!out) throw vtk::Error("IoFailure", "write failed: " + path.string());
}

json stream_summary(const vtk::Episode& ep) {
    json streams = json::object();
    for (const auto& [name, s] : ep.streams) {
        streams[name] = {{"kind", vtk::stream_kind_tag(s.kind)},
                         {"dim", s.dim()},
                         {"samples", s.samples()},
                         {"nominal_rate_hz", s.nominal_rate}};
    }
    return streams;
}

struct IngestArgs {
    std::string dir;
    double gap_factor = 10.0;
};

json run_ingest(const IngestArgs& args) {
    vtk::Episode ep = vtk::load_episode(args.dir);
    vtk::ValidateConfig cfg;
    cfg.gap_factor = args.gap_factor;
    auto issues = vtk::validate_episode(ep, cfg);
    json doc;
    doc["kind"] = "ingest_report";
    doc["id"] = ep.id;
    doc["duration_s"] = ep.duration();
    doc["streams"] = stream_summary(ep);
    if (!ep.skill_axes.empty()) {
        json axes = json::object();
        for (const auto& [axis, value] : ep.skill_axes) axes[axis] = value;
        doc["skill_axes"] = axes;
    }
    json issue_list = json::array();
    for (const auto& issue : issues) {
        issue_list.push_back({{"kind", issue.kind},
                              {"stream", issue.stream},
                              {"rows", {issue.row_begin, issue.row_end}},
                              {"message", issue.message}});
    }
    doc["issues"] = issue_list;
    doc["issue_count"] = issues.size();
    std::cerr << "episode '" << ep.id << "': " << ep.streams.size() << " streams, "
              << issues.size() << " issues\n";
    return doc;
}

struct SyncArgs {
    std::string episode;
    double rate = 30.0;
    std::string out;
};

json run_sync(const SyncArgs& args) {
    vtk::Episode ep = vtk::load_episode(args.episode);
    vtk::AlignedEpisode ae = vtk::align_episode(ep, args.rate);
    fs::path out = args.out.empty() ? fs::path(args.episode) / "aligned" : fs::path(args.out);
    vtk::write_aligned(ae, out);
    vtk::JitterReport jitter = vtk::jitter_stats(ep);

    json doc;
    doc["kind"] = "sync_summary";
    doc["id"] = ae.id;
    doc["rate_hz"] = ae.rate;
    doc["frames"] = ae.frames();
    doc["window"] = {ae.timeline.front(), ae.timeline.back()};
    doc["out"] = out.string();
    json jmap = json::object();
    for (const auto& [name, j] : jitter.per_stream) {
        jmap[name] = {{"missing_fraction", j.missing_fraction},
                      {"max_gap_s", j.max_gap},
                      {"jitter_std_s", j.jitter_std},
                      {"pass", j.pass}};
    }
    doc["jitter"] = jmap;
    doc["jitter_pass"] = jitter.pass;
    std::cerr << "aligned '" << ae.id << "' to " << args.rate << " Hz: " << ae.frames()
              << " frames -> " << out.string() << "\n";
    return doc;
}

struct ScanArgs {
    std::string episode;
    int window = 100;
    double sigma = 3.0;
    bool labels = false;
    double rate = 30.0;
    std::string out;
};

json run_scan(const ScanArgs& args) {
    vtk::Episode ep = vtk::load_episode(args.episode);
    vtk::SigmaConfig cfg;
    cfg.window = args.window;
    cfg.n_sigma = args.sigma;
    auto events = vtk::scan_episode(ep, cfg);

    json doc;
    doc["kind"] = "scan_report";
    doc["episode"] = ep.id;
    doc["window"] = cfg.window;
    doc["n_sigma"] = cfg.n_sigma;
    json ev_list = json::array();
    for (const auto& ev : events) ev_list.push_back(vtk::event_to_json(ev));

    if (args.labels) {
        vtk::AlignedEpisode ae = vtk::align_episode(ep, args.rate);
        vtk::LabelRules rules;
        rules.sigma = cfg;
        auto labels = vtk::label_events(ae, rules);
        json label_list = json::array();
        for (const auto& label : labels) label_list.push_back(vtk::label_to_json(label));
        doc["labels"] = label_list;
        auto conflicts = vtk::cross_modal_check(ae);
        for (const auto& ev : conflicts) ev_list.push_back(vtk::event_to_json(ev));
    }
    doc["events"] = ev_list;
    doc["event_count"] = ev_list.size();

    if (!args.out.empty()) {
        std::string lines;
        for (const auto& ev : doc["events"]) lines += ev.dump() + "\n";
        if (doc.contains("labels")) {
            for (const auto& label : doc["labels"]) lines += label.dump() + "\n";
        }
        write_text(args.out, lines);
    }
    std::cerr << "scan '" << ep.id << "': " << ev_list.size() << " events\n";
    return doc;
}

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    uint64_t seed = 0;
    bool seed_set = false;
    long long steps = 0;
    long long epochs = 0;
    int batch_size = 0;
    int dim = 0;
    double lr = 0.0;
};

vtk::TrainConfig train_config_from(const TrainArgs& args, int dataset_size) {
    vtk::TrainConfig cfg;
    cfg.seed = default_seed();
    long long epochs = 0;
    if (!args.config.empty()) {
        std::ifstream in(args.config);
        if (!in) throw vtk::Error("IoFailure", "cannot open " + args.config);
        json doc;
        try {
            doc = json::parse(in);
            cfg.lr = doc.value("lr", cfg.lr);
            cfg.weight_decay = doc.value("weight_decay", cfg.weight_decay);
            cfg.beta1 = doc.value("beta1", cfg.beta1);
            cfg.beta2 = doc.value("beta2", cfg.beta2);
            cfg.adam_eps = doc.value("adam_eps", cfg.adam_eps);
            cfg.warmup_fraction = doc.value("warmup_fraction", cfg.warmup_fraction);
            cfg.total_steps = doc.value("total_steps", cfg.total_steps);
            epochs = doc.value("epochs", 0LL);
            cfg.batch_size = doc.value("batch_size", cfg.batch_size);
            cfg.seed = doc.value("seed", cfg.seed);
            cfg.dim = doc.value("dim", cfg.dim);
            cfg.hidden = doc.value("hidden", cfg.hidden);
            cfg.dropout = doc.value("dropout", cfg.dropout);
            cfg.dropout_p = doc.value("dropout_p", cfg.dropout_p);
            if (doc.contains("tasks")) {
                for (const auto& token : doc.at("tasks")) {
                    cfg.tasks.push_back(vtk::parse_task(token.get<std::string>()));
                }
            }
        } catch (const json::exception& e) {
            throw vtk::Error("BadConfig", std::string("train config: ") + e.what());
        }
    }
    // flags win over the config file
    if (args.seed_set) cfg.seed = args.seed;
    if (args.steps > 0) cfg.total_steps = args.steps;
    if (args.epochs > 0) epochs = args.epochs;
    if (args.batch_size > 0) cfg.batch_size = args.batch_size;
    if (args.dim > 0) cfg.dim = args.dim;
    if (args.lr > 0.0) cfg.lr = args.lr;
    if (epochs > 0) {
        long long steps_per_epoch =
            (dataset_size + cfg.batch_size - 1) / std::max(1, cfg.batch_size);
        cfg.total_steps = epochs * std::max<long long>(1, steps_per_epoch);
    }
    return cfg;
}

json run_train(const TrainArgs& args) {
    vtk::PairedDataset data = vtk::load_paired(args.data);
    vtk::TrainConfig cfg = train_config_from(args, data.size());
    vtk::TrainOutcome outcome = vtk::train(data, cfg);
    vtk::save_model(outcome.model, args.out);

    json doc;
    doc["kind"] = "train_summary";
    doc["steps"] = outcome.steps;
    doc["initial_loss"] = outcome.initial_loss;
    doc["final_loss"] = outcome.final_loss;
    doc["out"] = args.out;
    json tasks = json::array();
    for (const auto& task : cfg.tasks.empty() ? vtk::default_train_tasks() : cfg.tasks) {
        tasks.push_back(task.name());
    }
    doc["config"] = {{"lr", cfg.lr},
                     {"weight_decay", cfg.weight_decay},
                     {"beta1", cfg.beta1},
                     {"beta2", cfg.beta2},
                     {"warmup_fraction", cfg.warmup_fraction},
                     {"total_steps", cfg.total_steps},
                     {"batch_size", cfg.batch_size},
                     {"dim", cfg.dim},
                     {"hidden", cfg.hidden},
                     {"dropout", cfg.dropout},
                     {"seed", cfg.seed},
                     {"tasks", tasks}};
    std::cerr << "trained " << outcome.steps << " steps: loss " << outcome.initial_loss
              << " -> " << outcome.final_loss << ", model -> " << args.out << "\n";
    return doc;
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string task;
    bool all = false;
    long long chance = 0;
};

json run_eval(const EvalArgs& args) {
    if (args.chance > 0) {
        json doc = vtk::retrieval_to_json(vtk::chance_baseline(args.chance));
        std::cerr << "chance baseline at N=" << args.chance << "\n";
        return doc;
    }
    if (args.model.empty() || args.data.empty()) {
        throw vtk::Error("BadFlag", "--model and --data are required unless --chance is given");
    }
    vtk::AlignmentModel model = vtk::load_model(args.model);
    vtk::PairedDataset data = vtk::load_paired(args.data);
    if (args.all) {
        std::vector<vtk::RetrievalReport> reports;
        for (const auto& task : vtk::all_tasks()) {
            reports.push_back(vtk::eval_task(model, data, task));
        }
        std::cerr << "evaluated 12 task configurations on N=" << data.size() << "\n";
        return vtk::retrieval_set_to_json(reports);
    }
    if (args.task.empty()) {
        throw vtk::Error("BadFlag", "--task or --all is required");
    }
    vtk::RetrievalTask task = vtk::parse_task(args.task);
    vtk::RetrievalReport rep = vtk::eval_task(model, data, task);
    std::cerr << task.name() << ": R@1 " << rep.r1 << "%, mAP " << rep.map << "% on N="
              << data.size() << "\n";
    return vtk::retrieval_to_json(rep);
}

struct ValidateArgs {
    std::string policy;
    std::string dataset;
    std::string layers = "1,2,3,4";
    std::string out;
    uint64_t seed = 0;
    bool seed_set = false;
    int n_obs = 1;
    long long n_samples = 1000;
    int k_rollout = 100;
    long long k_repeats = 100;
};

std::vector<vtk::AlignedEpisode> load_validation_episodes(const std::string& dir) {
    std::vector<vtk::AlignedEpisode> episodes;
    if (fs::exists(fs::path(dir) / "aligned_manifest.json")) {
        episodes.push_back(vtk::load_aligned(dir));
        return episodes;
    }
    std::vector<fs::path> subdirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "aligned_manifest.json")) {
            subdirs.push_back(entry.path());
        }
    }
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& sub : subdirs) episodes.push_back(vtk::load_aligned(sub));
    if (episodes.empty()) {
        throw vtk::Error("MissingManifest", "no aligned episodes under " + dir);
    }
    return episodes;
}

json run_validate(const ValidateArgs& args) {
    vtk::ValidationDataset ds(load_validation_episodes(args.dataset));
    vtk::ValidationConfig cfg;
    cfg.seed = args.seed_set ? args.seed : default_seed();
    cfg.n_samples = args.n_samples;
    cfg.k_rollout = args.k_rollout;
    cfg.k_repeats = args.k_repeats;
    cfg.run_layer1 = args.layers.find('1') != std::string::npos;
    cfg.run_layer2 = args.layers.find('2') != std::string::npos;
    cfg.run_layer3 = args.layers.find('3') != std::string::npos;
    cfg.run_layer4 = args.layers.find('4') != std::string::npos;

    auto policy = vtk::make_policy(args.policy, &ds, cfg.seed, args.n_obs);
    vtk::ValidationReport rep = vtk::run_validation(*policy, ds, cfg);
    json doc = vtk::validation_to_json(rep);
    doc["config"] = {{"layers", args.layers},
                     {"n_samples", cfg.n_samples},
                     {"k_rollout", cfg.k_rollout},
                     {"k_repeats", cfg.k_repeats},
                     {"seed", cfg.seed},
                     {"mae_threshold", cfg.mae_threshold},
                     {"growth_threshold", cfg.growth_threshold}};
    if (!args.out.empty()) write_text(args.out, doc.dump(2) + "\n");
    if (rep.score) {
        std::cerr << "policy '" << rep.policy << "': overall " << rep.score->overall << " ("
                  << rep.score->grade << ")\n";
    } else {
        std::cerr << "policy '" << rep.policy << "': layers " << args.layers << " done\n";
    }
    return doc;
}

struct SafetyArgs {
    std::string trace;
    std::string config;
    std::string q0;
    std::string out;
};

json run_safety(const SafetyArgs& args) {
    vtk::SafetyTrace trace = vtk::load_trace(args.trace);
    vtk::SafetyConfig cfg =
        args.config.empty() ? vtk::SafetyConfig{} : vtk::load_safety_config(args.config);
    vtk::Vec q0(cfg.q_min.size(), 0.0);
    if (!args.q0.empty()) {
        q0.clear();
        size_t start = 0;
        const std::string& spec = args.q0;
        while (start <= spec.size()) {
            size_t comma = spec.find(',', start);
            std::string field =
                comma == std::string::npos ? spec.substr(start) : spec.substr(start, comma - start);
            q0.push_back(vtk::parse_double(field));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    vtk::Matrix commands = vtk::pipeline(trace, q0, cfg);
    if (!args.out.empty()) vtk::write_commands(args.out, trace.t, commands);

    double max_step = 0.0;
    vtk::Vec prev = q0;
    for (int r = 0; r < commands.rows; ++r) {
        double n = 0.0;
        for (int c = 0; c < commands.cols; ++c) {
            double d = commands.at(r, c) - prev[static_cast<size_t>(c)];
            n += d * d;
        }
        max_step = std::max(max_step, std::sqrt(n));
        prev = commands.row_vec(r);
    }
    json doc;
    doc["kind"] = "safety_summary";
    doc["steps"] = commands.rows;
    doc["mode"] = trace.mode == vtk::ActionMode::delta ? "delta" : "absolute";
    doc["max_step_norm"] = max_step;
    doc["step_bound"] = cfg.v_max * cfg.dt;
    if (!args.out.empty()) doc["out"] = args.out;
    std::cerr << "safety-sim: " << commands.rows << " steps, max step norm " << max_step
              << " (bound " << cfg.v_max * cfg.dt << ")\n";
    return doc;
}

struct ReportArgs {
    std::string in;
    std::string format = "markdown";
};

std::string run_report(const ReportArgs& args) {
    std::ifstream in(args.in);
    if (!in) throw vtk::Error("IoFailure", "cannot open " + args.in);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw vtk::Error("MalformedDocument", std::string("result document: ") + e.what());
    }
    return vtk::render_report(doc, args.format);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visuotactile dataset toolkit"};
    app.require_subcommand(1);

    std::function<json()> action;
    bool text_output = false;
    std::string text;

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "load and validate an episode directory");
    ingest->add_option("dir", ingest_args.dir, "episode directory")->required();
    ingest->add_option("--gap-factor", ingest_args.gap_factor,
                       "gap threshold in nominal periods");
    ingest->callback([&] { action = [&] { return run_ingest(ingest_args); }; });

    SyncArgs sync_args;
    auto* sync = app.add_subcommand("sync", "resample an episode onto a uniform timeline");
    sync->add_option("--episode", sync_args.episode, "episode directory")->required();
    sync->add_option("--rate", sync_args.rate, "target rate in Hz");
    sync->add_option("--out", sync_args.out, "output directory (default <episode>/aligned)");
    sync->callback([&] { action = [&] { return run_sync(sync_args); }; });

    ScanArgs scan_args;
    auto* scan = app.add_subcommand("scan", "n-sigma anomaly scan over every stream channel");
    scan->add_option("--episode", scan_args.episode, "episode directory")->required();
    scan->add_option("--window", scan_args.window, "sliding window in samples");
    scan->add_option("--sigma", scan_args.sigma, "threshold in window sigmas");
    scan->add_flag("--labels", scan_args.labels, "also emit weak labels and cross-modal checks");
    scan->add_option("--rate", scan_args.rate, "alignment rate for --labels");
    scan->add_option("--out", scan_args.out, "write events as JSON lines");
    scan->callback([&] { action = [&] { return run_scan(scan_args); }; });

    TrainArgs train_args;
    auto* train = app.add_subcommand("train-align", "train the shared embedding space");
    train->add_option("--data", train_args.data, "paired dataset directory")->required();
    train->add_option("--config", train_args.config, "JSON config file");
    train->add_option("--out", train_args.out, "model checkpoint path")->required();
    train->add_option("--seed", train_args.seed, "RNG seed (default env VTK_SEED)")
        ->each([&](const std::string&) { train_args.seed_set = true; });
    train->add_option("--steps", train_args.steps, "total optimizer steps");
    train->add_option("--epochs", train_args.epochs, "epochs (overrides steps)");
    train->add_option("--batch-size", train_args.batch_size, "batch size");
    train->add_option("--dim", train_args.dim, "embedding dimension");
    train->add_option("--lr", train_args.lr, "initial learning rate");
    train->callback([&] { action = [&] { return run_train(train_args); }; });

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval-retrieval", "retrieval metrics for task configurations");
    eval->add_option("--model", eval_args.model, "model checkpoint");
    eval->add_option("--data", eval_args.data, "paired test set directory");
    eval->add_option("--task", eval_args.task, "task token, e.g. V->T or VP->T")
        ->check([](const std::string& token) -> std::string {
            try {
                vtk::parse_task(token);
                return {};
            } catch (const vtk::Error& e) {
                return e.what();
            }
        });
    eval->add_flag("--all", eval_args.all, "evaluate all 12 task configurations");
    eval->add_option("--chance", eval_args.chance, "print the analytic chance baseline for N");
    eval->callback([&] { action = [&] { return run_eval(eval_args); }; });

    ValidateArgs validate_args;
    auto* validate = app.add_subcommand("validate-policy", "four-layer policy validation");
    validate->add_option("--policy", validate_args.policy,
                         "replay | noisy[:sigma] | constant[:v0,..] | linear | checkpoint.json")
        ->required();
    validate->add_option("--dataset", validate_args.dataset, "aligned episode directory")
        ->required();
    validate->add_option("--layers", validate_args.layers, "subset of 1,2,3,4");
    validate->add_option("--out", validate_args.out, "also write the report JSON here");
    validate->add_option("--seed", validate_args.seed, "RNG seed (default env VTK_SEED)")
        ->each([&](const std::string&) { validate_args.seed_set = true; });
    validate->add_option("--n-obs", validate_args.n_obs, "observation window frames");
    validate->add_option("--samples", validate_args.n_samples, "layer-1 sample count");
    validate->add_option("--k-rollout", validate_args.k_rollout, "layer-3 rollout steps");
    validate->add_option("--k-repeats", validate_args.k_repeats, "layer-4 repeats");
    validate->callback([&] { action = [&] { return run_validate(validate_args); }; });

    SafetyArgs safety_args;
    auto* safety = app.add_subcommand("safety-sim", "run a trace through the safety pipeline");
    safety->add_option("--trace", safety_args.trace, "input CSV (t,a0..a13,mode)")->required();
    safety->add_option("--config", safety_args.config, "safety config JSON");
    safety->add_option("--q0", safety_args.q0, "initial configuration, comma-separated");
    safety->add_option("--out", safety_args.out, "output CSV (t,q0..q13)");
    safety->callback([&] { action = [&] { return run_safety(safety_args); }; });

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "render a result document");
    report->add_option("--in", report_args.in, "result JSON path")->required();
    report->add_option("--format", report_args.format, "markdown or csv")
        ->check(CLI::IsMember({"markdown", "csv"}));
    report->callback([&] {
        text_output = true;
        action = [&]() -> json {
            text = run_report(report_args);
            return {};
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        json doc = action();
        if (text_output) {
            std::cout << text;
        } else {
            std::cout << doc.dump(2) << "\n";
        }
        return 0;
    } catch (const vtk::Error& e) {
        json err = {{"error", {{"kind", e.kind()}, {"message", e.what()}}}};
        std::cout << err.dump(2) << "\n";
        std::cerr << e.what() << "\n";
        // misuse of flags or tokens is a usage error even when raised late
        if (e.kind() == "UnknownTask" || e.kind() == "UnknownFormat" ||
            e.kind() == "UnknownPolicy" || e.kind() == "BadFlag") {
            return 2;
        }
        return 1;
    } catch (const std::exception& e) {
        json err = {{"error", {{"kind", "Internal"}, {"message", e.what()}}}};
        std::cout << err.dump(2) << "\n";
        std::cerr << e.what() << "\n";
        return 1;
    }
}
