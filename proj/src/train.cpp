#include "vtk/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "vtk/csv.hpp"

namespace vtk {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> value_header(int n) {
    std::vector<std::string> h;
    h.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) h.push_back("v" + std::to_string(i));
    return h;
}

std::vector<Vec> stacks_to_rows(const std::vector<Matrix>& stacks) {
    std::vector<Vec> rows;
    rows.reserve(stacks.size());
    for (const auto& s : stacks) rows.push_back(s.data);
    return rows;
}

std::vector<Matrix> rows_to_stacks(const std::vector<Vec>& rows, int t, int dim) {
    std::vector<Matrix> stacks;
    stacks.reserve(rows.size());
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != t * dim) {
            throw Error("DimensionMismatch", "feature row width does not match T x dim");
        }
        Matrix m(t, dim);
        m.data = r;
        stacks.push_back(std::move(m));
    }
    return stacks;
}

}  // namespace

void save_paired(const PairedDataset& ds, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("IoFailure", "cannot create " + dir.string());

    json manifest;
    manifest["count"] = ds.size();
    manifest["frames_per_stack"] = ds.frames_per_stack;
    manifest["pose_dim"] = kPoseDim;
    manifest["visual_dim"] = ds.visual_dim;
    manifest["tactile_dim"] = ds.tactile_dim;
    std::ofstream out(dir / "pairs_manifest.json", std::ios::binary);
    if (!out) throw Error("IoFailure", "cannot write pairs_manifest.json");
    out << manifest.dump(2) << '\n';

    std::vector<Vec> pose_rows;
    pose_rows.reserve(static_cast<size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) pose_rows.push_back(ds.pose.row_vec(i));
    write_numeric_csv(dir / "pose.csv", value_header(kPoseDim), pose_rows);
    write_numeric_csv(dir / "visual.csv", value_header(ds.frames_per_stack * ds.visual_dim),
                      stacks_to_rows(ds.visual));
    write_numeric_csv(dir / "tactile.csv", value_header(ds.frames_per_stack * ds.tactile_dim),
                      stacks_to_rows(ds.tactile));
}

PairedDataset load_paired(const fs::path& dir) {
    std::ifstream in(dir / "pairs_manifest.json");
    if (!in) throw Error("MissingManifest", "no pairs_manifest.json in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("BadManifest", std::string("pairs_manifest.json: ") + e.what());
    }

    PairedDataset ds;
    int count = 0;
    try {
        count = manifest.at("count").get<int>();
        ds.frames_per_stack = manifest.at("frames_per_stack").get<int>();
        ds.visual_dim = manifest.at("visual_dim").get<int>();
        ds.tactile_dim = manifest.at("tactile_dim").get<int>();
    } catch (const json::exception& e) {
        throw Error("BadManifest", std::string("pairs_manifest.json: ") + e.what());
    }

    CsvTable pose = read_numeric_csv(dir / "pose.csv");
    CsvTable visual = read_numeric_csv(dir / "visual.csv");
    CsvTable tactile = read_numeric_csv(dir / "tactile.csv");
    if (static_cast<int>(pose.rows.size()) != count ||
        static_cast<int>(visual.rows.size()) != count ||
        static_cast<int>(tactile.rows.size()) != count) {
        throw Error("DimensionMismatch", "modality files disagree with the declared count");
    }
    ds.pose = Matrix(count, kPoseDim);
    for (int i = 0; i < count; ++i) {
        if (static_cast<int>(pose.rows[static_cast<size_t>(i)].size()) != kPoseDim) {
            throw Error("DimensionMismatch", "pose rows must have 14 values");
        }
        ds.pose.set_row(i, pose.rows[static_cast<size_t>(i)]);
    }
    ds.visual = rows_to_stacks(visual.rows, ds.frames_per_stack, ds.visual_dim);
    ds.tactile = rows_to_stacks(tactile.rows, ds.frames_per_stack, ds.tactile_dim);
    return ds;
}

Batch batch_from(const PairedDataset& ds, const std::vector<size_t>& indices) {
    Batch b;
    b.pose = Matrix(static_cast<int>(indices.size()), kPoseDim);
    b.visual.reserve(indices.size());
    b.tactile.reserve(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        b.pose.set_row(static_cast<int>(i), ds.pose.row_vec(static_cast<int>(indices[i])));
        b.visual.push_back(ds.visual[indices[i]]);
        b.tactile.push_back(ds.tactile[indices[i]]);
    }
    return b;
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw Error("BadConfig", "lr must be positive");
    if (warmup_fraction <= 0.0 || warmup_fraction >= 1.0) {
        throw Error("BadConfig", "warmup_fraction must lie in (0, 1)");
    }
    if (total_steps < 1) throw Error("BadConfig", "total_steps must be >= 1");
    if (batch_size < 2) throw Error("BadConfig", "batch_size must be >= 2");
    if (dim < 1 || hidden < 1) throw Error("BadConfig", "model dims must be positive");
    if (dropout && (dropout_p <= 0.0 || dropout_p >= 1.0)) {
        throw Error("BadConfig", "dropout_p must lie in (0, 1)");
    }
}

double schedule_lr(const TrainConfig& cfg, long long step) {
    long long warm = std::llround(cfg.warmup_fraction * static_cast<double>(cfg.total_steps));
    warm = std::max<long long>(1, std::min(warm, cfg.total_steps - 1));
    if (cfg.total_steps == 1) warm = 1;
    if (step <= warm) {
        return cfg.lr * static_cast<double>(step) / static_cast<double>(warm);
    }
    if (step >= cfg.total_steps) return 0.0;  // cosine terminal, exact
    double progress = static_cast<double>(step - warm) /
                      static_cast<double>(cfg.total_steps - warm);
    return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                 double lr) {
    if (params.size() != grads.size()) throw Error("ShapeMismatch", "param/grad group mismatch");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].size, 0.0);
            v_[i].assign(params[i].size, 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].size != grads[i].size) {
            throw Error("ShapeMismatch", "tensor size mismatch in " + params[i].name);
        }
        double* p = params[i].data;
        const double* g = grads[i].data;
        Vec& m = m_[i];
        Vec& v = v_[i];
        const bool decay = params[i].decay;
        for (size_t j = 0; j < params[i].size; ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
            if (decay) update += weight_decay_ * p[j];
            p[j] -= lr * update;
        }
    }
}

double dataset_loss(const AlignmentModel& m, const PairedDataset& ds,
                    std::span<const RetrievalTask> tasks, int batch_size) {
    const int n = ds.size();
    if (n < 2) throw Error("BadConfig", "dataset needs at least 2 paired samples");
    double total = 0.0;
    long long batches = 0;
    for (int start = 0; start + 1 < n; start += batch_size) {
        int end = std::min(n, start + batch_size);
        std::vector<size_t> idx;
        idx.reserve(static_cast<size_t>(end - start));
        for (int i = start; i < end; ++i) idx.push_back(static_cast<size_t>(i));
        total += loss_and_grads(m, batch_from(ds, idx), tasks).loss;
        ++batches;
    }
    return total / static_cast<double>(batches);
}

TrainOutcome train(const PairedDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() < 2) throw Error("BadConfig", "dataset needs at least 2 paired samples");
    if (data.visual_dim < 1 || data.tactile_dim < 1) {
        throw Error("DimensionMismatch", "dataset feature dims must be positive");
    }

    std::vector<RetrievalTask> tasks = cfg.tasks.empty() ? default_train_tasks() : cfg.tasks;

    TrainOutcome out;
    out.model = init_model(cfg.dim, cfg.hidden, data.visual_dim, data.tactile_dim, cfg.seed);
    out.model.dropout_p = cfg.dropout ? cfg.dropout_p : 0.0;

    // pose standardization constants from the training set, fixed thereafter
    for (int j = 0; j < kPoseDim; ++j) {
        double sum = 0.0;
        for (int i = 0; i < data.size(); ++i) sum += data.pose.at(i, j);
        double mean = sum / data.size();
        double sq = 0.0;
        for (int i = 0; i < data.size(); ++i) {
            double dv = data.pose.at(i, j) - mean;
            sq += dv * dv;
        }
        out.model.pose_mean[static_cast<size_t>(j)] = mean;
        out.model.pose_scale[static_cast<size_t>(j)] =
            std::max(std::sqrt(sq / data.size()), 1e-8);
    }

    out.initial_loss = dataset_loss(out.model, data, tasks, cfg.batch_size);

    AdamW opt(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
    auto params = param_refs(out.model);
    Rng order_rng(cfg.seed + 1);
    Rng dropout_rng(cfg.seed + 2);

    std::vector<size_t> order(static_cast<size_t>(data.size()));
    std::iota(order.begin(), order.end(), size_t{0});
    size_t cursor = order.size();  // force shuffle on first use

    for (long long step = 1; step <= cfg.total_steps; ++step) {
        if (cursor + 2 > order.size()) {  // need at least 2 samples per batch
            order_rng.shuffle(order);
            cursor = 0;
        }
        size_t take = std::min<size_t>(static_cast<size_t>(cfg.batch_size),
                                       order.size() - cursor);
        std::vector<size_t> idx(order.begin() + static_cast<long long>(cursor),
                                order.begin() + static_cast<long long>(cursor + take));
        cursor += take;

        LossGrads lg;
        try {
            lg = loss_and_grads(out.model, batch_from(data, idx), tasks,
                                cfg.dropout ? &dropout_rng : nullptr);
        } catch (const Error& e) {
            if (e.kind() == "NonFinite") {
                throw Error("NonFiniteLoss", "at step " + std::to_string(step) + ": " + e.what());
            }
            throw;
        }
        auto grads = grad_refs(lg.grads);
        opt.step(params, grads, schedule_lr(cfg, step));
        out.model.alpha = clamp(out.model.alpha, 0.0, kAlphaMax);
        out.steps = step;
    }

    out.final_loss = dataset_loss(out.model, data, tasks, cfg.batch_size);
    return out;
}

}  // namespace vtk
