#include "iconvec/train.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "iconvec/errors.h"
#include "iconvec/kernels.h"

#if defined(_OPENMP)
#include <omp.h>
#endif

using nlohmann::json;

namespace iconvec {

// ---------------------------------------------------------------------------
// Configs

TrainConfig TrainConfig::pretrain_defaults() {
    TrainConfig c;
    c.stage = Stage::pretrain;
    c.lr = 5e-4;
    c.warmup_steps = 500;
    return c;
}

TrainConfig TrainConfig::joint_defaults() {
    TrainConfig c;
    c.stage = Stage::joint;
    c.lr = 1e-6;
    c.warmup_steps = 0;
    return c;
}

json TrainConfig::to_json() const {
    return json{{"stage", stage == Stage::pretrain ? "pretrain" : "joint"},
                {"lr", lr},
                {"warmup_steps", warmup_steps},
                {"batch_size", batch_size},
                {"max_steps", max_steps},
                {"weight_decay", weight_decay},
                {"grad_clip", grad_clip},
                {"seed", seed},
                {"checkpoint_every", checkpoint_every},
                {"log_every", log_every},
                {"loss_weights", {{"vis", weights.vis}, {"type", weights.type}, {"args", weights.args}}},
                {"workers", workers}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    std::string stage = j.value("stage", "pretrain");
    TrainConfig c = stage == "joint" ? joint_defaults() : pretrain_defaults();
    if (stage != "pretrain" && stage != "joint") throw Error("config: unknown stage '" + stage + "'");
    try {
        c.lr = j.value("lr", c.lr);
        c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_steps = j.value("max_steps", c.max_steps);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.grad_clip = j.value("grad_clip", c.grad_clip);
        c.seed = j.value("seed", c.seed);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.log_every = j.value("log_every", c.log_every);
        c.workers = j.value("workers", c.workers);
        if (j.contains("loss_weights")) {
            const json& w = j.at("loss_weights");
            c.weights.vis = w.value("vis", c.weights.vis);
            c.weights.type = w.value("type", c.weights.type);
            c.weights.args = w.value("args", c.weights.args);
        }
    } catch (const json::exception& e) {
        throw Error(std::string("train config: ") + e.what());
    }
    return c;
}

json RunConfig::to_json() const { return json{{"model", model.to_json()}, {"train", train.to_json()}}; }

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path);
    try {
        json j;
        f >> j;
        return from_json(j);
    } catch (const json::exception& e) {
        throw Error("config " + path + ": " + e.what());
    }
}

std::string RunConfig::fingerprint() const {
    std::string s = to_json().dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Optimizer

double warmup_lr(double peak, int step, int warmup_steps) {
    if (warmup_steps <= 0) return peak;
    return peak * std::min(1.0, double(step) / double(warmup_steps));
}

void AdamW::init(const ParamStore& params) {
    m.clear();
    v.clear();
    step_count = 0;
    for (int i = 0; i < params.count(); ++i) {
        m.emplace_back(params.value(i).rows, params.value(i).cols);
        v.emplace_back(params.value(i).rows, params.value(i).cols);
    }
}

double AdamW::step(ParamStore& params, GradStore& grads, double lr, double weight_decay,
                   double grad_clip) {
    double norm2 = 0.0;
    for (int i = 0; i < params.count(); ++i) {
        if (!params.trainable(i)) continue;
        for (double g : grads.grads[i].a) norm2 += g * g;
    }
    double norm = std::sqrt(norm2);
    double clip = grad_clip > 0.0 && norm > grad_clip ? grad_clip / norm : 1.0;

    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, double(step_count));
    double bc2 = 1.0 - std::pow(beta2, double(step_count));
    for (int i = 0; i < params.count(); ++i) {
        if (!params.trainable(i)) continue;
        double* p = params.value(i).data();
        double* gm = m[i].data();
        double* gv = v[i].data();
        const double* g = grads.grads[i].data();
        for (size_t j = 0; j < grads.grads[i].size(); ++j) {
            double gj = g[j] * clip;
            gm[j] = beta1 * gm[j] + (1.0 - beta1) * gj;
            gv[j] = beta2 * gv[j] + (1.0 - beta2) * gj * gj;
            double mhat = gm[j] / bc1;
            double vhat = gv[j] / bc2;
            p[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[j]);
        }
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

int resolve_workers(int workers) {
#if defined(_OPENMP)
    return workers > 0 ? workers : omp_get_max_threads();
#else
    (void)workers;
    return 1;
#endif
}

Node* encode_for_stage(const Model& model, Tape& tape, const TrainRecord& rec, Stage stage,
                       const EmbeddingFile* precomputed, const nn::DropCtx& drop) {
    if (stage == Stage::pretrain) return model.svg_encode(tape, rec.tokens, drop);
    if (model.config().backbone == BackboneKind::precomputed) {
        if (!precomputed) throw TrainError("joint training needs an embedding file");
        return model.adapt_embedding(tape, precomputed->lookup(rec.icon_id));
    }
    return model.image_encode(tape, rec.image, drop);
}

}  // namespace

TrainResult train_stage(Model& model, const CorpusReader& corpus,
                        const std::vector<std::string>& ids, const TrainConfig& cfg,
                        const std::string& ckpt_out, const EmbeddingFile* precomputed) {
    if (ids.empty()) throw TrainError("training split is empty");
    const int workers = resolve_workers(cfg.workers);

    std::vector<size_t> indices;
    indices.reserve(ids.size());
    for (const std::string& id : ids) indices.push_back(corpus.index_of(id));

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::trunc);
        if (!log) throw IoError("cannot write training log " + cfg.log_path);
    }

    AdamW adam;
    adam.init(model.params());
    GradStore total_grads;
    total_grads.init(model.params());
    // One gradient store per batch element: the reduction runs in batch
    // order, so results are identical under any worker schedule.
    std::vector<GradStore> icon_grads(cfg.batch_size);
    for (GradStore& g : icon_grads) g.init(model.params());

    std::mt19937_64 shuffle_rng(cfg.seed);
    std::vector<size_t> order = indices;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    size_t cursor = 0;

    TrainResult result;
    result.checkpoint_path = ckpt_out;
    const int B = cfg.batch_size;

    auto save_checkpoint = [&](const std::string& path) {
        Checkpoint ck = Checkpoint::from_model(model);
        ck.has_optimizer = true;
        ck.adam_step = adam.step_count;
        const ParamStore& p = model.params();
        for (int i = 0; i < p.count(); ++i) {
            ck.adam_m[p.name(i)] = adam.m[i];
            ck.adam_v[p.name(i)] = adam.v[i];
        }
        ck.write(path);
    };

    for (int step = 1; step <= cfg.max_steps; ++step) {
        auto t0 = std::chrono::steady_clock::now();

        // Epoch-wise shuffled batch.
        std::vector<TrainRecord> batch;
        batch.reserve(B);
        for (int b = 0; b < B; ++b) {
            if (cursor >= order.size()) {
                std::shuffle(order.begin(), order.end(), shuffle_rng);
                cursor = 0;
            }
            batch.push_back(corpus.record(order[cursor++]));
        }

        std::vector<LossReport> reports(B);
        std::vector<std::string> failures(B);

#if defined(_OPENMP)
        omp_set_num_threads(workers);
#endif
#pragma omp parallel for schedule(dynamic, 1)
        for (int b = 0; b < B; ++b) {
            try {
                icon_grads[b].zero();
                Tape tape(&model.params(), &icon_grads[b]);
                nn::DropCtx drop{model.config().dropout,
                                 kern::hash_mix(cfg.seed ^ (uint64_t(step) << 20) ^ uint64_t(b)), 0};
                Node* z = encode_for_stage(model, tape, batch[b], cfg.stage, precomputed, drop);
                Node* loss = total_loss(tape, model, batch[b].tokens, z, cfg.weights, &reports[b], drop);
                tape.backward(loss);
            } catch (const std::exception& e) {
                failures[b] = e.what();
            }
        }
        for (const std::string& f : failures)
            if (!f.empty()) throw TrainError("training step failed: " + f);

        total_grads.zero();
        for (const GradStore& g : icon_grads) total_grads.add_from(g);
        total_grads.scale(1.0 / B);

        StepStats stats;
        stats.step = step;
        for (const LossReport& r : reports) {
            stats.loss.total += r.total;
            stats.loss.vis += r.vis;
            stats.loss.type += r.type;
            stats.loss.args += r.args;
        }
        stats.loss.total /= B;
        stats.loss.vis /= B;
        stats.loss.type /= B;
        stats.loss.args /= B;
        if (!std::isfinite(stats.loss.total))
            throw TrainError("divergence guard: non-finite loss at step " + std::to_string(step));

        stats.lr = warmup_lr(cfg.lr, step, cfg.warmup_steps);
        stats.grad_norm = adam.step(model.params(), total_grads, stats.lr, cfg.weight_decay,
                                    cfg.grad_clip);
        stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                  t0)
                            .count();
        result.trace.push_back(stats);

        if (log && (step % std::max(1, cfg.log_every) == 0 || step == cfg.max_steps)) {
            json line{{"step", step},
                      {"lr", stats.lr},
                      {"loss", stats.loss.total},
                      {"vis", stats.loss.vis},
                      {"type", stats.loss.type},
                      {"args", stats.loss.args},
                      {"grad_norm", stats.grad_norm},
                      {"wall_ms", stats.wall_ms}};
            log << line.dump() << "\n";
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && !ckpt_out.empty())
            save_checkpoint(ckpt_out);
    }

    if (!ckpt_out.empty()) save_checkpoint(ckpt_out);
    if (log) log.flush();
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

json EvalReport::to_json() const {
    json rows_j = json::array();
    for (const EvalRow& r : rows)
        rows_j.push_back({{"icon_id", r.icon_id},
                          {"iou", r.iou},
                          {"cd", r.cd},
                          {"flagged", r.flagged},
                          {"pred_paths", r.pred_paths},
                          {"target_paths", r.target_paths}});
    return json{{"mean_iou", mean_iou},
                {"mean_cd", mean_cd},
                {"visibility_accuracy", visibility_accuracy},
                {"resolution", resolution},
                {"sample_points", sample_points},
                {"route", route},
                {"config_fingerprint", config_fingerprint},
                {"rows", rows_j}};
}

std::vector<MetricsRow> EvalReport::metrics_rows() const {
    std::vector<MetricsRow> out;
    out.reserve(rows.size());
    for (const EvalRow& r : rows) out.push_back({r.icon_id, r.iou, r.cd, r.flagged});
    return out;
}

EvalReport evaluate_with(const CorpusReader& corpus, const std::vector<std::string>& ids,
                         int resolution, int sample_points,
                         const std::function<SvgScript(const TrainRecord&)>& predict,
                         int workers) {
    EvalReport report;
    report.resolution = resolution;
    report.sample_points = sample_points;
    report.rows.resize(ids.size());
    const int n = static_cast<int>(ids.size());
    std::vector<size_t> indices(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) indices[i] = corpus.index_of(ids[i]);
    std::vector<std::string> failures(resolve_workers(workers));

#if defined(_OPENMP)
    omp_set_num_threads(resolve_workers(workers));
#endif
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
#if defined(_OPENMP)
        int tid = omp_get_thread_num();
#else
        int tid = 0;
#endif
        try {
            TrainRecord rec;
#pragma omp critical(corpus_read)
            rec = corpus.record(indices[i]);

            SvgScript target = decode_icon(rec.tokens);
            SvgScript pred = predict(rec);

            EvalRow row;
            row.icon_id = rec.icon_id;
            row.pred_paths = static_cast<int>(pred.paths.size());
            row.target_paths = static_cast<int>(target.paths.size());
            row.iou = iou(rasterize(pred, resolution), rasterize(target, resolution));
            bool pred_has_outline = false;
            try {
                OutlineSample ps = arclength_sample(pred, sample_points);
                OutlineSample ts = arclength_sample(target, sample_points);
                row.cd = chamfer(ps, ts);
                pred_has_outline = true;
            } catch (const GeometryError&) {
            }
            if (!pred_has_outline) {
                row.flagged = true;
                row.cd = target.paths.empty() ? 0.0 : kEmptyChamfer;
                if (target.paths.empty()) row.iou = 1.0;
            }
            report.rows[i] = row;
        } catch (const std::exception& e) {
            failures[tid] = e.what();
        }
    }
    for (const std::string& f : failures)
        if (!f.empty()) throw TrainError("evaluation failed: " + f);

    double iou_sum = 0.0, cd_sum = 0.0;
    int vis_ok = 0;
    for (const EvalRow& r : report.rows) {
        iou_sum += r.iou;
        cd_sum += r.cd;
        vis_ok += r.pred_paths == r.target_paths ? 1 : 0;
    }
    if (!report.rows.empty()) {
        report.mean_iou = iou_sum / double(report.rows.size());
        report.mean_cd = cd_sum / double(report.rows.size());
        report.visibility_accuracy = double(vis_ok) / double(report.rows.size());
    }
    return report;
}

EvalReport evaluate(const Model& model, const CorpusReader& corpus,
                    const std::vector<std::string>& ids, EvalRoute route, int resolution,
                    int sample_points, const EmbeddingFile* precomputed, int workers) {
    auto predict = [&](const TrainRecord& rec) -> SvgScript {
        std::vector<double> z;
        if (route == EvalRoute::svg) {
            z = model.encode_svg(rec.tokens);
        } else if (model.config().backbone == BackboneKind::precomputed) {
            if (!precomputed) throw TrainError("img route needs an embedding file");
            z = model.encode_precomputed(precomputed->lookup(rec.icon_id));
        } else {
            z = model.encode_image(rec.image);
        }
        return model.vectorize_from_z(z).script;
    };
    EvalReport report = evaluate_with(corpus, ids, resolution, sample_points, predict, workers);
    report.route = route == EvalRoute::svg ? "svg" : "img";
    return report;
}

}  // namespace iconvec
