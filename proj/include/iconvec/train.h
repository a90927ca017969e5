#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iconvec/dataset.h"
#include "iconvec/metrics.h"
#include "iconvec/model.h"
#include "iconvec/objective.h"

namespace iconvec {

enum class Stage { pretrain, joint };

struct TrainConfig {
    Stage stage = Stage::pretrain;
    double lr = 5e-4;
    int warmup_steps = 500;
    int batch_size = 16;
    int max_steps = 2000;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    uint64_t seed = 1;
    int checkpoint_every = 0;  // 0: only the final checkpoint
    int log_every = 10;
    LossWeights weights;
    int workers = 0;  // 0: hardware default
    std::string log_path;

    static TrainConfig pretrain_defaults();  // lr 5e-4, warmup 500
    static TrainConfig joint_defaults();     // lr 1e-6, no warmup

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Run config document: {"model": {...}, "train": {...}}.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
    std::string fingerprint() const;  // FNV-1a of the serialized document
};

// lr(step) = peak * min(1, step / warmup_steps), step counted from 1.
double warmup_lr(double peak, int step, int warmup_steps);

// Decoupled-weight-decay Adam with global-norm gradient clipping.
struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t step_count = 0;
    std::vector<Tensor> m, v;

    void init(const ParamStore& params);
    // Applies one update from `grads` (already batch-averaged); frozen
    // parameters are skipped entirely. Returns the pre-clip gradient norm.
    double step(ParamStore& params, GradStore& grads, double lr, double weight_decay,
                double grad_clip);
};

struct StepStats {
    int step = 0;
    double lr = 0.0;
    LossReport loss;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    std::vector<StepStats> trace;
    std::string checkpoint_path;
};

// Stage 1: SVG-to-SVG reconstruction; z comes from the SVG encoder and the
// image pathway is untouched. Stage 2 (joint): z comes from the image
// pathway; the SVG encoder is untouched. Both optimize total_loss over the
// given split with teacher forcing, epoch-wise shuffling, linear warmup and
// a non-finite-loss divergence guard.
TrainResult train_stage(Model& model, const CorpusReader& corpus,
                        const std::vector<std::string>& ids, const TrainConfig& cfg,
                        const std::string& ckpt_out, const EmbeddingFile* precomputed = nullptr);

struct EvalRow {
    std::string icon_id;
    double iou = 0.0;
    double cd = 0.0;
    bool flagged = false;  // degenerate (empty) prediction
    int pred_paths = 0;
    int target_paths = 0;
};

struct EvalReport {
    double mean_iou = 0.0;
    double mean_cd = 0.0;
    double visibility_accuracy = 0.0;  // fraction with pred_paths == target_paths
    int resolution = 128;
    int sample_points = 1000;
    std::string route;
    std::string config_fingerprint;
    std::vector<EvalRow> rows;

    nlohmann::json to_json() const;
    std::vector<MetricsRow> metrics_rows() const;
};

enum class EvalRoute { svg, img };

// Worst-case Chamfer stand-in for rows whose prediction has no outline.
inline constexpr double kEmptyChamfer = 1.4142135623730951;

EvalReport evaluate(const Model& model, const CorpusReader& corpus,
                    const std::vector<std::string>& ids, EvalRoute route, int resolution = 128,
                    int sample_points = 1000, const EmbeddingFile* precomputed = nullptr,
                    int workers = 0);

// Same driver with an injected predictor (used by tests).
EvalReport evaluate_with(const CorpusReader& corpus, const std::vector<std::string>& ids,
                         int resolution, int sample_points,
                         const std::function<SvgScript(const TrainRecord&)>& predict,
                         int workers = 0);

}  // namespace iconvec
