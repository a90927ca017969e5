// Batch command-line surface for the icon vectorization pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
// malformed inputs), 3 runtime/training failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "iconvec/dataset.h"
#include "iconvec/errors.h"
#include "iconvec/metrics.h"
#include "iconvec/model.h"
#include "iconvec/svg.h"
#include "iconvec/train.h"

using namespace iconvec;
using nlohmann::json;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << text;
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> split_ids(const SplitManifest& manifest, const std::string& split) {
    return split == "train" ? manifest.train_ids : manifest.eval_ids;
}

struct CorpusFlags {
    int n_paths = 8;
    int n_cmds = 32;
    int image_size = 64;
    double train_frac = 0.7;

    CorpusHeader header() const {
        CorpusHeader h;
        h.limits = TokenLimits{n_paths, n_cmds};
        h.image_size = image_size;
        return h;
    }
    void attach(CLI::App* cmd) {
        cmd->add_option("--n-paths", n_paths, "Path slots per icon");
        cmd->add_option("--n-cmds", n_cmds, "Command limit per path");
        cmd->add_option("--image-size", image_size, "Rendered input image size");
        cmd->add_option("--train-frac", train_frac, "Training split fraction");
    }
};

void report_manifest(const SplitManifest& m) {
    std::cerr << "scanned " << m.scanned << ", accepted " << m.accepted << " (train "
              << m.train_ids.size() << ", eval " << m.eval_ids.size() << "), filtered "
              << m.filtered.size() << ", skipped " << m.skipped.size() << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"raster icon to SVG vectorization pipeline"};
    app.require_subcommand(1);
    int workers = 0;
    app.add_option("--workers", workers, "Worker thread count (0 = hardware)");

    // --- preprocess ---
    auto* preprocess = app.add_subcommand("preprocess", "Build a corpus from a directory of SVGs");
    std::string pre_src, pre_out;
    uint64_t pre_seed = 1;
    CorpusFlags pre_flags;
    preprocess->add_option("--src", pre_src, "Source directory")->required();
    preprocess->add_option("--out", pre_out, "Corpus output path")->required();
    preprocess->add_option("--seed", pre_seed, "Split shuffle seed");
    pre_flags.attach(preprocess);

    // --- synth ---
    auto* synth = app.add_subcommand("synth", "Build a synthetic desk-scale corpus");
    int synth_count = 16;
    uint64_t synth_seed = 1;
    std::string synth_out;
    CorpusFlags synth_flags;
    synth_flags.n_cmds = 8;
    synth->add_option("--count", synth_count, "Icon count")->required();
    synth->add_option("--seed", synth_seed, "Generator and split seed");
    synth->add_option("--out", synth_out, "Corpus output path")->required();
    synth_flags.attach(synth);

    // --- pretrain ---
    auto* pretrain = app.add_subcommand("pretrain", "Stage 1: SVG-to-SVG reconstruction");
    std::string pt_corpus, pt_config, pt_out, pt_log;
    pretrain->add_option("--corpus", pt_corpus)->required();
    pretrain->add_option("--config", pt_config, "Run config JSON")->required();
    pretrain->add_option("--out", pt_out, "Checkpoint output")->required();
    pretrain->add_option("--log", pt_log, "Training log (ndjson)");

    // --- train (joint) ---
    auto* train = app.add_subcommand("train", "Stage 2: joint image-to-SVG training");
    std::string tr_corpus, tr_config, tr_out, tr_init, tr_log, tr_emb;
    train->add_option("--corpus", tr_corpus)->required();
    train->add_option("--init", tr_init, "Pretrained checkpoint")->required();
    train->add_option("--config", tr_config, "Run config JSON")->required();
    train->add_option("--out", tr_out, "Checkpoint output")->required();
    train->add_option("--log", tr_log, "Training log (ndjson)");
    train->add_option("--embeddings", tr_emb, "Precomputed embedding file");

    // --- vectorize ---
    auto* vectorize = app.add_subcommand("vectorize", "Convert one raster image to SVG");
    std::string vz_ckpt, vz_image, vz_out;
    vectorize->add_option("--ckpt", vz_ckpt)->required();
    vectorize->add_option("--image", vz_image, "PGM input image")->required();
    vectorize->add_option("--out", vz_out, "SVG output path")->required();

    // --- evaluate ---
    auto* evaluate_cmd = app.add_subcommand("evaluate", "IoU / Chamfer evaluation over a split");
    std::string ev_ckpt, ev_corpus, ev_split = "eval", ev_report, ev_route = "img", ev_emb;
    int ev_resolution = 128, ev_points = 1000;
    evaluate_cmd->add_option("--ckpt", ev_ckpt)->required();
    evaluate_cmd->add_option("--corpus", ev_corpus)->required();
    evaluate_cmd->add_option("--split", ev_split)->check(CLI::IsMember({"train", "eval"}));
    evaluate_cmd->add_option("--report", ev_report, "Report output path")->required();
    evaluate_cmd->add_option("--route", ev_route)->check(CLI::IsMember({"svg", "img"}));
    evaluate_cmd->add_option("--resolution", ev_resolution, "IoU raster resolution");
    evaluate_cmd->add_option("--points", ev_points, "Chamfer outline sample count");
    evaluate_cmd->add_option("--embeddings", ev_emb, "Precomputed embedding file");

    // --- render ---
    auto* render = app.add_subcommand("render", "Rasterize an SVG to a PGM mask");
    std::string rd_svg, rd_out;
    int rd_size = 128;
    render->add_option("--svg", rd_svg)->required();
    render->add_option("--size", rd_size, "Raster resolution")->required();
    render->add_option("--out", rd_out, "PGM output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints help or the usage error
        return code == 0 ? 0 : 1;
    }

    if (*preprocess) {
        report_manifest(build_corpus(pre_src, pre_out, pre_seed, pre_flags.header(),
                                     pre_flags.train_frac));
        return 0;
    }

    if (*synth) {
        std::mt19937_64 rng(synth_seed);
        std::vector<std::pair<std::string, SvgScript>> icons;
        for (int i = 0; i < synth_count; ++i) {
            char id[32];
            std::snprintf(id, sizeof(id), "synth_%05d", i);
            icons.emplace_back(id, synth_icon(rng));
        }
        report_manifest(build_corpus_from_scripts(icons, synth_out, synth_seed,
                                                  synth_flags.header(), synth_flags.train_frac));
        return 0;
    }

    if (*pretrain || *train) {
        const bool joint = bool(*train);
        RunConfig run_cfg = RunConfig::load(joint ? tr_config : pt_config);
        run_cfg.train.stage = joint ? Stage::joint : Stage::pretrain;
        if (workers > 0) run_cfg.train.workers = workers;
        std::string log_path = joint ? tr_log : pt_log;
        if (!log_path.empty()) run_cfg.train.log_path = log_path;

        std::string corpus_path = joint ? tr_corpus : pt_corpus;
        CorpusReader corpus(corpus_path);
        if (!(corpus.header().limits == run_cfg.model.limits()))
            throw TrainError("corpus limits do not match the model config");
        SplitManifest manifest = SplitManifest::from_json_file(manifest_path_for(corpus_path));

        Model model(run_cfg.model, run_cfg.train.seed);
        std::optional<EmbeddingFile> emb;
        if (joint) {
            Checkpoint::read(tr_init).load_into(model);
            std::cerr << "initialized decoders from " << tr_init << "\n";
            if (!tr_emb.empty()) emb = EmbeddingFile::read(tr_emb);
        }
        TrainResult result = train_stage(model, corpus, manifest.train_ids, run_cfg.train,
                                         joint ? tr_out : pt_out, emb ? &*emb : nullptr);
        std::cerr << "trained " << result.trace.size() << " steps, final loss "
                  << (result.trace.empty() ? 0.0 : result.trace.back().loss.total) << ", wrote "
                  << result.checkpoint_path << "\n";
        return 0;
    }

    if (*vectorize) {
        Model model = Checkpoint::read(vz_ckpt).restore();
        Image image = read_pgm(vz_image);
        VectorizeResult res = model.vectorize(image);
        if (res.no_visible_paths) std::cerr << "warning: no visible paths predicted\n";
        write_text(vz_out, write_svg(res.script));
        return 0;
    }

    if (*evaluate_cmd) {
        Model model = Checkpoint::read(ev_ckpt).restore();
        CorpusReader corpus(ev_corpus);
        SplitManifest manifest = SplitManifest::from_json_file(manifest_path_for(ev_corpus));
        std::optional<EmbeddingFile> emb;
        if (!ev_emb.empty()) emb = EmbeddingFile::read(ev_emb);

        EvalReport report = evaluate(model, corpus, split_ids(manifest, ev_split),
                                     ev_route == "svg" ? EvalRoute::svg : EvalRoute::img,
                                     ev_resolution, ev_points, emb ? &*emb : nullptr, workers);
        RunConfig fp_cfg;
        fp_cfg.model = model.config();
        report.config_fingerprint = fp_cfg.fingerprint();

        write_text(ev_report, write_metrics_report(report.metrics_rows()));
        json full = report.to_json();
        full["config"] = {{"model", model.config().to_json()},
                          {"eval", {{"route", ev_route}, {"split", ev_split},
                                    {"resolution", ev_resolution}, {"points", ev_points}}}};
        write_text(ev_report + ".json", full.dump(2) + "\n");
        std::cerr << "route " << ev_route << " split " << ev_split << ": mean IoU "
                  << report.mean_iou << ", mean CD " << report.mean_cd << ", vis acc "
                  << report.visibility_accuracy << "\n";
        return 0;
    }

    if (*render) {
        SvgScript script = canonicalize(read_text(rd_svg));
        write_pgm(rasterize(script, rd_size), rd_out);
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const TrainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 3;
    }
}
