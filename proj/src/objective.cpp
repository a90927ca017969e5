#include "iconvec/objective.h"

#include <nlohmann/json.hpp>

#include "iconvec/errors.h"

using nlohmann::json;

namespace iconvec {

json LossReport::to_json() const {
    json per = json::array();
    for (const PerPath& p : per_path)
        per.push_back({{"total", p.total}, {"vis", p.vis}, {"type", p.type}, {"args", p.args}});
    return json{{"total", total}, {"vis", vis}, {"type", type}, {"args", args}, {"per_path", per}};
}

Node* type_loss(Tape& t, Node* logits, const std::vector<int>& targets, int norm) {
    return t.scale(t.cross_entropy_rows(logits, targets), 1.0 / norm);
}

Node* vis_loss(Tape& t, Node* logits_row, int v_target) {
    return t.cross_entropy_rows(logits_row, {v_target});
}

Node* args_loss(Tape& t, Node* pred, Tensor target, Tensor mask, int norm) {
    return t.scale(t.squared_error_masked(pred, std::move(target), std::move(mask)), 1.0 / norm);
}

std::vector<int> type_targets(const TokenizedPath& target, int prefix_len) {
    std::vector<int> out(prefix_len);
    for (int k = 0; k < prefix_len; ++k) out[k] = target.types[k];  // pad stays -1
    return out;
}

std::vector<int> quantized_arg_targets(const TokenizedPath& target, int prefix_len) {
    std::vector<int> out(prefix_len, -1);
    for (int k = 0; k < prefix_len; ++k)
        if (target.types[k] == kArg) out[k] = quantize8(target.args[k]);
    return out;
}

void continuous_arg_targets(const TokenizedPath& target, int prefix_len, Tensor& values,
                            Tensor& mask) {
    values = Tensor(prefix_len, 1);
    mask = Tensor(prefix_len, 1);
    for (int k = 0; k < prefix_len; ++k) {
        if (target.types[k] != kArg) continue;
        values.a[k] = target.args[k];
        mask.a[k] = 1.0;
    }
}

void parallel_targets(const TokenizedPath& target, int n_cmds_max, std::vector<int>& types,
                      Tensor& args, Tensor& mask) {
    types.assign(n_cmds_max, -1);
    args = Tensor(n_cmds_max, 11);
    mask = Tensor(n_cmds_max, 11);
    for (double& v : args.a) v = -1.0;

    int slot = 0;
    int pos = 1;  // skip SOS
    const int l = static_cast<int>(target.types.size());
    while (pos < l && slot < n_cmds_max) {
        int16_t tok = target.types[pos];
        if (tok == kPad) {
            ++pos;
            continue;
        }
        if (tok == kEOS) break;
        int arity = tok == kTokC ? 6 : 2;
        types[slot] = tok;
        for (int a = 0; a < arity; ++a) args.at(slot, a) = target.args[pos + 1 + a];
        // All 11 slots regress for a real command; unused ones target -1.
        for (int a = 0; a < 11; ++a) mask.at(slot, a) = 1.0;
        ++slot;
        pos += 1 + arity;
    }
    if (slot < n_cmds_max) types[slot] = kEOS;
}

Node* total_loss(Tape& t, const Model& model, const TokenizedIcon& target, Node* z,
                 const LossWeights& w, LossReport* report, const nn::DropCtx& drop) {
    const ModelConfig& cfg = model.config();
    if (target.n_paths() != cfg.n_paths)
        throw ShapeError("total_loss: target has " + std::to_string(target.n_paths()) +
                         " slots, model expects " + std::to_string(cfg.n_paths));
    StructureNodes structure = model.structure_decode(t, z, drop);

    if (report) {
        *report = LossReport{};
        report->per_path.resize(cfg.n_paths);
    }
    std::vector<Node*> slot_losses;
    for (int i = 0; i < cfg.n_paths; ++i) {
        const int v_target = target.visibility[i] ? 1 : 0;
        Node* vis_row = t.slice_rows(structure.visibility_logits, i, 1);
        Node* vis_term = t.scale(vis_loss(t, vis_row, v_target), w.vis);

        std::vector<Node*> terms{vis_term};
        Node* type_term = nullptr;
        Node* args_term = nullptr;
        if (v_target == 1) {
            Node* z_path = t.slice_rows(structure.path_embeddings, i, 1);
            if (cfg.decoder_mode == DecoderMode::autoregressive) {
                int prefix = Model::prefix_length(target.paths[i]);
                PathTeacherNodes pred = model.path_decode_teacher(t, z_path, target.paths[i],
                                                                  prefix, drop);
                type_term = t.scale(
                    type_loss(t, pred.type_logits, type_targets(target.paths[i], prefix),
                              cfg.l_max()),
                    w.type);
                if (cfg.arg_mode == ArgMode::continuous) {
                    Tensor values, mask;
                    continuous_arg_targets(target.paths[i], prefix, values, mask);
                    args_term = t.scale(
                        args_loss(t, pred.arg_values, std::move(values), std::move(mask),
                                  cfg.l_max()),
                        w.args);
                } else {
                    // Discrete ablation: 256-way CE on quantized targets,
                    // weighted like the type term.
                    args_term = t.scale(
                        type_loss(t, pred.arg_logits, quantized_arg_targets(target.paths[i], prefix),
                                  cfg.l_max()),
                        w.type);
                }
            } else {
                ParallelNodes pred = model.path_decode_parallel(t, z_path, drop);
                std::vector<int> types;
                Tensor args, mask;
                parallel_targets(target.paths[i], cfg.n_cmds_max, types, args, mask);
                type_term = t.scale(type_loss(t, pred.type_logits, types, cfg.n_cmds_max), w.type);
                if (cfg.arg_mode == ArgMode::continuous) {
                    args_term = t.scale(
                        args_loss(t, pred.arg_values, std::move(args), std::move(mask),
                                  cfg.n_cmds_max),
                        w.args);
                } else {
                    // 256-way CE per argument slot; unused slots are ignored.
                    std::vector<int> qt(size_t(cfg.n_cmds_max) * 11, -1);
                    for (int s = 0; s < cfg.n_cmds_max; ++s)
                        for (int a = 0; a < 11; ++a)
                            if (mask.at(s, a) != 0.0 && args.at(s, a) >= 0.0)
                                qt[size_t(s) * 11 + a] = quantize8(args.at(s, a));
                    Node* rows = t.reshape(pred.arg_logits, cfg.n_cmds_max * 11, 256);
                    args_term = t.scale(type_loss(t, rows, qt, cfg.n_cmds_max), w.type);
                }
            }
            terms.push_back(type_term);
            terms.push_back(args_term);
        }
        Node* slot_total = t.add_scalars(terms);
        slot_losses.push_back(slot_total);
        if (report) {
            LossReport::PerPath& row = report->per_path[i];
            row.vis = vis_term->scalar();
            row.type = type_term ? type_term->scalar() : 0.0;
            row.args = args_term ? args_term->scalar() : 0.0;
            row.total = slot_total->scalar();
            report->vis += row.vis;
            report->type += row.type;
            report->args += row.args;
        }
    }
    Node* total = t.add_scalars(slot_losses);
    if (report) report->total = total->scalar();
    return total;
}

}  // namespace iconvec
