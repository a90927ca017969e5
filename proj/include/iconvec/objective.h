#pragma once

#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iconvec/model.h"
#include "iconvec/tape.h"
#include "iconvec/tokenizer.h"

namespace iconvec {

struct LossWeights {
    double vis = 1.0;
    double type = 1.0;
    double args = 6e3;
};

// Weighted loss components; total is exactly the sum of the per-path rows,
// and each row is w_vis*vis + v_i*(w_type*type + w_args*args).
struct LossReport {
    struct PerPath {
        double total = 0, vis = 0, type = 0, args = 0;
    };
    double total = 0, vis = 0, type = 0, args = 0;
    std::vector<PerPath> per_path;

    nlohmann::json to_json() const;
};

// Cross-entropy over rows whose target is not -1, divided by `norm` (the
// padded sequence length). Returns 0 contribution for all-pad targets.
Node* type_loss(Tape& t, Node* logits, const std::vector<int>& targets, int norm);

// Two-class cross-entropy of one slot's visibility logits (1x2).
Node* vis_loss(Tape& t, Node* logits_row, int v_target);

// Squared error summed where mask is set, divided by `norm`.
Node* args_loss(Tape& t, Node* pred, Tensor target, Tensor mask, int norm);

// Target helpers for the autoregressive route.
std::vector<int> type_targets(const TokenizedPath& target, int prefix_len);
std::vector<int> quantized_arg_targets(const TokenizedPath& target, int prefix_len);
void continuous_arg_targets(const TokenizedPath& target, int prefix_len, Tensor& values,
                            Tensor& mask);

// Targets for the parallel (non-autoregressive) decoder: one row per command
// slot. Type targets are M/L/C, then EOS, then -1 padding; argument targets
// put the command arguments first and -1 in the unused tail.
void parallel_targets(const TokenizedPath& target, int n_cmds_max, std::vector<int>& types,
                      Tensor& args, Tensor& mask);

// Runs the structure decoder and the per-path decoders on z, assembles the
// full loss of the icon (sum over the n_paths slots), and fills `report`.
// Ground-truth visibility gates the type/args terms; invisible target slots
// contribute only the visibility loss, and their path decoders never run.
Node* total_loss(Tape& t, const Model& model, const TokenizedIcon& target, Node* z,
                 const LossWeights& w, LossReport* report = nullptr,
                 const nn::DropCtx& drop = {});

}  // namespace iconvec
