#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "iconvec/tape.h"

namespace iconvec::nn {

// Parameter-id bundles. Registration happens once in the model constructor;
// forward passes only carry these ids.

struct LinearIds {
    int w = -1, b = -1;
};
struct LayerNormIds {
    int gain = -1, bias = -1;
};
struct AttentionIds {
    LinearIds q, k, v, o;
};
struct BlockIds {
    LayerNormIds ln1, ln2, ln3;
    AttentionIds self_attn;
    AttentionIds cross_attn;  // unused in encoder blocks
    LinearIds ffn1, ffn2;
    bool has_cross = false;
};
struct StackIds {
    std::vector<BlockIds> blocks;
    LayerNormIds final_ln;
};

// Registers parameters with deterministic seeded init: Xavier-uniform
// weights, zero biases, unit layer-norm gains, N(0, 0.02) tables.
class Builder {
  public:
    Builder(ParamStore& params, std::mt19937_64& rng) : params_(params), rng_(rng) {}

    int weight(const std::string& name, int in, int out, const std::string& group);
    int bias(const std::string& name, int out, const std::string& group);
    int table(const std::string& name, int rows, int cols, const std::string& group);
    LinearIds linear(const std::string& name, int in, int out, const std::string& group);
    LayerNormIds layernorm(const std::string& name, int d, const std::string& group);
    AttentionIds attention(const std::string& name, int d, const std::string& group);
    BlockIds block(const std::string& name, int d, int d_ff, bool cross, const std::string& group);
    StackIds stack(const std::string& name, int layers, int d, int d_ff, bool cross,
                   const std::string& group);

  private:
    ParamStore& params_;
    std::mt19937_64& rng_;
};

enum class Mask { none, causal };

// Dropout configuration for one forward pass; `seed` feeds counter-based
// streams so results depend only on (seed, op order), never on threads.
struct DropCtx {
    double p = 0.0;
    uint64_t seed = 0;
    mutable uint64_t counter = 0;

    uint64_t next() const { return seed + 0x10000ull * ++counter; }
};

Node* linear(Tape& t, Node* x, const LinearIds& ids);
Node* multihead_attention(Tape& t, Node* queries, Node* memory, const AttentionIds& ids,
                          int n_heads, Mask mask);
// Pre-norm residual block; `memory` may be null for encoder blocks.
Node* transformer_block(Tape& t, Node* x, Node* memory, const BlockIds& ids, int n_heads,
                        Mask self_mask, const DropCtx& drop);
Node* transformer_stack(Tape& t, Node* x, Node* memory, const StackIds& ids, int n_heads,
                        Mask self_mask, const DropCtx& drop);

}  // namespace iconvec::nn
