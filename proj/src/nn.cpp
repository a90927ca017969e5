#include "iconvec/nn.h"

#include <cmath>

#include "iconvec/errors.h"

namespace iconvec::nn {

int Builder::weight(const std::string& name, int in, int out, const std::string& group) {
    Tensor t(in, out);
    double a = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-a, a);
    for (double& x : t.a) x = u(rng_);
    return params_.add(name, std::move(t), group);
}

int Builder::bias(const std::string& name, int out, const std::string& group) {
    return params_.add(name, Tensor(1, out), group);
}

int Builder::table(const std::string& name, int rows, int cols, const std::string& group) {
    Tensor t(rows, cols);
    std::normal_distribution<double> n(0.0, 0.02);
    for (double& x : t.a) x = n(rng_);
    return params_.add(name, std::move(t), group);
}

LinearIds Builder::linear(const std::string& name, int in, int out, const std::string& group) {
    return {weight(name + ".w", in, out, group), bias(name + ".b", out, group)};
}

LayerNormIds Builder::layernorm(const std::string& name, int d, const std::string& group) {
    Tensor gain(1, d);
    for (double& x : gain.a) x = 1.0;
    int g = params_.add(name + ".g", std::move(gain), group);
    int b = params_.add(name + ".b", Tensor(1, d), group);
    return {g, b};
}

AttentionIds Builder::attention(const std::string& name, int d, const std::string& group) {
    return {linear(name + ".q", d, d, group), linear(name + ".k", d, d, group),
            linear(name + ".v", d, d, group), linear(name + ".o", d, d, group)};
}

BlockIds Builder::block(const std::string& name, int d, int d_ff, bool cross,
                        const std::string& group) {
    BlockIds ids;
    ids.ln1 = layernorm(name + ".ln1", d, group);
    ids.self_attn = attention(name + ".self", d, group);
    if (cross) {
        ids.ln2 = layernorm(name + ".ln2", d, group);
        ids.cross_attn = attention(name + ".cross", d, group);
        ids.has_cross = true;
    }
    ids.ln3 = layernorm(name + ".ln3", d, group);
    ids.ffn1 = linear(name + ".ffn1", d, d_ff, group);
    ids.ffn2 = linear(name + ".ffn2", d_ff, d, group);
    return ids;
}

StackIds Builder::stack(const std::string& name, int layers, int d, int d_ff, bool cross,
                        const std::string& group) {
    StackIds ids;
    for (int i = 0; i < layers; ++i)
        ids.blocks.push_back(block(name + ".layer" + std::to_string(i), d, d_ff, cross, group));
    ids.final_ln = layernorm(name + ".final_ln", d, group);
    return ids;
}

Node* linear(Tape& t, Node* x, const LinearIds& ids) {
    return t.linear(x, t.param(ids.w), t.param(ids.b));
}

Node* multihead_attention(Tape& t, Node* queries, Node* memory, const AttentionIds& ids,
                          int n_heads, Mask mask) {
    Node* q = linear(t, queries, ids.q);
    Node* k = linear(t, memory, ids.k);
    Node* v = linear(t, memory, ids.v);

    std::vector<int> limits;
    if (mask == Mask::causal) {
        limits.resize(q->rows());
        for (int i = 0; i < q->rows(); ++i) limits[i] = i + 1;
    }
    return linear(t, t.attention(q, k, v, n_heads, std::move(limits)), ids.o);
}

Node* transformer_block(Tape& t, Node* x, Node* memory, const BlockIds& ids, int n_heads,
                        Mask self_mask, const DropCtx& drop) {
    Node* normed = t.layernorm(x, t.param(ids.ln1.gain), t.param(ids.ln1.bias));
    Node* attn = multihead_attention(t, normed, normed, ids.self_attn, n_heads, self_mask);
    x = t.add(x, t.dropout(attn, drop.p, drop.next()));

    if (memory != nullptr) {
        if (!ids.has_cross) throw ShapeError("block has no cross-attention parameters");
        Node* n2 = t.layernorm(x, t.param(ids.ln2.gain), t.param(ids.ln2.bias));
        Node* cross = multihead_attention(t, n2, memory, ids.cross_attn, n_heads, Mask::none);
        x = t.add(x, t.dropout(cross, drop.p, drop.next()));
    }

    Node* n3 = t.layernorm(x, t.param(ids.ln3.gain), t.param(ids.ln3.bias));
    Node* ff = linear(t, t.gelu(linear(t, n3, ids.ffn1)), ids.ffn2);
    return t.add(x, t.dropout(ff, drop.p, drop.next()));
}

Node* transformer_stack(Tape& t, Node* x, Node* memory, const StackIds& ids, int n_heads,
                        Mask self_mask, const DropCtx& drop) {
    for (const BlockIds& block : ids.blocks)
        x = transformer_block(t, x, memory, block, n_heads, self_mask, drop);
    return t.layernorm(x, t.param(ids.final_ln.gain), t.param(ids.final_ln.bias));
}

}  // namespace iconvec::nn
