#include "iconvec/model.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "iconvec/errors.h"
#include "iconvec/kernels.h"

using nlohmann::json;

namespace iconvec {

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.d_model = 64;
    c.d_ff = 128;
    c.n_heads = 4;
    c.structure_layers = 2;
    c.path_layers = 4;
    c.svg_encoder_layers = 2;
    c.image_encoder_layers = 2;
    c.n_paths = 8;
    c.n_cmds_max = 8;
    c.image_size = 64;
    c.patch_size = 8;
    c.dropout = 0.0;
    return c;
}

namespace {
const char* arg_mode_name(ArgMode m) { return m == ArgMode::continuous ? "continuous" : "discrete256"; }
const char* decoder_mode_name(DecoderMode m) {
    return m == DecoderMode::autoregressive ? "autoregressive" : "parallel";
}
const char* backbone_name(BackboneKind b) { return b == BackboneKind::builtin ? "builtin" : "precomputed"; }
}  // namespace

json ModelConfig::to_json() const {
    return json{{"d_model", d_model},
                {"d_ff", d_ff},
                {"n_heads", n_heads},
                {"structure_layers", structure_layers},
                {"path_layers", path_layers},
                {"svg_encoder_layers", svg_encoder_layers},
                {"image_encoder_layers", image_encoder_layers},
                {"n_paths", n_paths},
                {"n_cmds_max", n_cmds_max},
                {"image_size", image_size},
                {"patch_size", patch_size},
                {"arg_mode", arg_mode_name(arg_mode)},
                {"decoder_mode", decoder_mode_name(decoder_mode)},
                {"backbone", backbone_name(backbone)},
                {"backbone_width", backbone_width},
                {"freeze_backbone", freeze_backbone},
                {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    try {
        c.d_model = j.value("d_model", c.d_model);
        c.d_ff = j.value("d_ff", c.d_ff);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.structure_layers = j.value("structure_layers", c.structure_layers);
        c.path_layers = j.value("path_layers", c.path_layers);
        c.svg_encoder_layers = j.value("svg_encoder_layers", c.svg_encoder_layers);
        c.image_encoder_layers = j.value("image_encoder_layers", c.image_encoder_layers);
        c.n_paths = j.value("n_paths", c.n_paths);
        c.n_cmds_max = j.value("n_cmds_max", c.n_cmds_max);
        c.image_size = j.value("image_size", c.image_size);
        c.patch_size = j.value("patch_size", c.patch_size);
        c.backbone_width = j.value("backbone_width", c.backbone_width);
        c.freeze_backbone = j.value("freeze_backbone", c.freeze_backbone);
        c.dropout = j.value("dropout", c.dropout);
        std::string am = j.value("arg_mode", "continuous");
        std::string dm = j.value("decoder_mode", "autoregressive");
        std::string bb = j.value("backbone", "builtin");
        if (am == "continuous") c.arg_mode = ArgMode::continuous;
        else if (am == "discrete256") c.arg_mode = ArgMode::discrete256;
        else throw Error("config: unknown arg_mode '" + am + "'");
        if (dm == "autoregressive") c.decoder_mode = DecoderMode::autoregressive;
        else if (dm == "parallel") c.decoder_mode = DecoderMode::parallel;
        else throw Error("config: unknown decoder_mode '" + dm + "'");
        if (bb == "builtin") c.backbone = BackboneKind::builtin;
        else if (bb == "precomputed") c.backbone = BackboneKind::precomputed;
        else throw Error("config: unknown backbone '" + bb + "'");
    } catch (const json::exception& e) {
        throw Error(std::string("config: ") + e.what());
    }
    return c;
}

bool ModelConfig::shape_equal(const ModelConfig& o) const {
    ModelConfig a = *this, b = o;
    a.freeze_backbone = b.freeze_backbone = false;
    a.dropout = b.dropout = 0.0;
    return a == b;
}

// ---------------------------------------------------------------------------
// Parameter registration

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.d_model % cfg_.n_heads != 0) throw ShapeError("model: d_model not divisible by n_heads");
    if (cfg_.backbone == BackboneKind::builtin && cfg_.image_size % cfg_.patch_size != 0)
        throw ShapeError("model: image_size not divisible by patch_size");
    register_params(seed);
    if (cfg_.freeze_backbone)
        for (int id : group_ids("image_backbone")) params_.set_trainable(id, false);
}

void Model::register_params(uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::Builder b(params_, rng);
    const int d = cfg_.d_model, ff = cfg_.d_ff;

    emb_type_ = b.table("emb.type", kTokenTypes + 1, d, "embeddings");  // last row = pad
    emb_index_ = b.table("emb.index", cfg_.l_max(), d, "embeddings");
    if (cfg_.arg_mode == ArgMode::continuous) {
        emb_arg_w_ = b.table("emb.arg_w", 1, d, "embeddings");
        emb_arg_b_ = b.bias("emb.arg_b", d, "embeddings");
    } else {
        emb_arg_table_ = b.table("emb.arg_table", 256, d, "embeddings");
    }

    svg_stage1_ = b.stack("svgenc.s1", cfg_.svg_encoder_layers, d, ff, false, "svg_encoder");
    svg_slot_ = b.table("svgenc.slot", cfg_.n_paths, d, "svg_encoder");
    svg_stage2_ = b.stack("svgenc.s2", cfg_.svg_encoder_layers, d, ff, false, "svg_encoder");

    if (cfg_.backbone == BackboneKind::builtin) {
        int patch_dim = cfg_.patch_size * cfg_.patch_size;
        img_patch_ = b.linear("img.patch", patch_dim, d, "image_backbone");
        img_pos_ = b.table("img.pos", cfg_.n_patches(), d, "image_backbone");
        img_stack_ = b.stack("img", cfg_.image_encoder_layers, d, ff, false, "image_backbone");
        img_proj_ = b.linear("img.proj", d, d, "image_backbone");
    }
    const int bw = cfg_.effective_backbone_width();
    adapter1_ = b.linear("adapter.l1", bw, d, "adapter");
    adapter2_ = b.linear("adapter.l2", d, d, "adapter");
    adapter3_ = b.linear("adapter.l3", d, d, "adapter");

    struct_queries_ = b.table("struct.queries", cfg_.n_paths, d, "structure_decoder");
    struct_stack_ = b.stack("struct", cfg_.structure_layers, d, ff, true, "structure_decoder");
    zp_head_ = b.linear("head.zp", d, d, "heads");
    vis_head_ = b.linear("head.vis", d, 2, "heads");

    path_stack_ = b.stack("path", cfg_.path_layers, d, ff, true, "path_decoder");
    type_head_ = b.linear("head.type", d, kTokenTypes, "heads");
    if (cfg_.decoder_mode == DecoderMode::autoregressive) {
        if (cfg_.arg_mode == ArgMode::continuous)
            arg_head_ = b.linear("head.arg", d, 1, "heads");
        else
            argdisc_head_ = b.linear("head.argdisc", d, 256, "heads");
    } else {
        par_queries_ = b.table("par.queries", cfg_.n_cmds_max, d, "path_decoder");
        if (cfg_.arg_mode == ArgMode::continuous)
            par_args_head_ = b.linear("head.par_args", d, 11, "heads");
        else
            par_args_head_ = b.linear("head.par_args_disc", d, 11 * 256, "heads");
    }
}

std::vector<int> Model::group_ids(const std::string& group) const {
    std::vector<int> ids;
    for (int i = 0; i < params_.count(); ++i)
        if (params_.group(i) == group) ids.push_back(i);
    return ids;
}

std::vector<std::string> Model::group_names() const {
    std::vector<std::string> names;
    for (int i = 0; i < params_.count(); ++i)
        if (std::find(names.begin(), names.end(), params_.group(i)) == names.end())
            names.push_back(params_.group(i));
    return names;
}

int Model::prefix_length(const TokenizedPath& target) {
    for (size_t k = 0; k < target.types.size(); ++k)
        if (target.types[k] == kEOS) return static_cast<int>(k) + 1;
    throw DecodeError("target path has no EOS", static_cast<int>(target.types.size()) - 1);
}

// ---------------------------------------------------------------------------
// Tape forwards

Node* Model::embed_sequence(Tape& t, const int16_t* types, const double* args,
                            const int* positions, int n) const {
    Node* arg_w = emb_arg_w_ >= 0 ? t.param(emb_arg_w_) : nullptr;
    Node* arg_b = emb_arg_b_ >= 0 ? t.param(emb_arg_b_) : nullptr;
    Node* arg_table = emb_arg_table_ >= 0 ? t.param(emb_arg_table_) : nullptr;
    return t.embed_tokens(types, args, positions, n, t.param(emb_type_), t.param(emb_index_),
                          arg_w, arg_b, arg_table);
}

Node* Model::svg_encode(Tape& t, const TokenizedIcon& icon, const nn::DropCtx& drop) const {
    std::vector<Node*> path_vecs;
    Node* slots = t.param(svg_slot_);
    for (int i = 0; i < icon.n_paths(); ++i) {
        if (!icon.visibility[i]) continue;
        const TokenizedPath& tp = icon.paths[i];
        int prefix = prefix_length(tp);
        // The encoder consumes only the non-pad positions; index embeddings
        // keep the positions they had in the padded layout.
        std::vector<int16_t> types;
        std::vector<double> args;
        std::vector<int> positions;
        for (int k = 0; k < prefix; ++k) {
            if (tp.types[k] == kPad) continue;
            types.push_back(tp.types[k]);
            args.push_back(tp.args[k]);
            positions.push_back(k);
        }
        Node* emb = embed_sequence(t, types.data(), args.data(), positions.data(),
                                   static_cast<int>(types.size()));
        Node* enc = nn::transformer_stack(t, emb, nullptr, svg_stage1_, cfg_.n_heads,
                                          nn::Mask::none, drop);
        Node* pooled = t.mean_rows(enc);
        path_vecs.push_back(t.add(pooled, t.slice_rows(slots, i, 1)));
    }
    if (path_vecs.empty()) throw Error("svg_encode: icon has no visible paths");
    Node* stacked = t.stack_rows(path_vecs);
    Node* enc2 =
        nn::transformer_stack(t, stacked, nullptr, svg_stage2_, cfg_.n_heads, nn::Mask::none, drop);
    return t.mean_rows(enc2);
}

namespace {

Tensor extract_patches(const Image& image, int patch) {
    int grid = image.size / patch;
    Tensor out(grid * grid, patch * patch);
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            double* dst = out.data() + size_t(gy * grid + gx) * patch * patch;
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px)
                    dst[py * patch + px] = image.v[size_t(gy * patch + py) * image.size +
                                                   (gx * patch + px)];
        }
    return out;
}

}  // namespace

Node* Model::image_encode(Tape& t, const Image& image, const nn::DropCtx& drop) const {
    if (cfg_.backbone != BackboneKind::builtin)
        throw Error("image_encode: model uses precomputed embeddings, keyed by icon id");
    if (image.size != cfg_.image_size)
        throw ShapeError("image_encode: expected " + std::to_string(cfg_.image_size) + "x" +
                         std::to_string(cfg_.image_size) + " input, got " +
                         std::to_string(image.size));
    Node* patches = t.constant(extract_patches(image, cfg_.patch_size));
    Node* x = t.add(nn::linear(t, patches, img_patch_), t.param(img_pos_));
    x = nn::transformer_stack(t, x, nullptr, img_stack_, cfg_.n_heads, nn::Mask::none, drop);
    Node* backbone = nn::linear(t, t.mean_rows(x), img_proj_);
    Node* h = t.gelu(nn::linear(t, backbone, adapter1_));
    h = t.gelu(nn::linear(t, h, adapter2_));
    return nn::linear(t, h, adapter3_);
}

Node* Model::adapt_embedding(Tape& t, const std::vector<double>& backbone_vec) const {
    const int bw = cfg_.effective_backbone_width();
    if (static_cast<int>(backbone_vec.size()) != bw)
        throw ShapeError("adapt_embedding: expected width " + std::to_string(bw));
    Tensor in(1, bw);
    std::copy(backbone_vec.begin(), backbone_vec.end(), in.data());
    Node* h = t.gelu(nn::linear(t, t.constant(std::move(in)), adapter1_));
    h = t.gelu(nn::linear(t, h, adapter2_));
    return nn::linear(t, h, adapter3_);
}

StructureNodes Model::structure_decode(Tape& t, Node* z, const nn::DropCtx& drop) const {
    if (z->rows() != 1 || z->cols() != cfg_.d_model)
        throw ShapeError("structure_decode: z must be 1 x d_model");
    Node* queries = t.param(struct_queries_);
    Node* dec =
        nn::transformer_stack(t, queries, z, struct_stack_, cfg_.n_heads, nn::Mask::none, drop);
    return {nn::linear(t, dec, zp_head_), nn::linear(t, dec, vis_head_)};
}

PathTeacherNodes Model::path_decode_teacher(Tape& t, Node* z_path, const TokenizedPath& target,
                                            int prefix_len, const nn::DropCtx& drop) const {
    if (cfg_.decoder_mode != DecoderMode::autoregressive)
        throw Error("path_decode_teacher: model is configured with the parallel decoder");
    const int n = prefix_len;
    // Shifted inputs: position k consumes target token k-1, starting from SOS.
    std::vector<int16_t> types(n);
    std::vector<double> args(n);
    types[0] = kSOS;
    args[0] = -1.0;
    for (int k = 1; k < n; ++k) {
        types[k] = target.types[k - 1];
        args[k] = target.args[k - 1];
    }
    Node* emb = embed_sequence(t, types.data(), args.data(), nullptr, n);
    Node* hidden =
        nn::transformer_stack(t, emb, z_path, path_stack_, cfg_.n_heads, nn::Mask::causal, drop);
    PathTeacherNodes out;
    out.prefix_len = n;
    out.type_logits = nn::linear(t, hidden, type_head_);
    if (cfg_.arg_mode == ArgMode::continuous)
        out.arg_values = nn::linear(t, hidden, arg_head_);
    else
        out.arg_logits = nn::linear(t, hidden, argdisc_head_);
    return out;
}

ParallelNodes Model::path_decode_parallel(Tape& t, Node* z_path, const nn::DropCtx& drop) const {
    if (cfg_.decoder_mode != DecoderMode::parallel)
        throw Error("path_decode_parallel: model is configured with the autoregressive decoder");
    Node* queries = t.param(par_queries_);
    Node* hidden =
        nn::transformer_stack(t, queries, z_path, path_stack_, cfg_.n_heads, nn::Mask::none, drop);
    ParallelNodes out;
    out.type_logits = nn::linear(t, hidden, type_head_);
    if (cfg_.arg_mode == ArgMode::continuous)
        out.arg_values = nn::linear(t, hidden, par_args_head_);
    else
        out.arg_logits = nn::linear(t, hidden, par_args_head_);
    return out;
}

// ---------------------------------------------------------------------------
// Plain inference helpers

namespace {

void ln_row(const double* x, const double* gain, const double* bias, double* y, int d) {
    double mean, rstd;
    kern::serial::layernorm_rows(x, gain, bias, y, &mean, &rstd, 1, d, 1e-5);
}

}  // namespace

std::vector<double> Model::embed_step(int16_t type, double arg, int position) const {
    Tape t(&params_);
    int pos = position;
    Node* emb = embed_sequence(t, &type, &arg, &pos, 1);
    return emb->v->a;
}

std::vector<double> Model::encode_svg(const TokenizedIcon& icon) const {
    Tape t(&params_);
    return svg_encode(t, icon)->v->a;
}

std::vector<double> Model::encode_image(const Image& image) const {
    Tape t(&params_);
    return image_encode(t, image)->v->a;
}

std::vector<double> Model::encode_precomputed(const std::vector<double>& v) const {
    Tape t(&params_);
    return adapt_embedding(t, v)->v->a;
}

void Model::structure_decode_values(const std::vector<double>& z, Tensor& path_embeddings,
                                    Tensor& visibility_logits) const {
    Tape t(&params_);
    Tensor zt(1, cfg_.d_model);
    if (z.size() != size_t(cfg_.d_model)) throw ShapeError("structure_decode: bad z width");
    std::copy(z.begin(), z.end(), zt.data());
    StructureNodes nodes = structure_decode(t, t.constant(std::move(zt)));
    path_embeddings = *nodes.path_embeddings->v;
    visibility_logits = *nodes.visibility_logits->v;
}

// Incremental autoregressive decoding state with per-layer KV caches. The
// cross-attention memory is a single vector, so softmax over it is identity
// and each layer's cross contribution reduces to a constant vector.
struct DecodeStepper {
    const Model& model;
    const ParamStore& params;
    const ModelConfig& cfg;
    int d, dh, heads;
    std::vector<Tensor> k_cache, v_cache;       // per layer, l_max x d
    std::vector<std::vector<double>> cross_add;  // per layer, d
    int t = 0;

    DecodeStepper(const Model& m, const ParamStore& p, const nn::StackIds& stack,
                  const double* z_path)
        : model(m), params(p), cfg(m.config()), d(cfg.d_model), dh(d / cfg.n_heads),
          heads(cfg.n_heads), stack_(stack) {
        const int l_max = cfg.l_max();
        for (const nn::BlockIds& blk : stack_.blocks) {
            k_cache.emplace_back(l_max, d);
            v_cache.emplace_back(l_max, d);
            // v_m = ln? No: cross keys/values come straight from the memory.
            std::vector<double> vm(d), out(d);
            kern::serial::gemm_nn(z_path, params.value(blk.cross_attn.v.w).data(), vm.data(), 1, d,
                                  d);
            kern::serial::add(vm.data(), params.value(blk.cross_attn.v.b).data(), vm.data(), d);
            kern::serial::gemm_nn(vm.data(), params.value(blk.cross_attn.o.w).data(), out.data(),
                                  1, d, d);
            kern::serial::add(out.data(), params.value(blk.cross_attn.o.b).data(), out.data(), d);
            cross_add.push_back(std::move(out));
        }
    }

    void linear_row(const double* x, const nn::LinearIds& ids, double* y, int in, int out) const {
        kern::serial::gemm_nn(x, params.value(ids.w).data(), y, 1, in, out);
        kern::serial::add(y, params.value(ids.b).data(), y, out);
    }

    // Feeds one input token; returns the hidden state after the final norm.
    std::vector<double> step(int16_t type, double arg, int position) {
        std::vector<double> x = model.embed_step(type, arg, position);
        std::vector<double> xn(d), q(d), k(d), v(d), ctx(d), tmp(std::max(d, cfg.d_ff));
        for (size_t l = 0; l < stack_.blocks.size(); ++l) {
            const nn::BlockIds& blk = stack_.blocks[l];
            ln_row(x.data(), params.value(blk.ln1.gain).data(), params.value(blk.ln1.bias).data(),
                   xn.data(), d);
            linear_row(xn.data(), blk.self_attn.q, q.data(), d, d);
            linear_row(xn.data(), blk.self_attn.k, k.data(), d, d);
            linear_row(xn.data(), blk.self_attn.v, v.data(), d, d);
            std::copy_n(k.data(), d, k_cache[l].data() + size_t(t) * d);
            std::copy_n(v.data(), d, v_cache[l].data() + size_t(t) * d);
            const double scale = 1.0 / std::sqrt(double(dh));
            std::vector<double> scores(t + 1);
            for (int h = 0; h < heads; ++h) {
                const int off = h * dh;
                for (int j = 0; j <= t; ++j) {
                    double s = 0.0;
                    const double* kj = k_cache[l].data() + size_t(j) * d + off;
                    for (int e = 0; e < dh; ++e) s += q[off + e] * kj[e];
                    scores[j] = s * scale;
                }
                kern::serial::softmax_rows(scores.data(), 1, t + 1, nullptr);
                for (int e = 0; e < dh; ++e) ctx[off + e] = 0.0;
                for (int j = 0; j <= t; ++j) {
                    const double* vj = v_cache[l].data() + size_t(j) * d + off;
                    for (int e = 0; e < dh; ++e) ctx[off + e] += scores[j] * vj[e];
                }
            }
            linear_row(ctx.data(), blk.self_attn.o, tmp.data(), d, d);
            kern::serial::add(x.data(), tmp.data(), x.data(), d);
            kern::serial::add(x.data(), cross_add[l].data(), x.data(), d);

            ln_row(x.data(), params.value(blk.ln3.gain).data(), params.value(blk.ln3.bias).data(),
                   xn.data(), d);
            std::vector<double> h1(cfg.d_ff);
            linear_row(xn.data(), blk.ffn1, h1.data(), d, cfg.d_ff);
            kern::serial::gelu(h1.data(), h1.data(), h1.size());
            linear_row(h1.data(), blk.ffn2, tmp.data(), cfg.d_ff, d);
            kern::serial::add(x.data(), tmp.data(), x.data(), d);
        }
        ++t;
        std::vector<double> out(d);
        ln_row(x.data(), params.value(stack_.final_ln.gain).data(),
               params.value(stack_.final_ln.bias).data(), out.data(), d);
        return out;
    }

  private:
    const nn::StackIds& stack_;
};

namespace {

struct HeadOut {
    std::array<double, kTokenTypes> type_logits;
    double arg_value;  // continuous head or dequantized discrete argmax
};

}  // namespace

GreedyPath Model::path_decode_greedy(const double* z_path) const {
    if (cfg_.decoder_mode != DecoderMode::autoregressive) return path_decode_parallel_greedy(z_path);
    const int l_max = cfg_.l_max();
    GreedyPath out;
    out.tokens = TokenizedPath::padded(l_max);
    out.tokens.types[0] = kSOS;

    DecodeStepper stepper(*this, params_, path_stack_, z_path);
    auto heads_at = [&](int16_t prev_type, double prev_arg, int pos) {
        std::vector<double> h = stepper.step(prev_type, prev_arg, pos);
        HeadOut ho{};
        std::vector<double> logits(kTokenTypes);
        stepper.linear_row(h.data(), type_head_, logits.data(), cfg_.d_model, kTokenTypes);
        std::copy_n(logits.data(), kTokenTypes, ho.type_logits.data());
        if (cfg_.arg_mode == ArgMode::continuous) {
            double a;
            stepper.linear_row(h.data(), arg_head_, &a, cfg_.d_model, 1);
            ho.arg_value = std::clamp(a, 0.0, 1.0);
        } else {
            std::vector<double> alog(256);
            stepper.linear_row(h.data(), argdisc_head_, alog.data(), cfg_.d_model, 256);
            int best = 0;
            for (int i = 1; i < 256; ++i)
                if (alog[i] > alog[best]) best = i;
            ho.arg_value = dequantize8(best);
        }
        return ho;
    };

    int args_left = 0, fill_left = 0, cmds = 0, last_arity = 0;
    std::vector<double> coords;
    int16_t pending_cmd = 0;
    for (int k = 1; k < l_max; ++k) {
        HeadOut ho = heads_at(out.tokens.types[k - 1], out.tokens.args[k - 1], k);
        if (args_left > 0) {
            out.tokens.types[k] = kArg;
            out.tokens.args[k] = ho.arg_value;
            coords.push_back(ho.arg_value);
            if (--args_left == 0) {
                fill_left = kCmdWidth - 1 - last_arity;
                out.path.commands.push_back([&] {
                    switch (pending_cmd) {
                        case kTokM: return Command::move_to({coords[0], coords[1]});
                        case kTokL: return Command::line_to({coords[0], coords[1]});
                        default:
                            return Command::cubic({coords[0], coords[1]}, {coords[2], coords[3]},
                                                  {coords[4], coords[5]});
                    }
                }());
            }
            continue;
        }
        if (fill_left > 0) {
            --fill_left;  // forced intra-block padding, nothing predicted here
            continue;
        }
        // Command boundary: mask to the legal token set.
        bool can_emit_cmd = cmds < cfg_.n_cmds_max;
        bool can_eos = cmds >= 1 || !can_emit_cmd;
        int best = -1;
        for (int16_t cand : {kTokM, kTokL, kTokC}) {
            if (!can_emit_cmd) break;
            if (best < 0 || ho.type_logits[cand] > ho.type_logits[best]) best = cand;
        }
        if (can_eos && (best < 0 || ho.type_logits[kEOS] > ho.type_logits[best])) best = kEOS;
        if (best == kEOS) {
            out.tokens.types[k] = kEOS;
            break;
        }
        pending_cmd = static_cast<int16_t>(best);
        out.tokens.types[k] = pending_cmd;
        last_arity = pending_cmd == kTokC ? 6 : 2;
        args_left = last_arity;
        coords.clear();
        ++cmds;
    }
    return out;
}

Tensor Model::path_decode_forced(const double* z_path, const TokenizedPath& tokens,
                                 int prefix_len) const {
    DecodeStepper stepper(*this, params_, path_stack_, z_path);
    Tensor logits(prefix_len, kTokenTypes);
    for (int k = 0; k < prefix_len; ++k) {
        int16_t prev = k == 0 ? kSOS : tokens.types[k - 1];
        double arg = k == 0 ? -1.0 : tokens.args[k - 1];
        std::vector<double> h = stepper.step(prev, arg, k);
        stepper.linear_row(h.data(), type_head_, logits.data() + size_t(k) * kTokenTypes,
                           cfg_.d_model, kTokenTypes);
    }
    return logits;
}

GreedyPath Model::path_decode_parallel_greedy(const double* z_path) const {
    Tape t(&params_);
    Tensor zt(1, cfg_.d_model);
    std::copy_n(z_path, cfg_.d_model, zt.data());
    ParallelNodes nodes = path_decode_parallel(t, t.constant(std::move(zt)));
    const Tensor& types = *nodes.type_logits->v;
    const bool discrete = cfg_.arg_mode == ArgMode::discrete256;

    GreedyPath out;
    out.tokens = TokenizedPath::padded(cfg_.l_max());
    out.tokens.types[0] = kSOS;
    int n_cmds = 0;
    for (int s = 0; s < cfg_.n_cmds_max; ++s) {
        // Command-unit decoding: only M/L/C/EOS are meaningful classes.
        int best = kTokM;
        for (int16_t cand : {kTokL, kTokC, kEOS}) {
            if (s == 0 && cand == kEOS) continue;  // at least one command
            if (types.at(s, cand) > types.at(s, best)) best = cand;
        }
        if (best == kEOS) break;
        int arity = best == kTokC ? 6 : 2;
        double coords[6];
        for (int a = 0; a < arity; ++a) {
            if (discrete) {
                const double* row = nodes.arg_logits->v->data() +
                                    size_t(s) * nodes.arg_logits->cols() + size_t(a) * 256;
                int q = 0;
                for (int i = 1; i < 256; ++i)
                    if (row[i] > row[q]) q = i;
                coords[a] = dequantize8(q);
            } else {
                coords[a] = std::clamp(nodes.arg_values->v->at(s, a), 0.0, 1.0);
            }
        }
        Command cmd = best == kTokM   ? Command::move_to({coords[0], coords[1]})
                      : best == kTokL ? Command::line_to({coords[0], coords[1]})
                                      : Command::cubic({coords[0], coords[1]},
                                                       {coords[2], coords[3]},
                                                       {coords[4], coords[5]});
        out.path.commands.push_back(cmd);
        EncodedCommand enc = encode_command(cmd);
        int base = 1 + n_cmds * kCmdWidth;
        for (int j = 0; j < kCmdWidth; ++j) {
            out.tokens.types[base + j] = enc.types[j];
            out.tokens.args[base + j] = enc.args[j];
        }
        ++n_cmds;
    }
    out.tokens.types[1 + n_cmds * kCmdWidth] = kEOS;
    return out;
}

VectorizeResult Model::vectorize(const Image& image) const {
    return vectorize_from_z(encode_image(image));
}

VectorizeResult Model::vectorize_from_z(const std::vector<double>& z) const {
    Tensor z_p, vis;
    structure_decode_values(z, z_p, vis);

    TokenizedIcon icon;
    icon.paths.assign(cfg_.n_paths, TokenizedPath::padded(cfg_.l_max()));
    icon.visibility.assign(cfg_.n_paths, 0);
    for (int i = 0; i < cfg_.n_paths; ++i) {
        if (vis.at(i, 1) <= vis.at(i, 0)) continue;
        icon.visibility[i] = 1;
        icon.paths[i] = path_decode_greedy(z_p.data() + size_t(i) * cfg_.d_model).tokens;
    }
    VectorizeResult out;
    out.no_visible_paths = icon.visible_count() == 0;
    out.script = decode_icon(icon, DecodeMode::lenient);
    std::erase_if(out.script.paths, [](const Path& p) { return p.commands.empty(); });
    return out;
}

// ---------------------------------------------------------------------------
// Embedding file

const std::vector<double>& EmbeddingFile::lookup(const std::string& icon_id) const {
    auto it = vectors.find(icon_id);
    if (it == vectors.end()) throw IoError("no precomputed embedding for icon id '" + icon_id + "'");
    return it->second;
}

namespace {
constexpr char kEmbMagic[8] = {'I', 'V', 'E', 'M', 'B', '0', '0', '1'};
constexpr size_t kEmbIdBytes = 64;
}  // namespace

void EmbeddingFile::write(const std::string& path, int width,
                          const std::vector<std::pair<std::string, std::vector<double>>>& items) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write embeddings " + path);
    f.write(kEmbMagic, 8);
    json header{{"width", width}, {"count", items.size()}};
    std::string hj = header.dump();
    uint32_t len = static_cast<uint32_t>(hj.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(hj.data(), len);
    for (const auto& [id, vec] : items) {
        if (static_cast<int>(vec.size()) != width) throw ShapeError("embedding width mismatch for " + id);
        if (id.size() >= kEmbIdBytes) throw IoError("icon id too long: " + id);
        char idbuf[kEmbIdBytes] = {};
        std::memcpy(idbuf, id.data(), id.size());
        f.write(idbuf, kEmbIdBytes);
        std::vector<float> fv(vec.begin(), vec.end());
        f.write(reinterpret_cast<const char*>(fv.data()),
                static_cast<std::streamsize>(fv.size() * 4));
    }
    if (!f) throw IoError("embedding write failed: " + path);
}

EmbeddingFile EmbeddingFile::read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read embeddings " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kEmbMagic, 8) != 0) throw IoError("not an embedding file: " + path);
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string hj(len, '\0');
    f.read(hj.data(), len);
    EmbeddingFile out;
    size_t count = 0;
    try {
        json j = json::parse(hj);
        out.width = j.at("width").get<int>();
        count = j.at("count").get<size_t>();
    } catch (const json::exception& e) {
        throw IoError(std::string("embedding header: ") + e.what());
    }
    for (size_t i = 0; i < count; ++i) {
        char idbuf[kEmbIdBytes + 1] = {};
        f.read(idbuf, kEmbIdBytes);
        std::vector<float> fv(out.width);
        f.read(reinterpret_cast<char*>(fv.data()), static_cast<std::streamsize>(fv.size() * 4));
        if (!f) throw IoError("truncated embedding file: " + path);
        out.vectors[idbuf] = std::vector<double>(fv.begin(), fv.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {
constexpr char kCkptMagic[8] = {'I', 'V', 'C', 'K', 'P', 'T', '0', '1'};

void write_tensor(std::ofstream& f, const std::string& name, const Tensor& t) {
    uint16_t nl = static_cast<uint16_t>(name.size());
    f.write(reinterpret_cast<const char*>(&nl), 2);
    f.write(name.data(), nl);
    uint32_t r = t.rows, c = t.cols;
    f.write(reinterpret_cast<const char*>(&r), 4);
    f.write(reinterpret_cast<const char*>(&c), 4);
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
}

std::pair<std::string, Tensor> read_tensor(std::ifstream& f) {
    uint16_t nl = 0;
    f.read(reinterpret_cast<char*>(&nl), 2);
    std::string name(nl, '\0');
    f.read(name.data(), nl);
    uint32_t r = 0, c = 0;
    f.read(reinterpret_cast<char*>(&r), 4);
    f.read(reinterpret_cast<char*>(&c), 4);
    Tensor t(static_cast<int>(r), static_cast<int>(c));
    f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
    return {std::move(name), std::move(t)};
}
}  // namespace

Checkpoint Checkpoint::from_model(const Model& model) {
    Checkpoint ck;
    ck.config = model.config();
    const ParamStore& p = model.params();
    for (int i = 0; i < p.count(); ++i) ck.tensors[p.name(i)] = p.value(i);
    return ck;
}

void Checkpoint::write(const std::string& path) const {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write checkpoint " + path);
        f.write(kCkptMagic, 8);
        json header{{"schema_version", 1},
                    {"model", config.to_json()},
                    {"has_optimizer", has_optimizer},
                    {"adam_step", adam_step}};
        std::string hj = header.dump();
        uint32_t len = static_cast<uint32_t>(hj.size());
        f.write(reinterpret_cast<const char*>(&len), 4);
        f.write(hj.data(), len);
        uint32_t count = static_cast<uint32_t>(tensors.size() + adam_m.size() + adam_v.size());
        f.write(reinterpret_cast<const char*>(&count), 4);
        for (const auto& [name, t] : tensors) write_tensor(f, name, t);
        for (const auto& [name, t] : adam_m) write_tensor(f, "adam.m." + name, t);
        for (const auto& [name, t] : adam_v) write_tensor(f, "adam.v." + name, t);
        if (!f) throw IoError("checkpoint write failed: " + path);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw IoError("not a checkpoint file: " + path);
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string hj(len, '\0');
    f.read(hj.data(), len);
    Checkpoint ck;
    try {
        json j = json::parse(hj);
        if (j.at("schema_version").get<int>() != 1)
            throw IoError("unsupported checkpoint schema version");
        ck.config = ModelConfig::from_json(j.at("model"));
        ck.has_optimizer = j.value("has_optimizer", false);
        ck.adam_step = j.value("adam_step", int64_t{0});
    } catch (const json::exception& e) {
        throw IoError(std::string("checkpoint header: ") + e.what());
    }
    uint32_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 4);
    for (uint32_t i = 0; i < count; ++i) {
        auto [name, t] = read_tensor(f);
        if (!f) throw IoError("truncated checkpoint: " + path);
        if (name.starts_with("adam.m."))
            ck.adam_m[name.substr(7)] = std::move(t);
        else if (name.starts_with("adam.v."))
            ck.adam_v[name.substr(7)] = std::move(t);
        else
            ck.tensors[std::move(name)] = std::move(t);
    }
    return ck;
}

void Checkpoint::load_into(Model& model) const {
    if (!config.shape_equal(model.config()))
        throw TrainError("checkpoint config does not match the requested model config");
    ParamStore& p = model.params();
    if (static_cast<size_t>(p.count()) != tensors.size())
        throw TrainError("checkpoint mismatch: expected " + std::to_string(p.count()) +
                         " tensors, file has " + std::to_string(tensors.size()));
    for (int i = 0; i < p.count(); ++i) {
        auto it = tensors.find(p.name(i));
        if (it == tensors.end()) throw TrainError("checkpoint missing tensor " + p.name(i));
        if (!p.value(i).same_shape(it->second))
            throw TrainError("checkpoint tensor shape mismatch for " + p.name(i));
        p.value(i) = it->second;
    }
}

Model Checkpoint::restore() const {
    Model model(config, 0);
    load_into(model);
    return model;
}

}  // namespace iconvec
