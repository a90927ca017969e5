#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iconvec/dataset.h"
#include "iconvec/nn.h"
#include "iconvec/tape.h"
#include "iconvec/tokenizer.h"

namespace iconvec {

enum class ArgMode { continuous, discrete256 };
enum class DecoderMode { autoregressive, parallel };
enum class BackboneKind { builtin, precomputed };

struct ModelConfig {
    int d_model = 256;
    int d_ff = 512;
    int n_heads = 8;
    int structure_layers = 4;
    int path_layers = 12;
    int svg_encoder_layers = 4;
    int image_encoder_layers = 4;
    int n_paths = 8;
    int n_cmds_max = 32;
    int image_size = 64;
    int patch_size = 8;
    ArgMode arg_mode = ArgMode::continuous;
    DecoderMode decoder_mode = DecoderMode::autoregressive;
    BackboneKind backbone = BackboneKind::builtin;
    int backbone_width = 0;  // precomputed-embedding width; 0 means d_model
    bool freeze_backbone = false;
    double dropout = 0.1;

    int l_max() const { return 2 + kCmdWidth * n_cmds_max; }
    TokenLimits limits() const { return {n_paths, n_cmds_max}; }
    int n_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
    int effective_backbone_width() const { return backbone_width > 0 ? backbone_width : d_model; }

    // Small preset for CI and overfit runs.
    static ModelConfig desk();

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    // Equality of every shape-determining field; freeze_backbone and dropout
    // are training behavior and may differ between runs.
    bool shape_equal(const ModelConfig& o) const;
    bool operator==(const ModelConfig&) const = default;
};

// Per-icon loss inputs produced by the decoders during teacher forcing.
struct StructureNodes {
    Node* path_embeddings = nullptr;   // n_paths x d_model
    Node* visibility_logits = nullptr; // n_paths x 2
};

struct PathTeacherNodes {
    Node* type_logits = nullptr;  // prefix x 6
    Node* arg_values = nullptr;   // prefix x 1 (continuous mode)
    Node* arg_logits = nullptr;   // prefix x 256 (discrete mode)
    int prefix_len = 0;
};

struct ParallelNodes {
    Node* type_logits = nullptr;  // n_cmds_max x 6
    Node* arg_values = nullptr;   // n_cmds_max x 11 (continuous mode)
    Node* arg_logits = nullptr;   // n_cmds_max x 11*256 (discrete mode)
};

struct GreedyPath {
    TokenizedPath tokens;  // padded to l_max, strict-decodable by construction
    Path path;
};

struct VectorizeResult {
    SvgScript script;
    bool no_visible_paths = false;
};

// Precomputed image-embedding file: per-icon `icon_id -> float vector` with
// the width declared in the header.
struct EmbeddingFile {
    int width = 0;
    std::map<std::string, std::vector<double>> vectors;

    const std::vector<double>& lookup(const std::string& icon_id) const;
    static EmbeddingFile read(const std::string& path);
    static void write(const std::string& path, int width,
                      const std::vector<std::pair<std::string, std::vector<double>>>& items);
};

class Model {
  public:
    Model(const ModelConfig& cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::vector<int> group_ids(const std::string& group) const;
    std::vector<std::string> group_names() const;

    // --- tape forwards (training and whole-tape inference) ---
    Node* embed_sequence(Tape& t, const int16_t* types, const double* args, const int* positions,
                         int n) const;
    // Two-stage encoder over the visible slots; throws on all-invisible.
    Node* svg_encode(Tape& t, const TokenizedIcon& icon, const nn::DropCtx& drop = {}) const;
    Node* image_encode(Tape& t, const Image& image, const nn::DropCtx& drop = {}) const;
    Node* adapt_embedding(Tape& t, const std::vector<double>& backbone_vec) const;
    StructureNodes structure_decode(Tape& t, Node* z, const nn::DropCtx& drop = {}) const;
    PathTeacherNodes path_decode_teacher(Tape& t, Node* z_path, const TokenizedPath& target,
                                         int prefix_len, const nn::DropCtx& drop = {}) const;
    ParallelNodes path_decode_parallel(Tape& t, Node* z_path, const nn::DropCtx& drop = {}) const;

    // --- plain inference ---
    std::vector<double> embed_step(int16_t type, double arg, int position) const;
    std::vector<double> encode_svg(const TokenizedIcon& icon) const;           // z
    std::vector<double> encode_image(const Image& image) const;                // z_I (builtin)
    std::vector<double> encode_precomputed(const std::vector<double>& v) const;
    void structure_decode_values(const std::vector<double>& z, Tensor& path_embeddings,
                                 Tensor& visibility_logits) const;
    // Grammar-masked greedy decoding (autoregressive mode), incremental with
    // a KV cache. Output always strict-decodes.
    GreedyPath path_decode_greedy(const double* z_path) const;
    // Same stepping over a fixed token sequence; returns the type logits per
    // position (used to cross-check against the teacher forward).
    Tensor path_decode_forced(const double* z_path, const TokenizedPath& tokens,
                              int prefix_len) const;
    GreedyPath path_decode_parallel_greedy(const double* z_path) const;
    // Full pipeline: encode, structure-decode, keep visible slots, greedy
    // decode each, lenient decode, drop empty paths.
    VectorizeResult vectorize(const Image& image) const;
    VectorizeResult vectorize_from_z(const std::vector<double>& z) const;

    // Number of teacher positions for a target row: EOS index + 1.
    static int prefix_length(const TokenizedPath& target);

  private:
    friend struct Checkpoint;
    void register_params(uint64_t seed);

    ModelConfig cfg_;
    ParamStore params_;

    // parameter ids
    int emb_type_ = -1, emb_index_ = -1, emb_arg_w_ = -1, emb_arg_b_ = -1, emb_arg_table_ = -1;
    nn::StackIds svg_stage1_, svg_stage2_;
    int svg_slot_ = -1;
    nn::LinearIds img_patch_, img_proj_;
    int img_pos_ = -1;
    nn::StackIds img_stack_;
    nn::LinearIds adapter1_, adapter2_, adapter3_;
    int struct_queries_ = -1;
    nn::StackIds struct_stack_;
    nn::LinearIds zp_head_, vis_head_;
    nn::StackIds path_stack_;
    nn::LinearIds type_head_, arg_head_, argdisc_head_;
    int par_queries_ = -1;
    nn::LinearIds par_args_head_;
};

// Opaque checkpoint container: full ModelConfig, schema version, every
// parameter tensor, and (optionally) optimizer state. Writes are atomic
// (temp file + rename).
struct Checkpoint {
    ModelConfig config;
    std::map<std::string, Tensor> tensors;
    bool has_optimizer = false;
    int64_t adam_step = 0;
    std::map<std::string, Tensor> adam_m, adam_v;

    static Checkpoint read(const std::string& path);
    void write(const std::string& path) const;

    static Checkpoint from_model(const Model& model);
    // Builds the model from the stored config; every parameter must be
    // present with the exact shape, otherwise this throws TrainError.
    Model restore() const;
    // Loads this checkpoint's tensors into an already-built model whose
    // config is shape-compatible (freeze/dropout may differ).
    void load_into(Model& model) const;
};

}  // namespace iconvec
