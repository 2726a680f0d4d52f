#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tqa/nn/tape.hpp"

namespace tqa::nn {

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_heads = 2;
    int scorer_layers = 2;   // relevance-scorer encoder depth
    int encoder_layers = 2;  // QA encoder depth
    int decoder_layers = 2;  // QA decoder depth
    int ff_mult = 4;
    bool positional = true;  // sinusoidal position signal on/off
    double init_std = 0.02;
    std::uint64_t init_seed = 1;

    int ff_dim() const { return d_model * ff_mult; }
    int head_dim() const { return d_model / n_heads; }
};

struct LayerNormParams {
    Param* gamma = nullptr;
    Param* beta = nullptr;
};

struct AttentionParams {
    Param *wq = nullptr, *bq = nullptr;
    Param *wk = nullptr, *bk = nullptr;
    Param *wv = nullptr, *bv = nullptr;
    Param *wo = nullptr, *bo = nullptr;
};

struct FeedForwardParams {
    Param *w1 = nullptr, *b1 = nullptr;
    Param *w2 = nullptr, *b2 = nullptr;
};

struct EncoderLayerParams {
    LayerNormParams ln1;
    AttentionParams attn;
    LayerNormParams ln2;
    FeedForwardParams ff;
};

struct DecoderLayerParams {
    LayerNormParams ln1;
    AttentionParams self_attn;
    LayerNormParams ln2;
    AttentionParams cross_attn;
    LayerNormParams ln3;
    FeedForwardParams ff;
};

struct EncoderParams {
    std::vector<EncoderLayerParams> layers;
    LayerNormParams final_ln;
};

struct DecoderParams {
    std::vector<DecoderLayerParams> layers;
    LayerNormParams final_ln;
};

EncoderParams make_encoder(ParamStore& store, const std::string& prefix, const ModelConfig& cfg,
                           int n_layers);
DecoderParams make_decoder(ParamStore& store, const std::string& prefix, const ModelConfig& cfg);

/// Gaussian(0, init_std) init for projection/embedding weights, identity
/// layer norms, zero biases. Deterministic under cfg.init_seed.
void init_params(ParamStore& store, const ModelConfig& cfg);

/// Copies every "src_prefix.*" parameter value into its "dst_prefix.*"
/// counterpart (used to start the scorer encoder from the QA encoder's
/// initial weights).
void copy_params(ParamStore& store, const std::string& src_prefix, const std::string& dst_prefix);

/// Sinusoidal position signal, rows [first_pos, first_pos + len).
Mat positional_encoding(int len, int d_model, int first_pos = 0);

/// Deduplicates Tape::param nodes so one parameter appears once per tape.
class ForwardContext {
public:
    explicit ForwardContext(Tape& tape) : tape_(tape) {}
    Tape& tape() { return tape_; }
    Var var(Param& p);

private:
    Tape& tape_;
    std::unordered_map<Param*, Var> cache_;
};

/// Token embedding scaled by sqrt(d) plus (optionally) the position signal.
/// first_pos offsets the position index (used when decoding stepwise).
Var embed_sequence(ForwardContext& ctx, const std::vector<int>& tokens, Param& embedding,
                   const ModelConfig& cfg, int first_pos = 0);

/// Multi-head attention. q_in attends to kv_in; causal restricts position i
/// to keys j <= i (valid only when q_in == kv_in shape-wise).
Var attention(ForwardContext& ctx, Var q_in, Var kv_in, const AttentionParams& p,
              const ModelConfig& cfg, bool causal);

/// Pre-norm transformer encoder stack; shape preserving, full self-attention.
Var encode(ForwardContext& ctx, Var x, const EncoderParams& enc, const ModelConfig& cfg);

/// Pre-norm decoder stack with causal self-attention and cross-attention.
Var decode(ForwardContext& ctx, Var x, Var memory, const DecoderParams& dec,
           const ModelConfig& cfg);

/// Output logits with the embedding matrix as the (tied) output projection.
Var tied_logits(ForwardContext& ctx, Var h, Param& embedding);

}  // namespace tqa::nn
