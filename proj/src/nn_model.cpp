#include "tqa/nn/model.hpp"

#include <cmath>
#include <random>

namespace tqa::nn {

namespace {

LayerNormParams make_ln(ParamStore& store, const std::string& prefix, int d) {
    LayerNormParams ln;
    ln.gamma = &store.create(prefix + ".gamma", 1, d, /*no_decay=*/true);
    ln.beta = &store.create(prefix + ".beta", 1, d, /*no_decay=*/true);
    return ln;
}

AttentionParams make_attn(ParamStore& store, const std::string& prefix, int d) {
    AttentionParams a;
    a.wq = &store.create(prefix + ".wq", d, d);
    a.bq = &store.create(prefix + ".bq", 1, d, true);
    a.wk = &store.create(prefix + ".wk", d, d);
    a.bk = &store.create(prefix + ".bk", 1, d, true);
    a.wv = &store.create(prefix + ".wv", d, d);
    a.bv = &store.create(prefix + ".bv", 1, d, true);
    a.wo = &store.create(prefix + ".wo", d, d);
    a.bo = &store.create(prefix + ".bo", 1, d, true);
    return a;
}

FeedForwardParams make_ff(ParamStore& store, const std::string& prefix, int d, int ff) {
    FeedForwardParams f;
    f.w1 = &store.create(prefix + ".w1", d, ff);
    f.b1 = &store.create(prefix + ".b1", 1, ff, true);
    f.w2 = &store.create(prefix + ".w2", ff, d);
    f.b2 = &store.create(prefix + ".b2", 1, d, true);
    return f;
}

Var linear(ForwardContext& ctx, Var x, Param& w, Param& b) {
    Tape& t = ctx.tape();
    return t.add_rowvec(t.matmul(x, ctx.var(w)), ctx.var(b));
}

Var feed_forward(ForwardContext& ctx, Var x, const FeedForwardParams& p) {
    Tape& t = ctx.tape();
    return linear(ctx, t.gelu(linear(ctx, x, *p.w1, *p.b1)), *p.w2, *p.b2);
}

Var layer_norm(ForwardContext& ctx, Var x, const LayerNormParams& ln) {
    return ctx.tape().layer_norm(x, ctx.var(*ln.gamma), ctx.var(*ln.beta));
}

}  // namespace

EncoderParams make_encoder(ParamStore& store, const std::string& prefix, const ModelConfig& cfg,
                           int n_layers) {
    EncoderParams enc;
    for (int l = 0; l < n_layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        EncoderLayerParams layer;
        layer.ln1 = make_ln(store, lp + ".ln1", cfg.d_model);
        layer.attn = make_attn(store, lp + ".attn", cfg.d_model);
        layer.ln2 = make_ln(store, lp + ".ln2", cfg.d_model);
        layer.ff = make_ff(store, lp + ".ff", cfg.d_model, cfg.ff_dim());
        enc.layers.push_back(layer);
    }
    enc.final_ln = make_ln(store, prefix + ".final_ln", cfg.d_model);
    return enc;
}

DecoderParams make_decoder(ParamStore& store, const std::string& prefix, const ModelConfig& cfg) {
    DecoderParams dec;
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        DecoderLayerParams layer;
        layer.ln1 = make_ln(store, lp + ".ln1", cfg.d_model);
        layer.self_attn = make_attn(store, lp + ".self", cfg.d_model);
        layer.ln2 = make_ln(store, lp + ".ln2", cfg.d_model);
        layer.cross_attn = make_attn(store, lp + ".cross", cfg.d_model);
        layer.ln3 = make_ln(store, lp + ".ln3", cfg.d_model);
        layer.ff = make_ff(store, lp + ".ff", cfg.d_model, cfg.ff_dim());
        dec.layers.push_back(layer);
    }
    dec.final_ln = make_ln(store, prefix + ".final_ln", cfg.d_model);
    return dec;
}

void init_params(ParamStore& store, const ModelConfig& cfg) {
    std::mt19937_64 rng(cfg.init_seed);
    std::normal_distribution<double> gauss(0.0, cfg.init_std);
    for (Param* p : store.all()) {
        const bool is_gamma = p->name.size() > 6 &&
                              p->name.compare(p->name.size() - 6, 6, ".gamma") == 0;
        const bool is_bias = p->no_decay && !is_gamma;
        if (is_gamma) {
            p->value.setOnes();
        } else if (is_bias) {
            p->value.setZero();
        } else {
            for (long i = 0; i < p->value.rows(); ++i) {
                for (long j = 0; j < p->value.cols(); ++j) {
                    p->value(i, j) = gauss(rng);
                }
            }
        }
    }
}

void copy_params(ParamStore& store, const std::string& src_prefix,
                 const std::string& dst_prefix) {
    for (Param* p : store.all()) {
        if (p->name.rfind(src_prefix + ".", 0) != 0) continue;
        const std::string dst = dst_prefix + p->name.substr(src_prefix.size());
        store.at(dst).value = p->value;
    }
}

Mat positional_encoding(int len, int d_model, int first_pos) {
    Mat pe(len, d_model);
    for (int p = 0; p < len; ++p) {
        const double pos = static_cast<double>(p + first_pos);
        for (int i = 0; i < d_model; i += 2) {
            const double rate = std::pow(10000.0, -static_cast<double>(i) / d_model);
            pe(p, i) = std::sin(pos * rate);
            if (i + 1 < d_model) pe(p, i + 1) = std::cos(pos * rate);
        }
    }
    return pe;
}

Var ForwardContext::var(Param& p) {
    auto it = cache_.find(&p);
    if (it != cache_.end()) return it->second;
    Var v = tape_.param(p);
    cache_.emplace(&p, v);
    return v;
}

Var embed_sequence(ForwardContext& ctx, const std::vector<int>& tokens, Param& embedding,
                   const ModelConfig& cfg, int first_pos) {
    Tape& t = ctx.tape();
    Var e = t.gather_rows(ctx.var(embedding), tokens);
    e = t.scalar_mul(e, std::sqrt(static_cast<double>(cfg.d_model)));
    if (cfg.positional) {
        e = t.add(e, t.constant(positional_encoding(static_cast<int>(tokens.size()),
                                                    cfg.d_model, first_pos)));
    }
    return e;
}

Var attention(ForwardContext& ctx, Var q_in, Var kv_in, const AttentionParams& p,
              const ModelConfig& cfg, bool causal) {
    Tape& t = ctx.tape();
    const int dk = cfg.head_dim();
    Var q = linear(ctx, q_in, *p.wq, *p.bq);
    Var k = linear(ctx, kv_in, *p.wk, *p.bk);
    Var v = linear(ctx, kv_in, *p.wv, *p.bv);

    Var mask;
    if (causal) {
        const long n = t.val(q).rows();
        Mat m = Mat::Zero(n, n);
        for (long i = 0; i < n; ++i) {
            for (long j = i + 1; j < n; ++j) m(i, j) = -1e30;
        }
        mask = t.constant(std::move(m));
    }

    std::vector<Var> heads;
    for (int h = 0; h < cfg.n_heads; ++h) {
        Var qh = t.cols(q, h * dk, dk);
        Var kh = t.cols(k, h * dk, dk);
        Var vh = t.cols(v, h * dk, dk);
        Var scores = t.scalar_mul(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(dk));
        if (causal) scores = t.add(scores, mask);
        heads.push_back(t.matmul(t.softmax_rows(scores), vh));
    }
    return linear(ctx, t.hcat(heads), *p.wo, *p.bo);
}

Var encode(ForwardContext& ctx, Var x, const EncoderParams& enc, const ModelConfig& cfg) {
    Tape& t = ctx.tape();
    for (const auto& layer : enc.layers) {
        Var normed = layer_norm(ctx, x, layer.ln1);
        x = t.add(x, attention(ctx, normed, normed, layer.attn, cfg, false));
        x = t.add(x, feed_forward(ctx, layer_norm(ctx, x, layer.ln2), layer.ff));
    }
    return layer_norm(ctx, x, enc.final_ln);
}

Var decode(ForwardContext& ctx, Var x, Var memory, const DecoderParams& dec,
           const ModelConfig& cfg) {
    Tape& t = ctx.tape();
    for (const auto& layer : dec.layers) {
        Var normed = layer_norm(ctx, x, layer.ln1);
        x = t.add(x, attention(ctx, normed, normed, layer.self_attn, cfg, true));
        x = t.add(x, attention(ctx, layer_norm(ctx, x, layer.ln2), memory, layer.cross_attn,
                               cfg, false));
        x = t.add(x, feed_forward(ctx, layer_norm(ctx, x, layer.ln3), layer.ff));
    }
    return layer_norm(ctx, x, dec.final_ln);
}

Var tied_logits(ForwardContext& ctx, Var h, Param& embedding) {
    Tape& t = ctx.tape();
    return t.matmul(h, t.transpose(ctx.var(embedding)));
}

}  // namespace tqa::nn
