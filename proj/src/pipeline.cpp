#include "tqa/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "tqa/highlight.hpp"

namespace tqa {

using nn::ForwardContext;
using nn::Mat;
using nn::Tape;
using nn::Var;

void TrainConfig::validate() const {
    if (epochs < 1 && max_steps < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr <= 0) throw ConfigError("learning rate must be positive");
    if (scheduler != "cosine" && scheduler != "constant") {
        throw ConfigError("scheduler must be cosine or constant");
    }
    if (optimizer != "adamw") throw ConfigError("optimizer must be adamw");
    for (double w : {lambda_clu, lambda_sep, lambda_sparse, lambda_uns, lambda_cell}) {
        if (w < 0) throw ConfigError("loss weights must be non-negative");
    }
    if (d_model < 2 || n_heads < 1 || d_model % n_heads != 0) {
        throw ConfigError("d_model must be a positive multiple of n_heads");
    }
    if (max_answer_len < 1) throw ConfigError("max_answer_len must be >= 1");
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
    std::map<std::string, std::string> kv;
    auto put_d = [&](const std::string& k, double v) {
        std::ostringstream os;
        os << v;
        kv[k] = os.str();
    };
    kv["epochs"] = std::to_string(epochs);
    kv["batch_size"] = std::to_string(batch_size);
    put_d("lr", lr);
    put_d("weight_decay", weight_decay);
    kv["scheduler"] = scheduler;
    kv["optimizer"] = optimizer;
    put_d("lambda_clu", lambda_clu);
    put_d("lambda_sep", lambda_sep);
    put_d("lambda_sparse", lambda_sparse);
    put_d("lambda_uns", lambda_uns);
    put_d("lambda_cell", lambda_cell);
    kv["seed"] = std::to_string(seed);
    kv["eval_interval"] = std::to_string(eval_interval);
    kv["checkpoint_path"] = checkpoint_path;
    kv["d_model"] = std::to_string(d_model);
    kv["n_heads"] = std::to_string(n_heads);
    kv["scorer_layers"] = std::to_string(scorer_layers);
    kv["encoder_layers"] = std::to_string(encoder_layers);
    kv["decoder_layers"] = std::to_string(decoder_layers);
    kv["ff_mult"] = std::to_string(ff_mult);
    kv["max_answer_len"] = std::to_string(max_answer_len);
    kv["gate"] = gate ? "true" : "false";
    kv["max_steps"] = std::to_string(max_steps);
    return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
    TrainConfig cfg;
    auto get = [&](const std::string& k) -> const std::string* {
        auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    try {
        if (auto v = get("epochs")) cfg.epochs = std::stoi(*v);
        if (auto v = get("batch_size")) cfg.batch_size = std::stoi(*v);
        if (auto v = get("lr")) cfg.lr = std::stod(*v);
        if (auto v = get("weight_decay")) cfg.weight_decay = std::stod(*v);
        if (auto v = get("scheduler")) cfg.scheduler = *v;
        if (auto v = get("optimizer")) cfg.optimizer = *v;
        if (auto v = get("lambda_clu")) cfg.lambda_clu = std::stod(*v);
        if (auto v = get("lambda_sep")) cfg.lambda_sep = std::stod(*v);
        if (auto v = get("lambda_sparse")) cfg.lambda_sparse = std::stod(*v);
        if (auto v = get("lambda_uns")) cfg.lambda_uns = std::stod(*v);
        if (auto v = get("lambda_cell")) cfg.lambda_cell = std::stod(*v);
        if (auto v = get("seed")) cfg.seed = std::stoull(*v);
        if (auto v = get("eval_interval")) cfg.eval_interval = std::stoi(*v);
        if (auto v = get("checkpoint_path")) cfg.checkpoint_path = *v;
        if (auto v = get("d_model")) cfg.d_model = std::stoi(*v);
        if (auto v = get("n_heads")) cfg.n_heads = std::stoi(*v);
        if (auto v = get("scorer_layers")) cfg.scorer_layers = std::stoi(*v);
        if (auto v = get("encoder_layers")) cfg.encoder_layers = std::stoi(*v);
        if (auto v = get("decoder_layers")) cfg.decoder_layers = std::stoi(*v);
        if (auto v = get("ff_mult")) cfg.ff_mult = std::stoi(*v);
        if (auto v = get("max_answer_len")) cfg.max_answer_len = std::stoi(*v);
        if (auto v = get("gate")) cfg.gate = (*v == "true" || *v == "1");
        if (auto v = get("max_steps")) cfg.max_steps = std::stoi(*v);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    } catch (const std::out_of_range& e) {
        throw ConfigError(std::string("config value out of range: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

GatedQAModel GatedQAModel::build(const nn::ModelConfig& cfg, std::uint64_t vocab_hash) {
    GatedQAModel m;
    m.cfg = cfg;
    m.vocab_hash = vocab_hash;
    m.tok_emb = &m.params.create("embed.tok", cfg.vocab_size, cfg.d_model);
    m.scorer = nn::make_encoder(m.params, "scorer", cfg, cfg.scorer_layers);
    m.encoder = nn::make_encoder(m.params, "encoder", cfg, cfg.encoder_layers);
    m.decoder = nn::make_decoder(m.params, "decoder", cfg);
    m.w_mu = &m.params.create("head.mu", cfg.d_model, 1);
    m.w_sigma = &m.params.create("head.sigma", cfg.d_model, 1);
    m.centroids = &m.params.create("cluster.centroids", 2, cfg.d_model, /*no_decay=*/true);
    nn::init_params(m.params, cfg);
    // The scorer encoder starts from the QA encoder's initial weights but is
    // a separate parameter set from then on. Only works when depths match.
    if (cfg.scorer_layers == cfg.encoder_layers) {
        nn::copy_params(m.params, "encoder", "scorer");
    }
    return m;
}

void GatedQAModel::set_trainable(const std::string& prefix, bool trainable) {
    for (nn::Param* p : params.all()) {
        if (prefix.empty() || p->name.rfind(prefix, 0) == 0) p->trainable = trainable;
    }
}

nn::ModelConfig model_config_from(const TrainConfig& cfg, const Vocabulary& vocab) {
    nn::ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.d_model = cfg.d_model;
    mc.n_heads = cfg.n_heads;
    mc.scorer_layers = cfg.scorer_layers;
    mc.encoder_layers = cfg.encoder_layers;
    mc.decoder_layers = cfg.decoder_layers;
    mc.ff_mult = cfg.ff_mult;
    mc.init_seed = cfg.seed;
    return mc;
}

GatedQAModel build_model(const TrainConfig& cfg, const Vocabulary& vocab) {
    return GatedQAModel::build(model_config_from(cfg, vocab), vocab.hash());
}

std::vector<PreparedExample> prepare_examples(const std::vector<QAExample>& data,
                                              const Vocabulary& vocab) {
    std::vector<PreparedExample> out;
    out.reserve(data.size());
    for (const auto& ex : data) {
        PreparedExample p;
        p.input = tokenize_linearize(ex.table, ex.question, vocab);
        p.answer_ids = vocab.encode(ex.answer);
        const auto hl = highlight_cells(ex.table, ex.parsing_statement);
        p.eta_cell = assign_cell_scores(p.input.table, hl.highlighted_strings);
        p.source = &ex;
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

struct ExampleForward {
    Var h_table;  // scorer latents, table region
    Var eta_uns;
    Var z;
    Var memory;  // QA encoder output
};

/// Scorer branch + gated QA encoder for one example. noise == nullptr is the
/// deterministic s = 0 path. When skip_scorer is set (ungated baseline with
/// no auxiliary losses) only the QA branch runs.
ExampleForward forward_example(ForwardContext& ctx, GatedQAModel& model,
                               const PreparedExample& ex, const Mat* noise, double lambda_uns,
                               double lambda_cell, bool gate, bool skip_scorer) {
    Tape& t = ctx.tape();
    ExampleForward out;
    const int q_len = static_cast<int>(ex.input.question_len);
    const int t_len = static_cast<int>(ex.input.table_len());

    if (!skip_scorer) {
        Var e_urs = nn::embed_sequence(ctx, ex.input.tokens, *model.tok_emb, model.cfg);
        Var h = nn::encode(ctx, e_urs, model.scorer, model.cfg);
        out.h_table = t.rows(h, q_len, t_len);
        auto rel = relevance_forward(ctx, out.h_table, *model.w_mu, *model.w_sigma, noise);
        out.eta_uns = rel.eta_uns;
        out.z = rel.z;
    }

    Var e_qa = nn::embed_sequence(ctx, ex.input.tokens, *model.tok_emb, model.cfg);
    Var scaled = e_qa;
    if (gate) {
        Var eta = fuse_scores(ctx, out.eta_uns, ex.eta_cell, lambda_uns, lambda_cell);
        scaled = scale_embeddings(ctx, e_qa, eta, ex.input.question_len);
    }
    out.memory = nn::encode(ctx, scaled, model.encoder, model.cfg);
    return out;
}

Var teacher_forced_ce(ForwardContext& ctx, GatedQAModel& model, const PreparedExample& ex,
                      Var memory) {
    Tape& t = ctx.tape();
    std::vector<int> dec_in = {Vocabulary::kBosId};
    dec_in.insert(dec_in.end(), ex.answer_ids.begin(), ex.answer_ids.end());
    std::vector<int> targets = ex.answer_ids;
    targets.push_back(Vocabulary::kEosId);

    Var x = nn::embed_sequence(ctx, dec_in, *model.tok_emb, model.cfg);
    Var h = nn::decode(ctx, x, memory, model.decoder, model.cfg);
    Var logits = nn::tied_logits(ctx, h, *model.tok_emb);
    return t.cross_entropy(logits, targets);
}

Var mean_of(Tape& t, const std::vector<Var>& parts) {
    Var acc = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) acc = t.add(acc, parts[i]);
    return t.scalar_mul(acc, 1.0 / static_cast<double>(parts.size()));
}

}  // namespace

BatchLoss build_batch_loss(ForwardContext& ctx, GatedQAModel& model,
                           const std::vector<const PreparedExample*>& batch,
                           const BatchLossOptions& opts) {
    if (batch.empty()) throw std::logic_error("empty batch");
    Tape& t = ctx.tape();
    const int B = static_cast<int>(batch.size());
    const bool need_q = opts.lambda_clu > 0;
    const bool need_sparse = opts.lambda_sparse > 0;
    const bool skip_scorer = !opts.gate && !need_q && !need_sparse;

    std::vector<Var> ces, qs, sparses;
    BatchLoss out;
    for (int i = 0; i < B; ++i) {
        const PreparedExample& ex = *batch[static_cast<std::size_t>(i)];
        const Mat* noise = opts.noise ? &(*opts.noise)[static_cast<std::size_t>(i)] : nullptr;
        auto fwd = forward_example(ctx, model, ex, noise, opts.lambda_uns, opts.lambda_cell,
                                   opts.gate, skip_scorer);
        if (!skip_scorer) {
            out.eta_uns.push_back(fwd.eta_uns);
            out.z.push_back(fwd.z);
        }
        if (need_q) {
            qs.push_back(t.soft_assign(fwd.h_table, ctx.var(*model.centroids), model.alpha));
        }
        if (need_sparse) sparses.push_back(sparsification_loss(ctx, fwd.z));
        ces.push_back(teacher_forced_ce(ctx, model, ex, fwd.memory));
    }

    out.ce = mean_of(t, ces);
    Var total = out.ce;
    if (need_q) {
        out.q_all = t.vcat(qs);
        const Mat z = opts.frozen_target ? *opts.frozen_target : target_distribution(t.val(out.q_all));
        out.clu = clustering_loss(ctx, out.q_all, z, B);
        total = t.add(total, t.scalar_mul(out.clu, opts.lambda_clu));
    }
    if (opts.lambda_sep > 0) {
        out.sep = separation_loss(ctx, ctx.var(*model.centroids));
        total = t.add(total, t.scalar_mul(out.sep, opts.lambda_sep));
    }
    if (need_sparse) {
        out.sparse = mean_of(t, sparses);
        total = t.add(total, t.scalar_mul(out.sparse, opts.lambda_sparse));
    }
    out.total = total;
    return out;
}

void init_centroids(GatedQAModel& model, const std::vector<const PreparedExample*>& batch,
                    std::uint64_t seed) {
    // Latents of every table token in the batch, deterministic path.
    std::vector<Mat> blocks;
    long total_rows = 0;
    for (const PreparedExample* ex : batch) {
        Tape t;
        ForwardContext ctx(t);
        Var e = nn::embed_sequence(ctx, ex->input.tokens, *model.tok_emb, model.cfg);
        Var h = nn::encode(ctx, e, model.scorer, model.cfg);
        Mat h_table = t.val(h).middleRows(static_cast<long>(ex->input.question_len),
                                          static_cast<long>(ex->input.table_len()));
        total_rows += h_table.rows();
        blocks.push_back(std::move(h_table));
    }
    Mat x(total_rows, model.cfg.d_model);
    long at = 0;
    for (const auto& b : blocks) {
        x.middleRows(at, b.rows()) = b;
        at += b.rows();
    }

    std::mt19937_64 rng(seed);
    auto random_orthogonal_pair = [&]() {
        std::normal_distribution<double> gauss(0.0, 1.0);
        Eigen::RowVectorXd a(model.cfg.d_model), b(model.cfg.d_model);
        for (int i = 0; i < model.cfg.d_model; ++i) a(i) = gauss(rng);
        for (int i = 0; i < model.cfg.d_model; ++i) b(i) = gauss(rng);
        a.normalize();
        b -= b.dot(a) * a;
        b.normalize();
        model.centroids->value.row(0) = a;
        model.centroids->value.row(1) = b;
    };

    if (x.rows() < 2) {
        random_orthogonal_pair();
        model.centroids_ready = true;
        return;
    }

    // Plain 2-means.
    long i0 = std::uniform_int_distribution<long>(0, x.rows() - 1)(rng);
    long i1 = i0;
    while (i1 == i0) i1 = std::uniform_int_distribution<long>(0, x.rows() - 1)(rng);
    Mat mu(2, model.cfg.d_model);
    mu.row(0) = x.row(i0);
    mu.row(1) = x.row(i1);
    std::vector<int> assign(static_cast<std::size_t>(x.rows()), 0);
    for (int iter = 0; iter < 25; ++iter) {
        bool changed = false;
        std::array<long, 2> count = {0, 0};
        Mat sum = Mat::Zero(2, model.cfg.d_model);
        for (long p = 0; p < x.rows(); ++p) {
            const double d0 = (x.row(p) - mu.row(0)).squaredNorm();
            const double d1 = (x.row(p) - mu.row(1)).squaredNorm();
            const int a = d1 < d0 ? 1 : 0;
            if (a != assign[static_cast<std::size_t>(p)]) changed = true;
            assign[static_cast<std::size_t>(p)] = a;
            sum.row(a) += x.row(p);
            ++count[static_cast<std::size_t>(a)];
        }
        if (count[0] == 0 || count[1] == 0) {
            random_orthogonal_pair();
            model.centroids_ready = true;
            return;
        }
        mu.row(0) = sum.row(0) / static_cast<double>(count[0]);
        mu.row(1) = sum.row(1) / static_cast<double>(count[1]);
        if (!changed) break;
    }
    model.centroids->value = mu;
    model.centroids_ready = true;
}

TrainResult train(GatedQAModel& model, const std::vector<QAExample>& data,
                  const Vocabulary& vocab, const TrainConfig& cfg,
                  const std::function<void(int, const LossBreakdown&)>& on_step) {
    cfg.validate();
    if (data.empty()) throw ConfigError("training dataset is empty");
    if (model.vocab_hash != vocab.hash()) {
        throw StructureError("model was built for a different vocabulary");
    }
    const auto prepared = prepare_examples(data, vocab);
    const int n = static_cast<int>(prepared.size());
    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    int total_steps = cfg.epochs * steps_per_epoch;
    if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);
    if (cfg.max_steps > 0 && cfg.epochs * steps_per_epoch < cfg.max_steps) {
        total_steps = cfg.max_steps;  // keep cycling epochs until the cap
    }

    BatchLossOptions lopts;
    lopts.lambda_clu = cfg.gate ? cfg.lambda_clu : 0.0;
    lopts.lambda_sep = cfg.gate ? cfg.lambda_sep : 0.0;
    lopts.lambda_sparse = cfg.gate ? cfg.lambda_sparse : 0.0;
    lopts.lambda_uns = cfg.lambda_uns;
    lopts.lambda_cell = cfg.lambda_cell;
    lopts.gate = cfg.gate;

    nn::AdamWConfig acfg;
    acfg.lr = cfg.lr;
    acfg.weight_decay = cfg.weight_decay;
    nn::AdamW opt(acfg);

    std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    double initial_loss = 0.0;
    int high_loss_streak = 0;
    bool centroids_pending = lopts.lambda_clu > 0;

    int step = 0;
    for (int epoch = 0; step < total_steps; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int b0 = 0; b0 < n && step < total_steps; b0 += cfg.batch_size) {
            std::vector<const PreparedExample*> batch;
            for (int i = b0; i < std::min(n, b0 + cfg.batch_size); ++i) {
                batch.push_back(&prepared[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
            }
            if (centroids_pending) {
                init_centroids(model, batch, cfg.seed ^ 0xc105732ULL);
                centroids_pending = false;
            }
            std::vector<Mat> noise;
            for (const PreparedExample* ex : batch) {
                Mat s(static_cast<long>(ex->input.table_len()), 1);
                for (long i = 0; i < s.rows(); ++i) s(i, 0) = gauss(rng);
                noise.push_back(std::move(s));
            }
            lopts.noise = &noise;

            Tape tape;
            ForwardContext ctx(tape);
            BatchLoss loss = build_batch_loss(ctx, model, batch, lopts);
            LossBreakdown lb;
            lb.total = tape.scalar(loss.total);
            lb.ce = tape.scalar(loss.ce);
            lb.clu = loss.clu.valid() ? tape.scalar(loss.clu) : 0.0;
            lb.sep = loss.sep.valid() ? tape.scalar(loss.sep) : 0.0;
            lb.sparse = loss.sparse.valid() ? tape.scalar(loss.sparse) : 0.0;
            if (!std::isfinite(lb.total)) {
                result.diverged = true;
                result.abort_reason = "non-finite loss at step " + std::to_string(step) +
                                      " (ce=" + std::to_string(lb.ce) + ")";
                return result;
            }
            if (step == 0) initial_loss = std::max(lb.total, 1e-9);
            if (lb.total > 10.0 * initial_loss) {
                if (++high_loss_streak >= 100) {
                    result.diverged = true;
                    result.abort_reason = "loss exceeded 10x initial for 100 consecutive steps";
                    return result;
                }
            } else {
                high_loss_streak = 0;
            }

            model.params.zero_grads();
            tape.backward(loss.total);
            const double scale =
                cfg.scheduler == "cosine" ? nn::cosine_lr_scale(step, total_steps) : 1.0;
            opt.step(model.params, scale);

            result.curve.push_back(lb);
            ++step;
            result.steps = step;
            if (on_step) on_step(step, lb);
        }
    }
    return result;
}

int exact_match(const std::string& predicted, const std::string& gold) {
    auto norm = [](const std::string& s) {
        std::string lowered;
        lowered.reserve(s.size());
        for (char c : s) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return normalize_whitespace(lowered);
    };
    return norm(predicted) == norm(gold) ? 1 : 0;
}

namespace {

struct DecodedAnswer {
    std::vector<int> ids;  // without BOS/EOS
};

/// Beam search over the decoder with the encoder memory fixed. beam == 1 is
/// greedy decoding.
DecodedAnswer decode_with_memory(GatedQAModel& model, const Mat& memory, int beam, int max_len) {
    DecodedAnswer out;
    if (max_len <= 0) return out;
    beam = std::max(1, beam);

    struct Hyp {
        std::vector<int> ids;  // starts with BOS
        double logp = 0.0;
        bool done = false;
    };
    std::vector<Hyp> hyps = {Hyp{{Vocabulary::kBosId}, 0.0, false}};

    for (int stepi = 0; stepi < max_len; ++stepi) {
        std::vector<Hyp> candidates;
        bool all_done = true;
        for (const Hyp& h : hyps) {
            if (h.done) {
                candidates.push_back(h);
                continue;
            }
            all_done = false;
            Tape t;
            ForwardContext ctx(t);
            Var mem = t.constant(memory);
            Var x = nn::embed_sequence(ctx, h.ids, *model.tok_emb, model.cfg);
            Var hd = nn::decode(ctx, x, mem, model.decoder, model.cfg);
            Var logits = nn::tied_logits(ctx, hd, *model.tok_emb);
            const Mat& z = t.val(logits);
            Eigen::RowVectorXd row = z.row(z.rows() - 1);
            // log-softmax of the last position
            const double m = row.maxCoeff();
            const double lse = m + std::log((row.array() - m).exp().sum());

            std::vector<int> top(static_cast<std::size_t>(row.size()));
            std::iota(top.begin(), top.end(), 0);
            const int k = std::min<int>(beam, static_cast<int>(row.size()));
            std::partial_sort(top.begin(), top.begin() + k, top.end(),
                              [&](int a, int b) { return row(a) > row(b); });
            for (int c = 0; c < k; ++c) {
                Hyp next = h;
                next.ids.push_back(top[static_cast<std::size_t>(c)]);
                next.logp += row(top[static_cast<std::size_t>(c)]) - lse;
                next.done = top[static_cast<std::size_t>(c)] == Vocabulary::kEosId;
                candidates.push_back(std::move(next));
            }
        }
        if (all_done) break;
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Hyp& a, const Hyp& b) { return a.logp > b.logp; });
        if (static_cast<int>(candidates.size()) > beam) candidates.resize(static_cast<std::size_t>(beam));
        hyps = std::move(candidates);
    }

    const Hyp& best = hyps.front();
    for (std::size_t i = 1; i < best.ids.size(); ++i) {
        if (best.ids[i] == Vocabulary::kEosId) break;
        out.ids.push_back(best.ids[i]);
    }
    return out;
}

}  // namespace

std::string generate_answer(GatedQAModel& model, const PreparedExample& ex,
                            const Vocabulary& vocab, double lambda_uns, double lambda_cell,
                            bool gate, const GenerateOptions& opts) {
    Tape t;
    ForwardContext ctx(t);
    auto fwd = forward_example(ctx, model, ex, nullptr, lambda_uns, lambda_cell, gate,
                               /*skip_scorer=*/!gate);
    const Mat memory = t.val(fwd.memory);
    const auto decoded = decode_with_memory(model, memory, opts.beam, opts.max_len);
    return vocab.decode(decoded.ids);
}

EvalReport evaluate(GatedQAModel& model, const std::vector<QAExample>& data,
                    const Vocabulary& vocab, const EvalOptions& opts) {
    if (model.vocab_hash != vocab.hash()) {
        throw StructureError("checkpoint was trained with a different vocabulary");
    }
    const auto prepared = prepare_examples(data, vocab);
    EvalReport report;
    report.n = static_cast<int>(prepared.size());

    double eta_gold_sum = 0, eta_nongold_sum = 0;
    long eta_gold_n = 0, eta_nongold_n = 0;
    double uns_gold_sum = 0, uns_nongold_sum = 0;
    long mid_count = 0, table_token_count = 0;
    int correct_total = 0;

    for (const auto& ex : prepared) {
        Tape t;
        ForwardContext ctx(t);
        // Scorer branch, deterministic (s = 0).
        Var e_urs = nn::embed_sequence(ctx, ex.input.tokens, *model.tok_emb, model.cfg);
        Var h = nn::encode(ctx, e_urs, model.scorer, model.cfg);
        Var h_table = t.rows(h, static_cast<int>(ex.input.question_len),
                             static_cast<int>(ex.input.table_len()));
        auto rel = relevance_forward(ctx, h_table, *model.w_mu, *model.w_sigma, nullptr);

        std::vector<double> eta_uns(ex.input.table_len());
        for (std::size_t i = 0; i < eta_uns.size(); ++i) {
            eta_uns[i] = t.val(rel.eta_uns)(static_cast<long>(i), 0);
        }
        if (opts.overlap_scorer) {
            eta_uns = overlap_baseline_score(ex.source->question, ex.input.table, vocab);
        }
        std::vector<double> eta =
            opts.gate ? fuse_scores_values(eta_uns, ex.eta_cell, opts.lambda_uns, opts.lambda_cell)
                      : std::vector<double>(ex.input.table_len(), 1.0);

        // QA branch with the fused (or frozen) scale.
        Var e_qa = nn::embed_sequence(ctx, ex.input.tokens, *model.tok_emb, model.cfg);
        Mat scale(static_cast<long>(ex.input.total_len()), 1);
        scale.topRows(static_cast<long>(ex.input.question_len)).setOnes();
        for (std::size_t i = 0; i < eta.size(); ++i) {
            scale(static_cast<long>(ex.input.question_len + i), 0) = eta[i];
        }
        Var scaled = t.scale_rows(e_qa, t.constant(scale));
        Var memory = nn::encode(ctx, scaled, model.encoder, model.cfg);

        GenerateOptions gopts;
        gopts.beam = opts.beam;
        gopts.max_len = opts.max_answer_len;
        const auto decoded = decode_with_memory(model, t.val(memory), gopts.beam, gopts.max_len);
        const std::string prediction = vocab.decode(decoded.ids);
        const int em = exact_match(prediction, ex.source->answer);
        correct_total += em;
        if (opts.collect_predictions) report.predictions.push_back(prediction);

        // Size-bin and answer-type accounting.
        const int bin = size_bin(ex.source->table);
        report.bin_count[static_cast<std::size_t>(bin)] += 1;
        report.bin_accuracy[static_cast<std::size_t>(bin)] += em;
        const std::string num_key = ex.source->answer_type.numeric ? "numeric" : "non-numeric";
        const std::string ret_key = ex.source->answer_type.retrieval ? "retrieval" : "aggregation";
        for (const auto& key : {num_key, ret_key}) {
            report.type_count[key] += 1;
            report.type_accuracy[key] += em;
        }

        // Relevance diagnostics over cell tokens (markers excluded).
        std::set<CellCoord> gold(ex.source->gold_cells.begin(), ex.source->gold_cells.end());
        for (std::size_t p = 0; p < ex.input.table_len(); ++p) {
            const auto& tag = ex.input.table.token_cell_map[p];
            ++table_token_count;
            if (eta_uns[p] >= 0.4 && eta_uns[p] <= 0.6) ++mid_count;
            const int bucket = std::min(19, static_cast<int>(eta_uns[p] * 20.0));
            report.eta_uns_histogram[static_cast<std::size_t>(bucket)] += 1;
            if (!tag.is_cell() || tag.row == 0) continue;
            if (gold.count(tag.coord())) {
                eta_gold_sum += eta[p];
                uns_gold_sum += eta_uns[p];
                ++eta_gold_n;
            } else {
                eta_nongold_sum += eta[p];
                uns_nongold_sum += eta_uns[p];
                ++eta_nongold_n;
            }
        }

        if (opts.dump_scores) {
            nlohmann::json d;
            d["example_id"] = ex.source->id;
            d["eta_uns"] = eta_uns;
            d["eta_cell"] = ex.eta_cell;
            d["eta"] = eta;
            std::vector<std::string> cells;
            for (const auto& tag : ex.input.table.token_cell_map) {
                switch (tag.kind) {
                    case TokenKind::Head: cells.push_back("HEAD"); break;
                    case TokenKind::RowMarker: cells.push_back("ROW"); break;
                    case TokenKind::Separator: cells.push_back("SEP"); break;
                    case TokenKind::Cell:
                        cells.push_back(std::to_string(tag.row) + ":" + std::to_string(tag.col));
                        break;
                }
            }
            d["cells"] = cells;
            if (opts.dump_latents) {
                const Mat& lat = t.val(h_table);
                std::vector<std::vector<double>> rows_out;
                for (long r = 0; r < lat.rows(); ++r) {
                    rows_out.emplace_back(lat.row(r).data(), lat.row(r).data() + lat.cols());
                }
                d["latent"] = rows_out;
            }
            report.score_dump.push_back(d.dump());
        }
    }

    report.accuracy = report.n > 0 ? 100.0 * correct_total / report.n : 0.0;
    for (std::size_t b = 0; b < 6; ++b) {
        if (report.bin_count[b] > 0) {
            report.bin_accuracy[b] = 100.0 * report.bin_accuracy[b] / report.bin_count[b];
        }
    }
    for (auto& [key, acc] : report.type_accuracy) {
        acc = 100.0 * acc / report.type_count[key];
    }
    report.mean_eta_gold = eta_gold_n ? eta_gold_sum / static_cast<double>(eta_gold_n) : 0.0;
    report.mean_eta_nongold =
        eta_nongold_n ? eta_nongold_sum / static_cast<double>(eta_nongold_n) : 0.0;
    report.mean_eta_uns_gold = eta_gold_n ? uns_gold_sum / static_cast<double>(eta_gold_n) : 0.0;
    report.mean_eta_uns_nongold =
        eta_nongold_n ? uns_nongold_sum / static_cast<double>(eta_nongold_n) : 0.0;
    report.fraction_mid =
        table_token_count ? static_cast<double>(mid_count) / static_cast<double>(table_token_count)
                          : 0.0;

    // Perturbed re-runs (accuracy only).
    for (const auto& [name, spec] : opts.perturbations) {
        const auto perturbed = perturb_dataset(data, spec);
        EvalOptions inner;
        inner.lambda_uns = opts.lambda_uns;
        inner.lambda_cell = opts.lambda_cell;
        inner.gate = opts.gate;
        inner.beam = opts.beam;
        inner.max_answer_len = opts.max_answer_len;
        inner.overlap_scorer = opts.overlap_scorer;
        const EvalReport sub = evaluate(model, perturbed, vocab, inner);
        report.perturbed_accuracy[name] = sub.accuracy;
        report.perturbation_drop[name] = relative_drop(report.accuracy, sub.accuracy);
    }
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["schema"] = "tqa.eval_report";
    j["version"] = 1;
    j["n"] = n;
    j["accuracy"] = accuracy;
    j["bin_accuracy"] = bin_accuracy;
    j["bin_count"] = bin_count;
    j["type_accuracy"] = type_accuracy;
    j["type_count"] = type_count;
    j["mean_eta_gold"] = mean_eta_gold;
    j["mean_eta_nongold"] = mean_eta_nongold;
    j["mean_eta_uns_gold"] = mean_eta_uns_gold;
    j["mean_eta_uns_nongold"] = mean_eta_uns_nongold;
    j["eta_uns_histogram"] = eta_uns_histogram;
    j["fraction_mid"] = fraction_mid;
    j["perturbed_accuracy"] = perturbed_accuracy;
    nlohmann::json drops = nlohmann::json::object();
    for (const auto& [k, v] : perturbation_drop) {
        if (v.has_value()) {
            drops[k] = *v;
        } else {
            drops[k] = nullptr;  // undefined drop (clean metric was zero)
        }
    }
    j["perturbation_drop"] = drops;
    return j.dump();
}

void save_checkpoint(const GatedQAModel& model, const TrainConfig& cfg, const std::string& path) {
    nlohmann::json j;
    j["schema"] = "tqa.checkpoint";
    j["version"] = 1;
    j["vocab_hash"] = model.vocab_hash;
    j["alpha"] = model.alpha;
    j["centroids_ready"] = model.centroids_ready;
    j["train_config"] = cfg.to_kv();
    nlohmann::json params = nlohmann::json::object();
    for (const nn::Param* p : model.params.all()) {
        nlohmann::json entry;
        entry["rows"] = p->value.rows();
        entry["cols"] = p->value.cols();
        std::vector<double> data(p->value.data(), p->value.data() + p->value.size());
        entry["data"] = data;  // column-major
        params[p->name] = std::move(entry);
    }
    j["params"] = std::move(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump();
}

GatedQAModel load_checkpoint(const std::string& path, const Vocabulary& vocab,
                             TrainConfig* cfg_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("schema", "") != "tqa.checkpoint") {
        throw StructureError("not a checkpoint file: " + path);
    }
    const auto stored_hash = j.at("vocab_hash").get<std::uint64_t>();
    if (stored_hash != vocab.hash()) {
        throw StructureError("vocabulary hash mismatch; refusing to load checkpoint");
    }
    const auto kv = j.at("train_config").get<std::map<std::string, std::string>>();
    TrainConfig cfg = TrainConfig::from_kv(kv);
    if (cfg_out) *cfg_out = cfg;
    GatedQAModel model = build_model(cfg, vocab);
    model.alpha = j.value("alpha", 1.0);
    model.centroids_ready = j.value("centroids_ready", false);
    for (nn::Param* p : model.params.all()) {
        const auto& entry = j.at("params").at(p->name);
        const long rows = entry.at("rows").get<long>();
        const long cols = entry.at("cols").get<long>();
        if (rows != p->value.rows() || cols != p->value.cols()) {
            throw StructureError("checkpoint parameter shape mismatch for " + p->name);
        }
        const auto data = entry.at("data").get<std::vector<double>>();
        if (static_cast<long>(data.size()) != rows * cols) {
            throw StructureError("checkpoint parameter size mismatch for " + p->name);
        }
        std::copy(data.begin(), data.end(), p->value.data());
    }
    return model;
}

std::vector<AblationSetting> table4_grid() {
    std::vector<AblationSetting> rows;
    const std::array<std::array<double, 3>, 6> toggles = {{{0, 0, 0},
                                                           {0, 0, 1},
                                                           {1, 0, 0},
                                                           {1, 0, 1},
                                                           {1, 1, 0},
                                                           {1, 1, 1}}};
    for (const auto& tog : toggles) {
        AblationSetting s;
        std::ostringstream name;
        name << "clu" << tog[0] << "_sep" << tog[1] << "_sparse" << tog[2];
        s.name = name.str();
        s.lambda_clu = tog[0];
        s.lambda_sep = tog[1];
        s.lambda_sparse = tog[2];
        s.lambda_uns = 1.0;
        s.lambda_cell = 0.0;
        rows.push_back(s);
    }
    return rows;
}

std::vector<AblationSetting> table5_grid() {
    std::vector<AblationSetting> rows;
    const std::array<std::array<double, 2>, 5> fusions = {
        {{1.0, 0.0}, {0.7, 0.3}, {0.5, 0.5}, {0.3, 0.7}, {0.0, 1.0}}};
    for (const auto& f : fusions) {
        AblationSetting s;
        std::ostringstream name;
        name << "uns" << f[0] << "_cell" << f[1];
        s.name = name.str();
        s.lambda_clu = 1.0;
        s.lambda_sep = 1.0;
        s.lambda_sparse = 1.0;
        s.lambda_uns = f[0];
        s.lambda_cell = f[1];
        rows.push_back(s);
    }
    return rows;
}

std::vector<AblationResult> ablation_grid(
    const TrainConfig& base, const std::vector<AblationSetting>& settings,
    const std::vector<QAExample>& train_data, const std::vector<QAExample>& eval_data,
    const Vocabulary& vocab, const std::vector<std::uint64_t>& seeds,
    const std::function<void(const AblationResult&)>& on_result) {
    std::vector<AblationResult> results;
    for (const auto& setting : settings) {
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.lambda_clu = setting.lambda_clu;
            cfg.lambda_sep = setting.lambda_sep;
            cfg.lambda_sparse = setting.lambda_sparse;
            cfg.lambda_uns = setting.lambda_uns;
            cfg.lambda_cell = setting.lambda_cell;
            cfg.seed = seed;
            GatedQAModel model = build_model(cfg, vocab);
            train(model, train_data, vocab, cfg);
            EvalOptions eopts;
            eopts.lambda_uns = cfg.lambda_uns;
            eopts.lambda_cell = cfg.lambda_cell;
            eopts.max_answer_len = cfg.max_answer_len;
            const EvalReport report = evaluate(model, eval_data, vocab, eopts);
            AblationResult r;
            r.setting = setting;
            r.seed = seed;
            r.accuracy = report.accuracy;
            r.fraction_mid = report.fraction_mid;
            r.mean_eta_gold = report.mean_eta_gold;
            r.mean_eta_nongold = report.mean_eta_nongold;
            if (on_result) on_result(r);
            results.push_back(std::move(r));
        }
    }
    return results;
}

}  // namespace tqa
