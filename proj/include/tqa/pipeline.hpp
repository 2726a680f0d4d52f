#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tqa/linearize.hpp"
#include "tqa/nn/model.hpp"
#include "tqa/nn/optim.hpp"
#include "tqa/nn/tape.hpp"
#include "tqa/perturb.hpp"
#include "tqa/relevance.hpp"
#include "tqa/synth.hpp"
#include "tqa/vocab.hpp"

namespace tqa {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 32;
    double lr = 3e-4;
    double weight_decay = 0.01;
    std::string scheduler = "cosine";  // cosine | constant
    std::string optimizer = "adamw";
    // Loss weights of the total objective and the score fusion.
    double lambda_clu = 1.0;
    double lambda_sep = 1.0;
    double lambda_sparse = 1.0;
    double lambda_uns = 0.7;
    double lambda_cell = 0.3;
    std::uint64_t seed = 1;
    int eval_interval = 0;  // steps between on_eval callbacks; 0 disables
    std::string checkpoint_path;

    // Model architecture.
    int d_model = 64;
    int n_heads = 2;
    int scorer_layers = 2;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int ff_mult = 4;
    int max_answer_len = 8;

    /// false trains the ungated baseline: same architecture, relevance frozen
    /// to 1, auxiliary losses off.
    bool gate = true;
    /// Optional hard cap on optimizer steps (0 = run all epochs).
    int max_steps = 0;

    void validate() const;
    std::map<std::string, std::string> to_kv() const;
    static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

/// Relevance scorer + QA encoder/decoder sharing one token embedding, plus
/// the variational head and the learnable cluster centroids.
struct GatedQAModel {
    nn::ModelConfig cfg;
    std::uint64_t vocab_hash = 0;
    nn::ParamStore params;
    nn::Param* tok_emb = nullptr;
    nn::EncoderParams scorer;
    nn::EncoderParams encoder;
    nn::DecoderParams decoder;
    nn::Param* w_mu = nullptr;
    nn::Param* w_sigma = nullptr;
    nn::Param* centroids = nullptr;
    double alpha = 1.0;
    bool centroids_ready = false;

    static GatedQAModel build(const nn::ModelConfig& cfg, std::uint64_t vocab_hash);

    /// Flips the trainable flag on every parameter whose name starts with
    /// prefix (empty prefix = all).
    void set_trainable(const std::string& prefix, bool trainable);
};

/// Tokenized example with its precomputed highlighter scores.
struct PreparedExample {
    ModelInput input;
    std::vector<int> answer_ids;
    std::vector<double> eta_cell;
    const QAExample* source = nullptr;
};

std::vector<PreparedExample> prepare_examples(const std::vector<QAExample>& data,
                                              const Vocabulary& vocab);

nn::ModelConfig model_config_from(const TrainConfig& cfg, const Vocabulary& vocab);
GatedQAModel build_model(const TrainConfig& cfg, const Vocabulary& vocab);

struct BatchLossOptions {
    double lambda_clu = 1.0;
    double lambda_sep = 1.0;
    double lambda_sparse = 1.0;
    double lambda_uns = 0.7;
    double lambda_cell = 0.3;
    bool gate = true;
    /// Training noise, one (n_table x 1) sample vector per example; null for
    /// the deterministic s = 0 path.
    const std::vector<nn::Mat>* noise = nullptr;
    /// Overrides the per-batch target distribution (grad-check fixture: the
    /// target is a constant of the loss, so finite differences must hold it
    /// fixed).
    const nn::Mat* frozen_target = nullptr;
};

/// Tape handles for the batch objective; values are readable via
/// ctx.tape().scalar(...).
struct BatchLoss {
    nn::Var total;
    nn::Var ce;
    nn::Var clu;     // invalid when lambda_clu == 0
    nn::Var sep;     // invalid when lambda_sep == 0
    nn::Var sparse;  // invalid when lambda_sparse == 0
    nn::Var q_all;   // concatenated soft assignments (invalid when unused)
    std::vector<nn::Var> eta_uns;  // per example
    std::vector<nn::Var> z;        // per-example table-region logits
};

BatchLoss build_batch_loss(nn::ForwardContext& ctx, GatedQAModel& model,
                           const std::vector<const PreparedExample*>& batch,
                           const BatchLossOptions& opts);

struct LossBreakdown {
    double total = 0, ce = 0, clu = 0, sep = 0, sparse = 0;
};

struct TrainResult {
    std::vector<LossBreakdown> curve;
    int steps = 0;
    bool diverged = false;
    std::string abort_reason;
};

/// End-to-end training with AdamW + cosine annealing. Deterministic under
/// cfg.seed. Aborts with diagnostics on NaN losses or sustained divergence
/// (loss > 10x initial for 100 consecutive steps).
TrainResult train(GatedQAModel& model, const std::vector<QAExample>& data,
                  const Vocabulary& vocab, const TrainConfig& cfg,
                  const std::function<void(int, const LossBreakdown&)>& on_step = {});

/// 2-means over the scorer latents of the given examples, written into the
/// centroid parameters. Falls back to two random orthogonal unit vectors if
/// a cluster comes out empty.
void init_centroids(GatedQAModel& model, const std::vector<const PreparedExample*>& batch,
                    std::uint64_t seed);

/// 1 iff the strings are equal after lowercasing and whitespace collapsing.
int exact_match(const std::string& predicted, const std::string& gold);

struct GenerateOptions {
    int beam = 1;  // 1 = greedy
    int max_len = 8;
};

/// Runs the gated forward pass and decodes an answer (greedy by default,
/// beam search when beam > 1). Deterministic (s = 0).
std::string generate_answer(GatedQAModel& model, const PreparedExample& ex,
                            const Vocabulary& vocab, double lambda_uns, double lambda_cell,
                            bool gate, const GenerateOptions& opts);

struct EvalOptions {
    double lambda_uns = 0.7;
    double lambda_cell = 0.3;
    bool gate = true;
    int beam = 1;
    int max_answer_len = 8;
    bool dump_scores = false;
    bool dump_latents = false;
    /// Replace the unsupervised scores with the token-overlap baseline.
    bool overlap_scorer = false;
    bool collect_predictions = false;
    /// Named perturbations to apply and re-score.
    std::vector<std::pair<std::string, PerturbationSpec>> perturbations;
};

struct EvalReport {
    int n = 0;
    double accuracy = 0.0;  // exact match, percent
    std::array<double, 6> bin_accuracy{};
    std::array<int, 6> bin_count{};
    std::map<std::string, double> type_accuracy;  // numeric / non-numeric / retrieval / aggregation
    std::map<std::string, int> type_count;
    double mean_eta_gold = 0.0;      // fused score on gold-cell tokens
    double mean_eta_nongold = 0.0;   // fused score on non-gold cell tokens
    double mean_eta_uns_gold = 0.0;
    double mean_eta_uns_nongold = 0.0;
    std::array<long, 20> eta_uns_histogram{};
    double fraction_mid = 0.0;  // share of eta_uns in [0.4, 0.6]
    std::map<std::string, double> perturbed_accuracy;
    std::map<std::string, std::optional<double>> perturbation_drop;
    std::vector<std::string> score_dump;  // JSONL lines when dump_scores
    std::vector<std::string> predictions;

    std::string to_json() const;
};

EvalReport evaluate(GatedQAModel& model, const std::vector<QAExample>& data,
                    const Vocabulary& vocab, const EvalOptions& opts);

/// Checkpoints carry the model config, the train config, the vocab hash and
/// every parameter tensor. Loading refuses a vocabulary whose hash differs.
void save_checkpoint(const GatedQAModel& model, const TrainConfig& cfg, const std::string& path);
GatedQAModel load_checkpoint(const std::string& path, const Vocabulary& vocab,
                             TrainConfig* cfg_out = nullptr);

struct AblationSetting {
    std::string name;
    double lambda_clu = 0, lambda_sep = 0, lambda_sparse = 0;
    double lambda_uns = 1.0, lambda_cell = 0.0;
};

/// The six loss-toggle rows (fusion fixed at URS-only).
std::vector<AblationSetting> table4_grid();
/// The five fusion rows (all losses on).
std::vector<AblationSetting> table5_grid();

struct AblationResult {
    AblationSetting setting;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double fraction_mid = 0.0;
    double mean_eta_gold = 0.0;
    double mean_eta_nongold = 0.0;
};

/// One train+evaluate run per (setting, seed) pair.
std::vector<AblationResult> ablation_grid(const TrainConfig& base,
                                          const std::vector<AblationSetting>& settings,
                                          const std::vector<QAExample>& train_data,
                                          const std::vector<QAExample>& eval_data,
                                          const Vocabulary& vocab,
                                          const std::vector<std::uint64_t>& seeds,
                                          const std::function<void(const AblationResult&)>& on_result = {});

}  // namespace tqa
