#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tqa/linearize.hpp"
#include "tqa/nn/model.hpp"
#include "tqa/nn/tape.hpp"

namespace tqa {

/// Per-token relevance scores for one example, aligned to the table region
/// [question_boundary, question_boundary + eta_uns.size()).
struct RelevanceVector {
    std::vector<double> eta_uns;   // sigmoid scores in (0,1)
    std::vector<double> eta_cell;  // binary highlighter scores
    std::vector<double> eta;       // fused
    std::vector<double> z;         // pre-sigmoid logits
    std::size_t question_boundary = 0;
};

/// Learnable cluster state: two centroids (row 0 relevant, row 1 irrelevant)
/// plus the Student's-t degrees of freedom.
struct ClusterState {
    nn::Mat centroids;  // 2 x d
    double alpha = 1.0;
};

/// Variational relevance head on the tape: mu = h W_mu, sigma = h W_sigma,
/// z = mu + s * sigma, eta = sigmoid(z). `noise` holds one s sample per
/// table token during training; pass nullptr for the deterministic s = 0
/// evaluation path.
struct RelevanceForward {
    nn::Var eta_uns;  // (n x 1)
    nn::Var z;        // (n x 1)
};
RelevanceForward relevance_forward(nn::ForwardContext& ctx, nn::Var h_table, nn::Param& w_mu,
                                   nn::Param& w_sigma, const nn::Mat* noise);

/// Plain-value soft assignment of each latent row to the two centroids
/// (Student's-t kernel, row-normalized). Same math as Tape::soft_assign.
nn::Mat soft_assign_values(const nn::Mat& h, const ClusterState& clusters);

/// Self-training target: z_pj = (q_pj^2 / f_j) / sum_j' (q_pj'^2 / f_j'),
/// f_j = sum_p q_pj. Pure value computation; callers treat the result as a
/// constant (no gradient flows into it).
nn::Mat target_distribution(const nn::Mat& q);

/// (1/B) * sum KL(Z || Q) with Z detached.
nn::Var clustering_loss(nn::ForwardContext& ctx, nn::Var q, const nn::Mat& z, int batch_size);
double clustering_loss_value(const nn::Mat& q, const nn::Mat& z, int batch_size);

/// 2 - ||u_rel - u_irr||^2 over unit-normalized centroid copies.
nn::Var separation_loss(nn::ForwardContext& ctx, nn::Var centroids);
double separation_loss_value(const nn::Mat& centroids);

/// Mean of exp(-z^2) over the table-region logits; throws on empty input.
nn::Var sparsification_loss(nn::ForwardContext& ctx, nn::Var z);
double sparsification_loss_value(const nn::Mat& z);

/// Elementwise eta = lambda_uns * eta_uns + lambda_cell * eta_cell; the cell
/// path carries no gradient.
nn::Var fuse_scores(nn::ForwardContext& ctx, nn::Var eta_uns, const std::vector<double>& eta_cell,
                    double lambda_uns, double lambda_cell);
std::vector<double> fuse_scores_values(const std::vector<double>& eta_uns,
                                       const std::vector<double>& eta_cell, double lambda_uns,
                                       double lambda_cell);

/// Scales table-region embedding rows by eta; question rows pass through.
nn::Var scale_embeddings(nn::ForwardContext& ctx, nn::Var embeddings, nn::Var eta,
                         std::size_t question_boundary);

/// Row-level token-overlap relevance baseline: every token of a table row
/// (header row included) gets |row tokens ∩ question tokens| / |question
/// tokens| computed over unique question words; markers score 0.
std::vector<double> overlap_baseline_score(const std::string& question,
                                           const LinearizedTable& lin,
                                           const Vocabulary& vocab);

}  // namespace tqa
