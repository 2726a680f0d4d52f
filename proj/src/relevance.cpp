#include "tqa/relevance.hpp"

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace tqa {

using nn::Mat;
using nn::Tape;
using nn::Var;

RelevanceForward relevance_forward(nn::ForwardContext& ctx, Var h_table, nn::Param& w_mu,
                                   nn::Param& w_sigma, const Mat* noise) {
    Tape& t = ctx.tape();
    Var mu = t.matmul(h_table, ctx.var(w_mu));
    Var sigma = t.matmul(h_table, ctx.var(w_sigma));
    Var z;
    if (noise) {
        if (noise->rows() != t.val(mu).rows() || noise->cols() != 1) {
            throw std::logic_error("noise must be one sample per table token");
        }
        z = t.add(mu, t.mul(t.constant(*noise), sigma));
    } else {
        // Deterministic evaluation: s = 0, so z = mu. sigma still enters the
        // graph through z during training only.
        z = mu;
    }
    return RelevanceForward{t.sigmoid(z), z};
}

Mat soft_assign_values(const Mat& h, const ClusterState& clusters) {
    Tape t;
    Var q = t.soft_assign(t.constant(h), t.constant(clusters.centroids), clusters.alpha);
    return t.val(q);
}

Mat target_distribution(const Mat& q) {
    const Eigen::RowVectorXd f = q.colwise().sum();
    Mat z(q.rows(), q.cols());
    for (long p = 0; p < q.rows(); ++p) {
        for (long j = 0; j < q.cols(); ++j) {
            z(p, j) = q(p, j) * q(p, j) / f(j);
        }
        z.row(p) /= z.row(p).sum();
    }
    return z;
}

Var clustering_loss(nn::ForwardContext& ctx, Var q, const Mat& z, int batch_size) {
    Tape& t = ctx.tape();
    return t.scalar_mul(t.kl_to_const(z, q), 1.0 / static_cast<double>(batch_size));
}

double clustering_loss_value(const Mat& q, const Mat& z, int batch_size) {
    Tape t;
    nn::ForwardContext ctx(t);
    return t.scalar(clustering_loss(ctx, t.constant(q), z, batch_size));
}

Var separation_loss(nn::ForwardContext& ctx, Var centroids) {
    return ctx.tape().centroid_separation(centroids);
}

double separation_loss_value(const Mat& centroids) {
    Tape t;
    return t.scalar(t.centroid_separation(t.constant(centroids)));
}

Var sparsification_loss(nn::ForwardContext& ctx, Var z) {
    Tape& t = ctx.tape();
    if (t.val(z).size() == 0) {
        throw std::domain_error("sparsification_loss over an empty table region");
    }
    return t.mean_all(t.exp(t.neg(t.square(z))));
}

double sparsification_loss_value(const Mat& z) {
    Tape t;
    nn::ForwardContext ctx(t);
    return t.scalar(sparsification_loss(ctx, t.constant(z)));
}

Var fuse_scores(nn::ForwardContext& ctx, Var eta_uns, const std::vector<double>& eta_cell,
                double lambda_uns, double lambda_cell) {
    Tape& t = ctx.tape();
    if (static_cast<long>(eta_cell.size()) != t.val(eta_uns).rows()) {
        throw std::logic_error("fuse_scores: eta_uns and eta_cell lengths differ");
    }
    Mat cell(static_cast<long>(eta_cell.size()), 1);
    for (std::size_t i = 0; i < eta_cell.size(); ++i) {
        cell(static_cast<long>(i), 0) = lambda_cell * eta_cell[i];
    }
    return t.add(t.scalar_mul(eta_uns, lambda_uns), t.constant(std::move(cell)));
}

std::vector<double> fuse_scores_values(const std::vector<double>& eta_uns,
                                       const std::vector<double>& eta_cell, double lambda_uns,
                                       double lambda_cell) {
    if (eta_uns.size() != eta_cell.size()) {
        throw std::logic_error("fuse_scores: eta_uns and eta_cell lengths differ");
    }
    std::vector<double> eta(eta_uns.size());
    for (std::size_t i = 0; i < eta.size(); ++i) {
        eta[i] = lambda_uns * eta_uns[i] + lambda_cell * eta_cell[i];
    }
    return eta;
}

Var scale_embeddings(nn::ForwardContext& ctx, Var embeddings, Var eta,
                     std::size_t question_boundary) {
    Tape& t = ctx.tape();
    const long total = t.val(embeddings).rows();
    const long n_table = t.val(eta).rows();
    if (static_cast<long>(question_boundary) + n_table != total) {
        throw std::logic_error("scale_embeddings: eta does not cover the table region");
    }
    Var scale;
    if (question_boundary > 0) {
        Var ones = t.constant(Mat::Ones(static_cast<long>(question_boundary), 1));
        scale = t.vcat({ones, eta});
    } else {
        scale = eta;
    }
    return t.scale_rows(embeddings, scale);
}

std::vector<double> overlap_baseline_score(const std::string& question,
                                           const LinearizedTable& lin,
                                           const Vocabulary& vocab) {
    const auto q_words = tokenize_words(question);
    std::set<std::string> q_set(q_words.begin(), q_words.end());
    if (q_set.empty()) return std::vector<double>(lin.size(), 0.0);

    // Tokens per row (header row included), then one overlap score per row.
    std::map<int, std::set<std::string>> row_words;
    for (std::size_t p = 0; p < lin.size(); ++p) {
        const auto& tag = lin.token_cell_map[p];
        if (tag.is_cell()) row_words[tag.row].insert(vocab.token(lin.tokens[p]));
    }
    std::map<int, double> row_score;
    for (const auto& [row, words] : row_words) {
        int hit = 0;
        for (const auto& w : q_set) {
            if (words.count(w)) ++hit;
        }
        row_score[row] = static_cast<double>(hit) / static_cast<double>(q_set.size());
    }
    std::vector<double> eta(lin.size(), 0.0);
    for (std::size_t p = 0; p < lin.size(); ++p) {
        const auto& tag = lin.token_cell_map[p];
        if (tag.is_cell()) eta[p] = row_score[tag.row];
    }
    return eta;
}

}  // namespace tqa
