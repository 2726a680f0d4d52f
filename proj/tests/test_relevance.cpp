#include <doctest.h>

#include <random>

#include "tqa/highlight.hpp"
#include "tqa/nn/grad_check.hpp"
#include "tqa/relevance.hpp"
#include "tqa/synth.hpp"

using namespace tqa;
using nn::ForwardContext;
using nn::Mat;
using nn::Tape;
using nn::Var;

TEST_CASE("relevance_forward: eval mode is sigmoid of mu") {
    // d = 2, one table token; weights picked so mu and sigma are exact.
    nn::ParamStore store;
    nn::Param& w_mu = store.create("head.mu", 2, 1);
    nn::Param& w_sigma = store.create("head.sigma", 2, 1);
    w_mu.value << 1.0, 0.0;
    w_sigma.value << 0.0, 1.0;

    Tape t;
    ForwardContext ctx(t);
    SUBCASE("mu = 0 gives 0.5") {
        Mat h(1, 2);
        h << 0.0, 3.0;  // sigma = 3, irrelevant in eval mode
        auto rel = relevance_forward(ctx, t.constant(h), w_mu, w_sigma, nullptr);
        CHECK(t.val(rel.eta_uns)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("mu = 2 gives sigmoid(2)") {
        Mat h(1, 2);
        h << 2.0, -7.5;
        auto rel = relevance_forward(ctx, t.constant(h), w_mu, w_sigma, nullptr);
        CHECK(t.val(rel.eta_uns)(0, 0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));
    }
    SUBCASE("train mode with fixed s=1: mu=0.5 sigma=0.25 gives sigmoid(0.75)") {
        Mat h(1, 2);
        h << 0.5, 0.25;
        Mat s(1, 1);
        s << 1.0;
        auto rel = relevance_forward(ctx, t.constant(h), w_mu, w_sigma, &s);
        CHECK(t.val(rel.z)(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(t.val(rel.eta_uns)(0, 0) == doctest::Approx(0.679178699175393).epsilon(1e-12));
    }
}

TEST_CASE("soft_assign: symmetry and the alpha=1 hand case") {
    ClusterState clusters;
    clusters.alpha = 1.0;
    clusters.centroids = Mat(2, 2);

    SUBCASE("equidistant point splits 0.5/0.5") {
        clusters.centroids << 1.0, 0.0, -1.0, 0.0;
        Mat h(1, 2);
        h << 0.0, 0.7;
        const Mat q = soft_assign_values(h, clusters);
        CHECK(q(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(q(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("distance 0 vs 1 gives (2/3, 1/3)") {
        clusters.centroids << 0.0, 0.0, 1.0, 0.0;
        Mat h(1, 2);
        h << 0.0, 0.0;
        const Mat q = soft_assign_values(h, clusters);
        CHECK(q(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(q(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("swapping centroid labels swaps the pair") {
        clusters.centroids << 0.3, -0.2, -1.1, 0.9;
        Mat h(1, 2);
        h << 0.4, 0.4;
        const Mat q = soft_assign_values(h, clusters);
        ClusterState swapped = clusters;
        swapped.centroids.row(0) = clusters.centroids.row(1);
        swapped.centroids.row(1) = clusters.centroids.row(0);
        const Mat q2 = soft_assign_values(h, swapped);
        CHECK(q(0, 0) == doctest::Approx(q2(0, 1)).epsilon(1e-12));
        CHECK(q(0, 1) == doctest::Approx(q2(0, 0)).epsilon(1e-12));
    }
    SUBCASE("rows always sum to 1 with both entries positive") {
        std::mt19937_64 rng(8);
        std::normal_distribution<double> g(0.0, 2.0);
        for (int trial = 0; trial < 200; ++trial) {
            Mat h(3, 2), mu(2, 2);
            for (long i = 0; i < h.size(); ++i) h.data()[i] = g(rng);
            for (long i = 0; i < mu.size(); ++i) mu.data()[i] = g(rng);
            ClusterState cs{mu, 1.0};
            const Mat q = soft_assign_values(h, cs);
            for (long p = 0; p < q.rows(); ++p) {
                CHECK(q.row(p).sum() == doctest::Approx(1.0).epsilon(1e-12));
                CHECK(q(p, 0) > 0.0);
                CHECK(q(p, 1) > 0.0);
            }
        }
    }
}

TEST_CASE("target_distribution: fixed point, hand case, sharpening") {
    SUBCASE("uniform assignments are a fixed point") {
        Mat q = Mat::Constant(5, 2, 0.5);
        const Mat z = target_distribution(q);
        CHECK((z - q).cwiseAbs().maxCoeff() < 1e-15);
        CHECK(clustering_loss_value(q, z, 1) == doctest::Approx(0.0));
    }
    SUBCASE("two-token hand case") {
        Mat q(2, 2);
        q << 0.9, 0.1, 0.6, 0.4;
        const Mat z = target_distribution(q);
        CHECK(z(0, 0) == doctest::Approx(0.9642857142857143).epsilon(1e-12));
        CHECK(z(0, 1) == doctest::Approx(0.03571428571428572).epsilon(1e-12));
        CHECK(z(1, 0) == doctest::Approx(0.4285714285714285).epsilon(1e-12));
        CHECK(z(1, 1) == doctest::Approx(0.5714285714285715).epsilon(1e-12));
    }
    SUBCASE("rows of Z sum to 1") {
        std::mt19937_64 rng(12);
        std::uniform_real_distribution<double> u(0.05, 0.95);
        for (int trial = 0; trial < 200; ++trial) {
            Mat q(6, 2);
            for (long p = 0; p < q.rows(); ++p) {
                const double a = u(rng);
                q(p, 0) = a;
                q(p, 1) = 1 - a;
            }
            const Mat z = target_distribution(q);
            for (long p = 0; p < z.rows(); ++p) {
                CHECK(z.row(p).sum() == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
    SUBCASE("sharpening: confident side of the minority cluster grows") {
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> u(0.05, 0.95);
        for (int trial = 0; trial < 500; ++trial) {
            Mat q(5, 2);
            for (long p = 0; p < q.rows(); ++p) {
                const double a = u(rng);
                q(p, 0) = a;
                q(p, 1) = 1 - a;
            }
            const Eigen::RowVectorXd f = q.colwise().sum();
            const Mat z = target_distribution(q);
            for (long p = 0; p < q.rows(); ++p) {
                if (q(p, 0) > 0.5 && f(0) <= f(1)) {
                    CHECK(z(p, 0) > q(p, 0));
                }
            }
        }
    }
}

TEST_CASE("clustering loss: hand value and non-negativity") {
    Mat q(2, 2);
    q << 0.9, 0.1, 0.6, 0.4;
    const Mat z = target_distribution(q);
    CHECK(clustering_loss_value(q, z, 1) ==
          doctest::Approx(0.08936858487613192).epsilon(1e-9));

    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    for (int trial = 0; trial < 1000; ++trial) {
        Mat qq(4, 2);
        for (long p = 0; p < qq.rows(); ++p) {
            const double a = u(rng);
            qq(p, 0) = a;
            qq(p, 1) = 1 - a;
        }
        CHECK(clustering_loss_value(qq, target_distribution(qq), 2) >= 0.0);
    }
}

TEST_CASE("separation loss: aligned 2, antipodal -2, orthogonal 0") {
    Mat mu(2, 3);
    mu << 2, 0, 0, 5, 0, 0;  // same direction, different norms
    CHECK(separation_loss_value(mu) == doctest::Approx(2.0).epsilon(1e-12));
    mu.row(1) << -1, 0, 0;
    CHECK(separation_loss_value(mu) == doctest::Approx(-2.0).epsilon(1e-12));
    mu.row(1) << 0, 3, 0;
    CHECK(separation_loss_value(mu) == doctest::Approx(0.0).epsilon(1e-12));
    mu.row(1).setZero();
    CHECK_THROWS_AS(separation_loss_value(mu), std::domain_error);
}

TEST_CASE("sparsification loss: max at zero logits, hand value, monotone") {
    Mat z = Mat::Zero(4, 1);
    CHECK(sparsification_loss_value(z) == doctest::Approx(1.0).epsilon(1e-12));

    Mat z2(2, 1);
    z2 << 0.0, 2.0;
    CHECK(sparsification_loss_value(z2) ==
          doctest::Approx(0.5091578194443671).epsilon(1e-12));

    double prev = 1.0;
    for (double mag : {0.5, 1.0, 2.0, 4.0}) {
        Mat zz(1, 1);
        zz << mag;
        const double v = sparsification_loss_value(zz);
        CHECK(v < prev);
        prev = v;
    }
    Mat empty(0, 1);
    CHECK_THROWS_AS(sparsification_loss_value(empty), std::domain_error);
}

TEST_CASE("fuse_scores: ablation endpoints and the 0.7/0.3 case") {
    const std::vector<double> uns = {0.8, 0.2, 0.6};
    const std::vector<double> cell = {1.0, 0.0, 1.0};
    const auto urs_only = fuse_scores_values(uns, cell, 1.0, 0.0);
    CHECK(urs_only == uns);
    const auto cell_only = fuse_scores_values(uns, cell, 0.0, 1.0);
    CHECK(cell_only == cell);
    const auto fused = fuse_scores_values(uns, cell, 0.7, 0.3);
    CHECK(fused[0] == doctest::Approx(0.86).epsilon(1e-12));
    CHECK_THROWS_AS(fuse_scores_values({0.1}, {0.1, 0.2}, 0.5, 0.5), std::logic_error);
}

TEST_CASE("scale_embeddings: identity at eta=1, zeroes only the table region") {
    Tape t;
    ForwardContext ctx(t);
    Mat e(5, 3);
    for (long i = 0; i < e.size(); ++i) e.data()[i] = static_cast<double>(i) + 1.0;
    const std::size_t boundary = 2;  // 2 question tokens, 3 table tokens

    Var ones = t.constant(Mat::Ones(3, 1));
    Var same = scale_embeddings(ctx, t.constant(e), ones, boundary);
    CHECK((t.val(same) - e).cwiseAbs().maxCoeff() == 0.0);

    Var zeros = t.constant(Mat::Zero(3, 1));
    Var gated = scale_embeddings(ctx, t.constant(e), zeros, boundary);
    CHECK(t.val(gated).topRows(2) == e.topRows(2));
    CHECK(t.val(gated).bottomRows(3).cwiseAbs().maxCoeff() == 0.0);

    Var bad = t.constant(Mat::Zero(2, 1));
    CHECK_THROWS_AS(scale_embeddings(ctx, t.constant(e), bad, boundary), std::logic_error);
}

TEST_CASE("relevance ops pass finite-difference checks") {
    nn::ParamStore store;
    nn::Param& h = store.create("h", 5, 4);
    nn::Param& mu = store.create("mu", 2, 4);
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0.0, 1.0);
    for (nn::Param* p : store.all()) {
        for (long i = 0; i < p->value.size(); ++i) p->value.data()[i] = g(rng);
    }

    // Freeze the target at the primal point; it is a constant of the loss.
    Mat frozen_z;
    {
        Tape t;
        Var q = t.soft_assign(t.constant(h.value), t.constant(mu.value), 1.0);
        frozen_z = target_distribution(t.val(q));
    }
    auto loss_fn = [&](bool with_grad) {
        if (with_grad) store.zero_grads();
        Tape t;
        ForwardContext ctx(t);
        Var q = t.soft_assign(t.param(h), t.param(mu), 1.0);
        Var clu = clustering_loss(ctx, q, frozen_z, 1);
        Var sep = t.centroid_separation(t.param(mu));
        Var sparse = sparsification_loss(ctx, t.cols(t.param(h), 0, 1));
        Var loss = t.add(t.add(clu, sep), sparse);
        if (with_grad) t.backward(loss);
        return t.scalar(loss);
    };
    nn::GradCheckOptions opts;
    opts.coords_per_tensor = 10;
    const auto rep = nn::grad_check(store, loss_fn, opts);
    CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("overlap baseline scores rows by question-token overlap") {
    const auto vocab = vocabulary_for(GeneratorConfig::defaults());
    Table t{{"name", "result"}, {{"alice", "win"}, {"bruno", "loss"}}};
    auto in = tokenize_linearize(t, "alice win ?", vocab);

    SUBCASE("row identical to the question text scores 1 on the overlap part") {
        // question tokens {alice, win, ?}; row 1 holds {alice, win}: 2/3
        const auto eta = overlap_baseline_score("alice win", in.table, vocab);
        for (std::size_t p = 0; p < eta.size(); ++p) {
            const auto& tag = in.table.token_cell_map[p];
            if (tag.is_cell() && tag.row == 1) CHECK(eta[p] == doctest::Approx(1.0));
        }
    }
    SUBCASE("disjoint vocabulary scores 0") {
        const auto eta = overlap_baseline_score("quartz ember", in.table, vocab);
        for (double v : eta) CHECK(v == 0.0);
    }
    SUBCASE("half overlap scores 0.5") {
        const auto eta = overlap_baseline_score("alice quartz", in.table, vocab);
        bool saw_row1 = false;
        for (std::size_t p = 0; p < eta.size(); ++p) {
            const auto& tag = in.table.token_cell_map[p];
            if (tag.is_cell() && tag.row == 1) {
                CHECK(eta[p] == doctest::Approx(0.5));
                saw_row1 = true;
            }
        }
        CHECK(saw_row1);
    }
}
