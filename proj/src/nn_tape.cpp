#include "tqa/nn/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace tqa::nn {

bool all_finite(const Mat& m) { return m.allFinite(); }

Param& ParamStore::create(const std::string& name, int rows, int cols, bool no_decay) {
    if (by_name_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value = Mat::Zero(rows, cols);
    p->grad = Mat::Zero(rows, cols);
    p->adam_m = Mat::Zero(rows, cols);
    p->adam_v = Mat::Zero(rows, cols);
    p->no_decay = no_decay;
    Param* raw = p.get();
    owned_.push_back(std::move(p));
    order_.push_back(raw);
    by_name_.emplace(name, raw);
    return *raw;
}

Param& ParamStore::at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
    return *it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
    return *it->second;
}

bool ParamStore::has(const std::string& name) const { return by_name_.count(name) > 0; }

void ParamStore::zero_grads() {
    for (Param* p : order_) p->zero_grad();
}

std::size_t ParamStore::total_parameters() const {
    std::size_t n = 0;
    for (const Param* p : order_) n += static_cast<std::size_t>(p->value.size());
    return n;
}

Var Tape::make(Mat value, bool requires_grad, std::function<void()> back) {
    Node n;
    n.val = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad_of(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_alloc) {
        n.grad.setZero(n.val.rows(), n.val.cols());
        n.grad_alloc = true;
    }
    return n.grad;
}

double Tape::scalar(Var v) const {
    const Mat& m = val(v);
    if (m.size() != 1) throw std::logic_error("scalar() on non-1x1 node");
    return m(0, 0);
}

Var Tape::constant(Mat value) { return make(std::move(value), false); }

Var Tape::param(Param& p) {
    Var v = make(p.value, p.trainable);
    if (p.trainable) param_links_.emplace_back(v.id, &p);
    return v;
}

Var Tape::add(Var a, Var b) {
    Mat out = val(a) + val(b);
    const bool rg = needs(a) || needs(b);
    Var r = make(std::move(out), rg);
    if (!rg) return r;
    nodes_.back().back = [this, a, b, r]() {
        const Mat& g = grad_of(r.id);
        if (needs(a)) grad_of(a.id) += g;
        if (needs(b)) grad_of(b.id) += g;
    };
    return r;
}

Var Tape::sub(Var a, Var b) {
    Mat out = val(a) - val(b);
    const bool rg = needs(a) || needs(b);
    Var r = make(std::move(out), rg);
    if (!rg) return r;
    nodes_.back().back = [this, a, b, r]() {
        const Mat& g = grad_of(r.id);
        if (needs(a)) grad_of(a.id) += g;
        if (needs(b)) grad_of(b.id) -= g;
    };
    return r;
}

Var Tape::mul(Var a, Var b) {
    Mat out = val(a).cwiseProduct(val(b));
    const bool rg = needs(a) || needs(b);
    Var r = make(std::move(out), rg);
    if (!rg) return r;
    nodes_.back().back = [this, a, b, r]() {
        const Mat& g = grad_of(r.id);
        if (needs(a)) grad_of(a.id) += g.cwiseProduct(val(b));
        if (needs(b)) grad_of(b.id) += g.cwiseProduct(val(a));
    };
    return r;
}

Var Tape::scalar_mul(Var a, double c) {
    Var r = make(val(a) * c, needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, c, r]() { grad_of(a.id) += c * grad_of(r.id); };
    return r;
}

Var Tape::square(Var a) {
    Var r = make(val(a).array().square().matrix(), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, r]() {
        grad_of(a.id) += 2.0 * grad_of(r.id).cwiseProduct(val(a));
    };
    return r;
}

Var Tape::exp(Var a) {
    Var r = make(val(a).array().exp().matrix(), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, r]() {
        grad_of(a.id) += grad_of(r.id).cwiseProduct(val(r));
    };
    return r;
}

Var Tape::sigmoid(Var a) {
    Mat out = (1.0 / (1.0 + (-val(a)).array().exp())).matrix();
    Var r = make(std::move(out), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, r]() {
        const Mat& s = val(r);
        grad_of(a.id) += grad_of(r.id).cwiseProduct(
            s.cwiseProduct((1.0 - s.array()).matrix()));
    };
    return r;
}

Var Tape::gelu(Var a) {
    constexpr double inv_sqrt2 = 0.7071067811865475;
    constexpr double inv_sqrt2pi = 0.3989422804014327;
    Mat out = val(a).unaryExpr(
        [&](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
    Var r = make(std::move(out), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, r]() {
        Mat d = val(a).unaryExpr([&](double x) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) +
                   x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
        grad_of(a.id) += grad_of(r.id).cwiseProduct(d);
    };
    return r;
}

Var Tape::matmul(Var a, Var b) {
    if (val(a).cols() != val(b).rows()) throw std::logic_error("matmul shape mismatch");
    Mat out = val(a) * val(b);
    const bool rg = needs(a) || needs(b);
    Var r = make(std::move(out), rg);
    if (!rg) return r;
    nodes_.back().back = [this, a, b, r]() {
        const Mat& g = grad_of(r.id);
        if (needs(a)) grad_of(a.id).noalias() += g * val(b).transpose();
        if (needs(b)) grad_of(b.id).noalias() += val(a).transpose() * g;
    };
    return r;
}

Var Tape::transpose(Var a) {
    Var r = make(val(a).transpose(), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, r]() { grad_of(a.id) += grad_of(r.id).transpose(); };
    return r;
}

Var Tape::rows(Var a, int start, int count) {
    Var r = make(val(a).middleRows(start, count), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, start, count, r]() {
        grad_of(a.id).middleRows(start, count) += grad_of(r.id);
    };
    return r;
}

Var Tape::cols(Var a, int start, int count) {
    Var r = make(val(a).middleCols(start, count), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, start, count, r]() {
        grad_of(a.id).middleCols(start, count) += grad_of(r.id);
    };
    return r;
}

Var Tape::vcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::logic_error("vcat of nothing");
    long total = 0;
    bool rg = false;
    for (Var p : parts) {
        total += val(p).rows();
        rg = rg || needs(p);
    }
    Mat out(total, val(parts[0]).cols());
    long at = 0;
    for (Var p : parts) {
        out.middleRows(at, val(p).rows()) = val(p);
        at += val(p).rows();
    }
    Var r = make(std::move(out), rg);
    if (!rg) return r;
    std::vector<Var> captured = parts;
    nodes_.back().back = [this, captured, r]() {
        const Mat& g = grad_of(r.id);
        long at = 0;
        for (Var p : captured) {
            const long n = val(p).rows();
            if (needs(p)) grad_of(p.id) += g.middleRows(at, n);
            at += n;
        }
    };
    return r;
}

Var Tape::hcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::logic_error("hcat of nothing");
    long total = 0;
    bool rg = false;
    for (Var p : parts) {
        total += val(p).cols();
        rg = rg || needs(p);
    }
    Mat out(val(parts[0]).rows(), total);
    long at = 0;
    for (Var p : parts) {
        out.middleCols(at, val(p).cols()) = val(p);
        at += val(p).cols();
    }
    Var r = make(std::move(out), rg);
    if (!rg) return r;
    std::vector<Var> captured = parts;
    nodes_.back().back = [this, captured, r]() {
        const Mat& g = grad_of(r.id);
        long at = 0;
        for (Var p : captured) {
            const long n = val(p).cols();
            if (needs(p)) grad_of(p.id) += g.middleCols(at, n);
            at += n;
        }
    };
    return r;
}

Var Tape::gather_rows(Var table, const std::vector<int>& ids) {
    const Mat& t = val(table);
    Mat out(static_cast<long>(ids.size()), t.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= t.rows()) {
            throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) +
                                    " outside table of " + std::to_string(t.rows()) + " rows");
        }
        out.row(static_cast<long>(i)) = t.row(ids[i]);
    }
    Var r = make(std::move(out), needs(table));
    if (!needs(table)) return r;
    std::vector<int> captured = ids;
    nodes_.back().back = [this, table, captured, r]() {
        const Mat& g = grad_of(r.id);
        Mat& tg = grad_of(table.id);
        for (std::size_t i = 0; i < captured.size(); ++i) {
            tg.row(captured[i]) += g.row(static_cast<long>(i));
        }
    };
    return r;
}

Var Tape::add_rowvec(Var a, Var v) {
    if (val(v).rows() != 1 || val(v).cols() != val(a).cols()) {
        throw std::logic_error("add_rowvec shape mismatch");
    }
    Mat out = val(a).rowwise() + val(v).row(0);
    const bool rg = needs(a) || needs(v);
    Var r = make(std::move(out), rg);
    if (!rg) return r;
    nodes_.back().back = [this, a, v, r]() {
        const Mat& g = grad_of(r.id);
        if (needs(a)) grad_of(a.id) += g;
        if (needs(v)) grad_of(v.id) += g.colwise().sum();
    };
    return r;
}

Var Tape::scale_rows(Var a, Var s) {
    if (val(s).cols() != 1 || val(s).rows() != val(a).rows()) {
        throw std::logic_error("scale_rows needs an (n x 1) scale for an (n x d) input");
    }
    Mat out = val(a).array().colwise() * val(s).col(0).array();
    const bool rg = needs(a) || needs(s);
    Var r = make(std::move(out), rg);
    if (!rg) return r;
    nodes_.back().back = [this, a, s, r]() {
        const Mat& g = grad_of(r.id);
        if (needs(a)) {
            grad_of(a.id) += (g.array().colwise() * val(s).col(0).array()).matrix();
        }
        if (needs(s)) {
            grad_of(s.id).col(0) += g.cwiseProduct(val(a)).rowwise().sum();
        }
    };
    return r;
}

Var Tape::sum_all(Var a) {
    Mat out(1, 1);
    out(0, 0) = val(a).sum();
    Var r = make(std::move(out), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, r]() {
        grad_of(a.id).array() += grad_of(r.id)(0, 0);
    };
    return r;
}

Var Tape::mean_all(Var a) {
    const double n = static_cast<double>(val(a).size());
    Mat out(1, 1);
    out(0, 0) = val(a).sum() / n;
    Var r = make(std::move(out), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, n, r]() {
        grad_of(a.id).array() += grad_of(r.id)(0, 0) / n;
    };
    return r;
}

Var Tape::softmax_rows(Var a) {
    Mat out = val(a);
    for (long i = 0; i < out.rows(); ++i) {
        const double m = out.row(i).maxCoeff();
        out.row(i) = (out.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    Var r = make(std::move(out), needs(a));
    if (!needs(a)) return r;
    nodes_.back().back = [this, a, r]() {
        const Mat& s = val(r);
        const Mat& g = grad_of(r.id);
        Mat& ga = grad_of(a.id);
        for (long i = 0; i < s.rows(); ++i) {
            const double dot = g.row(i).dot(s.row(i));
            ga.row(i) += (g.row(i).array() - dot).matrix().cwiseProduct(s.row(i));
        }
    };
    return r;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Mat& in = val(x);
    const long d = in.cols();
    Mat xhat(in.rows(), d);
    Eigen::VectorXd inv_std(in.rows());
    for (long i = 0; i < in.rows(); ++i) {
        const double mu = in.row(i).mean();
        const double var = (in.row(i).array() - mu).square().sum() / static_cast<double>(d);
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (in.row(i).array() - mu) * inv_std(i);
    }
    Mat out = (xhat.array().rowwise() * val(gamma).row(0).array()).rowwise() +
              val(beta).row(0).array();
    const bool rg = needs(x) || needs(gamma) || needs(beta);
    Var r = make(std::move(out), rg);
    if (!rg) return r;
    // Keep xhat and inv_std alive for the backward pass.
    auto xhat_p = std::make_shared<Mat>(std::move(xhat));
    auto inv_std_p = std::make_shared<Eigen::VectorXd>(std::move(inv_std));
    nodes_.back().back = [this, x, gamma, beta, r, xhat_p, inv_std_p, d]() {
        const Mat& g = grad_of(r.id);
        if (needs(gamma)) grad_of(gamma.id).row(0) += g.cwiseProduct(*xhat_p).colwise().sum();
        if (needs(beta)) grad_of(beta.id).row(0) += g.colwise().sum();
        if (needs(x)) {
            Mat& gx = grad_of(x.id);
            const auto grow = val(gamma).row(0).array();
            for (long i = 0; i < g.rows(); ++i) {
                Eigen::Array<double, 1, Eigen::Dynamic> dxhat = g.row(i).array() * grow;
                const double m1 = dxhat.mean();
                const double m2 = (dxhat * xhat_p->row(i).array()).mean();
                gx.row(i) +=
                    ((dxhat - m1 - xhat_p->row(i).array() * m2) * (*inv_std_p)(i)).matrix();
            }
        }
    };
    return r;
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& targets, int ignore_id) {
    const Mat& z = val(logits);
    if (static_cast<long>(targets.size()) != z.rows()) {
        throw std::logic_error("cross_entropy: targets length != logits rows");
    }
    auto probs = std::make_shared<Mat>(z);
    long valid = 0;
    double loss = 0.0;
    for (long i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        probs->row(i) = (z.row(i).array() - m).exp();
        probs->row(i) /= probs->row(i).sum();
        const int t = targets[static_cast<std::size_t>(i)];
        if (t == ignore_id) continue;
        if (t < 0 || t >= z.cols()) throw std::out_of_range("cross_entropy: bad target id");
        loss -= std::log((*probs)(i, t));
        ++valid;
    }
    if (valid == 0) throw std::logic_error("cross_entropy: no valid target positions");
    Mat out(1, 1);
    out(0, 0) = loss / static_cast<double>(valid);
    Var r = make(std::move(out), needs(logits));
    if (!needs(logits)) return r;
    std::vector<int> captured = targets;
    nodes_.back().back = [this, logits, captured, ignore_id, probs, valid, r]() {
        const double g = grad_of(r.id)(0, 0) / static_cast<double>(valid);
        Mat& gl = grad_of(logits.id);
        for (long i = 0; i < gl.rows(); ++i) {
            const int t = captured[static_cast<std::size_t>(i)];
            if (t == ignore_id) continue;
            gl.row(i) += g * probs->row(i);
            gl(i, t) -= g;
        }
    };
    return r;
}

Var Tape::soft_assign(Var h, Var centroids, double alpha) {
    const Mat& x = val(h);
    const Mat& mu = val(centroids);
    const long n = x.rows();
    const long k = mu.rows();
    // u_pj = 1 + ||h_p - mu_j||^2 / alpha ; t_pj = u^(-(alpha+1)/2) ; q = row-norm t.
    auto u = std::make_shared<Mat>(n, k);
    auto t = std::make_shared<Mat>(n, k);
    const double expo = -(alpha + 1.0) / 2.0;
    for (long p = 0; p < n; ++p) {
        for (long j = 0; j < k; ++j) {
            const double d2 = (x.row(p) - mu.row(j)).squaredNorm();
            (*u)(p, j) = 1.0 + d2 / alpha;
            (*t)(p, j) = std::pow((*u)(p, j), expo);
        }
    }
    Mat q = *t;
    for (long p = 0; p < n; ++p) q.row(p) /= q.row(p).sum();
    const bool rg = needs(h) || needs(centroids);
    Var r = make(std::move(q), rg);
    if (!rg) return r;
    nodes_.back().back = [this, h, centroids, alpha, u, t, r]() {
        const Mat& qv = val(r);
        const Mat& g = grad_of(r.id);
        const Mat& x = val(h);
        const Mat& mu = val(centroids);
        const long n = x.rows();
        const long k = mu.rows();
        const double coef = -(alpha + 1.0) / (2.0 * alpha);
        for (long p = 0; p < n; ++p) {
            const double srow = t->row(p).sum();
            const double gq = g.row(p).dot(qv.row(p));
            for (long j = 0; j < k; ++j) {
                // dL/dt_pj -> dL/dd2_pj
                const double dt = (g(p, j) - gq) / srow;
                const double dd2 = dt * coef * (*t)(p, j) / (*u)(p, j);
                const Eigen::RowVectorXd diff = x.row(p) - mu.row(j);
                if (needs(h)) grad_of(h.id).row(p) += 2.0 * dd2 * diff;
                if (needs(centroids)) grad_of(centroids.id).row(j) -= 2.0 * dd2 * diff;
            }
        }
    };
    return r;
}

Var Tape::kl_to_const(const Mat& z, Var q) {
    const Mat& qv = val(q);
    if (z.rows() != qv.rows() || z.cols() != qv.cols()) {
        throw std::logic_error("kl_to_const shape mismatch");
    }
    double loss = 0.0;
    for (long i = 0; i < z.rows(); ++i) {
        for (long j = 0; j < z.cols(); ++j) {
            if (z(i, j) > 0) loss += z(i, j) * std::log(z(i, j) / qv(i, j));
        }
    }
    Mat out(1, 1);
    out(0, 0) = loss;
    Var r = make(std::move(out), needs(q));
    if (!needs(q)) return r;
    auto z_p = std::make_shared<Mat>(z);
    nodes_.back().back = [this, q, z_p, r]() {
        const double g = grad_of(r.id)(0, 0);
        grad_of(q.id) -= g * z_p->cwiseQuotient(val(q));
    };
    return r;
}

Var Tape::centroid_separation(Var centroids) {
    const Mat& mu = val(centroids);
    if (mu.rows() != 2) throw std::logic_error("centroid_separation expects exactly 2 centroids");
    const double n0 = mu.row(0).norm();
    const double n1 = mu.row(1).norm();
    if (n0 < 1e-12 || n1 < 1e-12) {
        throw std::domain_error("centroid_separation: zero-norm centroid cannot be normalized");
    }
    const Eigen::RowVectorXd u0 = mu.row(0) / n0;
    const Eigen::RowVectorXd u1 = mu.row(1) / n1;
    // 2 - ||u0 - u1||^2 == 2 * dot(u0, u1) for unit vectors.
    Mat out(1, 1);
    out(0, 0) = 2.0 - (u0 - u1).squaredNorm();
    Var r = make(std::move(out), needs(centroids));
    if (!needs(centroids)) return r;
    nodes_.back().back = [this, centroids, r]() {
        const Mat& mu = val(centroids);
        const double n0 = mu.row(0).norm();
        const double n1 = mu.row(1).norm();
        const Eigen::RowVectorXd u0 = mu.row(0) / n0;
        const Eigen::RowVectorXd u1 = mu.row(1) / n1;
        const double c = u0.dot(u1);
        const double g = grad_of(r.id)(0, 0);
        grad_of(centroids.id).row(0) += g * 2.0 * (u1 - c * u0) / n0;
        grad_of(centroids.id).row(1) += g * 2.0 * (u0 - c * u1) / n1;
    };
    return r;
}

void Tape::backward(Var loss) {
    if (val(loss).size() != 1) throw std::logic_error("backward() needs a scalar loss");
    if (!needs(loss)) return;  // loss does not depend on any parameter
    grad_of(loss.id)(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.requires_grad && n.grad_alloc && n.back) n.back();
    }
    for (const auto& [id, p] : param_links_) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad_alloc) p->grad += n.grad;
    }
}

}  // namespace tqa::nn
