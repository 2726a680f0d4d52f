#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace tqa::nn {

using Mat = Eigen::MatrixXd;

/// One named parameter tensor with its gradient and optimizer state.
struct Param {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
    bool no_decay = false;
    bool trainable = true;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns every parameter of a model in a stable, name-addressable order.
class ParamStore {
public:
    Param& create(const std::string& name, int rows, int cols, bool no_decay = false);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const;

    std::vector<Param*>& all() { return order_; }
    const std::vector<Param*>& all() const { return order_; }

    void zero_grads();
    std::size_t total_parameters() const;

private:
    std::vector<std::unique_ptr<Param>> owned_;
    std::vector<Param*> order_;
    std::unordered_map<std::string, Param*> by_name_;
};

/// Handle to a tape node. Valid only for the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff over Eigen double matrices. Build a fresh tape per
/// forward pass; backward() walks the nodes in reverse creation order and
/// accumulates parameter gradients into their Param::grad slots.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that never receives gradient.
    Var constant(Mat value);
    /// Leaf tied to a parameter; backward adds into p.grad.
    Var param(Param& p);

    const Mat& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].val; }
    double scalar(Var v) const;

    // --- elementwise ---
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scalar_mul(Var a, double c);
    Var neg(Var a) { return scalar_mul(a, -1.0); }
    Var square(Var a);
    Var exp(Var a);
    Var sigmoid(Var a);
    Var gelu(Var a);

    // --- shape / linear algebra ---
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var rows(Var a, int start, int count);
    Var cols(Var a, int start, int count);
    Var vcat(const std::vector<Var>& parts);
    Var hcat(const std::vector<Var>& parts);
    Var gather_rows(Var table, const std::vector<int>& ids);
    /// out.row(i) = a.row(i) + v (v is 1 x cols).
    Var add_rowvec(Var a, Var v);
    /// out.row(i) = a.row(i) * s(i, 0) (s is rows x 1).
    Var scale_rows(Var a, Var s);

    // --- reductions / losses ---
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var softmax_rows(Var a);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    /// Token-level cross entropy, mean over positions whose target != ignore_id.
    Var cross_entropy(Var logits, const std::vector<int>& targets, int ignore_id = -1);

    /// Student's-t soft assignment of each row of h to each row of centroids:
    /// q_pj = (1 + ||h_p - mu_j||^2 / alpha)^(-(alpha+1)/2), row-normalized.
    Var soft_assign(Var h, Var centroids, double alpha);
    /// sum_ij z_ij * log(z_ij / q_ij) with z a constant; gradient flows only
    /// into q.
    Var kl_to_const(const Mat& z, Var q);
    /// 2 - ||u0 - u1||^2 over unit-normalized copies of the two centroid
    /// rows. Throws on a zero-norm centroid.
    Var centroid_separation(Var centroids);

    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat val;
        Mat grad;
        bool requires_grad = false;
        bool grad_alloc = false;
        std::function<void()> back;  // empty for leaves
    };

    Var make(Mat value, bool requires_grad, std::function<void()> back = {});
    Mat& grad_of(int id);
    bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    std::vector<Node> nodes_;
    std::vector<std::pair<int, Param*>> param_links_;
};

bool all_finite(const Mat& m);

}  // namespace tqa::nn
