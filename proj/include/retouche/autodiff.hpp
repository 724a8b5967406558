#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "retouche/mat.hpp"

// Reverse-mode differentiation over dense 2-D arrays.
//
// A Tape records a DAG in creation order. Leaves are created explicitly and
// carry a requires_grad flag; frozen leaves (requires_grad = false) never
// receive a gradient entry. Every recorded value is checked for finiteness.
namespace retouche::ad {

enum class OpKind {
    leaf,
    matmul,
    hadamard,
    add,
    sub,
    scale,
    broadcast_row_add,
    relu,
    gelu,
    softmax_rows,
    log,
    exp,
    square,
    sum,
    mean,
    concat_cols,
    slice_cols,
    batchnorm_train,
    batchnorm_eval,
    transpose,
};

std::string_view op_name(OpKind kind) noexcept;

struct NodeRef {
    std::size_t index = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

inline constexpr double batchnorm_eps = 1e-5;
inline constexpr double batchnorm_momentum = 0.1;

struct OpAttrs {
    double scalar = 0.0;                 // scale
    std::size_t begin = 0, end = 0;      // slice_cols, half-open
    Mat running_mean, running_var;       // batchnorm_eval, 1×d
    double eps = batchnorm_eps;          // batchnorm_*
};

class Gradients {
public:
    bool contains(NodeRef leaf) const { return by_leaf_.contains(leaf.index); }
    const Mat& at(NodeRef leaf) const;
    std::size_t size() const noexcept { return by_leaf_.size(); }
    auto begin() const { return by_leaf_.begin(); }
    auto end() const { return by_leaf_.end(); }

private:
    friend class Tape;
    std::map<std::size_t, Mat> by_leaf_;
};

class Tape {
public:
    NodeRef leaf(Mat value, bool requires_grad);
    NodeRef constant(Mat value) { return leaf(std::move(value), false); }

    NodeRef apply(OpKind kind, std::span<const NodeRef> inputs, const OpAttrs& attrs = {});

    const Mat& value(NodeRef node) const;
    bool requires_grad(NodeRef node) const;
    bool is_leaf(NodeRef node) const;
    OpKind kind(NodeRef node) const;
    std::size_t size() const noexcept { return records_.size(); }

    // Batch statistics saved by a batchnorm_train node: slot 0 = mean, 1 = biased variance.
    const Mat& batch_stat(NodeRef node, std::size_t slot) const;

    // d loss / d leaf for every leaf with requires_grad that the loss depends on.
    Gradients backprop(NodeRef loss) const;

private:
    struct Record {
        OpKind kind = OpKind::leaf;
        std::vector<std::size_t> inputs;
        Mat value;
        OpAttrs attrs;
        std::vector<Mat> saved;
        bool requires_grad = false;  // leaves only
        bool needs_grad = false;     // reaches a requires_grad leaf
    };

    const Record& record(NodeRef node) const;
    void backward(const Record& rec, const Mat& grad_out, std::vector<Mat>& grads) const;

    std::vector<Record> records_;
};

// Typed wrappers over Tape::apply.
NodeRef matmul(Tape& t, NodeRef a, NodeRef b);
NodeRef hadamard(Tape& t, NodeRef a, NodeRef b);
NodeRef add(Tape& t, NodeRef a, NodeRef b);
NodeRef sub(Tape& t, NodeRef a, NodeRef b);
NodeRef scale(Tape& t, NodeRef a, double s);
NodeRef broadcast_row_add(Tape& t, NodeRef a, NodeRef row);
NodeRef relu(Tape& t, NodeRef a);
NodeRef gelu(Tape& t, NodeRef a);
NodeRef softmax_rows(Tape& t, NodeRef a);
NodeRef log(Tape& t, NodeRef a);
NodeRef exp(Tape& t, NodeRef a);
NodeRef square(Tape& t, NodeRef a);
NodeRef sum(Tape& t, NodeRef a);
NodeRef mean(Tape& t, NodeRef a);
NodeRef concat_cols(Tape& t, std::span<const NodeRef> parts);
NodeRef slice_cols(Tape& t, NodeRef a, std::size_t begin, std::size_t end);
NodeRef batchnorm_train(Tape& t, NodeRef x, NodeRef gamma, NodeRef beta);
NodeRef batchnorm_eval(Tape& t, NodeRef x, NodeRef gamma, NodeRef beta, const Mat& running_mean,
                       const Mat& running_var);
NodeRef transpose(Tape& t, NodeRef a);

// Rows [begin, end) of a, via transpose/slice_cols/transpose.
NodeRef slice_rows(Tape& t, NodeRef a, std::size_t begin, std::size_t end);
// Broadcasts a 1×d row (or 1×1 scalar) to n×d using a constant ones matmul.
NodeRef broadcast_rows(Tape& t, NodeRef row, std::size_t n, std::size_t d);

// gelu, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
inline constexpr double gelu_coeff = 0.044715;

// Central-difference gradient of a scalar function.
Mat finite_diff_grad(const std::function<double(const Mat&)>& f, const Mat& x, double eps = 1e-5);

// max|a-b| / max(max|a|, max|b|, floor).
double relative_error(const Mat& a, const Mat& b, double floor = 1e-12);

}  // namespace retouche::ad
