#include "retouche/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "retouche/error.hpp"
#include "retouche/kernels.hpp"

namespace retouche::ad {

namespace {

using kernels::Trans;

const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

[[noreturn]] void shape_fail(OpKind kind, std::span<const NodeRef> in, const std::string& why) {
    std::string msg = std::string(op_name(kind)) + ": " + why + " [";
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (i) msg += ", ";
        msg += std::to_string(in[i].rows) + "x" + std::to_string(in[i].cols);
    }
    throw ShapeError(msg + "]");
}

void expect_arity(OpKind kind, std::span<const NodeRef> in, std::size_t n) {
    if (in.size() != n) shape_fail(kind, in, "expects " + std::to_string(n) + " inputs");
}

void expect_same(OpKind kind, std::span<const NodeRef> in) {
    if (in[0].rows != in[1].rows || in[0].cols != in[1].cols) shape_fail(kind, in, "shapes differ");
}

template <class F>
Mat map(const Mat& a, F f) {
    Mat out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

template <class F>
Mat zip(const Mat& a, const Mat& b, F f) {
    Mat out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

void accumulate(Mat& into, const Mat& g) {
    if (into.empty()) {
        into = g;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
}

Mat col_sums(const Mat& m) {
    Mat s(1, m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) s[c] += m(r, c);
    return s;
}

double gelu_value(double x) {
    const double u = kSqrt2OverPi * (x + gelu_coeff * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_slope(double x) {
    const double u = kSqrt2OverPi * (x + gelu_coeff * x * x * x);
    const double th = std::tanh(u);
    const double du = kSqrt2OverPi * (1.0 + 3.0 * gelu_coeff * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

// Normalizes columns of x with the given per-column mean and variance.
Mat normalize_cols(const Mat& x, const Mat& mean, const Mat& var, double eps, Mat& inv_std) {
    inv_std = Mat(1, x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    Mat xhat(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) xhat(r, c) = (x(r, c) - mean[c]) * inv_std[c];
    return xhat;
}

Mat affine_cols(const Mat& xhat, const Mat& gamma, const Mat& beta) {
    Mat y(xhat.rows(), xhat.cols());
    for (std::size_t r = 0; r < xhat.rows(); ++r)
        for (std::size_t c = 0; c < xhat.cols(); ++c) y(r, c) = gamma[c] * xhat(r, c) + beta[c];
    return y;
}

}  // namespace

std::string_view op_name(OpKind kind) noexcept {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::hadamard: return "hadamard";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::scale: return "scale";
        case OpKind::broadcast_row_add: return "broadcast_row_add";
        case OpKind::relu: return "relu";
        case OpKind::gelu: return "gelu";
        case OpKind::softmax_rows: return "softmax_rows";
        case OpKind::log: return "log";
        case OpKind::exp: return "exp";
        case OpKind::square: return "square";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::concat_cols: return "concat_cols";
        case OpKind::slice_cols: return "slice_cols";
        case OpKind::batchnorm_train: return "batchnorm_train";
        case OpKind::batchnorm_eval: return "batchnorm_eval";
        case OpKind::transpose: return "transpose";
    }
    return "unknown";
}

const Mat& Gradients::at(NodeRef leaf) const {
    auto it = by_leaf_.find(leaf.index);
    if (it == by_leaf_.end()) throw Error("Gradients: no entry for node " + std::to_string(leaf.index));
    return it->second;
}

NodeRef Tape::leaf(Mat value, bool requires_grad) {
    if (!value.all_finite()) throw NumericalError("leaf: non-finite value " + value.shape_string());
    Record rec;
    rec.kind = OpKind::leaf;
    rec.requires_grad = requires_grad;
    rec.needs_grad = requires_grad;
    const NodeRef ref{records_.size(), value.rows(), value.cols()};
    rec.value = std::move(value);
    records_.push_back(std::move(rec));
    return ref;
}

const Tape::Record& Tape::record(NodeRef node) const {
    if (node.index >= records_.size()) throw Error("Tape: node " + std::to_string(node.index) + " not on this tape");
    return records_[node.index];
}

const Mat& Tape::value(NodeRef node) const { return record(node).value; }
bool Tape::requires_grad(NodeRef node) const { return record(node).requires_grad; }
bool Tape::is_leaf(NodeRef node) const { return record(node).kind == OpKind::leaf; }
OpKind Tape::kind(NodeRef node) const { return record(node).kind; }

const Mat& Tape::batch_stat(NodeRef node, std::size_t slot) const {
    const Record& rec = record(node);
    if (rec.kind != OpKind::batchnorm_train || slot > 1) throw Error("batch_stat: not a batchnorm_train node");
    return rec.saved[2 + slot];
}

NodeRef Tape::apply(OpKind kind, std::span<const NodeRef> in, const OpAttrs& attrs) {
    for (const NodeRef& r : in) record(r);
    auto val = [&](std::size_t i) -> const Mat& { return records_[in[i].index].value; };

    Record rec;
    rec.kind = kind;
    switch (kind) {
        case OpKind::leaf:
            throw Error("apply: use Tape::leaf to create leaves");
        case OpKind::matmul:
            expect_arity(kind, in, 2);
            if (in[0].cols != in[1].rows) shape_fail(kind, in, "inner dimensions differ");
            rec.value = kernels::gemm(val(0), val(1));
            break;
        case OpKind::hadamard:
            expect_arity(kind, in, 2);
            expect_same(kind, in);
            rec.value = zip(val(0), val(1), [](double a, double b) { return a * b; });
            break;
        case OpKind::add:
            expect_arity(kind, in, 2);
            expect_same(kind, in);
            rec.value = zip(val(0), val(1), [](double a, double b) { return a + b; });
            break;
        case OpKind::sub:
            expect_arity(kind, in, 2);
            expect_same(kind, in);
            rec.value = zip(val(0), val(1), [](double a, double b) { return a - b; });
            break;
        case OpKind::scale: {
            expect_arity(kind, in, 1);
            const double s = attrs.scalar;
            rec.value = map(val(0), [s](double a) { return s * a; });
            break;
        }
        case OpKind::broadcast_row_add: {
            expect_arity(kind, in, 2);
            if (in[1].rows != 1 || in[1].cols != in[0].cols) shape_fail(kind, in, "second input must be 1 x cols");
            const Mat& a = val(0);
            const Mat& b = val(1);
            rec.value = Mat(a.rows(), a.cols());
            for (std::size_t r = 0; r < a.rows(); ++r)
                for (std::size_t c = 0; c < a.cols(); ++c) rec.value(r, c) = a(r, c) + b[c];
            break;
        }
        case OpKind::relu:
            expect_arity(kind, in, 1);
            rec.value = map(val(0), [](double a) { return a > 0.0 ? a : 0.0; });
            break;
        case OpKind::gelu:
            expect_arity(kind, in, 1);
            rec.value = map(val(0), gelu_value);
            break;
        case OpKind::softmax_rows: {
            expect_arity(kind, in, 1);
            const Mat& a = val(0);
            rec.value = Mat(a.rows(), a.cols());
            for (std::size_t r = 0; r < a.rows(); ++r) {
                const auto row = a.row_span(r);
                const double mx = *std::max_element(row.begin(), row.end());
                double z = 0.0;
                for (std::size_t c = 0; c < a.cols(); ++c) z += (rec.value(r, c) = std::exp(row[c] - mx));
                for (std::size_t c = 0; c < a.cols(); ++c) rec.value(r, c) /= z;
            }
            break;
        }
        case OpKind::log:
            expect_arity(kind, in, 1);
            rec.value = map(val(0), [](double a) { return std::log(a); });
            break;
        case OpKind::exp:
            expect_arity(kind, in, 1);
            rec.value = map(val(0), [](double a) { return std::exp(a); });
            break;
        case OpKind::square:
            expect_arity(kind, in, 1);
            rec.value = map(val(0), [](double a) { return a * a; });
            break;
        case OpKind::sum:
        case OpKind::mean: {
            expect_arity(kind, in, 1);
            const Mat& a = val(0);
            if (a.empty()) shape_fail(kind, in, "empty input");
            double s = 0.0;
            for (double x : a.values()) s += x;
            if (kind == OpKind::mean) s /= static_cast<double>(a.size());
            rec.value = Mat(1, 1, s);
            break;
        }
        case OpKind::concat_cols: {
            if (in.empty()) shape_fail(kind, in, "needs at least one input");
            std::size_t total = 0;
            for (const NodeRef& r : in) {
                if (r.rows != in[0].rows) shape_fail(kind, in, "row counts differ");
                total += r.cols;
            }
            rec.value = Mat(in[0].rows, total);
            std::size_t off = 0;
            for (std::size_t i = 0; i < in.size(); ++i) {
                const Mat& p = val(i);
                for (std::size_t r = 0; r < p.rows(); ++r)
                    for (std::size_t c = 0; c < p.cols(); ++c) rec.value(r, off + c) = p(r, c);
                off += p.cols();
            }
            break;
        }
        case OpKind::slice_cols: {
            expect_arity(kind, in, 1);
            if (attrs.begin >= attrs.end || attrs.end > in[0].cols)
                shape_fail(kind, in,
                           "bad column range [" + std::to_string(attrs.begin) + "," + std::to_string(attrs.end) + ")");
            const Mat& a = val(0);
            rec.value = Mat(a.rows(), attrs.end - attrs.begin);
            for (std::size_t r = 0; r < a.rows(); ++r)
                for (std::size_t c = attrs.begin; c < attrs.end; ++c) rec.value(r, c - attrs.begin) = a(r, c);
            break;
        }
        case OpKind::batchnorm_train: {
            expect_arity(kind, in, 3);
            if (in[0].rows == 0) shape_fail(kind, in, "empty batch");
            for (int i : {1, 2})
                if (in[i].rows != 1 || in[i].cols != in[0].cols) shape_fail(kind, in, "gamma/beta must be 1 x cols");
            const Mat& x = val(0);
            Mat mean(1, x.cols()), var(1, x.cols());
            const double n = static_cast<double>(x.rows());
            for (std::size_t c = 0; c < x.cols(); ++c) {
                double s = 0.0;
                for (std::size_t r = 0; r < x.rows(); ++r) s += x(r, c);
                mean[c] = s / n;
                double v = 0.0;
                for (std::size_t r = 0; r < x.rows(); ++r) v += (x(r, c) - mean[c]) * (x(r, c) - mean[c]);
                var[c] = v / n;
            }
            Mat inv_std;
            Mat xhat = normalize_cols(x, mean, var, attrs.eps, inv_std);
            rec.value = affine_cols(xhat, val(1), val(2));
            rec.saved = {std::move(xhat), std::move(inv_std), std::move(mean), std::move(var)};
            break;
        }
        case OpKind::batchnorm_eval: {
            expect_arity(kind, in, 3);
            for (int i : {1, 2})
                if (in[i].rows != 1 || in[i].cols != in[0].cols) shape_fail(kind, in, "gamma/beta must be 1 x cols");
            if (attrs.running_mean.rows() != 1 || attrs.running_mean.cols() != in[0].cols ||
                !attrs.running_var.same_shape(attrs.running_mean))
                shape_fail(kind, in, "running statistics must be 1 x cols");
            Mat inv_std;
            Mat xhat = normalize_cols(val(0), attrs.running_mean, attrs.running_var, attrs.eps, inv_std);
            rec.value = affine_cols(xhat, val(1), val(2));
            rec.saved = {std::move(xhat), std::move(inv_std)};
            break;
        }
        case OpKind::transpose:
            expect_arity(kind, in, 1);
            rec.value = val(0).transposed();
            break;
    }

    if (!rec.value.all_finite())
        throw NumericalError(std::string(op_name(kind)) + ": non-finite output " + rec.value.shape_string());

    rec.inputs.reserve(in.size());
    for (const NodeRef& r : in) {
        rec.inputs.push_back(r.index);
        rec.needs_grad = rec.needs_grad || records_[r.index].needs_grad;
    }
    if (kind != OpKind::batchnorm_eval) rec.attrs.scalar = attrs.scalar;
    rec.attrs.begin = attrs.begin;
    rec.attrs.end = attrs.end;
    rec.attrs.eps = attrs.eps;
    const NodeRef ref{records_.size(), rec.value.rows(), rec.value.cols()};
    records_.push_back(std::move(rec));
    return ref;
}

void Tape::backward(const Record& rec, const Mat& g, std::vector<Mat>& grads) const {
    auto in_val = [&](std::size_t i) -> const Mat& { return records_[rec.inputs[i]].value; };
    auto wants = [&](std::size_t i) { return records_[rec.inputs[i]].needs_grad; };
    auto push = [&](std::size_t i, const Mat& contrib) { accumulate(grads[rec.inputs[i]], contrib); };

    switch (rec.kind) {
        case OpKind::leaf:
            break;
        case OpKind::matmul:
            if (wants(0)) push(0, kernels::gemm(g, in_val(1), Trans::no, Trans::yes));
            if (wants(1)) push(1, kernels::gemm(in_val(0), g, Trans::yes, Trans::no));
            break;
        case OpKind::hadamard:
            if (wants(0)) push(0, zip(g, in_val(1), [](double a, double b) { return a * b; }));
            if (wants(1)) push(1, zip(g, in_val(0), [](double a, double b) { return a * b; }));
            break;
        case OpKind::add:
            if (wants(0)) push(0, g);
            if (wants(1)) push(1, g);
            break;
        case OpKind::sub:
            if (wants(0)) push(0, g);
            if (wants(1)) push(1, map(g, [](double a) { return -a; }));
            break;
        case OpKind::scale: {
            const double s = rec.attrs.scalar;
            push(0, map(g, [s](double a) { return s * a; }));
            break;
        }
        case OpKind::broadcast_row_add:
            if (wants(0)) push(0, g);
            if (wants(1)) push(1, col_sums(g));
            break;
        case OpKind::relu:
            push(0, zip(g, in_val(0), [](double gi, double x) { return x > 0.0 ? gi : 0.0; }));
            break;
        case OpKind::gelu:
            push(0, zip(g, in_val(0), [](double gi, double x) { return gi * gelu_slope(x); }));
            break;
        case OpKind::softmax_rows: {
            const Mat& y = rec.value;
            Mat dx(y.rows(), y.cols());
            for (std::size_t r = 0; r < y.rows(); ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
                for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (g(r, c) - dot);
            }
            push(0, dx);
            break;
        }
        case OpKind::log:
            push(0, zip(g, in_val(0), [](double gi, double x) { return gi / x; }));
            break;
        case OpKind::exp:
            push(0, zip(g, rec.value, [](double gi, double y) { return gi * y; }));
            break;
        case OpKind::square:
            push(0, zip(g, in_val(0), [](double gi, double x) { return 2.0 * x * gi; }));
            break;
        case OpKind::sum:
        case OpKind::mean: {
            const Mat& x = in_val(0);
            const double v = rec.kind == OpKind::mean ? g[0] / static_cast<double>(x.size()) : g[0];
            push(0, Mat(x.rows(), x.cols(), v));
            break;
        }
        case OpKind::concat_cols: {
            std::size_t off = 0;
            for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
                const Mat& p = in_val(i);
                if (wants(i)) {
                    Mat part(p.rows(), p.cols());
                    for (std::size_t r = 0; r < p.rows(); ++r)
                        for (std::size_t c = 0; c < p.cols(); ++c) part(r, c) = g(r, off + c);
                    push(i, part);
                }
                off += p.cols();
            }
            break;
        }
        case OpKind::slice_cols: {
            const Mat& x = in_val(0);
            Mat dx(x.rows(), x.cols());
            for (std::size_t r = 0; r < x.rows(); ++r)
                for (std::size_t c = rec.attrs.begin; c < rec.attrs.end; ++c) dx(r, c) = g(r, c - rec.attrs.begin);
            push(0, dx);
            break;
        }
        case OpKind::batchnorm_train: {
            const Mat& xhat = rec.saved[0];
            const Mat& inv_std = rec.saved[1];
            const Mat& gamma = in_val(1);
            const std::size_t n = xhat.rows();
            Mat dgamma(1, xhat.cols()), dbeta(1, xhat.cols());
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < xhat.cols(); ++c) {
                    dbeta[c] += g(r, c);
                    dgamma[c] += g(r, c) * xhat(r, c);
                }
            if (wants(0)) {
                Mat dx(n, xhat.cols());
                const double nn = static_cast<double>(n);
                for (std::size_t c = 0; c < xhat.cols(); ++c) {
                    const double mean_g = dbeta[c] / nn;
                    const double mean_gx = dgamma[c] / nn;
                    const double k = gamma[c] * inv_std[c];
                    for (std::size_t r = 0; r < n; ++r) dx(r, c) = k * (g(r, c) - mean_g - xhat(r, c) * mean_gx);
                }
                push(0, dx);
            }
            if (wants(1)) push(1, dgamma);
            if (wants(2)) push(2, dbeta);
            break;
        }
        case OpKind::batchnorm_eval: {
            const Mat& xhat = rec.saved[0];
            const Mat& inv_std = rec.saved[1];
            const Mat& gamma = in_val(1);
            Mat dgamma(1, xhat.cols()), dbeta(1, xhat.cols());
            Mat dx(xhat.rows(), xhat.cols());
            for (std::size_t r = 0; r < xhat.rows(); ++r)
                for (std::size_t c = 0; c < xhat.cols(); ++c) {
                    dbeta[c] += g(r, c);
                    dgamma[c] += g(r, c) * xhat(r, c);
                    dx(r, c) = g(r, c) * gamma[c] * inv_std[c];
                }
            if (wants(0)) push(0, dx);
            if (wants(1)) push(1, dgamma);
            if (wants(2)) push(2, dbeta);
            break;
        }
        case OpKind::transpose:
            push(0, g.transposed());
            break;
    }
}

Gradients Tape::backprop(NodeRef loss) const {
    const Record& top = record(loss);
    if (top.value.rows() != 1 || top.value.cols() != 1)
        throw ShapeError("backprop: loss must be 1x1, got " + top.value.shape_string());

    Gradients out;
    std::vector<Mat> grads(loss.index + 1);
    grads[loss.index] = Mat(1, 1, 1.0);
    for (std::size_t i = loss.index + 1; i-- > 0;) {
        const Record& rec = records_[i];
        if (!rec.needs_grad || grads[i].empty()) continue;
        if (rec.kind == OpKind::leaf) {
            if (rec.requires_grad) {
                if (!grads[i].all_finite()) throw NumericalError("backprop: non-finite gradient at leaf " + std::to_string(i));
                out.by_leaf_.emplace(i, std::move(grads[i]));
            }
            continue;
        }
        backward(rec, grads[i], grads);
        grads[i] = Mat();
    }
    return out;
}

NodeRef matmul(Tape& t, NodeRef a, NodeRef b) { return t.apply(OpKind::matmul, std::array{a, b}); }
NodeRef hadamard(Tape& t, NodeRef a, NodeRef b) { return t.apply(OpKind::hadamard, std::array{a, b}); }
NodeRef add(Tape& t, NodeRef a, NodeRef b) { return t.apply(OpKind::add, std::array{a, b}); }
NodeRef sub(Tape& t, NodeRef a, NodeRef b) { return t.apply(OpKind::sub, std::array{a, b}); }
NodeRef scale(Tape& t, NodeRef a, double s) {
    OpAttrs attrs;
    attrs.scalar = s;
    return t.apply(OpKind::scale, std::array{a}, attrs);
}
NodeRef broadcast_row_add(Tape& t, NodeRef a, NodeRef row) {
    return t.apply(OpKind::broadcast_row_add, std::array{a, row});
}
NodeRef relu(Tape& t, NodeRef a) { return t.apply(OpKind::relu, std::array{a}); }
NodeRef gelu(Tape& t, NodeRef a) { return t.apply(OpKind::gelu, std::array{a}); }
NodeRef softmax_rows(Tape& t, NodeRef a) { return t.apply(OpKind::softmax_rows, std::array{a}); }
NodeRef log(Tape& t, NodeRef a) { return t.apply(OpKind::log, std::array{a}); }
NodeRef exp(Tape& t, NodeRef a) { return t.apply(OpKind::exp, std::array{a}); }
NodeRef square(Tape& t, NodeRef a) { return t.apply(OpKind::square, std::array{a}); }
NodeRef sum(Tape& t, NodeRef a) { return t.apply(OpKind::sum, std::array{a}); }
NodeRef mean(Tape& t, NodeRef a) { return t.apply(OpKind::mean, std::array{a}); }
NodeRef concat_cols(Tape& t, std::span<const NodeRef> parts) { return t.apply(OpKind::concat_cols, parts); }
NodeRef slice_cols(Tape& t, NodeRef a, std::size_t begin, std::size_t end) {
    OpAttrs attrs;
    attrs.begin = begin;
    attrs.end = end;
    return t.apply(OpKind::slice_cols, std::array{a}, attrs);
}
NodeRef batchnorm_train(Tape& t, NodeRef x, NodeRef gamma, NodeRef beta) {
    return t.apply(OpKind::batchnorm_train, std::array{x, gamma, beta});
}
NodeRef batchnorm_eval(Tape& t, NodeRef x, NodeRef gamma, NodeRef beta, const Mat& running_mean,
                       const Mat& running_var) {
    OpAttrs attrs;
    attrs.running_mean = running_mean;
    attrs.running_var = running_var;
    return t.apply(OpKind::batchnorm_eval, std::array{x, gamma, beta}, attrs);
}
NodeRef transpose(Tape& t, NodeRef a) { return t.apply(OpKind::transpose, std::array{a}); }

NodeRef slice_rows(Tape& t, NodeRef a, std::size_t begin, std::size_t end) {
    if (begin == 0 && end == a.rows) return a;
    return transpose(t, slice_cols(t, transpose(t, a), begin, end));
}

NodeRef broadcast_rows(Tape& t, NodeRef row, std::size_t n, std::size_t d) {
    if (row.rows != 1 || (row.cols != d && row.cols != 1))
        throw ShapeError("broadcast_rows: expected 1x" + std::to_string(d) + " or 1x1, got " + std::to_string(row.rows) +
                         "x" + std::to_string(row.cols));
    NodeRef out = matmul(t, t.constant(Mat(n, 1, 1.0)), row);
    if (row.cols == 1 && d != 1) out = matmul(t, out, t.constant(Mat(1, d, 1.0)));
    return out;
}

Mat finite_diff_grad(const std::function<double(const Mat&)>& f, const Mat& x, double eps) {
    if (!(eps > 0.0)) throw Error("finite_diff_grad: eps must be positive");
    Mat grad(x.rows(), x.cols());
    Mat probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const double up = f(probe);
        probe[i] = x[i] - eps;
        const double down = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericalError("finite_diff_grad: non-finite value at probe " + std::to_string(i));
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

double relative_error(const Mat& a, const Mat& b, double floor) {
    const double scale = std::max({max_abs(a), max_abs(b), floor});
    return max_abs_diff(a, b) / scale;
}

}  // namespace retouche::ad
