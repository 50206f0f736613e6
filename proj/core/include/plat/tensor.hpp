#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "plat/errors.hpp"

namespace plat {

// Dense real-valued tensor (rank 1 or 2, row-major doubles) with reverse-mode
// differentiation over a dynamic tape. The graph is rebuilt on every forward
// pass; backward() walks it once in reverse creation order.
//
// Every op validates shapes and rejects non-finite outputs. There is no
// broadcasting except bias-add over the last dimension.

struct TensorImpl {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily; empty means untouched
    bool requires_grad = false;
    uint64_t id = 0;  // creation order; ids of inputs always precede outputs
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> grad_fn;  // pulls self.grad into parents

    size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
    static Tensor from_values(std::vector<int> shape, std::vector<double> v,
                              bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, double stddev, class Rng& rng,
                        bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    size_t numel() const { return impl_->numel(); }
    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool b);

    std::vector<double>& values() { return impl_->value; }
    const std::vector<double>& values() const { return impl_->value; }
    std::vector<double>& grad();
    void zero_grad();
    double item() const;
    double at(int r, int c) const;

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Disables graph recording for the current thread while alive (inference,
// finite-difference probes).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// ---- forward ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Same shape, or b a vector matching a's last dimension (bias add per row).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor softmax_lastdim(const Tensor& a);
// Square score matrix; row q is a softmax over columns 0..q, zero beyond.
Tensor causal_softmax(const Tensor& a);
Tensor layernorm_lastdim(const Tensor& x, const Tensor& gain, const Tensor& bias);
Tensor gelu(const Tensor& a);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int start, int len);
Tensor transpose2d(const Tensor& a);
// Sum of -log softmax(row)[target] over rows whose target >= 0 (-1 masks).
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets);
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor exp_elem(const Tensor& a);
// Elementwise min; on ties the gradient goes to the first argument.
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor clamp(const Tensor& a, double lo, double hi);
// Sum over rows of KL(softmax(p_logits_row) || softmax(q_logits_row)).
Tensor kl_from_logits(const Tensor& p_logits, const Tensor& q_logits);

// ---- backward + checking ---------------------------------------------------

// Seeds d(loss)/d(loss)=1 and propagates to every reachable tensor that
// requires grad. Leaf grads accumulate across calls; call zero_grad (or the
// optimizer) between steps.
void backward(const Tensor& loss);

struct GradCheckReport {
    bool pass = false;
    double tol = 0.0;
    double max_rel_err = 0.0;
    size_t n_elements = 0;
    size_t worst_input = 0;
    size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::string to_string() const;
};

// Central finite differences against backward() for a scalar-valued f of the
// given leaf inputs. Relative error uses a 1e-3 denominator floor so exact
// zero gradients stay checkable.
GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           double step, double tol);

}  // namespace plat
