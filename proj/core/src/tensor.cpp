#include "plat/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "plat/rng.hpp"

namespace plat {

namespace {

std::atomic<uint64_t> g_next_id{1};
thread_local int g_no_grad_depth = 0;

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("dimension must be positive");
        n *= static_cast<size_t>(d);
    }
    if (shape.empty()) throw ShapeError("rank-0 tensors are not supported");
    return n;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

void check_finite(const TensorImpl& t, const char* op) {
    for (double v : t.value) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced non-finite value");
    }
}

std::shared_ptr<TensorImpl> fresh_impl(std::vector<int> shape, std::vector<double> value) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->value = std::move(value);
    impl->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return impl;
}

bool any_requires_grad(const std::vector<Tensor>& inputs) {
    for (const auto& t : inputs)
        if (t.requires_grad()) return true;
    return false;
}

// Builds the output node; attaches parents and the backward closure only when
// the tape is live for these inputs.
Tensor make_op(const char* name, std::vector<int> shape, std::vector<double> value,
               const std::vector<Tensor>& inputs, std::function<void(TensorImpl&)> grad_fn) {
    auto impl = fresh_impl(std::move(shape), std::move(value));
    check_finite(*impl, name);
    if (grad_enabled() && any_requires_grad(inputs)) {
        impl->requires_grad = true;
        impl->parents.reserve(inputs.size());
        for (const auto& t : inputs) impl->parents.push_back(t.impl());
        impl->grad_fn = std::move(grad_fn);
    }
    Tensor out;
    out.impl() = impl;
    return out;
}

// Rows/cols view of a rank-1 or rank-2 tensor: rank-1 counts as one row.
void as_matrix(const TensorImpl& t, int& rows, int& cols) {
    if (t.shape.size() == 1) {
        rows = 1;
        cols = t.shape[0];
    } else {
        rows = t.shape[0];
        cols = t.shape[1];
    }
}

void require_rank(const Tensor& t, int rank, const char* op) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
}

void accumulate(TensorImpl& into, const std::vector<double>& g) {
    into.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) into.grad[i] += g[i];
}

}  // namespace

// ---- Tensor basics ----------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    size_t n = shape_numel(shape);
    Tensor t;
    t.impl_ = fresh_impl(std::move(shape), std::vector<double>(n, 0.0));
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
    size_t n = shape_numel(shape);
    Tensor t;
    t.impl_ = fresh_impl(std::move(shape), std::vector<double>(n, v));
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> v, bool requires_grad) {
    if (shape_numel(shape) != v.size()) throw ShapeError("from_values: shape/data length mismatch");
    Tensor t;
    t.impl_ = fresh_impl(std::move(shape), std::move(v));
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_values({1}, {v}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, double stddev, Rng& rng, bool requires_grad) {
    size_t n = shape_numel(shape);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.gaussian(0.0, stddev);
    return from_values(std::move(shape), std::move(v), requires_grad);
}

void Tensor::set_requires_grad(bool b) {
    if (b && impl_->grad_fn) throw ContractError("requires_grad is settable on leaves only");
    impl_->requires_grad = b;
}

std::vector<double>& Tensor::grad() {
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->value.size(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item(): tensor is not scalar");
    return impl_->value[0];
}

double Tensor::at(int r, int c) const {
    require_rank(*this, 2, "at");
    return impl_->value[static_cast<size_t>(r) * static_cast<size_t>(dim(1)) +
                        static_cast<size_t>(c)];
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

// ---- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner dimensions " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    std::vector<double> out(static_cast<size_t>(m) * static_cast<size_t>(n), 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (int i = 0; i < m; ++i) {
        double* orow = out.data() + static_cast<size_t>(i) * n;
        const double* arow = av + static_cast<size_t>(i) * k;
        for (int l = 0; l < k; ++l) {
            const double x = arow[l];
            const double* brow = bv + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) orow[j] += x * brow[j];
        }
    }
    return make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](TensorImpl& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA[i,l] = sum_j g[i,j] * B[l,j]
            for (int i = 0; i < m; ++i) {
                const double* grow = g + static_cast<size_t>(i) * n;
                double* darow = pa.grad.data() + static_cast<size_t>(i) * k;
                for (int l = 0; l < k; ++l) {
                    const double* brow = pb.value.data() + static_cast<size_t>(l) * n;
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    darow[l] += acc;
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB[l,j] = sum_i A[i,l] * g[i,j]
            for (int i = 0; i < m; ++i) {
                const double* arow = pa.value.data() + static_cast<size_t>(i) * k;
                const double* grow = g + static_cast<size_t>(i) * n;
                for (int l = 0; l < k; ++l) {
                    const double x = arow[l];
                    if (x == 0.0) continue;
                    double* dbrow = pb.grad.data() + static_cast<size_t>(l) * n;
                    for (int j = 0; j < n; ++j) dbrow[j] += x * grow[j];
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool bias_mode = a.shape() != b.shape();
    if (bias_mode) {
        const int last = a.shape().back();
        if (b.rank() != 1 || b.dim(0) != last)
            throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " (only bias over last dim broadcasts)");
    }
    std::vector<double> out = a.values();
    if (bias_mode) {
        const size_t cols = static_cast<size_t>(a.shape().back());
        const auto& bv = b.values();
        for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i % cols];
    } else {
        const auto& bv = b.values();
        for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    }
    return make_op("add", a.shape(), std::move(out), {a, b}, [bias_mode](TensorImpl& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) accumulate(pa, self.grad);
        if (pb.requires_grad) {
            pb.ensure_grad();
            if (bias_mode) {
                const size_t cols = pb.value.size();
                for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i % cols] += self.grad[i];
            } else {
                for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shapes differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make_op("mul", a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    return make_op("scale", a.shape(), std::move(out), {a}, [c](TensorImpl& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += c * self.grad[i];
    });
}

namespace {
// Softmax of src[0..n) into dst; returns nothing. Stable (max-shifted).
void softmax_row(const double* src, double* dst, int n) {
    double mx = src[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, src[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        dst[i] = std::exp(src[i] - mx);
        sum += dst[i];
    }
    for (int i = 0; i < n; ++i) dst[i] /= sum;
}
}  // namespace

Tensor softmax_lastdim(const Tensor& a) {
    int rows, cols;
    as_matrix(*a.impl(), rows, cols);
    std::vector<double> out(a.numel());
    for (int r = 0; r < rows; ++r)
        softmax_row(a.values().data() + static_cast<size_t>(r) * cols,
                    out.data() + static_cast<size_t>(r) * cols, cols);
    return make_op("softmax-lastdim", a.shape(), std::move(out), {a},
                   [rows, cols](TensorImpl& self) {
                       auto& pa = *self.parents[0];
                       if (!pa.requires_grad) return;
                       pa.ensure_grad();
                       for (int r = 0; r < rows; ++r) {
                           const double* y = self.value.data() + static_cast<size_t>(r) * cols;
                           const double* dy = self.grad.data() + static_cast<size_t>(r) * cols;
                           double* dx = pa.grad.data() + static_cast<size_t>(r) * cols;
                           double dot = 0.0;
                           for (int j = 0; j < cols; ++j) dot += dy[j] * y[j];
                           for (int j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
                       }
                   });
}

Tensor causal_softmax(const Tensor& a) {
    require_rank(a, 2, "causal-softmax");
    const int n = a.dim(0);
    if (a.dim(1) != n) throw ShapeError("causal-softmax: matrix must be square");
    std::vector<double> out(a.numel(), 0.0);
    for (int q = 0; q < n; ++q)
        softmax_row(a.values().data() + static_cast<size_t>(q) * n,
                    out.data() + static_cast<size_t>(q) * n, q + 1);
    return make_op("causal-softmax", a.shape(), std::move(out), {a}, [n](TensorImpl& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int q = 0; q < n; ++q) {
            const int active = q + 1;
            const double* y = self.value.data() + static_cast<size_t>(q) * n;
            const double* dy = self.grad.data() + static_cast<size_t>(q) * n;
            double* dx = pa.grad.data() + static_cast<size_t>(q) * n;
            double dot = 0.0;
            for (int j = 0; j < active; ++j) dot += dy[j] * y[j];
            for (int j = 0; j < active; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
    });
}

Tensor layernorm_lastdim(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    int rows, cols;
    as_matrix(*x.impl(), rows, cols);
    if (gain.rank() != 1 || gain.dim(0) != cols || bias.rank() != 1 || bias.dim(0) != cols)
        throw ShapeError("layernorm: gain/bias must be vectors of the last dimension");
    constexpr double eps = 1e-5;
    std::vector<double> out(x.numel());
    std::vector<double> inv_sigma(static_cast<size_t>(rows));
    std::vector<double> xhat(x.numel());
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + static_cast<size_t>(r) * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += xr[j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= cols;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<size_t>(r)] = is;
        for (int j = 0; j < cols; ++j) {
            const size_t idx = static_cast<size_t>(r) * cols + static_cast<size_t>(j);
            xhat[idx] = (xr[j] - mean) * is;
            out[idx] = gain.values()[static_cast<size_t>(j)] * xhat[idx] +
                       bias.values()[static_cast<size_t>(j)];
        }
    }
    return make_op(
        "layernorm-lastdim", x.shape(), std::move(out), {x, gain, bias},
        [rows, cols, inv_sigma = std::move(inv_sigma), xhat = std::move(xhat)](TensorImpl& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            for (int r = 0; r < rows; ++r) {
                const size_t off = static_cast<size_t>(r) * cols;
                const double* dy = self.grad.data() + off;
                const double* xh = xhat.data() + off;
                if (pg.requires_grad) {
                    pg.ensure_grad();
                    for (int j = 0; j < cols; ++j) pg.grad[static_cast<size_t>(j)] += dy[j] * xh[j];
                }
                if (pb.requires_grad) {
                    pb.ensure_grad();
                    for (int j = 0; j < cols; ++j) pb.grad[static_cast<size_t>(j)] += dy[j];
                }
                if (px.requires_grad) {
                    px.ensure_grad();
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (int j = 0; j < cols; ++j) {
                        const double dxh = dy[j] * pg.value[static_cast<size_t>(j)];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xh[j];
                    }
                    mean_dxhat /= cols;
                    mean_dxhat_xhat /= cols;
                    const double is = inv_sigma[static_cast<size_t>(r)];
                    double* dx = px.grad.data() + off;
                    for (int j = 0; j < cols; ++j) {
                        const double dxh = dy[j] * pg.value[static_cast<size_t>(j)];
                        dx[j] += is * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                    }
                }
            }
        });
}

Tensor gelu(const Tensor& a) {
    // Exact erf form; derivative is Phi(x) + x*phi(x).
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        const double x = a.values()[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return make_op("gelu", a.shape(), std::move(out), {a}, [](TensorImpl& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const double x = pa.value[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            pa.grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    require_rank(table, 2, "embedding-lookup");
    const int vocab = table.dim(0), width = table.dim(1);
    std::vector<double> out(ids.size() * static_cast<size_t>(width));
    for (size_t r = 0; r < ids.size(); ++r) {
        const int id = ids[r];
        if (id < 0 || id >= vocab)
            throw ShapeError("embedding-lookup: id " + std::to_string(id) + " out of range");
        std::copy_n(table.values().data() + static_cast<size_t>(id) * width, width,
                    out.data() + r * static_cast<size_t>(width));
    }
    return make_op("embedding-lookup", {static_cast<int>(ids.size()), width}, std::move(out),
                   {table}, [ids, width](TensorImpl& self) {
                       auto& pt = *self.parents[0];
                       if (!pt.requires_grad) return;
                       pt.ensure_grad();
                       for (size_t r = 0; r < ids.size(); ++r) {
                           double* dst = pt.grad.data() +
                                         static_cast<size_t>(ids[r]) * static_cast<size_t>(width);
                           const double* src = self.grad.data() + r * static_cast<size_t>(width);
                           for (int j = 0; j < width; ++j) dst[j] += src[j];
                       }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat-seq: no inputs");
    int cols = -1, rows = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat-seq");
        if (cols < 0) cols = p.dim(1);
        if (p.dim(1) != cols) throw ShapeError("concat-seq: column widths differ");
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(rows) * static_cast<size_t>(cols));
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return make_op("concat-seq", {rows, cols}, std::move(out), parts, [](TensorImpl& self) {
        size_t off = 0;
        for (auto& parent : self.parents) {
            const size_t n = parent->numel();
            if (parent->requires_grad) {
                parent->ensure_grad();
                for (size_t i = 0; i < n; ++i) parent->grad[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

Tensor slice_rows(const Tensor& a, int start, int len) {
    require_rank(a, 2, "slice");
    const int rows = a.dim(0), cols = a.dim(1);
    if (start < 0 || len < 1 || start + len > rows)
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of " + std::to_string(rows));
    std::vector<double> out(a.values().begin() + static_cast<size_t>(start) * cols,
                            a.values().begin() + static_cast<size_t>(start + len) * cols);
    return make_op("slice", {len, cols}, std::move(out), {a}, [start, cols](TensorImpl& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        double* dst = pa.grad.data() + static_cast<size_t>(start) * cols;
        for (size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
    });
}

Tensor transpose2d(const Tensor& a) {
    require_rank(a, 2, "transpose-2d");
    const int rows = a.dim(0), cols = a.dim(1);
    std::vector<double> out(a.numel());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[static_cast<size_t>(j) * rows + i] = a.values()[static_cast<size_t>(i) * cols + j];
    return make_op("transpose-2d", {cols, rows}, std::move(out), {a},
                   [rows, cols](TensorImpl& self) {
                       auto& pa = *self.parents[0];
                       if (!pa.requires_grad) return;
                       pa.ensure_grad();
                       for (int j = 0; j < cols; ++j)
                           for (int i = 0; i < rows; ++i)
                               pa.grad[static_cast<size_t>(i) * cols + j] +=
                                   self.grad[static_cast<size_t>(j) * rows + i];
                   });
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets) {
    int rows, cols;
    as_matrix(*logits.impl(), rows, cols);
    if (targets.size() != static_cast<size_t>(rows))
        throw ShapeError("cross-entropy-logits: one target per row required");
    double total = 0.0;
    for (int r = 0; r < rows; ++r) {
        const int t = targets[static_cast<size_t>(r)];
        if (t < 0) continue;  // masked
        if (t >= cols) throw ShapeError("cross-entropy-logits: target out of range");
        const double* row = logits.values().data() + static_cast<size_t>(r) * cols;
        double mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) sum += std::exp(row[j] - mx);
        total += std::log(sum) + mx - row[t];
    }
    return make_op("cross-entropy-logits", {1}, {total}, {logits},
                   [targets, rows, cols](TensorImpl& self) {
                       auto& pl = *self.parents[0];
                       if (!pl.requires_grad) return;
                       pl.ensure_grad();
                       const double g = self.grad[0];
                       std::vector<double> p(static_cast<size_t>(cols));
                       for (int r = 0; r < rows; ++r) {
                           const int t = targets[static_cast<size_t>(r)];
                           if (t < 0) continue;
                           const double* row = pl.value.data() + static_cast<size_t>(r) * cols;
                           softmax_row(row, p.data(), cols);
                           double* dst = pl.grad.data() + static_cast<size_t>(r) * cols;
                           for (int j = 0; j < cols; ++j) dst[j] += g * p[static_cast<size_t>(j)];
                           dst[t] -= g;
                       }
                   });
}

Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    const double inv = 1.0 / static_cast<double>(a.numel());
    return make_op("mean", {1}, {s * inv}, {a}, [inv](TensorImpl& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const double g = self.grad[0] * inv;
        for (auto& d : pa.grad) d += g;
    });
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return make_op("sum", {1}, {s}, {a}, [](TensorImpl& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const double g = self.grad[0];
        for (auto& d : pa.grad) d += g;
    });
}

Tensor exp_elem(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
    return make_op("exp", a.shape(), std::move(out), {a}, [](TensorImpl& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            pa.grad[i] += self.grad[i] * self.value[i];
    });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("minimum: shapes differ");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.values()[i], b.values()[i]);
    return make_op("minimum", a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.value[i] <= pb.value[i]) {
                if (pa.requires_grad) pa.grad[i] += self.grad[i];
            } else if (pb.requires_grad) {
                pb.grad[i] += self.grad[i];
            }
        }
    });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a.values()[i], lo, hi);
    return make_op("clamp", a.shape(), std::move(out), {a}, [lo, hi](TensorImpl& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const double x = pa.value[i];
            if (x >= lo && x <= hi) pa.grad[i] += self.grad[i];
        }
    });
}

Tensor kl_from_logits(const Tensor& p_logits, const Tensor& q_logits) {
    if (p_logits.shape() != q_logits.shape()) throw ShapeError("kl-logits: shapes differ");
    int rows, cols;
    as_matrix(*p_logits.impl(), rows, cols);
    std::vector<double> p(static_cast<size_t>(cols)), q(static_cast<size_t>(cols));
    double total = 0.0;
    for (int r = 0; r < rows; ++r) {
        softmax_row(p_logits.values().data() + static_cast<size_t>(r) * cols, p.data(), cols);
        softmax_row(q_logits.values().data() + static_cast<size_t>(r) * cols, q.data(), cols);
        for (int j = 0; j < cols; ++j) {
            const size_t sj = static_cast<size_t>(j);
            total += p[sj] * (std::log(p[sj]) - std::log(q[sj]));
        }
    }
    return make_op("kl-logits", {1}, {total}, {p_logits, q_logits},
                   [rows, cols](TensorImpl& self) {
                       auto& pp = *self.parents[0];
                       auto& pq = *self.parents[1];
                       const double g = self.grad[0];
                       std::vector<double> p(static_cast<size_t>(cols)),
                           q(static_cast<size_t>(cols));
                       for (int r = 0; r < rows; ++r) {
                           const size_t off = static_cast<size_t>(r) * cols;
                           softmax_row(pp.value.data() + off, p.data(), cols);
                           softmax_row(pq.value.data() + off, q.data(), cols);
                           double kl_r = 0.0;
                           for (int j = 0; j < cols; ++j) {
                               const size_t sj = static_cast<size_t>(j);
                               kl_r += p[sj] * (std::log(p[sj]) - std::log(q[sj]));
                           }
                           if (pp.requires_grad) {
                               pp.ensure_grad();
                               for (int j = 0; j < cols; ++j) {
                                   const size_t sj = static_cast<size_t>(j);
                                   const double lr = std::log(p[sj]) - std::log(q[sj]);
                                   pp.grad[off + sj] += g * p[sj] * (lr - kl_r);
                               }
                           }
                           if (pq.requires_grad) {
                               pq.ensure_grad();
                               for (int j = 0; j < cols; ++j) {
                                   const size_t sj = static_cast<size_t>(j);
                                   pq.grad[off + sj] += g * (q[sj] - p[sj]);
                               }
                           }
                       }
                   });
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward: loss must be a defined scalar");
    if (!loss.requires_grad()) return;

    // Collect reachable nodes, then run in decreasing creation order: inputs
    // always precede outputs, so this is a valid reverse topological order and
    // visits each node exactly once.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<TensorImpl*> stack{loss.impl().get()};
    seen.insert(loss.impl().get());
    while (!stack.empty()) {
        TensorImpl* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const TensorImpl* a, const TensorImpl* b) { return a->id > b->id; });

    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += 1.0;
    for (TensorImpl* n : order) {
        if (n->grad_fn && !n->grad.empty()) n->grad_fn(*n);
    }
}

// ---- gradient checking --------------------------------------------------------

std::string GradCheckReport::to_string() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err << " tol=" << tol
       << " elements=" << n_elements;
    if (!pass)
        os << " worst: input " << worst_input << " index " << worst_index << " analytic "
           << worst_analytic << " numeric " << worst_numeric;
    return os.str();
}

GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           double step, double tol) {
    if (step <= 0.0) throw ContractError("grad_check: step must be positive");
    GradCheckReport rep;
    rep.tol = tol;

    for (const auto& in : inputs) const_cast<Tensor&>(in).zero_grad();
    Tensor loss = f();
    if (loss.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& in : inputs) analytic.push_back(const_cast<Tensor&>(in).grad());

    NoGradGuard ng;
    for (size_t which = 0; which < inputs.size(); ++which) {
        auto& vals = const_cast<Tensor&>(inputs[which]).values();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + step;
            const double fp = f().item();
            vals[i] = keep - step;
            const double fm = f().item();
            vals[i] = keep;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[which][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
            const double rel = std::abs(a - numeric) / denom;
            ++rep.n_elements;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_input = which;
                rep.worst_index = i;
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
        }
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace plat
