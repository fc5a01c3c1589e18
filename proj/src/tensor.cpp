#include "csformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <utility>

namespace csformer {

namespace {

thread_local GradTape* g_active_tape = nullptr;

bool grad_enabled(const Tensor& a) {
    return g_active_tape != nullptr && a.requires_grad();
}

bool grad_enabled(const Tensor& a, const Tensor& b) {
    return g_active_tape != nullptr && (a.requires_grad() || b.requires_grad());
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            double* crow = c + kk * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

std::vector<double> transpose2d(const double* src, std::size_t rows, std::size_t cols) {
    std::vector<double> out(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out[j * rows + i] = src[i * cols + j];
        }
    }
    return out;
}

Shape batch_dims(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

// Raw permute on flat row-major data.
std::vector<double> permute_raw(const std::vector<double>& data, const Shape& shape,
                                const std::vector<std::size_t>& axes, Shape& out_shape) {
    const std::size_t rank = shape.size();
    out_shape.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = shape[axes[i]];

    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * shape[i];
    std::vector<std::size_t> step(rank); // input stride per output axis
    for (std::size_t i = 0; i < rank; ++i) step[i] = in_strides[axes[i]];

    std::vector<double> out(data.size());
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    for (std::size_t dst = 0; dst < out.size(); ++dst) {
        out[dst] = data[src];
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++counter[ax] < out_shape[ax]) {
                src += step[ax];
                break;
            }
            counter[ax] = 0;
            src -= step[ax] * (out_shape[ax] - 1);
        }
    }
    return out;
}

} // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->data.assign(shape_numel(shape), 0.0);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("from_data: shape " + shape_str(shape) + " wants " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::value() const {
    if (!impl_ || impl_->data.size() != 1) {
        throw ContractError("value(): tensor is not a single element");
    }
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) {
        throw ContractError("at(): index rank mismatch");
    }
    std::size_t offset = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= impl_->shape[axis]) throw ContractError("at(): index out of range");
        offset = offset * impl_->shape[axis] + i;
        ++axis;
    }
    return impl_->data[offset];
}

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

std::span<double> Tensor::grad() {
    if (!impl_->grad) impl_->grad.emplace(impl_->data.size(), 0.0);
    return *impl_->grad;
}

std::span<const double> Tensor::grad() const {
    if (!impl_->grad) {
        throw ContractError("grad(): no gradient present; run backward first");
    }
    return *impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

void Tensor::drop_grad() {
    if (impl_) impl_->grad.reset();
}

Tensor Tensor::clone() const {
    return from_data(impl_->shape, impl_->data);
}

// ---- GradTape ---------------------------------------------------------------

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(std::vector<Tensor> inputs, Tensor output,
                      std::function<void()> backward, const char* op_name) {
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward), op_name});
}

void GradTape::backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be a single element, got shape " +
                            shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward: loss does not track gradients (not built on this tape?)");
    }
    if (consumed_) {
        throw ContractError("backward: tape already consumed; call reset() to reuse it");
    }
    consumed_ = true;
    Tensor seed = loss;
    seed.grad()[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].output.has_grad()) nodes_[i].backward();
    }
}

void GradTape::reset() {
    nodes_.clear();
    consumed_ = false;
}

TapeScope::TapeScope(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

// ---- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) {
        throw ShapeError("matmul: both operands need rank >= 2; got " + shape_str(sa) +
                         " and " + shape_str(sb));
    }
    const std::size_t m = sa[sa.size() - 2];
    const std::size_t k = sa[sa.size() - 1];
    const std::size_t kb = sb[sb.size() - 2];
    const std::size_t n = sb[sb.size() - 1];
    if (k != kb) {
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(sa) + " x " +
                         shape_str(sb));
    }

    enum class Mode { Plain, BroadcastB, BroadcastA, Batched };
    Mode mode;
    Shape out_shape;
    std::size_t batch = 1;
    if (sa.size() == 2 && sb.size() == 2) {
        mode = Mode::Plain;
        out_shape = {m, n};
    } else if (sb.size() == 2) {
        mode = Mode::BroadcastB;
        out_shape = batch_dims(sa);
        batch = shape_numel(out_shape);
        out_shape.push_back(m);
        out_shape.push_back(n);
    } else if (sa.size() == 2) {
        mode = Mode::BroadcastA;
        out_shape = batch_dims(sb);
        batch = shape_numel(out_shape);
        out_shape.push_back(m);
        out_shape.push_back(n);
    } else {
        if (batch_dims(sa) != batch_dims(sb)) {
            throw ShapeError("matmul: batch axes disagree: " + shape_str(sa) + " x " +
                             shape_str(sb));
        }
        mode = Mode::Batched;
        out_shape = batch_dims(sa);
        batch = shape_numel(out_shape);
        out_shape.push_back(m);
        out_shape.push_back(n);
    }

    Tensor out = Tensor::zeros(out_shape);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = out.data().data();

    switch (mode) {
        case Mode::Plain:
            gemm_nn(pa, pb, pc, m, k, n);
            break;
        case Mode::BroadcastB:
            // One big product over the flattened batch*m rows.
            gemm_nn(pa, pb, pc, batch * m, k, n);
            break;
        case Mode::BroadcastA:
            for (std::size_t s = 0; s < batch; ++s) {
                gemm_nn(pa, pb + s * k * n, pc + s * m * n, m, k, n);
            }
            break;
        case Mode::Batched:
            for (std::size_t s = 0; s < batch; ++s) {
                gemm_nn(pa + s * m * k, pb + s * k * n, pc + s * m * n, m, k, n);
            }
            break;
    }

    if (grad_enabled(a, b)) {
        out.set_requires_grad(true);
        Tensor av = a, bv = b, ov = out;
        std::size_t bt = batch;
        GradTape::active()->record(
            {a, b}, out,
            [av, bv, ov, mode, m, k, n, bt]() mutable {
                std::span<const double> dout = ov.grad();
                const double* pd = dout.data();
                if (av.requires_grad()) {
                    std::span<double> da = av.grad();
                    const double* pbv = bv.data().data();
                    switch (mode) {
                        case Mode::Plain:
                        case Mode::BroadcastB: {
                            // dA = dC * B^T as one product over flattened rows.
                            std::vector<double> bT = transpose2d(pbv, k, n);
                            std::size_t rows = (mode == Mode::Plain) ? m : bt * m;
                            gemm_nn(pd, bT.data(), da.data(), rows, n, k);
                            break;
                        }
                        case Mode::BroadcastA:
                            for (std::size_t s = 0; s < bt; ++s) {
                                std::vector<double> bT = transpose2d(pbv + s * k * n, k, n);
                                gemm_nn(pd + s * m * n, bT.data(), da.data(), m, n, k);
                            }
                            break;
                        case Mode::Batched:
                            for (std::size_t s = 0; s < bt; ++s) {
                                std::vector<double> bT = transpose2d(pbv + s * k * n, k, n);
                                gemm_nn(pd + s * m * n, bT.data(), da.data() + s * m * k, m, n, k);
                            }
                            break;
                    }
                }
                if (bv.requires_grad()) {
                    std::span<double> db = bv.grad();
                    const double* pav = av.data().data();
                    switch (mode) {
                        case Mode::Plain:
                        case Mode::BroadcastB: {
                            std::size_t rows = (mode == Mode::Plain) ? m : bt * m;
                            gemm_tn(pav, pd, db.data(), rows, k, n);
                            break;
                        }
                        case Mode::BroadcastA:
                            for (std::size_t s = 0; s < bt; ++s) {
                                gemm_tn(pav, pd + s * m * n, db.data() + s * k * n, m, k, n);
                            }
                            break;
                        case Mode::Batched:
                            for (std::size_t s = 0; s < bt; ++s) {
                                gemm_tn(pav + s * m * k, pd + s * m * n, db.data() + s * k * n,
                                        m, k, n);
                            }
                            break;
                    }
                }
            },
            "matmul");
    }
    return out;
}

// ---- elementwise ------------------------------------------------------------

namespace {

// Returns true when `small` is a trailing suffix of `big`.
bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class EwOp { Add, Sub, Mul };

Tensor elementwise(const Tensor& a, const Tensor& b, EwOp op, const char* name) {
    const bool a_big = a.size() >= b.size();
    const Tensor& big = a_big ? a : b;
    const Tensor& small = a_big ? b : a;
    if (!is_suffix(small.shape(), big.shape())) {
        throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are not equal or leading-broadcastable");
    }
    const std::size_t bn = small.size();
    const std::size_t total = big.size();

    Tensor out = Tensor::zeros(big.shape());
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < total; ++i) {
        const double x = a_big ? pa[i] : pa[i % bn];
        const double y = a_big ? pb[i % bn] : pb[i];
        switch (op) {
            case EwOp::Add: po[i] = x + y; break;
            case EwOp::Sub: po[i] = x - y; break;
            case EwOp::Mul: po[i] = x * y; break;
        }
    }

    if (grad_enabled(a, b)) {
        out.set_requires_grad(true);
        Tensor av = a, bv = b, ov = out;
        GradTape::active()->record(
            {a, b}, out,
            [av, bv, ov, op, a_big, bn, total]() mutable {
                std::span<const double> dout = ov.grad();
                auto scatter = [&](Tensor& t, bool is_a) {
                    const bool broadcast = (is_a != a_big); // the smaller operand
                    std::span<double> dt = t.grad();
                    const Tensor& other = is_a ? bv : av;
                    const double* po2 = other.data().data();
                    const std::size_t on = other.size();
                    double sign = 1.0;
                    if (op == EwOp::Sub && !is_a) sign = -1.0;
                    for (std::size_t i = 0; i < total; ++i) {
                        double g = dout[i] * sign;
                        if (op == EwOp::Mul) g = dout[i] * po2[broadcast ? i : (total == on ? i : i % on)];
                        dt[broadcast ? i % bn : i] += g;
                    }
                };
                if (av.requires_grad()) scatter(av, true);
                if (bv.requires_grad()) scatter(bv, false);
            },
            name);
    }
    return out;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < a.size(); ++i) po[i] = pa[i] * factor;
    if (grad_enabled(a)) {
        out.set_requires_grad(true);
        Tensor av = a, ov = out;
        GradTape::active()->record(
            {a}, out,
            [av, ov, factor]() mutable {
                std::span<const double> dout = ov.grad();
                std::span<double> da = av.grad();
                for (std::size_t i = 0; i < dout.size(); ++i) da[i] += factor * dout[i];
            },
            "scale");
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < x.size(); ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
    if (grad_enabled(x)) {
        out.set_requires_grad(true);
        Tensor xv = x, ov = out;
        GradTape::active()->record(
            {x}, out,
            [xv, ov]() mutable {
                std::span<const double> dout = ov.grad();
                std::span<double> dx = xv.grad();
                const double* pxv = xv.data().data();
                for (std::size_t i = 0; i < dout.size(); ++i) {
                    if (pxv[i] > 0.0) dx[i] += dout[i];
                }
            },
            "relu");
    }
    return out;
}

Tensor softmax_lastaxis(const Tensor& x) {
    if (x.rank() == 0 || x.shape().back() == 0) {
        throw ShapeError("softmax_lastaxis: last axis must have length >= 1");
    }
    const std::size_t cols = x.shape().back();
    const std::size_t rows = x.size() / cols;

    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = px + r * cols;
        double* o = out.data().data() + r * cols;
        double mx = in[0];
        for (std::size_t j = 0; j < cols; ++j) {
            if (std::isnan(in[j])) {
                throw NumericsError("softmax_lastaxis: NaN input at row " + std::to_string(r));
            }
            mx = std::max(mx, in[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        const double inv = 1.0 / total;
        for (std::size_t j = 0; j < cols; ++j) o[j] *= inv;
    }

    if (grad_enabled(x)) {
        out.set_requires_grad(true);
        Tensor xv = x, ov = out;
        GradTape::active()->record(
            {x}, out,
            [xv, ov, rows, cols]() mutable {
                std::span<const double> dout = ov.grad();
                std::span<double> dx = xv.grad();
                const double* y = ov.data().data();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* yr = y + r * cols;
                    const double* dr = dout.data() + r * cols;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) dot += dr[j] * yr[j];
                    double* dxr = dx.data() + r * cols;
                    for (std::size_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dr[j] - dot);
                }
            },
            "softmax_lastaxis");
    }
    return out;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
    const std::size_t rank = x.rank();
    if (axes.size() != rank) {
        throw ContractError("permute: axes length " + std::to_string(axes.size()) +
                            " does not match rank " + std::to_string(rank));
    }
    std::vector<bool> seen(rank, false);
    for (std::size_t ax : axes) {
        if (ax >= rank || seen[ax]) {
            throw ContractError("permute: axes are not a permutation of 0.." +
                                std::to_string(rank - 1));
        }
        seen[ax] = true;
    }

    Shape out_shape;
    std::vector<double> data = permute_raw(
        std::vector<double>(x.data().begin(), x.data().end()), x.shape(), axes, out_shape);
    Tensor out = Tensor::from_data(std::move(out_shape), std::move(data));

    if (grad_enabled(x)) {
        out.set_requires_grad(true);
        std::vector<std::size_t> inverse(rank);
        for (std::size_t i = 0; i < rank; ++i) inverse[axes[i]] = i;
        Tensor xv = x, ov = out;
        GradTape::active()->record(
            {x}, out,
            [xv, ov, inverse]() mutable {
                Shape back_shape;
                std::vector<double> g = permute_raw(
                    std::vector<double>(ov.grad().begin(), ov.grad().end()), ov.shape(),
                    inverse, back_shape);
                std::span<double> dx = xv.grad();
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
            },
            "permute");
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
    }
    Tensor out = Tensor::from_data(std::move(new_shape),
                                   std::vector<double>(x.data().begin(), x.data().end()));
    if (grad_enabled(x)) {
        out.set_requires_grad(true);
        Tensor xv = x, ov = out;
        GradTape::active()->record(
            {x}, out,
            [xv, ov]() mutable {
                std::span<const double> dout = ov.grad();
                std::span<double> dx = xv.grad();
                for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i];
            },
            "reshape");
    }
    return out;
}

namespace {

Tensor reduce_all(const Tensor& x, bool take_mean, const char* name) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    const double denom = take_mean ? static_cast<double>(x.size()) : 1.0;
    Tensor out = Tensor::scalar(total / denom);
    if (grad_enabled(x)) {
        out.set_requires_grad(true);
        Tensor xv = x, ov = out;
        GradTape::active()->record(
            {x}, out,
            [xv, ov, denom]() mutable {
                const double g = ov.grad()[0] / denom;
                std::span<double> dx = xv.grad();
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
            },
            name);
    }
    return out;
}

} // namespace

Tensor sum(const Tensor& x) { return reduce_all(x, false, "sum"); }
Tensor mean(const Tensor& x) { return reduce_all(x, true, "mean"); }

bool has_nan(const Tensor& x) {
    for (double v : x.data()) {
        if (std::isnan(v)) return true;
    }
    return false;
}

// ---- finite differences -------------------------------------------------------

double finite_diff_check(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double step) {
    for (const Tensor& p : params) {
        Tensor t = p;
        t.drop_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        GradTape tape;
        TapeScope scope(tape);
        Tensor loss = f();
        tape.backward(loss);
    }
    analytic.reserve(params.size());
    for (const Tensor& p : params) {
        if (p.has_grad()) {
            Tensor t = p;
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        } else {
            analytic.emplace_back(p.size(), 0.0);
        }
    }

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        std::span<double> values = p.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + step;
            const double f_plus = f().value();
            values[i] = original - step;
            const double f_minus = f().value();
            values[i] = original;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double rel = std::abs(analytic[pi][i] - numeric) / (std::abs(numeric) + 1e-8);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace csformer
