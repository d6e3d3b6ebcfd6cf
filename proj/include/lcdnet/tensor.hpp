#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcdnet {

/// 4-D extent (batch, channel, height, width). Everything in this codebase is
/// NCHW; vectors such as batch-norm affine terms live as (1, C, 1, 1).
struct Shape {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    std::int64_t numel() const { return n * c * h * w; }
    bool operator==(const Shape&) const = default;

    std::string str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }
};

namespace detail {

/// std::allocator whose default construction leaves trivials uninitialized,
/// so buffers that a kernel fully overwrites skip the zero-fill pass.
template <typename T>
struct DefaultInitAlloc : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = DefaultInitAlloc<U>;
    };
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) == 0) {
            ::new (static_cast<void*>(p)) U;
        } else {
            ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
        }
    }
};

template <typename T>
using Buffer = std::vector<T, DefaultInitAlloc<T>>;

template <typename T>
struct TensorImpl {
    Shape shape;
    Buffer<T> data;
    Buffer<T> grad;  // empty until backward touches it
    bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major tensor with value semantics over a shared immutable
/// buffer. Operations never mutate an existing tensor's data; the only
/// sanctioned in-place writers are parameter initialization and the
/// optimizer, both of which run strictly between forward/backward passes.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape s, bool requires_grad = false) {
        return Tensor(s,
                      detail::Buffer<T>(static_cast<std::size_t>(checked_numel(s)), T(0)),
                      requires_grad);
    }

    /// Uninitialized storage; for kernels that overwrite every element.
    static Tensor uninit(Shape s) {
        return Tensor(s, detail::Buffer<T>(static_cast<std::size_t>(checked_numel(s))), false);
    }

    static Tensor full(Shape s, T value, bool requires_grad = false) {
        return Tensor(s,
                      detail::Buffer<T>(static_cast<std::size_t>(checked_numel(s)), value),
                      requires_grad);
    }

    static Tensor from_data(Shape s, std::vector<T> data, bool requires_grad = false) {
        if (static_cast<std::int64_t>(data.size()) != checked_numel(s)) {
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + s.str());
        }
        detail::Buffer<T> buf(data.begin(), data.end());
        return Tensor(s, std::move(buf), requires_grad);
    }

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    std::int64_t numel() const { return p_->shape.numel(); }

    const T* data() const { return p_->data.data(); }
    std::span<const T> view() const { return {p_->data.data(), p_->data.size()}; }

    /// Raw writable buffer; callers own the no-aliasing discipline.
    T* mutable_data() { return p_->data.data(); }

    bool requires_grad() const { return p_ && p_->requires_grad; }
    void set_requires_grad(bool v) { p_->requires_grad = v; }

    bool has_grad() const { return p_ && !p_->grad.empty(); }
    std::span<const T> grad() const { return {p_->grad.data(), p_->grad.size()}; }

    /// Gradient buffer for accumulation, zero-initialized on first use.
    T* grad_accum() {
        if (p_->grad.empty()) {
            p_->grad.assign(p_->data.size(), T(0));
        }
        return p_->grad.data();
    }

    /// Gradient buffer plus a flag telling the caller whether it is fresh
    /// (uninitialized) and must be fully written rather than accumulated.
    std::pair<T*, bool> grad_sink() {
        if (p_->grad.empty()) {
            p_->grad.resize(p_->data.size());
            return {p_->grad.data(), true};
        }
        return {p_->grad.data(), false};
    }

    void zero_grad() {
        if (p_) {
            p_->grad.clear();
        }
    }

    T scalar() const {
        if (numel() != 1) {
            throw std::invalid_argument("scalar() on tensor of shape " + shape().str());
        }
        return p_->data[0];
    }

    T at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
        const Shape& s = p_->shape;
        return p_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + y) * s.w + x)];
    }

    /// Identity of the underlying buffer (aliasing checks in tests).
    bool same_storage(const Tensor& other) const { return p_ == other.p_; }

    /// Deep copy with fresh storage; gradient state is not copied.
    Tensor clone() const {
        return Tensor(p_->shape, p_->data, p_->requires_grad);
    }

private:
    Tensor(Shape s, detail::Buffer<T> data, bool requires_grad) {
        p_ = std::make_shared<detail::TensorImpl<T>>();
        p_->shape = s;
        p_->data = std::move(data);
        p_->requires_grad = requires_grad;
    }

    static std::int64_t checked_numel(const Shape& s) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
            throw std::invalid_argument("negative extent in shape " + s.str());
        }
        return s.numel();
    }

    std::shared_ptr<detail::TensorImpl<T>> p_;
};

}  // namespace lcdnet
