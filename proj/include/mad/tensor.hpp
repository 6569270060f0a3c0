#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mad {

struct Shape4 {
    int n = 0, c = 0, h = 0, w = 0;

    bool operator==(const Shape4&) const = default;

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

namespace detail {

inline std::atomic<long>& live_buffer_count() {
    static std::atomic<long> count{0};
    return count;
}

template <std::floating_point T>
struct Buffer {
    std::vector<T> v;
    explicit Buffer(std::size_t size, T fill = T(0)) : v(size, fill) {
        ++live_buffer_count();
    }
    ~Buffer() { --live_buffer_count(); }
};

} // namespace detail

// Number of live tensor buffers; used to bound retained-activation memory in tests.
inline long live_buffers() { return detail::live_buffer_count().load(); }

// Dense 4-D array, row-major (n, c, h, w), shared storage, value semantics.
// `node` is the index of the tape node that produced this tensor (-1 = constant).
template <std::floating_point T>
class Tensor4 {
public:
    int node = -1;

    Tensor4() = default;
    Tensor4(int n, int c, int h, int w, T fill = T(0))
        : shape_{n, c, h, w},
          buf_(std::make_shared<detail::Buffer<T>>(check_size(shape_), fill)) {}
    explicit Tensor4(const Shape4& s, T fill = T(0))
        : Tensor4(s.n, s.c, s.h, s.w, fill) {}

    static Tensor4 from(const Shape4& s, std::vector<T> values) {
        Tensor4 t(s);
        if (static_cast<std::int64_t>(values.size()) != s.numel())
            throw std::invalid_argument("Tensor4::from: data length " +
                                        std::to_string(values.size()) +
                                        " does not match shape " + s.str());
        t.buf_->v = std::move(values);
        return t;
    }

    const Shape4& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::int64_t numel() const { return shape_.numel(); }
    bool empty() const { return !buf_; }

    T* data() { return buf_->v.data(); }
    const T* data() const { return buf_->v.data(); }
    std::vector<T>& vec() { return buf_->v; }
    const std::vector<T>& vec() const { return buf_->v; }

    T& at(int in, int ic, int iy, int ix) {
        return buf_->v[index(in, ic, iy, ix)];
    }
    T at(int in, int ic, int iy, int ix) const {
        return buf_->v[index(in, ic, iy, ix)];
    }
    T& operator[](std::int64_t i) { return buf_->v[i]; }
    T operator[](std::int64_t i) const { return buf_->v[i]; }

    std::int64_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::int64_t>(in) * shape_.c + ic) * shape_.h + iy) * shape_.w + ix;
    }

    Tensor4 deep_copy() const {
        Tensor4 t(shape_);
        t.buf_->v = buf_->v;
        return t;
    }

    void fill(T value) { std::fill(buf_->v.begin(), buf_->v.end(), value); }

    bool all_finite() const {
        for (T v : buf_->v)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <std::floating_point U>
    Tensor4<U> cast() const {
        Tensor4<U> t(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) t[i] = static_cast<U>((*this)[i]);
        return t;
    }

private:
    static std::size_t check_size(const Shape4& s) {
        if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
            throw std::invalid_argument("Tensor4: non-positive dimension in shape " + s.str());
        return static_cast<std::size_t>(s.numel());
    }

    Shape4 shape_;
    std::shared_ptr<detail::Buffer<T>> buf_;
};

using TensorF = Tensor4<float>;
using TensorD = Tensor4<double>;

template <std::floating_point T, typename Rng>
void fill_normal(Tensor4<T>& t, Rng& rng, double stddev, double mean = 0.0) {
    std::normal_distribution<double> dist(mean, stddev);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(dist(rng));
}

template <std::floating_point T, typename Rng>
void fill_uniform(Tensor4<T>& t, Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(dist(rng));
}

inline void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

// Divergence / non-finite-value failures; mapped to their own CLI exit code.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mad
