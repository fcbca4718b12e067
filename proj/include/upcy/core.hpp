#pragma once

// Core numeric plumbing: error taxonomy, counter-based RNG streams, the
// row-major 2-D tensor container, and a deterministic parallel-for helper.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace upcy {

// ----------------------------------------------------------------------
// errors
// ----------------------------------------------------------------------

struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct index_error : std::out_of_range {
    using std::out_of_range::out_of_range;
};
struct config_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct state_error : std::logic_error {
    using std::logic_error::logic_error;
};
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct lookup_error : std::out_of_range {
    using std::out_of_range::out_of_range;
};
struct length_error : std::length_error {
    using std::length_error::length_error;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------
// counter-based RNG
//
// Output is a pure function of (seed, counter): no hidden state, so any
// consumer can be replayed from its (seed, counter) pair alone. Streams
// for independent subsystems are derived by key-splitting rather than by
// sequential draws, so adding a draw in one subsystem never shifts
// another's sequence.
// ----------------------------------------------------------------------

constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += kGolden64;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Keyed 64-bit hash of a pair; two avalanche rounds so that sibling
// streams share no windowed subsequence.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(splitmix64(a) ^ (b * kGolden64 + 0x6a09e667f3bcc909ULL));
}

inline std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct rng_stream {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    std::uint64_t next_u64() noexcept { return mix64(seed, counter++); }

    // uniform in [0, 1) with 53 random bits
    double next_unit() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept {
        return lo + (hi - lo) * next_unit();
    }

    // Each call consumes exactly two counter values (Box-Muller, no
    // cached spare), keeping the draw count predictable.
    double gaussian(double mean = 0.0, double stddev = 1.0) noexcept {
        const double u1 = 1.0 - next_unit();  // (0, 1]
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586 * u2);
    }

    // normal(0, stddev) resampled until within +/- 2 stddev
    double truncated_gaussian(double stddev) noexcept {
        for (;;) {
            const double z = gaussian(0.0, 1.0);
            if (std::abs(z) <= 2.0) return z * stddev;
        }
    }

    std::uint64_t next_below(std::uint64_t n) noexcept {
        // rejection-free modulo is fine here; n is tiny vs 2^64
        return next_u64() % n;
    }

    rng_stream split(std::uint64_t key) const noexcept {
        // domain-separated from next_u64 so splitting never collides with draws
        return rng_stream{mix64(seed, mix64(0x75706379u /* "upcy" */, key)), 0};
    }

    rng_stream split(std::string_view key) const noexcept {
        return split(fnv1a64(key));
    }
};

// ----------------------------------------------------------------------
// tensor2d
// ----------------------------------------------------------------------

template <class T>
class tensor2d {
    static_assert(std::is_floating_point_v<T>);

public:
    tensor2d() = default;

    tensor2d(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, T(0)) {}

    tensor2d(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw shape_error("tensor2d: data length does not match rows*cols");
        }
    }

    tensor2d(std::initializer_list<std::initializer_list<T>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : init) {
            if (r.size() != cols_) throw shape_error("tensor2d: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept {
        return data_[r * cols_ + c];
    }

    T& at(std::size_t r, std::size_t c) {
        if (r >= rows_ || c >= cols_) throw index_error("tensor2d::at: out of range");
        return data_[r * cols_ + c];
    }
    const T& at(std::size_t r, std::size_t c) const {
        if (r >= rows_ || c >= cols_) throw index_error("tensor2d::at: out of range");
        return data_[r * cols_ + c];
    }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool same_shape(const tensor2d& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    bool all_finite() const noexcept {
        for (const T v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(T v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    template <class U>
    tensor2d<U> cast() const {
        tensor2d<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            out.data()[i] = static_cast<U>(data_[i]);
        }
        return out;
    }

    bool operator==(const tensor2d& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using tensor = tensor2d<float>;
using tensor64 = tensor2d<double>;

template <class T>
tensor2d<T> random_normal(std::size_t rows, std::size_t cols, rng_stream rng,
                          double stddev, bool truncated = true) {
    tensor2d<T> out(rows, cols);
    T* p = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        p[i] = static_cast<T>(truncated ? rng.truncated_gaussian(stddev)
                                        : rng.gaussian(0.0, stddev));
    }
    return out;
}

// ----------------------------------------------------------------------
// parallel_for
//
// Splits [0, n) into contiguous chunks, one per worker. Each index is
// processed by exactly one thread and chunk boundaries are a pure
// function of (n, workers), so results never depend on scheduling.
// ----------------------------------------------------------------------

inline unsigned& thread_count_ref() {
    static unsigned n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

inline unsigned thread_count() { return thread_count_ref(); }
inline void set_thread_count(unsigned n) { thread_count_ref() = std::max(1u, n); }

template <class Fn>
void parallel_for(std::size_t n, std::size_t grain, Fn&& fn) {
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(thread_count(), n == 0 ? 1 : (n + grain - 1) / grain));
    if (workers <= 1 || n < 2 * grain) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) {
        const std::size_t lo = std::min<std::size_t>(n, w * chunk);
        const std::size_t hi = std::min<std::size_t>(n, lo + chunk);
        if (lo < hi) pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(std::size_t{0}, std::min<std::size_t>(n, chunk));
    for (auto& t : pool) t.join();
}

}  // namespace upcy
