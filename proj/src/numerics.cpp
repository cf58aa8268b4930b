#include "mpdbm/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "mpdbm/error.hpp"

namespace mpdbm {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw DimensionError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                             shape_string());
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vector softmax(std::span<const double> x) {
    if (x.empty()) throw Error("softmax: empty input");
    const double m = *std::max_element(x.begin(), x.end());
    Vector out(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        total += out[i];
    }
    for (double& o : out) o /= total;
    return out;
}

double log_sum_exp(std::span<const double> x) {
    if (x.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double total = 0.0;
    for (double v : x) total += std::exp(v - m);
    return m + std::log(total);
}

namespace {

std::string vec_shape(std::size_t n) { return "vector[" + std::to_string(n) + "]"; }

}  // namespace

Vector matvec(const Matrix& m, std::span<const double> x) {
    if (m.cols() != x.size())
        throw DimensionError("matvec: " + m.shape_string() + " vs " + vec_shape(x.size()));
    Vector out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
    return out;
}

Vector transpose_apply(const Matrix& m, std::span<const double> x) {
    if (m.rows() != x.size())
        throw DimensionError("transpose_apply: " + m.shape_string() + " vs " + vec_shape(x.size()));
    Vector out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double xr = x[r];
        const auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * xr;
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: " + a.shape_string() + " vs " + b.shape_string());
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    return out;
}

Matrix outer(std::span<const double> a, std::span<const double> b) {
    Matrix out(a.size(), b.size());
    add_outer(out, a, b);
    return out;
}

void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b, double scale) {
    if (m.rows() != a.size() || m.cols() != b.size())
        throw DimensionError("add_outer: " + m.shape_string() + " vs " + vec_shape(a.size()) + " x " +
                             vec_shape(b.size()));
    for (std::size_t r = 0; r < a.size(); ++r) {
        const double ar = scale * a[r];
        if (ar == 0.0) continue;
        auto row = m.row(r);
        for (std::size_t c = 0; c < b.size(); ++c) row[c] += ar * b[c];
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("dot: " + vec_shape(a.size()) + " vs " + vec_shape(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

bool all_finite(std::span<const double> x) noexcept {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

namespace {

std::uint64_t splitmix64(std::uint64_t& s) noexcept {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    for (auto& s : state_) s = splitmix64(seed);
}

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

bool Rng::bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("bernoulli: probability " + std::to_string(p) + " outside [0,1]");
    return uniform() < p;
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw Error("uniform_index: empty range");
    const std::uint64_t bound = n;
    // Rejection on the biased low band keeps every index equally likely.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x >= threshold) return static_cast<std::size_t>(x % bound);
    }
}

std::size_t Rng::categorical(std::span<const double> probs) {
    if (probs.empty()) throw Error("categorical: empty distribution");
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    // Rounding left a sliver above the cumulative sum; take the last nonzero entry.
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return i;
    return probs.size() - 1;
}

Rng Rng::split() {
    return Rng(next_u64());
}

std::size_t thread_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MPDBM_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
    }
    return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace mpdbm
