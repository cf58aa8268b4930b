#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mpdbm {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    static Matrix identity(std::size_t n);

    std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Logistic function, stable for large |x|.
double sigmoid(double x) noexcept;

// Numerically stable softmax (max-subtracted). Throws on empty input.
Vector softmax(std::span<const double> x);

// log(sum(exp(x))), max-stabilized. Returns -inf for empty input.
double log_sum_exp(std::span<const double> x);

// All kernels sum in a fixed left-to-right order so results are reproducible.
Vector matvec(const Matrix& m, std::span<const double> x);             // m * x
Vector transpose_apply(const Matrix& m, std::span<const double> x);    // m^T * x
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix outer(std::span<const double> a, std::span<const double> b);
// m += scale * a b^T
void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b, double scale = 1.0);

double dot(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> x) noexcept;

/// xoshiro256** seeded through splitmix64. The integer core is bit-exact on
/// every platform; doubles are built from the top 53 bits.
class Rng {
public:
    using State = std::array<std::uint64_t, 4>;

    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64() noexcept;
    double uniform() noexcept;                  // [0, 1)
    bool bernoulli(double p);                   // throws unless 0 <= p <= 1
    std::size_t uniform_index(std::size_t n);   // [0, n), unbiased
    std::size_t categorical(std::span<const double> probs);

    // Independent generator seeded from this stream.
    Rng split();

    const State& state() const noexcept { return state_; }
    void set_state(const State& s) noexcept { state_ = s; }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    State state_{};
};

// Worker count: hardware concurrency capped by MPDBM_THREADS when set.
std::size_t thread_count();

// Runs fn(i) for i in [0, n) across thread_count() workers. Callers write to
// index-owned slots so the result never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mpdbm
