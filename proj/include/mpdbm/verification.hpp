#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpdbm/mp_training.hpp"
#include "mpdbm/oracle.hpp"

// Checks of the approximate machinery against the enumeration oracle on tiny
// models. Shared by `mpdbm oracle-check` and the acceptance suite.
namespace mpdbm::verify {

// Weights and biases ~ U(-scale, scale); offsets ~ U(0.2, 0.8) when centered.
Params random_params(const ModelShape& shape, Rng& rng, double scale, bool centered = false);

// Binary visibles with a uniformly random label.
std::vector<Example> random_examples(const ModelShape& shape, std::size_t n, Rng& rng);

// Relative error with an absolute floor: |a-b| / max(|a|, |b|), but 0 when |a-b| <= floor.
double relative_error(double a, double b, double abs_floor = 1e-11);

struct GradientCheck {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t coordinates = 0;
};

// Compares mp_grad with central differences of mp_batch_objective.
// `fault` > 0 perturbs the analytic gradient (fault injection for tests).
GradientCheck check_mp_gradient(const Params& params, std::span<const Example> batch, std::span<const Mask> masks,
                                std::size_t n_iters, const SparsityConfig& sparsity, double eps = 1e-5,
                                double fault = 0.0);

// Smallest distance of any penalized mean from a kink of max(|m - t| - lambda, 0);
// finite differences are only meaningful when this exceeds eps.
double sparsity_kink_distance(const Params& params, std::span<const Example> batch, std::span<const Mask> masks,
                              std::size_t n_iters, const SparsityConfig& sparsity);

struct KlTrajectory {
    std::vector<double> kl;        // after init and after each sweep
    double max_increase = 0.0;     // largest kl[i+1] - kl[i]
    double min_value = 0.0;
};

KlTrajectory kl_trajectory(const Params& params, const Example& data, const Mask& mask, std::size_t sweeps);

// Total variation between the empirical distribution of thinned block-Gibbs
// samples and the exact Boltzmann distribution.
double gibbs_total_variation(const Params& params, std::size_t samples, std::size_t thin, std::size_t burn_in,
                             Rng& rng);

// Index of a joint state in oracle::StateSpace::joint ordering.
std::size_t joint_state_code(const ModelShape& shape, const FullState& state);

// Largest |P_centered(s) - P_uncentered(s)| over all joint states.
double centering_max_probability_gap(const Params& centered);

}  // namespace mpdbm::verify
