#pragma once

#include "pimkit/core.hpp"
#include "pimkit/event_streams.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pimkit {

enum class InitScheme {
    poisson,  // b_i = n_i / T, a_ij = 0.1
    random,   // b_i = n_i / T, a_ij ~ U(0.01, 0.5) from the configured seed
};

struct FitConfig {
    double ridge = 0.0;            // weight of -ridge * ||a||_F^2
    int max_iterations = 500;
    double tolerance = 1e-6;       // projected-gradient inf-norm, see RowFit::gradient_norm
    double floor = 1e-10;          // lower bound for every b_i and a_ij
    InitScheme init = InitScheme::poisson;
    std::uint64_t seed = 0;
    int history = 10;              // L-BFGS memory
    bool parallel_rows = true;

    void validate() const;
};

/// Result of maximizing one target row of the likelihood.
struct RowFit {
    Index target = 0;
    double base = 0.0;
    Eigen::VectorXd excitation;
    double log_likelihood = 0.0;  // unpenalized row term
    double objective = 0.0;       // row term minus the ridge penalty
    int iterations = 0;           // accepted steps
    bool converged = false;
    /// Inf-norm of the projected gradient of objective / window length.
    double gradient_norm = 0.0;
    std::vector<double> objective_trace;  // objective after each accepted step
    std::string message;
};

struct FitReport {
    Model model;
    double log_likelihood = 0.0;
    int iterations = 0;  // max over rows
    bool converged = false;
    Eigen::VectorXd gradient_norms;
    std::vector<RowFit> rows;
    double wall_seconds = 0.0;
};

/// Penalized maximum likelihood for every row, subject to b, a >= floor.
/// Non-convergence is reported through FitReport::converged, not thrown.
/// Throws InsufficientDataError on a window with no events or zero length.
FitReport fit_mle(const EventStreams& streams, const KernelSpec& kernel, const FitConfig& config = {});

/// Maximizes row i only. fit_mle is exactly the concatenation of these.
RowFit fit_row(const EventStreams& streams, Index i, const KernelSpec& kernel, const FitConfig& config = {});

/// Projected L-BFGS on a prebuilt row design.
RowFit optimize_row(const RowDesign<double>& design, const FitConfig& config);

struct FitMeta {
    double window_start = 0.0;
    double window_end = 0.0;
    double log_likelihood = 0.0;
    bool converged = false;
};

/// {P, beta, b, a[, meta{window, loglik, converged}]} in that order.
nlohmann::ordered_json model_to_json(const Model& model, const std::optional<FitMeta>& meta = std::nullopt);
Model model_from_json(const nlohmann::json& j);

InitScheme parse_init_scheme(const std::string& name);
std::string to_string(InitScheme scheme);

}  // namespace pimkit
