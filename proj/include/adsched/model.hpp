#pragma once

// Estimators and analytic models used by the scheduler: working-set gating,
// per-batch latency and memory models, the memory safety envelope, and the
// small statistics helpers (EWMA, nearest-rank percentiles) they rely on.

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "adsched/types.hpp"

namespace adsched {

struct ResourceCaps {
    double mem_cap = 0.0;  // bytes
    int cpu_cap = 1;       // logical cores

    void validate() const;
};

struct PolicyParams {
    double kappa = 0.7;
    double eta = 0.9;
    double gamma = 0.6;
    double tau = 2.0;
    int hysteresis_m = 2;
    double rho_ewma = 0.2;
    double rho_star = 0.85;
    double lambda_b = 0.2;
    double lambda_k = 0.2;
    double eps = 0.05;
    double alpha_cov = 0.05;
    Rows b_min = 1000;
    int k_min = 1;
    Rows b_step_min = 256;
    int residual_window = 20;
    int percentile_window = 20;
    // Cold-start half-width used until the residual window is warm.
    double delta_m_prior = 256.0 * 1024 * 1024;
    int delta_m_min_samples = 5;

    // Throws std::invalid_argument naming the first out-of-range field.
    void validate() const;
};

struct PreflightProfile {
    double bytes_per_row = 0.0;
    double read_bandwidth = 0.0;  // bytes/s
    std::map<ColumnKind, double> delta_cost_per_type;  // seconds/row, per compared column
    Rows sample_rows = 0;
};

// Fixed-capacity FIFO of residuals; oldest entries fall off.
class ResidualWindow {
public:
    explicit ResidualWindow(std::size_t capacity = 20) : capacity_(capacity) {}

    void push(double value);
    void clear() { values_.clear(); }
    void set_capacity(std::size_t capacity);

    std::size_t size() const { return values_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return values_.empty(); }
    std::vector<double> values() const { return {values_.begin(), values_.end()}; }

private:
    std::size_t capacity_;
    std::deque<double> values_;
};

// T(b,k) = T_read(b) + T_prep(b) + T_delta(b) + T_overhead(k) - T_overlap
struct CostModel {
    double prep_per_row = 0.0;         // s/row
    double delta_per_row = 0.0;        // s/row, sum over compared columns
    double overhead_fixed = 0.0;       // s per batch
    double overhead_per_worker = 0.0;  // s per worker
    double overlap = 0.0;              // s, absorbs the additive latency bias
    ResidualWindow residuals{20};

    double overhead(int k) const { return overhead_fixed + overhead_per_worker * k; }
};

// Mem(b,k) = k * (beta0 + beta1 * b * W + beta2 * b)
struct MemModel {
    double beta0 = 0.0;  // bytes per worker, absorbs the additive memory bias
    double beta1 = 1.0;
    double beta2 = 0.0;  // bytes/row
    ResidualWindow residuals{20};
};

struct GateInputs {
    double alpha_rep = 1.0;
    double beta_fixed = 0.0;
    Rows rows_a = 0;
    Rows rows_b = 0;
};

struct SafeLimits {
    Rows b_max = 0;
    int k_max = 0;
    bool feasible = true;
};

double estimate_working_set(const GateInputs& gate, const PreflightProfile& profile);

BackendKind select_backend(double working_set, const ResourceCaps& caps,
                           const PolicyParams& policy);

double predict_latency(const CostModel& model, const PreflightProfile& profile, Rows b, int k);

double predict_memory(const MemModel& model, const PreflightProfile& profile, Rows b, int k);

// Half-width of the memory prediction interval: nearest-rank (1 - alpha)
// quantile of |residual|, or the configured prior while the window is cold.
double calibrate_delta_m(const MemModel& model, const PolicyParams& policy);

bool is_safe(Rows b, int k, const MemModel& model, const PreflightProfile& profile,
             const ResourceCaps& caps, const PolicyParams& policy, double delta_m);
bool is_safe(Rows b, int k, const MemModel& model, const PreflightProfile& profile,
             const ResourceCaps& caps, const PolicyParams& policy);

SafeLimits safe_limits(const MemModel& model, const PreflightProfile& profile,
                       const ResourceCaps& caps, const PolicyParams& policy, int k,
                       double delta_m);
SafeLimits safe_limits(const MemModel& model, const PreflightProfile& profile,
                       const ResourceCaps& caps, const PolicyParams& policy, int k);

double ewma_update(double prev, double observation, double rho);

// Exponentially weighted mean whose first observation initializes the state.
class Ewma {
public:
    explicit Ewma(double rho = 0.2) : rho_(rho) {}

    double update(double observation);
    bool has_value() const { return value_.has_value(); }
    double value() const { return value_.value_or(0.0); }
    void reset() { value_.reset(); }

private:
    double rho_;
    std::optional<double> value_;
};

// Nearest-rank percentile: the ceil(q*n)-th smallest value.
double windowed_percentile(std::span<const double> values, double q);

// Appends latency and memory residuals, then EWMA-corrects the additive
// bias terms (overlap, beta0). Slope terms are left untouched.
void fit_models_online(CostModel& cost, MemModel& mem, const PreflightProfile& profile,
                       const BatchMetrics& observed, Rows b, int k, const PolicyParams& policy);

}  // namespace adsched
