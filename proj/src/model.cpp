#include "adsched/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace adsched {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

bool in_open_unit(double x) { return x > 0.0 && x < 1.0; }

}  // namespace

void ResourceCaps::validate() const {
    require(mem_cap > 0.0, "mem_cap must be positive");
    require(cpu_cap >= 1, "cpu_cap must be at least 1");
}

void PolicyParams::validate() const {
    require(in_open_unit(kappa), "kappa must be in (0,1)");
    require(in_open_unit(eta), "eta must be in (0,1)");
    require(in_open_unit(gamma), "gamma must be in (0,1)");
    require(tau > 1.0, "tau must be > 1");
    require(hysteresis_m >= 1, "hysteresis_m must be >= 1");
    require(in_open_unit(rho_ewma), "rho_ewma must be in (0,1)");
    require(rho_star > 0.0 && rho_star <= 1.0, "rho_star must be in (0,1]");
    require(in_open_unit(lambda_b), "lambda_b must be in (0,1)");
    require(in_open_unit(lambda_k), "lambda_k must be in (0,1)");
    require(eps >= 0.0, "eps must be >= 0");
    require(in_open_unit(alpha_cov), "alpha_cov must be in (0,1)");
    require(b_min >= 1, "b_min must be >= 1");
    require(k_min >= 1, "k_min must be >= 1");
    require(b_step_min >= 1, "b_step_min must be >= 1");
    require(residual_window >= 1, "residual_window must be >= 1");
    require(percentile_window >= 1, "percentile_window must be >= 1");
    require(delta_m_prior >= 0.0, "delta_m_prior must be >= 0");
    require(delta_m_min_samples >= 1, "delta_m_min_samples must be >= 1");
}

void ResidualWindow::push(double value) {
    values_.push_back(value);
    while (values_.size() > capacity_) values_.pop_front();
}

void ResidualWindow::set_capacity(std::size_t capacity) {
    capacity_ = capacity;
    while (values_.size() > capacity_) values_.pop_front();
}

double estimate_working_set(const GateInputs& gate, const PreflightProfile& profile) {
    require(profile.bytes_per_row > 0.0, "bytes_per_row must be positive");
    const auto rows = static_cast<double>(gate.rows_a + gate.rows_b);
    return gate.alpha_rep * profile.bytes_per_row * rows + gate.beta_fixed;
}

BackendKind select_backend(double working_set, const ResourceCaps& caps,
                           const PolicyParams& policy) {
    require(caps.mem_cap > 0.0, "mem_cap must be positive");
    return working_set <= policy.kappa * caps.mem_cap ? BackendKind::inmem
                                                      : BackendKind::taskpool;
}

double predict_latency(const CostModel& model, const PreflightProfile& profile, Rows b, int k) {
    require(b >= 1 && k >= 1, "predict_latency requires b >= 1 and k >= 1");
    require(profile.read_bandwidth > 0.0, "read bandwidth must be positive");
    const auto rows = static_cast<double>(b);
    const double read = rows * profile.bytes_per_row / profile.read_bandwidth;
    const double t = read + model.prep_per_row * rows + model.delta_per_row * rows +
                     model.overhead(k) - model.overlap;
    return std::max(t, 0.0);
}

double predict_memory(const MemModel& model, const PreflightProfile& profile, Rows b, int k) {
    require(b >= 1 && k >= 1, "predict_memory requires b >= 1 and k >= 1");
    const auto rows = static_cast<double>(b);
    return static_cast<double>(k) *
           (model.beta0 + model.beta1 * rows * profile.bytes_per_row + model.beta2 * rows);
}

double calibrate_delta_m(const MemModel& model, const PolicyParams& policy) {
    if (model.residuals.size() < static_cast<std::size_t>(policy.delta_m_min_samples))
        return policy.delta_m_prior;
    auto magnitudes = model.residuals.values();
    for (auto& r : magnitudes) r = std::abs(r);
    return windowed_percentile(magnitudes, 1.0 - policy.alpha_cov);
}

bool is_safe(Rows b, int k, const MemModel& model, const PreflightProfile& profile,
             const ResourceCaps& caps, const PolicyParams& policy, double delta_m) {
    if (k > caps.cpu_cap) return false;
    return predict_memory(model, profile, b, k) + delta_m <= policy.eta * caps.mem_cap;
}

bool is_safe(Rows b, int k, const MemModel& model, const PreflightProfile& profile,
             const ResourceCaps& caps, const PolicyParams& policy) {
    return is_safe(b, k, model, profile, caps, policy, calibrate_delta_m(model, policy));
}

SafeLimits safe_limits(const MemModel& model, const PreflightProfile& profile,
                       const ResourceCaps& caps, const PolicyParams& policy, int k,
                       double delta_m) {
    require(k >= 1, "safe_limits requires k >= 1");
    const auto safe = [&](Rows b, int kk) {
        return is_safe(b, kk, model, profile, caps, policy, delta_m);
    };
    if (!safe(policy.b_min, policy.k_min)) return {policy.b_min, policy.k_min, false};

    SafeLimits limits;
    limits.k_max = policy.k_min;
    for (int kk = policy.k_min + 1; kk <= caps.cpu_cap && safe(policy.b_min, kk); ++kk)
        limits.k_max = kk;

    if (!safe(policy.b_min, k)) {
        limits.b_max = policy.b_min;
        return limits;
    }
    // Memory is nondecreasing in b: gallop to an unsafe bound, then bisect.
    constexpr Rows kRowCeiling = Rows{1} << 50;
    Rows lo = policy.b_min;
    Rows hi = policy.b_min;
    while (hi < kRowCeiling && safe(hi, k)) {
        lo = hi;
        hi = std::min(kRowCeiling, hi * 2);
    }
    if (safe(hi, k)) {
        limits.b_max = hi;
        return limits;
    }
    while (hi - lo > 1) {
        const Rows mid = lo + (hi - lo) / 2;
        (safe(mid, k) ? lo : hi) = mid;
    }
    limits.b_max = lo;
    return limits;
}

SafeLimits safe_limits(const MemModel& model, const PreflightProfile& profile,
                       const ResourceCaps& caps, const PolicyParams& policy, int k) {
    return safe_limits(model, profile, caps, policy, k, calibrate_delta_m(model, policy));
}

double ewma_update(double prev, double observation, double rho) {
    require(in_open_unit(rho), "rho must be in (0,1)");
    return rho * observation + (1.0 - rho) * prev;
}

double Ewma::update(double observation) {
    value_ = value_ ? ewma_update(*value_, observation, rho_) : observation;
    return *value_;
}

double windowed_percentile(std::span<const double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty window");
    require(q > 0.0 && q <= 1.0, "percentile q must be in (0,1]");
    const auto n = values.size();
    // Guard against q*n landing a hair above an integer, e.g. 0.95*20.
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::vector<double> sorted(values.begin(), values.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                     sorted.end());
    return sorted[rank - 1];
}

void fit_models_online(CostModel& cost, MemModel& mem, const PreflightProfile& profile,
                       const BatchMetrics& observed, Rows b, int k, const PolicyParams& policy) {
    const double rho = policy.rho_ewma;
    const auto window = static_cast<std::size_t>(policy.residual_window);
    cost.residuals.set_capacity(window);
    mem.residuals.set_capacity(window);

    const double t_hat = predict_latency(cost, profile, b, k);
    cost.residuals.push(observed.latency - t_hat);
    // Overlap target: the amount by which the bias-free prediction overshoots.
    const auto rows_d = static_cast<double>(b);
    const double t_base = rows_d * profile.bytes_per_row / profile.read_bandwidth +
                          (cost.prep_per_row + cost.delta_per_row) * rows_d + cost.overhead(k);
    cost.overlap = ewma_update(cost.overlap, t_base - observed.latency, rho);

    const double m_hat = predict_memory(mem, profile, b, k);
    const double observed_total = observed.rss_peak * static_cast<double>(k);
    mem.residuals.push(observed_total - m_hat);
    const auto rows = static_cast<double>(b);
    const double slope_part = mem.beta1 * rows * profile.bytes_per_row + mem.beta2 * rows;
    const double beta0_target = observed_total / static_cast<double>(k) - slope_part;
    mem.beta0 = std::max(0.0, ewma_update(mem.beta0, beta0_target, rho));
}

}  // namespace adsched
