#include "adsched/controller.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace adsched {

namespace {

constexpr std::size_t kMinTailSamples = 5;

void push_bounded(std::deque<double>& window, double value, int capacity) {
    window.push_back(value);
    while (window.size() > static_cast<std::size_t>(capacity)) window.pop_front();
}

double percentile_of(const std::deque<double>& window, double q) {
    const std::vector<double> values(window.begin(), window.end());
    return windowed_percentile(values, q);
}

ControlDecision decide(Rows b, int k, Action action, std::string reason) {
    ControlDecision d;
    d.new_b = b;
    d.new_k = k;
    d.action = action;
    d.reason = std::move(reason);
    return d;
}

ControlDecision hold(const ControllerState& state, std::string reason) {
    return decide(state.b, state.k, Action::hold, std::move(reason));
}

}  // namespace

std::string_view to_string(Action action) {
    switch (action) {
        case Action::increase_b: return "increase_b";
        case Action::increase_k: return "increase_k";
        case Action::decrease_b: return "decrease_b";
        case Action::decrease_k: return "decrease_k";
        case Action::hold: return "hold";
        case Action::pause: return "pause";
        case Action::resume: return "resume";
    }
    return "hold";
}

Action action_from_string(std::string_view name) {
    for (auto a : {Action::increase_b, Action::increase_k, Action::decrease_b, Action::decrease_k,
                   Action::hold, Action::pause, Action::resume}) {
        if (to_string(a) == name) return a;
    }
    throw std::invalid_argument("unknown action '" + std::string(name) + "'");
}

ControllerState ControllerState::initial(BatchConfig start, BackendKind backend,
                                         const PolicyParams& policy) {
    ControllerState state;
    state.b = start.b;
    state.k = start.k;
    state.backend = backend;
    state.smoothed_rss_p95 = Ewma(policy.rho_ewma);
    state.smoothed_cpu_p95 = Ewma(policy.rho_ewma);
    state.smoothed_p50 = Ewma(policy.rho_ewma);
    state.smoothed_p95 = Ewma(policy.rho_ewma);
    return state;
}

BatchConfig safe_start(const SchedulerModels& models, const ResourceCaps& caps,
                       const PolicyParams& policy, Rows b_ceiling) {
    const double delta_m = calibrate_delta_m(models.mem, policy);
    if (!is_safe(policy.b_min, policy.k_min, models.mem, models.profile, caps, policy, delta_m))
        throw InfeasibleJob("no safe configuration: (b_min, k_min) violates the memory envelope");

    const double half_envelope = 0.5 * (policy.eta * caps.mem_cap - delta_m);
    std::vector<int> ks{policy.k_min};
    for (int k = 1; k <= caps.cpu_cap; k *= 2)
        if (k > policy.k_min) ks.push_back(k);
    if (caps.cpu_cap > ks.back()) ks.push_back(caps.cpu_cap);

    // Widest k whose floor batch fits, then the tallest b rung at that k.
    const Rows top = std::max(policy.b_min, b_ceiling);
    const auto fits = [&](Rows b, int k) {
        return predict_memory(models.mem, models.profile, b, k) <= half_envelope &&
               is_safe(b, k, models.mem, models.profile, caps, policy, delta_m);
    };
    for (auto it = ks.rbegin(); it != ks.rend(); ++it) {
        const int k = *it;
        if (!fits(policy.b_min, k)) continue;
        Rows b = policy.b_min;
        while (b <= top / 2 && b < (Rows{1} << 50) && fits(b * 2, k)) b *= 2;
        return {b, k};
    }
    return {policy.b_min, policy.k_min};
}

Headrooms compute_headrooms(const ControllerState& state, const ResourceCaps& caps,
                            const PolicyParams& policy) {
    const double mem_target = policy.eta * caps.mem_cap;
    const double cpu_target = policy.rho_star * caps.cpu_cap;
    return {(mem_target - state.smoothed_rss_p95.value()) / mem_target,
            (cpu_target - state.smoothed_cpu_p95.value()) / cpu_target};
}

ControlDecision propose_step(const ControllerState& state, const Headrooms& h,
                             const SafeLimits& limits, const PolicyParams& policy) {
    if (!(h.h_mem > policy.eps || h.h_cpu > policy.eps))
        return hold(state, "headroom within eps");

    const auto grow_b = [&](const char* why) {
        const auto proportional =
            static_cast<Rows>(std::floor(policy.lambda_b * h.h_mem * static_cast<double>(state.b)));
        const Rows step = std::max(policy.b_step_min, proportional);
        const Rows new_b = std::min(state.b + step, limits.b_max);
        if (new_b <= state.b) return hold(state, "b at safe limit");
        return decide(new_b, state.k, Action::increase_b, why);
    };

    const auto grow_k = [&](const char* why) {
        const auto step = std::max(
            1, static_cast<int>(std::ceil(policy.lambda_k * h.h_cpu * static_cast<double>(state.k))));
        const int new_k = std::min(state.k + step, limits.k_max);
        if (new_k <= state.k) return hold(state, "k at safe limit");
        return decide(state.b, new_k, Action::increase_k, why);
    };

    // The larger headroom picks the dimension; a capped one yields to the other.
    if (h.h_cpu >= h.h_mem + policy.eps) {
        auto d = grow_k("cpu headroom");
        if (d.action == Action::hold && h.h_mem > policy.eps) d = grow_b("memory headroom, k capped");
        return d;
    }
    auto d = grow_b(h.h_mem >= h.h_cpu + policy.eps ? "memory headroom" : "headroom tie prefers b");
    if (d.action == Action::hold && h.h_cpu > policy.eps) d = grow_k("cpu headroom, b capped");
    return d;
}

ControlDecision apply_decrease(ControllerState& state, const Triggers& triggers,
                               const PolicyParams& policy) {
    state.consecutive_mem_triggers = triggers.mem ? state.consecutive_mem_triggers + 1 : 0;
    state.consecutive_tail_triggers = triggers.tail ? state.consecutive_tail_triggers + 1 : 0;
    state.consecutive_cpu_triggers = triggers.cpu ? state.consecutive_cpu_triggers + 1 : 0;
    if (!triggers.any()) {
        state.backoff_streak = false;
        return hold(state, "no trigger");
    }

    const int m = policy.hysteresis_m;
    if (state.consecutive_mem_triggers >= m || state.consecutive_tail_triggers >= m) {
        const char* why = state.consecutive_mem_triggers >= m ? "memory trigger" : "tail trigger";
        const Rows new_b = std::max(
            static_cast<Rows>(std::floor(policy.gamma * static_cast<double>(state.b))), policy.b_min);
        const int new_k = state.backoff_streak ? std::max(state.k - 1, policy.k_min) : state.k;
        state.consecutive_mem_triggers = 0;
        state.consecutive_tail_triggers = 0;
        state.consecutive_cpu_triggers = 0;
        state.backoff_streak = true;
        return decide(new_b, new_k, Action::decrease_b, why);
    }
    if (state.consecutive_cpu_triggers >= m) {
        state.consecutive_cpu_triggers = 0;
        return decide(state.b, std::max(state.k - 1, policy.k_min), Action::decrease_k, "cpu above target");
    }
    const int pending = std::max({state.consecutive_mem_triggers, state.consecutive_tail_triggers,
                                  state.consecutive_cpu_triggers});
    return hold(state, "hysteresis " + std::to_string(pending) + "/" + std::to_string(m));
}

ControlDecision apply_backpressure(ControllerState& state, int queue_depth,
                                   const PolicyParams& policy) {
    const int previous = state.last_queue_depth;
    state.last_queue_depth = queue_depth;
    state.queue_growth = (queue_depth > previous && queue_depth > state.k) ? state.queue_growth + 1 : 0;

    if (state.paused && !state.paused_infeasible) {
        if (queue_depth <= state.k) {
            state.paused = false;
            return decide(state.b, state.k, Action::resume, "queue drained");
        }
        return decide(state.b, state.k, Action::pause, "queue still deep");
    }
    if (queue_depth > 2 * state.k) {
        state.paused = true;
        return decide(state.b, state.k, Action::pause, "queue depth above 2k");
    }
    if (state.queue_growth >= policy.hysteresis_m && state.k > policy.k_min) {
        state.queue_growth = 0;
        return decide(state.b, state.k - 1, Action::decrease_k, "sustained queue growth");
    }
    return hold(state, "queue ok");
}

StragglerAction mitigate_straggler(const RunningBatch& batch, double window_p50,
                                   const PolicyParams& policy) {
    if (batch.mitigated || window_p50 <= 0.0) return StragglerAction::none;
    if (batch.runtime <= policy.tau * window_p50) return StragglerAction::none;
    return batch.b > 2 * policy.b_min ? StragglerAction::split : StragglerAction::speculate;
}

ControlDecision control_cycle(ControllerState& state, const BatchMetrics& completed,
                              SchedulerModels& models, const ResourceCaps& caps,
                              const PolicyParams& policy) {
    const Rows ran_b = std::max<Rows>(1, completed.config.b);
    const int ran_k = std::max(1, completed.config.k);
    const double predicted = predict_latency(models.cost, models.profile, ran_b, ran_k);
    fit_models_online(models.cost, models.mem, models.profile, completed, ran_b, ran_k, policy);

    push_bounded(state.latencies, completed.latency, policy.percentile_window);
    push_bounded(state.latency_ratio, predicted > 0.0 ? completed.latency / predicted : 1.0,
                 policy.percentile_window);
    state.smoothed_rss_p95.update(completed.total_rss());
    state.smoothed_cpu_p95.update(completed.cpu_p95);
    state.smoothed_p50.update(percentile_of(state.latencies, 0.5));
    state.smoothed_p95.update(percentile_of(state.latencies, 0.95));

    const double delta_m = calibrate_delta_m(models.mem, policy);
    const bool current = completed.config == state.config();

    Triggers triggers;
    if (current) {
        triggers.mem = completed.total_rss() >= policy.eta * caps.mem_cap;
        if (state.latency_ratio.size() >= kMinTailSamples) {
            const double p50 = percentile_of(state.latency_ratio, 0.5);
            const double p95 = percentile_of(state.latency_ratio, 0.95);
            triggers.tail = p50 > 0.0 && p95 / p50 > policy.tau;
        }
        triggers.cpu = completed.cpu_p95 > policy.rho_star * caps.cpu_cap;
    }
    const Headrooms headrooms = compute_headrooms(state, caps, policy);

    ControlDecision decision = hold(state, "stale configuration");
    bool allow_increase = false;
    if (current) {
        const bool cooling = std::exchange(state.cooldown, false);
        decision = apply_decrease(state, triggers, policy);
        if (decision.action == Action::decrease_b && triggers.tail && !triggers.mem)
            state.latency_ratio.clear();
        if (decision.action == Action::hold && !triggers.any()) {
            decision = apply_backpressure(state, completed.queue_depth_at_submit, policy);
            allow_increase = decision.action == Action::hold && !state.paused && !cooling;
            if (cooling && decision.action == Action::hold) decision.reason = "cooldown";
        }
    } else if (!triggers.any()) {
        decision = apply_backpressure(state, completed.queue_depth_at_submit, policy);
        if (decision.action == Action::hold) decision.reason = "stale configuration";
    }

    SafeLimits limits = safe_limits(models.mem, models.profile, caps, policy, state.k, delta_m);
    limits.b_max = std::max(policy.b_min, std::min(limits.b_max, state.b_ceiling));
    if (allow_increase) decision = propose_step(state, headrooms, limits, policy);

    // Prune against the envelope and the CPU cap.
    if (!limits.feasible) {
        state.paused = true;
        state.paused_infeasible = true;
        decision = decide(policy.b_min, policy.k_min, Action::pause, "safe set empty");
    } else {
        if (state.paused_infeasible) {
            state.paused_infeasible = false;
            state.paused = false;
            if (decision.action == Action::hold) decision.action = Action::resume;
        }
        const int k_cap = std::min(limits.k_max, caps.cpu_cap);
        if (decision.new_k > k_cap) {
            decision.new_k = k_cap;
            if (decision.action == Action::hold) {
                decision.action = Action::decrease_k;
                decision.reason = "k outside safe set";
            }
        }
        decision.new_k = std::max(decision.new_k, policy.k_min);
        Rows b_cap = limits.b_max;
        if (decision.new_k != state.k) {
            b_cap = safe_limits(models.mem, models.profile, caps, policy, decision.new_k, delta_m).b_max;
            b_cap = std::max(policy.b_min, std::min(b_cap, state.b_ceiling));
        }
        if (decision.new_b > b_cap) {
            decision.new_b = b_cap;
            if (decision.action == Action::hold) {
                decision.action = Action::decrease_b;
                decision.reason = "b outside safe set";
            }
        }
        decision.new_b = std::max(decision.new_b, policy.b_min);
    }

    decision.headrooms = headrooms;
    decision.triggers = triggers;
    decision.delta_m = delta_m;

    if (decision.new_b != state.b || decision.new_k != state.k) {
        const bool shrink = decision.new_b < state.b || decision.new_k < state.k;
        state.b = decision.new_b;
        state.k = decision.new_k;
        ++state.reconfig_count;
        if (shrink) state.cooldown = true;
    }
    return decision;
}

AdaptiveScheduler::AdaptiveScheduler(SchedulerModels models, ResourceCaps caps,
                                     PolicyParams policy, BackendKind backend, int min_waves)
    : models_(std::move(models)), caps_(caps), policy_(policy), min_waves_(min_waves) {
    caps_.validate();
    policy_.validate();
    if (min_waves_ < 1) throw std::invalid_argument("min_waves must be >= 1");
    state_.backend = backend;
}

BatchConfig AdaptiveScheduler::start(Rows total_rows) {
    const Rows slots = static_cast<Rows>(caps_.cpu_cap) * min_waves_;
    const Rows ceiling = std::max(policy_.b_min, (total_rows + slots - 1) / slots);
    const BatchConfig first = safe_start(models_, caps_, policy_, ceiling);
    const BackendKind backend = state_.backend;
    state_ = ControllerState::initial(first, backend, policy_);
    state_.b_ceiling = ceiling;
    return first;
}

ControlDecision AdaptiveScheduler::on_completion(const BatchMetrics& completed, Rows remaining_rows) {
    // Once every row is submitted a new (b,k) would apply to nothing, and the
    // draining pool's falling utilization would read as CPU headroom.
    if (remaining_rows == 0) {
        ControlDecision d;
        d.new_b = state_.b;
        d.new_k = state_.k;
        d.reason = "draining";
        return d;
    }
    return control_cycle(state_, completed, models_, caps_, policy_);
}

StragglerAction AdaptiveScheduler::on_running(const RunningBatch& batch) {
    if (state_.latencies.size() < kMinTailSamples) return StragglerAction::none;
    return mitigate_straggler(batch, percentile_of(state_.latencies, 0.5), policy_);
}

Admission AdaptiveScheduler::admission() const {
    if (state_.paused_infeasible) return Admission::infeasible;
    return state_.paused ? Admission::paused : Admission::open;
}

}  // namespace adsched
