#pragma once

// Guarded hill-climb over (b, k): proportional increases toward the larger
// normalized headroom, multiplicative backoff on memory/tail triggers after
// m consecutive observations, backpressure on queue growth, and straggler
// mitigation. Every emitted configuration is pruned by the memory envelope.

#include <deque>
#include <memory>
#include <limits>
#include <string>

#include "adsched/model.hpp"
#include "adsched/types.hpp"

namespace adsched {

struct SchedulerModels {
    CostModel cost;
    MemModel mem;
    PreflightProfile profile;
};

struct Headrooms {
    double h_mem = 0.0;
    double h_cpu = 0.0;
};

enum class Action { increase_b, increase_k, decrease_b, decrease_k, hold, pause, resume };

std::string_view to_string(Action action);
Action action_from_string(std::string_view name);

struct Triggers {
    bool mem = false;
    bool tail = false;
    bool cpu = false;

    bool any() const { return mem || tail || cpu; }
};

struct ControlDecision {
    Rows new_b = 0;
    int new_k = 0;
    Action action = Action::hold;
    std::string reason;
    // Trace fields, filled by control_cycle.
    Headrooms headrooms;
    Triggers triggers;
    double delta_m = 0.0;
};

struct ControllerState {
    Rows b = 0;
    int k = 1;
    BackendKind backend = BackendKind::inmem;

    Ewma smoothed_rss_p95{0.2};
    Ewma smoothed_cpu_p95{0.2};
    Ewma smoothed_p50{0.2};
    Ewma smoothed_p95{0.2};

    int consecutive_tail_triggers = 0;
    int consecutive_mem_triggers = 0;
    int consecutive_cpu_triggers = 0;
    int reconfig_count = 0;
    bool paused = false;

    // Cap on b independent of memory (e.g. rows left in the job).
    Rows b_ceiling = std::numeric_limits<Rows>::max();

    // Internal bookkeeping.
    bool paused_infeasible = false;
    bool cooldown = false;        // no increases until a batch at (b,k) completes
    bool backoff_streak = false;  // last enacted backoff not yet followed by a calm batch
    int last_queue_depth = 0;
    int queue_growth = 0;
    std::deque<double> latencies;      // service seconds, last percentile_window batches
    std::deque<double> latency_ratio;  // observed / predicted, same window

    static ControllerState initial(BatchConfig start, BackendKind backend,
                                   const PolicyParams& policy);
    BatchConfig config() const { return {b, k}; }
};

// Largest point of the geometric ladder whose predicted memory uses at most
// half of the envelope. Throws InfeasibleJob when (b_min, k_min) is unsafe.
BatchConfig safe_start(const SchedulerModels& models, const ResourceCaps& caps,
                       const PolicyParams& policy,
                       Rows b_ceiling = std::numeric_limits<Rows>::max());

Headrooms compute_headrooms(const ControllerState& state, const ResourceCaps& caps,
                            const PolicyParams& policy);

ControlDecision propose_step(const ControllerState& state, const Headrooms& headrooms,
                             const SafeLimits& limits, const PolicyParams& policy);

// Updates the trigger counters in `state` and returns the backoff (or a
// hysteresis hold). Does not mutate b or k.
ControlDecision apply_decrease(ControllerState& state, const Triggers& triggers,
                               const PolicyParams& policy);

ControlDecision apply_backpressure(ControllerState& state, int queue_depth,
                                   const PolicyParams& policy);

enum class StragglerAction { none, split, speculate };

struct RunningBatch {
    double runtime = 0.0;
    Rows b = 0;
    bool mitigated = false;
};

StragglerAction mitigate_straggler(const RunningBatch& batch, double window_p50,
                                   const PolicyParams& policy);

// One decision per completed batch. Mutates state and models.
ControlDecision control_cycle(ControllerState& state, const BatchMetrics& completed,
                              SchedulerModels& models, const ResourceCaps& caps,
                              const PolicyParams& policy);

// What the job driver consults after every completion. Fixed and heuristic
// baselines implement it too; only the adaptive one runs the control loop.
enum class Admission { open, paused, infeasible };

class ConfigPolicy {
public:
    virtual ~ConfigPolicy() = default;

    virtual std::string name() const = 0;
    virtual BatchConfig start(Rows total_rows) = 0;
    virtual ControlDecision on_completion(const BatchMetrics& completed, Rows remaining_rows) = 0;
    virtual StragglerAction on_running(const RunningBatch&) { return StragglerAction::none; }
    virtual Admission admission() const { return Admission::open; }
    virtual int reconfig_count() const = 0;
};

class AdaptiveScheduler : public ConfigPolicy {
public:
    // b never exceeds total_rows / (cpu_cap * min_waves), so every worker
    // sees at least `min_waves` batches when the job is large enough.
    AdaptiveScheduler(SchedulerModels models, ResourceCaps caps, PolicyParams policy,
                      BackendKind backend, int min_waves = 4);

    std::string name() const override { return "adaptive"; }
    BatchConfig start(Rows total_rows) override;
    ControlDecision on_completion(const BatchMetrics& completed, Rows remaining_rows) override;
    StragglerAction on_running(const RunningBatch& batch) override;
    Admission admission() const override;
    int reconfig_count() const override { return state_.reconfig_count; }

    const ControllerState& state() const { return state_; }
    const SchedulerModels& models() const { return models_; }

private:
    SchedulerModels models_;
    ResourceCaps caps_;
    PolicyParams policy_;
    int min_waves_;
    ControllerState state_;
};

}  // namespace adsched
