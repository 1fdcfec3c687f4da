#pragma once

// The load-compute-store-finish pipeline template.
//
// A kernel is four stage functions plus a per-task setup. Producer workers
// fill an N-slot input ring and drain an output ring; consumer workers run
// compute over every iteration and a finish step at the end. Slot handoff is
// barrier-based: a consumer may read slot s of iteration i only after the
// load for (s, i) completed, and a producer may overwrite slot s with
// iteration i+N only after every consumer arrived on (s, i).
//
// Two functional backends execute the same semantics: a deterministic
// seeded single-thread interleaver and a real-thread runner. Outputs must be
// identical across backends, seeds, stage counts and worker counts; only the
// trace differs. A separate discrete-event simulator (simulate_timed) plays
// the same barrier rules against configurable stage latencies instead of
// running numerics.

#include <any>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "kittensim/errors.hpp"
#include "kittensim/machine.hpp"

namespace kittensim {

// Counter barrier with generations: arrive() increments; completing a
// generation resets the count for the next one.
struct Barrier {
    int expected_arrivals = 1;
    int arrived = 0;
    long generation = 0; // completed generations

    void arrive() {
        if (arrived >= expected_arrivals)
            throw ContractViolation("barrier: arrive past expected count");
        if (++arrived == expected_arrivals) {
            arrived = 0;
            ++generation;
        }
    }
    bool reached(long gen) const { return generation >= gen; }
};

struct PipelineConfig {
    int num_consumer_workers = 1;
    int num_producer_workers = 1;
    int input_pipe_stages = 1;
    int output_pipe_stages = 1;

    void validate() const {
        if (num_consumer_workers < 1 || num_producer_workers < 1)
            throw ConfigError("PipelineConfig: workers must be >= 1");
        if (input_pipe_stages < 1 || output_pipe_stages < 1)
            throw ConfigError("PipelineConfig: pipe stages must be >= 1");
    }
};

struct LoadArgs {
    int task_id = 0;
    int iter = 0;
    int producer_id = 0;
    std::any* common = nullptr;
    std::any* input = nullptr; // slot block to fill
};

struct ComputeArgs {
    int task_id = 0;
    int iter = 0;
    int consumer_id = 0;
    int num_consumers = 1;
    std::any* common = nullptr;
    std::any* state = nullptr;
    const std::any* input = nullptr;
    std::any* output = nullptr; // non-null iff the kernel emits per-iteration outputs
    // Signal that the input slot may be reused; exactly once per iteration.
    std::function<void()> arrive_inputs;
    // Signal that this worker's share of the output block is written; exactly
    // once per iteration for per-iteration-output kernels.
    std::function<void()> arrive_outputs;
};

struct StoreArgs {
    int task_id = 0;
    int out_index = 0;
    int producer_id = 0;
    std::any* common = nullptr;
    const std::any* output = nullptr;
    // Signal that the output slot may be refilled; exactly once per output.
    std::function<void()> arrive_outputs_finished;
};

struct FinishArgs {
    int task_id = 0;
    int consumer_id = 0;
    int num_consumers = 1;
    std::any* common = nullptr;
    std::any* state = nullptr;
};

struct KernelSpec {
    std::string name;

    // Block-level memory description, for the shared-memory footprint check.
    std::size_t input_block_bytes = 0;
    std::size_t output_block_bytes = 0;
    std::size_t scratch_bytes = 0;

    // True if the kernel writes one output block per iteration through the
    // output ring (otherwise outputs leave in finish()).
    bool per_iteration_output = false;

    // Kernel declares its compute stage safe to run on different iterations
    // concurrently across consumers; without it consumers move in lockstep.
    bool iteration_independent = false;

    // 0 = works with any consumer count.
    int required_consumers = 0;

    std::function<std::any(int task_id)> make_common;
    // Iteration count for this task, or -1 when no tasks remain.
    std::function<int(int task_id, std::any& common)> common_setup;
    std::function<std::any(int consumer_id, std::any& common)> make_consumer_state;
    std::function<std::any()> make_input_block;
    std::function<std::any()> make_output_block;

    std::function<void(LoadArgs&)> load;
    std::function<void(ComputeArgs&)> compute;
    std::function<void(StoreArgs&)> store;
    std::function<void(FinishArgs&)> finish;

    void validate(const PipelineConfig& cfg, const MachineParams& machine) const {
        cfg.validate();
        const std::size_t footprint =
            static_cast<std::size_t>(cfg.input_pipe_stages) * input_block_bytes +
            (per_iteration_output
                 ? static_cast<std::size_t>(cfg.output_pipe_stages) * output_block_bytes
                 : 0) +
            scratch_bytes;
        if (footprint > machine.smem_bytes_per_sm)
            throw ConfigError("pipeline footprint " + std::to_string(footprint) +
                              " B exceeds shared memory capacity " +
                              std::to_string(machine.smem_bytes_per_sm) + " B");
        if (required_consumers > 0 && cfg.num_consumer_workers != required_consumers)
            throw ConfigError("kernel '" + name + "' requires exactly " +
                              std::to_string(required_consumers) + " consumer workers");
        if (per_iteration_output && !store)
            throw ConfigError("per-iteration-output kernel needs a store stage");
    }
};

// --- timeline -----------------------------------------------------------------

struct TimelineEvent {
    enum class Kind { Load, Compute, Store, Finish, Stall };
    Kind kind = Kind::Load;
    double start = 0.0;
    double end = 0.0;
    int task = 0;
    int iteration = -1;
    int input_slot = -1;  // slot written (load) or read (compute)
    int output_slot = -1; // slot written (compute) or read (store)
    double input_release = -1.0; // when the reader released the input slot
    std::string cause;           // stalls: binding dependency
};

inline const char* to_string(TimelineEvent::Kind k) {
    switch (k) {
        case TimelineEvent::Kind::Load:    return "load";
        case TimelineEvent::Kind::Compute: return "compute";
        case TimelineEvent::Kind::Store:   return "store";
        case TimelineEvent::Kind::Finish:  return "finish";
        case TimelineEvent::Kind::Stall:   return "stall";
    }
    return "?";
}

struct Timeline {
    std::vector<std::string> lanes;
    std::vector<std::vector<TimelineEvent>> events; // one list per lane
    double makespan = 0.0;
    double total_work = 0.0;

    double throughput() const { return makespan > 0.0 ? total_work / makespan : 0.0; }

    // Busy (non-stall) fraction of worker lanes over the makespan.
    double issue_utilization() const {
        if (makespan <= 0.0 || lanes.empty()) return 0.0;
        double busy = 0.0;
        int worker_lanes = 0;
        for (std::size_t l = 0; l < lanes.size(); ++l) {
            if (lanes[l].rfind("dma", 0) == 0) continue;
            ++worker_lanes;
            for (const auto& e : events[l])
                if (e.kind != TimelineEvent::Kind::Stall) busy += e.end - e.start;
        }
        return worker_lanes ? busy / (worker_lanes * makespan) : 0.0;
    }

    std::map<std::string, double> stall_fractions() const {
        std::map<std::string, double> out;
        double total = 0.0;
        for (std::size_t l = 0; l < lanes.size(); ++l)
            for (const auto& e : events[l])
                if (e.kind == TimelineEvent::Kind::Stall) {
                    out[e.cause] += e.end - e.start;
                    total += e.end - e.start;
                }
        if (total > 0.0)
            for (auto& [k, v] : out) v /= total;
        return out;
    }
};

// Checks the pipeline safety property: no input slot is written (load) while
// any consumer still holds it, and no output slot is read (store) while a
// consumer is still writing it. Returns human-readable violations.
inline std::vector<std::string> validate_timeline(const Timeline& tl) {
    struct Span {
        double start, end;
        const char* what;
        int task;
        int iter;
    };
    std::map<int, std::vector<Span>> in_writes, in_reads, out_writes, out_reads;
    for (std::size_t l = 0; l < tl.lanes.size(); ++l) {
        for (const auto& e : tl.events[l]) {
            if (e.kind == TimelineEvent::Kind::Load && e.input_slot >= 0)
                in_writes[e.input_slot].push_back({e.start, e.end, "load", e.task, e.iteration});
            if (e.kind == TimelineEvent::Kind::Compute && e.input_slot >= 0) {
                const double rel = e.input_release >= 0.0 ? e.input_release : e.end;
                in_reads[e.input_slot].push_back({e.start, rel, "compute", e.task, e.iteration});
            }
            if (e.kind == TimelineEvent::Kind::Compute && e.output_slot >= 0)
                out_writes[e.output_slot].push_back({e.start, e.end, "compute", e.task, e.iteration});
            if (e.kind == TimelineEvent::Kind::Store && e.output_slot >= 0)
                out_reads[e.output_slot].push_back({e.start, e.end, "store", e.task, e.iteration});
        }
    }
    std::vector<std::string> violations;
    // The (task, iter) handoff pair is ordered by its barrier; any other
    // write/read pair on a slot must be disjoint in time.
    auto clash = [&](const std::map<int, std::vector<Span>>& writes,
                     const std::map<int, std::vector<Span>>& reads, const char* ring) {
        for (const auto& [slot, ws] : writes) {
            const auto it = reads.find(slot);
            if (it == reads.end()) continue;
            for (const auto& w : ws)
                for (const auto& r : it->second) {
                    if (w.task == r.task && w.iter == r.iter) continue;
                    if (w.start < r.end && r.start < w.end)
                        violations.push_back(std::string(ring) + " slot " + std::to_string(slot) +
                                             ": " + w.what + " iter " + std::to_string(w.iter) +
                                             " overlaps " + r.what + " iter " +
                                             std::to_string(r.iter));
                }
        }
    };
    clash(in_writes, in_reads, "input");
    clash(out_writes, out_reads, "output");
    // The handoff itself: the writer must complete before the reader starts.
    for (const auto& [slot, ws] : in_writes)
        for (const auto& w : ws)
            for (const auto& r : in_reads[slot])
                if (w.task == r.task && w.iter == r.iter && r.start < w.end)
                    violations.push_back("input slot " + std::to_string(slot) + ": compute iter " +
                                         std::to_string(r.iter) + " starts before load completes");
    return violations;
}

// --- functional execution -------------------------------------------------------

struct ExecOptions {
    enum class Backend { Interleaved, Threaded };
    Backend backend = Backend::Interleaved;
    std::uint64_t seed = 0;
    bool strict_contracts = true; // enforce exactly-once arrive on return
    MachineParams machine = preset_h100();
};

struct ExecResult {
    Timeline timeline;
    int tasks_run = 0;
    long barrier_passings = 0;
    std::vector<std::string> barrier_trace;
};

namespace detail {

// Per-task pipeline state shared by both functional backends.
struct TaskRun {
    const KernelSpec& kernel;
    const PipelineConfig& cfg;
    int task_id;
    int iters;
    std::any common;
    std::vector<std::any> states;
    std::vector<std::any> in_slots;
    std::vector<std::any> out_slots;
    std::vector<Barrier> inputs_arrived;   // per input slot, expected 1
    std::vector<Barrier> inputs_finished;  // per input slot, expected C
    std::vector<Barrier> outputs_arrived;  // per output slot, expected C
    std::vector<Barrier> outputs_finished; // per output slot, expected 1
    std::vector<int> computes_completed;   // per iteration
    // worker cursors
    std::vector<int> next_load;  // per producer: next iteration it loads
    std::vector<int> next_store; // per producer: next output it stores
    std::vector<int> next_iter;  // per consumer
    std::vector<bool> finished;  // per consumer

    TaskRun(const KernelSpec& k, const PipelineConfig& c, int task, int iters_)
        : kernel(k), cfg(c), task_id(task), iters(iters_) {
        const int P = cfg.num_producer_workers, C = cfg.num_consumer_workers;
        const int Ni = cfg.input_pipe_stages, No = cfg.output_pipe_stages;
        in_slots.resize(Ni);
        for (auto& s : in_slots) s = kernel.make_input_block ? kernel.make_input_block() : std::any{};
        if (kernel.per_iteration_output) {
            out_slots.resize(No);
            for (auto& s : out_slots)
                s = kernel.make_output_block ? kernel.make_output_block() : std::any{};
        }
        inputs_arrived.assign(Ni, Barrier{1, 0, 0});
        inputs_finished.assign(Ni, Barrier{C, 0, 0});
        outputs_arrived.assign(No, Barrier{C, 0, 0});
        outputs_finished.assign(No, Barrier{1, 0, 0});
        computes_completed.assign(static_cast<std::size_t>(iters), 0);
        next_load.assign(P, 0);
        next_store.assign(P, 0);
        next_iter.assign(C, 0);
        finished.assign(C, false);
        for (int p = 0; p < P; ++p) {
            next_load[p] = p < iters ? p : iters; // round-robin start
            next_store[p] = p < iters ? p : iters;
        }
    }

    bool has_outputs() const { return kernel.per_iteration_output; }
    int num_outputs() const { return has_outputs() ? iters : 0; }

    bool load_ready(int i) const {
        const int s = i % cfg.input_pipe_stages;
        const long gen = i / cfg.input_pipe_stages;
        return gen == 0 || inputs_finished[s].reached(gen);
    }
    bool compute_ready(int consumer, int i) const {
        const int s = i % cfg.input_pipe_stages;
        if (!inputs_arrived[s].reached(i / cfg.input_pipe_stages + 1)) return false;
        if (!kernel.iteration_independent && i > 0 &&
            computes_completed[i - 1] < cfg.num_consumer_workers)
            return false;
        if (has_outputs()) {
            const int so = i % cfg.output_pipe_stages;
            const long gen = i / cfg.output_pipe_stages;
            if (!(gen == 0 || outputs_finished[so].reached(gen))) return false;
        }
        (void)consumer;
        return true;
    }
    bool store_ready(int o) const {
        const int so = o % cfg.output_pipe_stages;
        return outputs_arrived[so].reached(o / cfg.output_pipe_stages + 1);
    }

    std::string describe_wait(const std::string& who, const std::string& what, int idx) const {
        return who + " waiting for " + what + " " + std::to_string(idx) + " (task " +
               std::to_string(task_id) + ")";
    }
};

inline int arrive_checked(int& counter, const char* what) {
    if (counter >= 1)
        throw ContractViolation(std::string("double arrive on ") + what);
    return ++counter;
}

} // namespace detail

// Make a structural kernel with no numerics: useful for the timed simulator
// and scenario studies.
inline KernelSpec make_synthetic_kernel(std::size_t input_block_bytes, std::size_t output_block_bytes,
                                        bool per_iteration_output, bool iteration_independent,
                                        int iterations) {
    KernelSpec k;
    k.name = "synthetic";
    k.input_block_bytes = input_block_bytes;
    k.output_block_bytes = output_block_bytes;
    k.per_iteration_output = per_iteration_output;
    k.iteration_independent = iteration_independent;
    k.common_setup = [iterations](int task_id, std::any&) { return task_id == 0 ? iterations : -1; };
    k.load = [](LoadArgs&) {};
    k.compute = [](ComputeArgs& a) {
        a.arrive_inputs();
        if (a.output) a.arrive_outputs();
    };
    k.store = [](StoreArgs& a) { a.arrive_outputs_finished(); };
    k.finish = [](FinishArgs&) {};
    return k;
}

// Deterministic single-threaded interleaver: at every step one runnable
// worker (chosen by the seeded RNG) executes its next stage atomically.
// Reports deadlock with the blocked-barrier set if no worker can move.
inline ExecResult execute_functional(const KernelSpec& kernel, const PipelineConfig& cfg,
                                     const ExecOptions& opts = {});

namespace detail {

inline void run_task_interleaved(TaskRun& t, std::mt19937_64& rng, bool strict, double& step,
                                 Timeline& tl, ExecResult& res) {
    const int P = t.cfg.num_producer_workers, C = t.cfg.num_consumer_workers;
    const auto record = [&](int lane, TimelineEvent::Kind kind, int iter, int in_slot,
                            int out_slot) {
        TimelineEvent e;
        e.kind = kind;
        e.start = step;
        e.end = step + 1.0;
        e.task = t.task_id;
        e.iteration = iter;
        e.input_slot = in_slot;
        e.output_slot = out_slot;
        tl.events[static_cast<std::size_t>(lane)].push_back(e);
        step += 1.0;
    };
    const auto trace_barrier = [&](const char* name, int slot, long gen) {
        ++res.barrier_passings;
        res.barrier_trace.push_back("task " + std::to_string(t.task_id) + " step " +
                                    std::to_string(static_cast<long>(step)) + ": " + name + "[" +
                                    std::to_string(slot) + "] gen " + std::to_string(gen));
    };

    enum class Act { Load, Store, Compute, Finish };
    struct Choice {
        int worker_lane;
        Act act;
        int index;
    };

    while (true) {
        std::vector<Choice> runnable;
        bool all_done = true;
        std::vector<std::string> waits;
        for (int p = 0; p < P; ++p) {
            bool producer_done = t.next_load[p] >= t.iters &&
                                 (!t.has_outputs() || t.next_store[p] >= t.num_outputs());
            if (!producer_done) all_done = false;
            if (t.has_outputs() && t.next_store[p] < t.num_outputs()) {
                if (t.store_ready(t.next_store[p]))
                    runnable.push_back({p, Act::Store, t.next_store[p]});
                else
                    waits.push_back(t.describe_wait("producer " + std::to_string(p),
                                                    "outputs_arrived for output", t.next_store[p]));
            }
            if (t.next_load[p] < t.iters) {
                if (t.load_ready(t.next_load[p]))
                    runnable.push_back({p, Act::Load, t.next_load[p]});
                else
                    waits.push_back(t.describe_wait("producer " + std::to_string(p),
                                                    "inputs_finished for iteration", t.next_load[p]));
            }
        }
        for (int c = 0; c < C; ++c) {
            if (!t.finished[c]) all_done = false;
            if (t.next_iter[c] < t.iters) {
                if (t.compute_ready(c, t.next_iter[c]))
                    runnable.push_back({P + c, Act::Compute, t.next_iter[c]});
                else
                    waits.push_back(t.describe_wait("consumer " + std::to_string(c),
                                                    "inputs_arrived/slots for iteration",
                                                    t.next_iter[c]));
            } else if (!t.finished[c]) {
                runnable.push_back({P + c, Act::Finish, 0});
            }
        }
        if (all_done) break;
        if (runnable.empty())
            throw DeadlockError("pipeline deadlock: no runnable worker in task " +
                                    std::to_string(t.task_id),
                                waits);

        // Deduplicate per worker (a producer may offer store and load; store
        // drains first).
        std::map<int, Choice> per_worker;
        for (const auto& ch : runnable)
            if (!per_worker.count(ch.worker_lane) ||
                (ch.act == Act::Store && per_worker[ch.worker_lane].act == Act::Load))
                per_worker.insert_or_assign(ch.worker_lane, ch);
        std::vector<Choice> pick;
        for (const auto& [lane, ch] : per_worker) pick.push_back(ch);
        const Choice ch = pick[std::uniform_int_distribution<std::size_t>(0, pick.size() - 1)(rng)];

        switch (ch.act) {
            case Act::Load: {
                const int i = ch.index;
                const int s = i % t.cfg.input_pipe_stages;
                LoadArgs a;
                a.task_id = t.task_id;
                a.iter = i;
                a.producer_id = ch.worker_lane;
                a.common = &t.common;
                a.input = &t.in_slots[static_cast<std::size_t>(s)];
                if (t.kernel.load) t.kernel.load(a);
                t.inputs_arrived[s].arrive();
                trace_barrier("inputs_arrived", s, t.inputs_arrived[s].generation);
                record(ch.worker_lane, TimelineEvent::Kind::Load, i, s, -1);
                t.next_load[ch.worker_lane] += P;
                break;
            }
            case Act::Store: {
                const int o = ch.index;
                const int so = o % t.cfg.output_pipe_stages;
                int arrive_count = 0;
                StoreArgs a;
                a.task_id = t.task_id;
                a.out_index = o;
                a.producer_id = ch.worker_lane;
                a.common = &t.common;
                a.output = &t.out_slots[static_cast<std::size_t>(so)];
                a.arrive_outputs_finished = [&] {
                    arrive_checked(arrive_count, "outputs_finished");
                };
                t.kernel.store(a);
                if (strict && arrive_count != 1)
                    throw ContractViolation("store must arrive exactly once per output");
                if (arrive_count > 0) {
                    t.outputs_finished[so].arrive();
                    trace_barrier("outputs_finished", so, t.outputs_finished[so].generation);
                }
                record(ch.worker_lane, TimelineEvent::Kind::Store, o, -1, so);
                t.next_store[ch.worker_lane] += P;
                break;
            }
            case Act::Compute: {
                const int c = ch.worker_lane - P;
                const int i = ch.index;
                const int s = i % t.cfg.input_pipe_stages;
                const int so = t.has_outputs() ? i % t.cfg.output_pipe_stages : -1;
                int in_count = 0, out_count = 0;
                ComputeArgs a;
                a.task_id = t.task_id;
                a.iter = i;
                a.consumer_id = c;
                a.num_consumers = C;
                a.common = &t.common;
                a.state = &t.states[static_cast<std::size_t>(c)];
                a.input = &t.in_slots[static_cast<std::size_t>(s)];
                a.output = so >= 0 ? &t.out_slots[static_cast<std::size_t>(so)] : nullptr;
                a.arrive_inputs = [&] { arrive_checked(in_count, "inputs_finished"); };
                a.arrive_outputs = [&] { arrive_checked(out_count, "outputs_arrived"); };
                t.kernel.compute(a);
                if (strict && in_count != 1)
                    throw ContractViolation("compute must arrive on inputs_finished exactly once");
                if (strict && t.has_outputs() && out_count != 1)
                    throw ContractViolation("compute must arrive on outputs_arrived exactly once");
                if (in_count > 0) {
                    t.inputs_finished[s].arrive();
                    trace_barrier("inputs_finished", s, t.inputs_finished[s].generation);
                }
                if (out_count > 0 && so >= 0) {
                    t.outputs_arrived[so].arrive();
                    trace_barrier("outputs_arrived", so, t.outputs_arrived[so].generation);
                }
                t.computes_completed[i]++;
                record(ch.worker_lane, TimelineEvent::Kind::Compute, i, s, so);
                t.next_iter[c]++;
                break;
            }
            case Act::Finish: {
                const int c = ch.worker_lane - P;
                FinishArgs a;
                a.task_id = t.task_id;
                a.consumer_id = c;
                a.num_consumers = C;
                a.common = &t.common;
                a.state = &t.states[static_cast<std::size_t>(c)];
                if (t.kernel.finish) t.kernel.finish(a);
                record(ch.worker_lane, TimelineEvent::Kind::Finish, t.iters, -1, -1);
                t.finished[c] = true;
                break;
            }
        }
    }
}

inline void run_task_threaded(TaskRun& t, bool strict, Timeline& tl, double time_base) {
    const int P = t.cfg.num_producer_workers, C = t.cfg.num_consumer_workers;
    std::mutex m;
    std::condition_variable cv;
    std::exception_ptr failure;
    bool aborted = false;
    const auto t0 = std::chrono::steady_clock::now();
    const auto now = [&] {
        return time_base +
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    auto record = [&](int lane, TimelineEvent::Kind kind, int iter, int in_slot, int out_slot,
                      double start, double end) {
        TimelineEvent e;
        e.kind = kind;
        e.start = start;
        e.end = end;
        e.task = t.task_id;
        e.iteration = iter;
        e.input_slot = in_slot;
        e.output_slot = out_slot;
        tl.events[static_cast<std::size_t>(lane)].push_back(e);
    };

    auto fail = [&](std::exception_ptr ep) {
        std::lock_guard lk(m);
        if (!failure) failure = ep;
        aborted = true;
        cv.notify_all();
    };

    auto producer_fn = [&](int p) {
        try {
            while (true) {
                enum class Next { Load, Store, Done } next = Next::Done;
                int index = 0;
                {
                    std::unique_lock lk(m);
                    cv.wait(lk, [&] {
                        if (aborted) return true;
                        const bool want_store =
                            t.has_outputs() && t.next_store[p] < t.num_outputs();
                        const bool want_load = t.next_load[p] < t.iters;
                        if (!want_store && !want_load) return true; // done
                        if (want_store && t.store_ready(t.next_store[p])) return true;
                        if (want_load && t.load_ready(t.next_load[p])) return true;
                        return false;
                    });
                    if (aborted) return;
                    const bool want_store = t.has_outputs() && t.next_store[p] < t.num_outputs();
                    const bool want_load = t.next_load[p] < t.iters;
                    if (want_store && t.store_ready(t.next_store[p])) {
                        next = Next::Store;
                        index = t.next_store[p];
                        t.next_store[p] += P;
                    } else if (want_load && t.load_ready(t.next_load[p])) {
                        next = Next::Load;
                        index = t.next_load[p];
                        t.next_load[p] += P;
                    } else {
                        return; // done
                    }
                }
                const double start = now();
                if (next == Next::Load) {
                    const int s = index % t.cfg.input_pipe_stages;
                    LoadArgs a;
                    a.task_id = t.task_id;
                    a.iter = index;
                    a.producer_id = p;
                    a.common = &t.common;
                    a.input = &t.in_slots[static_cast<std::size_t>(s)];
                    if (t.kernel.load) t.kernel.load(a);
                    // Timestamp before publishing so readers observe a later start.
                    const double end = now();
                    record(p, TimelineEvent::Kind::Load, index, s, -1, start, end);
                    {
                        std::lock_guard lk(m);
                        t.inputs_arrived[s].arrive();
                    }
                    cv.notify_all();
                } else {
                    const int so = index % t.cfg.output_pipe_stages;
                    int arrive_count = 0;
                    StoreArgs a;
                    a.task_id = t.task_id;
                    a.out_index = index;
                    a.producer_id = p;
                    a.common = &t.common;
                    a.output = &t.out_slots[static_cast<std::size_t>(so)];
                    a.arrive_outputs_finished = [&] {
                        arrive_checked(arrive_count, "outputs_finished");
                    };
                    t.kernel.store(a);
                    if (strict && arrive_count != 1)
                        throw ContractViolation("store must arrive exactly once per output");
                    const double end = now();
                    record(p, TimelineEvent::Kind::Store, index, -1, so, start, end);
                    {
                        std::lock_guard lk(m);
                        if (arrive_count > 0) t.outputs_finished[so].arrive();
                    }
                    cv.notify_all();
                }
            }
        } catch (...) {
            fail(std::current_exception());
        }
    };

    auto consumer_fn = [&](int c) {
        try {
            while (true) {
                {
                    std::unique_lock lk(m);
                    cv.wait(lk, [&] {
                        return aborted || t.next_iter[c] >= t.iters ||
                               t.compute_ready(c, t.next_iter[c]);
                    });
                    if (aborted) return;
                    if (t.next_iter[c] >= t.iters) break;
                }
                const int i = t.next_iter[c];
                const int s = i % t.cfg.input_pipe_stages;
                const int so = t.has_outputs() ? i % t.cfg.output_pipe_stages : -1;
                int in_count = 0, out_count = 0;
                const double start = now();
                ComputeArgs a;
                a.task_id = t.task_id;
                a.iter = i;
                a.consumer_id = c;
                a.num_consumers = C;
                a.common = &t.common;
                a.state = &t.states[static_cast<std::size_t>(c)];
                a.input = &t.in_slots[static_cast<std::size_t>(s)];
                a.output = so >= 0 ? &t.out_slots[static_cast<std::size_t>(so)] : nullptr;
                a.arrive_inputs = [&] { arrive_checked(in_count, "inputs_finished"); };
                a.arrive_outputs = [&] { arrive_checked(out_count, "outputs_arrived"); };
                t.kernel.compute(a);
                if (strict && in_count != 1)
                    throw ContractViolation("compute must arrive on inputs_finished exactly once");
                if (strict && t.has_outputs() && out_count != 1)
                    throw ContractViolation("compute must arrive on outputs_arrived exactly once");
                const double end = now();
                record(P + c, TimelineEvent::Kind::Compute, i, s, so, start, end);
                {
                    std::lock_guard lk(m);
                    if (in_count > 0) t.inputs_finished[s].arrive();
                    if (out_count > 0 && so >= 0) t.outputs_arrived[so].arrive();
                    t.computes_completed[i]++;
                    t.next_iter[c]++;
                }
                cv.notify_all();
            }
            const double start = now();
            FinishArgs a;
            a.task_id = t.task_id;
            a.consumer_id = c;
            a.num_consumers = C;
            a.common = &t.common;
            a.state = &t.states[static_cast<std::size_t>(c)];
            if (t.kernel.finish) t.kernel.finish(a);
            {
                std::lock_guard lk(m);
                t.finished[c] = true;
            }
            record(P + c, TimelineEvent::Kind::Finish, t.iters, -1, -1, start, now());
            cv.notify_all();
        } catch (...) {
            fail(std::current_exception());
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(P + C));
    for (int p = 0; p < P; ++p) threads.emplace_back(producer_fn, p);
    for (int c = 0; c < C; ++c) threads.emplace_back(consumer_fn, c);
    for (auto& th : threads) th.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace detail

inline ExecResult execute_functional(const KernelSpec& kernel, const PipelineConfig& cfg,
                                     const ExecOptions& opts) {
    kernel.validate(cfg, opts.machine);
    if (!kernel.common_setup || !kernel.compute)
        throw ConfigError("kernel needs at least common_setup and compute");

    ExecResult res;
    Timeline& tl = res.timeline;
    for (int p = 0; p < cfg.num_producer_workers; ++p)
        tl.lanes.push_back("producer" + std::to_string(p));
    for (int c = 0; c < cfg.num_consumer_workers; ++c)
        tl.lanes.push_back("consumer" + std::to_string(c));
    tl.events.resize(tl.lanes.size());

    std::mt19937_64 rng(opts.seed);
    double step = 0.0;
    for (int task_id = 0;; ++task_id) {
        std::any common = kernel.make_common ? kernel.make_common(task_id) : std::any{};
        const int iters = kernel.common_setup(task_id, common);
        if (iters < 0) break;
        detail::TaskRun t(kernel, cfg, task_id, iters);
        t.common = std::move(common);
        t.states.resize(static_cast<std::size_t>(cfg.num_consumer_workers));
        for (int c = 0; c < cfg.num_consumer_workers; ++c)
            t.states[static_cast<std::size_t>(c)] =
                kernel.make_consumer_state ? kernel.make_consumer_state(c, t.common) : std::any{};

        if (opts.backend == ExecOptions::Backend::Interleaved) {
            detail::run_task_interleaved(t, rng, opts.strict_contracts, step, tl, res);
        } else {
            double base = 0.0;
            for (const auto& lane : tl.events)
                for (const auto& e : lane) base = std::max(base, e.end);
            detail::run_task_threaded(t, opts.strict_contracts, tl, base);
        }
        res.tasks_run++;
    }
    for (const auto& lane : tl.events)
        for (const auto& e : lane) tl.makespan = std::max(tl.makespan, e.end);
    return res;
}

// --- timed simulation -----------------------------------------------------------

struct LatencyProfile {
    double load_latency = 1e-6;  // issue -> data ready
    double load_issue_cost = 0.0; // producer-occupying time (async loads)
    bool async_load = true;
    double compute_latency = 1e-6;
    double store_latency = 0.0;
    double store_issue_cost = 0.0;
    bool async_store = true;
    double finish_latency = 0.0;
    double work_per_compute = 1.0;   // work units per compute event
    double compute_multiplier = 1.0; // contention penalty hook

    void validate() const {
        if (load_latency < 0 || compute_latency < 0 || store_latency < 0 || finish_latency < 0 ||
            load_issue_cost < 0 || store_issue_cost < 0)
            throw ConfigError("LatencyProfile: latencies must be nonnegative");
        if (compute_multiplier <= 0) throw ConfigError("LatencyProfile: multiplier must be > 0");
    }
};

// Discrete-event simulation of one task under the pipeline barrier rules.
// Per-worker execution is serial; async loads/stores occupy their worker
// only for the issue cost and complete on a DMA lane after the latency.
inline Timeline simulate_timed(const KernelSpec& kernel, const PipelineConfig& cfg,
                               const LatencyProfile& lat, int iterations,
                               const MachineParams& machine = preset_h100()) {
    kernel.validate(cfg, machine);
    lat.validate();
    if (iterations < 0) throw ConfigError("simulate_timed: iterations must be >= 0");

    const int P = cfg.num_producer_workers, C = cfg.num_consumer_workers;
    const int Ni = cfg.input_pipe_stages, No = cfg.output_pipe_stages;
    const bool outs = kernel.per_iteration_output;
    const double compute_time = lat.compute_latency * lat.compute_multiplier;
    constexpr double kInf = 1e300;

    Timeline tl;
    for (int p = 0; p < P; ++p) tl.lanes.push_back("producer" + std::to_string(p));
    for (int c = 0; c < C; ++c) tl.lanes.push_back("consumer" + std::to_string(c));
    const int dma_in_base = P + C;
    for (int s = 0; s < Ni; ++s) tl.lanes.push_back("dma-in" + std::to_string(s));
    const int dma_out_base = dma_in_base + Ni;
    if (outs)
        for (int s = 0; s < No; ++s) tl.lanes.push_back("dma-out" + std::to_string(s));
    tl.events.resize(tl.lanes.size());

    std::vector<double> worker_free(static_cast<std::size_t>(P + C), 0.0);
    std::vector<double> ready(static_cast<std::size_t>(iterations), kInf); // load completion
    std::vector<double> released(static_cast<std::size_t>(iterations), kInf); // all computes done
    std::vector<int> computes_left(static_cast<std::size_t>(iterations), C);
    std::vector<double> compute_end(static_cast<std::size_t>(iterations), 0.0); // latest
    std::vector<double> out_ready(static_cast<std::size_t>(iterations), kInf);   // all arrivals
    std::vector<int> out_arrivals_left(static_cast<std::size_t>(iterations), C);
    std::vector<double> out_released(static_cast<std::size_t>(iterations), kInf); // store done

    std::vector<int> next_load(static_cast<std::size_t>(P)), next_store(static_cast<std::size_t>(P));
    std::vector<int> next_iter(static_cast<std::size_t>(C), 0);
    std::vector<bool> finished(static_cast<std::size_t>(C), false);
    for (int p = 0; p < P; ++p) next_load[static_cast<std::size_t>(p)] = next_store[static_cast<std::size_t>(p)] = p;

    const auto stall = [&](int lane, double from, double to, const std::string& cause) {
        if (to > from + 1e-15) {
            TimelineEvent e;
            e.kind = TimelineEvent::Kind::Stall;
            e.start = from;
            e.end = to;
            e.cause = cause;
            tl.events[static_cast<std::size_t>(lane)].push_back(e);
        }
    };
    const auto record = [&](int lane, TimelineEvent::Kind kind, double start, double end, int iter,
                            int in_slot, int out_slot) {
        TimelineEvent e;
        e.kind = kind;
        e.start = start;
        e.end = end;
        e.iteration = iter;
        e.input_slot = in_slot;
        e.output_slot = out_slot;
        tl.events[static_cast<std::size_t>(lane)].push_back(e);
        tl.makespan = std::max(tl.makespan, end);
    };

    struct Candidate {
        double start = 1e300;
        int lane = -1;
        int kind = -1; // 0 store, 1 load, 2 compute, 3 finish
        int index = 0;
        std::string cause;
    };
    const auto better = [](const Candidate& a, const Candidate& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.kind != b.kind) return a.kind < b.kind; // stores drain before loads
        return a.lane < b.lane;
    };

    int computes_done_total = 0;
    while (true) {
        Candidate best;
        bool all_done = true;
        std::vector<std::string> waits;
        const auto offer = [&](Candidate c) {
            if (best.lane < 0 || better(c, best)) best = std::move(c);
        };
        for (int p = 0; p < P; ++p) {
            const bool store_pending = outs && next_store[static_cast<std::size_t>(p)] < iterations;
            const bool load_pending = next_load[static_cast<std::size_t>(p)] < iterations;
            if (store_pending || load_pending) all_done = false;
            if (store_pending) {
                const int o = next_store[static_cast<std::size_t>(p)];
                if (out_ready[static_cast<std::size_t>(o)] < kInf) {
                    const double dep = out_ready[static_cast<std::size_t>(o)];
                    const double start = std::max(worker_free[static_cast<std::size_t>(p)], dep);
                    offer({start, p, 0, o,
                           dep > worker_free[static_cast<std::size_t>(p)] ? "waiting-output-ready"
                                                                          : ""});
                } else {
                    waits.push_back("producer " + std::to_string(p) + " store " + std::to_string(o));
                }
            }
            if (load_pending) {
                const int i = next_load[static_cast<std::size_t>(p)];
                const int gen = i / Ni;
                double dep = 0.0;
                std::string cause;
                bool known = true;
                if (gen > 0) {
                    const int prev = i - Ni;
                    if (released[static_cast<std::size_t>(prev)] < kInf) {
                        dep = released[static_cast<std::size_t>(prev)];
                        cause = "waiting-slot-free";
                    } else {
                        known = false;
                        waits.push_back("producer " + std::to_string(p) + " load " +
                                        std::to_string(i));
                    }
                }
                if (known) {
                    const double start = std::max(worker_free[static_cast<std::size_t>(p)], dep);
                    if (dep <= worker_free[static_cast<std::size_t>(p)]) cause.clear();
                    offer({start, p, 1, i, cause});
                }
            }
        }
        for (int c = 0; c < C; ++c) {
            if (next_iter[static_cast<std::size_t>(c)] < iterations) {
                all_done = false;
                const int i = next_iter[static_cast<std::size_t>(c)];
                double dep = 0.0;
                std::string cause;
                bool known = ready[static_cast<std::size_t>(i)] < kInf;
                if (known) {
                    dep = ready[static_cast<std::size_t>(i)];
                    cause = "waiting-input-ready";
                    if (!kernel.iteration_independent && i > 0) {
                        if (computes_left[static_cast<std::size_t>(i - 1)] > 0)
                            known = false;
                        else if (compute_end[static_cast<std::size_t>(i - 1)] > dep) {
                            dep = compute_end[static_cast<std::size_t>(i - 1)];
                            cause = "waiting-lockstep";
                        }
                    }
                    if (known && outs) {
                        const int so_gen = i / No;
                        if (so_gen > 0) {
                            const int prev = i - No;
                            if (out_released[static_cast<std::size_t>(prev)] < kInf) {
                                if (out_released[static_cast<std::size_t>(prev)] > dep) {
                                    dep = out_released[static_cast<std::size_t>(prev)];
                                    cause = "waiting-output-slot";
                                }
                            } else {
                                known = false;
                            }
                        }
                    }
                }
                if (known) {
                    const double start = std::max(worker_free[static_cast<std::size_t>(P + c)], dep);
                    if (dep <= worker_free[static_cast<std::size_t>(P + c)]) cause.clear();
                    offer({start, P + c, 2, i, cause});
                } else {
                    waits.push_back("consumer " + std::to_string(c) + " compute " +
                                    std::to_string(i));
                }
            } else if (!finished[static_cast<std::size_t>(c)]) {
                all_done = false;
                offer({worker_free[static_cast<std::size_t>(P + c)], P + c, 3, 0, ""});
            }
        }
        if (all_done) break;
        if (best.lane < 0)
            throw DeadlockError("simulate_timed: no schedulable action", waits);

        const double w0 = worker_free[static_cast<std::size_t>(best.lane)];
        if (!best.cause.empty()) stall(best.lane, w0, best.start, best.cause);

        switch (best.kind) {
            case 0: { // store
                const int o = best.index;
                const int so = o % No;
                const double issue = lat.async_store ? lat.store_issue_cost : lat.store_latency;
                const double issue_end = best.start + issue;
                const double done = lat.async_store ? issue_end + lat.store_latency : issue_end;
                record(best.lane, TimelineEvent::Kind::Store, best.start, issue_end, o, -1, so);
                if (lat.async_store && lat.store_latency > 0)
                    record(dma_out_base + so, TimelineEvent::Kind::Store, issue_end, done, o, -1,
                           so);
                worker_free[static_cast<std::size_t>(best.lane)] = issue_end;
                out_released[static_cast<std::size_t>(o)] = done;
                next_store[static_cast<std::size_t>(best.lane)] += P;
                break;
            }
            case 1: { // load
                const int i = best.index;
                const int s = i % Ni;
                const double issue = lat.async_load ? lat.load_issue_cost : lat.load_latency;
                const double issue_end = best.start + issue;
                const double done = lat.async_load ? issue_end + lat.load_latency : issue_end;
                record(best.lane, TimelineEvent::Kind::Load, best.start, issue_end, i, s, -1);
                if (lat.async_load && lat.load_latency > 0)
                    record(dma_in_base + s, TimelineEvent::Kind::Load, issue_end, done, i, s, -1);
                worker_free[static_cast<std::size_t>(best.lane)] = issue_end;
                ready[static_cast<std::size_t>(i)] = done;
                next_load[static_cast<std::size_t>(best.lane)] += P;
                break;
            }
            case 2: { // compute
                const int c = best.lane - P;
                const int i = best.index;
                const int s = i % Ni;
                const int so = outs ? i % No : -1;
                const double end = best.start + compute_time;
                record(best.lane, TimelineEvent::Kind::Compute, best.start, end, i, s, so);
                worker_free[static_cast<std::size_t>(best.lane)] = end;
                compute_end[static_cast<std::size_t>(i)] =
                    std::max(compute_end[static_cast<std::size_t>(i)], end);
                if (--computes_left[static_cast<std::size_t>(i)] == 0)
                    released[static_cast<std::size_t>(i)] = compute_end[static_cast<std::size_t>(i)];
                if (outs && --out_arrivals_left[static_cast<std::size_t>(i)] == 0)
                    out_ready[static_cast<std::size_t>(i)] = compute_end[static_cast<std::size_t>(i)];
                next_iter[static_cast<std::size_t>(c)]++;
                computes_done_total++;
                break;
            }
            case 3: { // finish
                const int c = best.lane - P;
                const double end = best.start + lat.finish_latency;
                record(best.lane, TimelineEvent::Kind::Finish, best.start, end, iterations, -1, -1);
                worker_free[static_cast<std::size_t>(best.lane)] = end;
                finished[static_cast<std::size_t>(c)] = true;
                break;
            }
        }
    }
    tl.total_work = computes_done_total * lat.work_per_compute;
    return tl;
}

// --- occupancy sweep --------------------------------------------------------------

// Contention model: exceeding a capacity inflates compute latency linearly
// in the excess fraction.
struct ResourceModel {
    double regs_per_worker = 0.0;
    double regs_capacity = 0.0;
    double smem_per_worker = 0.0;
    double smem_capacity = 0.0;
    double penalty_coeff = 0.0;

    double multiplier(int total_workers) const {
        double m = 1.0;
        if (regs_capacity > 0.0 && regs_per_worker > 0.0) {
            const double excess = std::max(0.0, total_workers * regs_per_worker - regs_capacity);
            m += penalty_coeff * excess / regs_capacity;
        }
        if (smem_capacity > 0.0 && smem_per_worker > 0.0) {
            const double excess = std::max(0.0, total_workers * smem_per_worker - smem_capacity);
            m += penalty_coeff * excess / smem_capacity;
        }
        return m;
    }
};

struct OccupancyScenario {
    int total_tiles = 256;
    int input_pipe_stages = 8;
    int producers = 1;
    double load_base = 0.0;      // per-iteration load latency = base + per_tile * consumers
    double load_per_tile = 3e-7;
    double load_issue_cost = 1e-8;
    double compute_latency = 2e-7; // per tile (one consumer, one iteration)
    double finish_latency = 0.0;
    std::vector<int> worker_counts;
    ResourceModel resources;
    std::size_t input_block_bytes_per_tile = 1024;
};

struct OccupancyPoint {
    int workers = 0;
    double makespan_lcsf = 0.0;
    double makespan_sync = 0.0;
    double throughput_lcsf = 0.0;
    double throughput_sync = 0.0;
};

struct OccupancyCurve {
    std::vector<OccupancyPoint> points;
    int argmax_workers = 0;
};

// One worker alternating load and compute, no overlap: tiles are split
// round-robin and each costs a full serial load + compute.
inline double synchronous_makespan(const OccupancyScenario& sc, int workers, double multiplier) {
    const double per_tile =
        (sc.load_base + sc.load_per_tile) + sc.compute_latency * multiplier;
    double makespan = 0.0;
    for (int w = 0; w < workers; ++w) {
        const int tiles = sc.total_tiles / workers + (w < sc.total_tiles % workers ? 1 : 0);
        makespan = std::max(makespan, tiles * per_tile + sc.finish_latency);
    }
    return makespan;
}

inline OccupancyPoint occupancy_point(const OccupancyScenario& sc, int workers,
                                      const MachineParams& machine = preset_h100()) {
    if (workers < 1) throw ConfigError("occupancy_sweep: workers must be >= 1");
    const double mult = sc.resources.multiplier(workers);
    OccupancyPoint pt;
    pt.workers = workers;
    pt.makespan_sync = synchronous_makespan(sc, workers, mult);
    pt.throughput_sync = sc.total_tiles / pt.makespan_sync;

    const int consumers = workers - sc.producers;
    if (consumers < 1) {
        // Too few workers to split roles; the pipelined point degenerates to
        // the synchronous kernel.
        pt.makespan_lcsf = pt.makespan_sync;
    } else {
        const int iterations = (sc.total_tiles + consumers - 1) / consumers;
        const KernelSpec k = make_synthetic_kernel(
            sc.input_block_bytes_per_tile * static_cast<std::size_t>(consumers), 0, false, false,
            iterations);
        PipelineConfig cfg;
        cfg.num_producer_workers = sc.producers;
        cfg.num_consumer_workers = consumers;
        cfg.input_pipe_stages = sc.input_pipe_stages;
        LatencyProfile lat;
        lat.load_latency = sc.load_base + sc.load_per_tile * consumers;
        lat.load_issue_cost = sc.load_issue_cost;
        lat.async_load = true;
        lat.compute_latency = sc.compute_latency;
        lat.compute_multiplier = mult;
        lat.finish_latency = sc.finish_latency;
        pt.makespan_lcsf = simulate_timed(k, cfg, lat, iterations, machine).makespan;
    }
    pt.throughput_lcsf = sc.total_tiles / pt.makespan_lcsf;
    return pt;
}

// Points are independent; `parallel` > 1 shards them across threads. The
// curve is assembled in worker-count order either way.
inline OccupancyCurve occupancy_sweep(const OccupancyScenario& sc,
                                      const MachineParams& machine = preset_h100(),
                                      int parallel = 1) {
    OccupancyCurve curve;
    curve.points.resize(sc.worker_counts.size());
    if (parallel <= 1) {
        for (std::size_t i = 0; i < sc.worker_counts.size(); ++i)
            curve.points[i] = occupancy_point(sc, sc.worker_counts[i], machine);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex fail_mutex;
        for (int t = 0; t < parallel; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < sc.worker_counts.size();
                     i = next.fetch_add(1)) {
                    try {
                        curve.points[i] = occupancy_point(sc, sc.worker_counts[i], machine);
                    } catch (...) {
                        std::lock_guard lk(fail_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }
    double best = -1.0;
    for (const auto& pt : curve.points)
        if (pt.throughput_lcsf > best) {
            best = pt.throughput_lcsf;
            curve.argmax_workers = pt.workers;
        }
    return curve;
}

} // namespace kittensim
