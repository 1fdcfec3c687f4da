// Sweeps the input-pipe depth of a load-heavy kernel and prints the
// makespan, showing how deeper ring buffers hide load latency until compute
// becomes the bottleneck.

#include <cstdio>

#include "kittensim/lcsf.hpp"

using namespace kittensim;

int main() {
    const int iterations = 64;
    LatencyProfile lat;
    lat.load_latency = 7e-7;
    lat.load_issue_cost = 1e-8;
    lat.compute_latency = 2e-7;

    const KernelSpec kernel = make_synthetic_kernel(32 * 1024, 0, false, false, iterations);
    std::printf("stages  makespan(us)  speedup\n");
    double first = 0.0;
    for (int stages = 1; stages <= 6; ++stages) {
        PipelineConfig cfg;
        cfg.input_pipe_stages = stages;
        const Timeline tl = simulate_timed(kernel, cfg, lat, iterations);
        if (stages == 1) first = tl.makespan;
        std::printf("%6d  %12.2f  %7.2fx\n", stages, tl.makespan * 1e6, first / tl.makespan);
    }
    return 0;
}
