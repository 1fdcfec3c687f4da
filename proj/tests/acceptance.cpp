// Acceptance suite: every criterion below runs end to end with its tolerance
// pinned in code and prints one pass/fail line. Exit code is the number of
// failed criteria.

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kittensim/kernels.hpp"
#include "kittensim/oracles.hpp"
#include "kittensim/report.hpp"

using namespace kittensim;

namespace {

const std::string kDataDir = KITTENSIM_DATA_DIR;

struct Check {
    std::string name;
    std::function<void()> fn;
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

void fill_uniform(GlobalTensor& t, std::mt19937& rng) {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (auto& v : t.data) v = u(rng);
}

std::vector<double> widen(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

double max_abs_err(const std::vector<float>& got, const std::vector<double>& ref) {
    double m = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(got[i]) - ref[i]));
    return m;
}

// ---- criterion bodies ------------------------------------------------------

void bank_conflict_table() {
    const AccessPattern pat = TensorCoreSegments{};
    const int naive = analyze_conflicts(SharedLayout(32, 64, 2, SwizzleMode::NaiveRowMajor), pat).max_way;
    const int sw32 = analyze_conflicts(SharedLayout(32, 64, 2, SwizzleMode::SW32), pat).max_way;
    const int sw64 = analyze_conflicts(SharedLayout(32, 64, 2, SwizzleMode::SW64), pat).max_way;
    const int sw128 = analyze_conflicts(SharedLayout(32, 64, 2, SwizzleMode::SW128), pat).max_way;
    require(naive == 8, "naive expected 8-way, got " + std::to_string(naive));
    require(sw32 == 4, "sw32 expected 4-way, got " + std::to_string(sw32));
    require(sw64 == 2, "sw64 expected 2-way, got " + std::to_string(sw64));
    require(sw128 == 1, "sw128 expected conflict-free, got " + std::to_string(sw128));
}

void layout_permutation_and_alignment() {
    for (int rows : {16, 32, 64, 128}) {
        for (int cols : {16, 32, 64, 128}) {
            for (int eb : {2, 4}) {
                const SharedLayout naive(rows, cols, eb, SwizzleMode::NaiveRowMajor);
                for (SwizzleMode m : {SwizzleMode::SW32, SwizzleMode::SW64, SwizzleMode::SW128}) {
                    const int width = cols * eb;
                    if (m == SwizzleMode::SW32 && width % 32) continue;
                    if (m == SwizzleMode::SW64 && width % 64) continue;
                    if (m == SwizzleMode::SW128 && width % 128) continue;
                    const SharedLayout lay(rows, cols, eb, m);
                    require(check_bijective(lay), "bijectivity failed");
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < cols; ++c)
                            if (element_offset(naive, r, c) % 16 == 0)
                                require(element_offset(lay, r, c) % 16 == 0,
                                        "16-byte alignment not preserved");
                }
                require(check_bijective(SharedLayout(rows, cols, eb, SwizzleMode::RowXor)),
                        "rowxor bijectivity failed");
            }
        }
    }
}

void swizzle_selection() {
    require(select_swizzle(32, 16, 2) == SwizzleMode::SW32, "32 B width should pick sw32");
    require(select_swizzle(32, 32, 2) == SwizzleMode::SW64, "64 B width should pick sw64");
    require(select_swizzle(32, 64, 2) == SwizzleMode::SW128, "128 B width should pick sw128");
    bool threw = false;
    try {
        select_swizzle(32, 24, 2);
    } catch (const ConfigError&) {
        threw = true;
    }
    require(threw, "48 B width must be rejected");
}

void kernel_oracle_equivalence() {
    for (std::uint32_t seed = 0; seed < 20; ++seed) {
        std::mt19937 rng(seed);
        {
            GemmConfig cfg;
            cfg.m = cfg.n = cfg.k = 128;
            cfg.m_block = 2;
            cfg.n_block = 2;
            auto g = std::make_shared<GemmGlobals>(cfg);
            fill_uniform(g->a, rng);
            fill_uniform(g->b, rng);
            execute_functional(gemm_kernel(cfg, g), gemm_pipeline_config(cfg));
            const auto ref = oracle_gemm(widen(g->a.data), widen(g->b.data), 128, 128, 128);
            const double err = max_abs_err(g->c.data, ref);
            require(err <= 1e-4, "gemm seed " + std::to_string(seed) + " err " + std::to_string(err));
        }
        for (int d : {64, 128}) {
            AttentionConfig cfg;
            cfg.seq = 384;
            cfg.head_dim = d;
            cfg.num_workers = 3;
            auto g = std::make_shared<AttentionGlobals>(cfg);
            fill_uniform(g->q, rng);
            fill_uniform(g->k, rng);
            fill_uniform(g->v, rng);
            execute_functional(attention_fwd_kernel(cfg, g), attention_pipeline_config(cfg));
            const auto ref =
                oracle_attention(widen(g->q.data), widen(g->k.data), widen(g->v.data), 384, 384, d);
            const double err = max_abs_err(g->o.data, ref);
            require(err <= 1e-5, "attention d=" + std::to_string(d) + " seed " +
                                     std::to_string(seed) + " err " + std::to_string(err));
        }
        {
            RotaryConfig cfg;
            cfg.seq = 64;
            cfg.head_dim = 128;
            auto g = std::make_shared<RotaryGlobals>(cfg);
            fill_uniform(g->x, rng);
            std::uniform_real_distribution<float> angle(-3.14159f, 3.14159f);
            std::vector<double> s_tab, c_tab;
            for (int p = 0; p < cfg.seq; ++p)
                for (int i = 0; i < cfg.head_dim / 2; ++i) {
                    const float a = angle(rng);
                    g->sin_tab.at(0, 0, p, i) = std::sin(a);
                    g->cos_tab.at(0, 0, p, i) = std::cos(a);
                    s_tab.push_back(std::sin(a));
                    c_tab.push_back(std::cos(a));
                }
            execute_functional(rotary_kernel(cfg, g), rotary_pipeline_config(cfg));
            const auto ref = oracle_rotary(widen(g->x.data), s_tab, c_tab, cfg.seq, cfg.head_dim);
            const double err = max_abs_err(g->o.data, ref);
            require(err <= 1e-5, "rotary seed " + std::to_string(seed) + " err " + std::to_string(err));
        }
    }
}

void online_softmax_chunking() {
    std::vector<std::vector<float>> outputs;
    for (int kv_rows : {384, 192, 128}) { // 1, 2 and 3 KV chunks
        AttentionConfig cfg;
        cfg.seq = 384;
        cfg.head_dim = 64;
        cfg.kv_rows = kv_rows;
        cfg.num_workers = 3;
        auto g = std::make_shared<AttentionGlobals>(cfg);
        std::mt19937 rng(2024);
        fill_uniform(g->q, rng);
        fill_uniform(g->k, rng);
        fill_uniform(g->v, rng);
        execute_functional(attention_fwd_kernel(cfg, g), attention_pipeline_config(cfg));
        outputs.push_back(g->o.data);
    }
    for (std::size_t i = 1; i < outputs.size(); ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < outputs[0].size(); ++j)
            m = std::max(m, std::abs(static_cast<double>(outputs[i][j]) - outputs[0][j]));
        require(m <= 1e-5, "chunk variant " + std::to_string(i) + " deviates by " + std::to_string(m));
    }
}

void lcsf_safety_determinism() {
    // 50 randomized interleavings per kernel: identical outputs, valid traces.
    const auto run_gemm = [](std::uint64_t seed, std::vector<float>& out) {
        GemmConfig cfg;
        cfg.m = cfg.n = cfg.k = 128;
        cfg.m_block = 2;
        cfg.n_block = 2;
        auto g = std::make_shared<GemmGlobals>(cfg);
        std::mt19937 rng(99);
        fill_uniform(g->a, rng);
        fill_uniform(g->b, rng);
        ExecOptions opts;
        opts.seed = seed;
        const ExecResult res = execute_functional(gemm_kernel(cfg, g), gemm_pipeline_config(cfg), opts);
        require(validate_timeline(res.timeline).empty(), "gemm trace violation");
        out = g->c.data;
    };
    const auto run_attention = [](std::uint64_t seed, std::vector<float>& out) {
        AttentionConfig cfg;
        cfg.seq = 384;
        cfg.head_dim = 64;
        cfg.num_workers = 3;
        auto g = std::make_shared<AttentionGlobals>(cfg);
        std::mt19937 rng(98);
        fill_uniform(g->q, rng);
        fill_uniform(g->k, rng);
        fill_uniform(g->v, rng);
        ExecOptions opts;
        opts.seed = seed;
        const ExecResult res =
            execute_functional(attention_fwd_kernel(cfg, g), attention_pipeline_config(cfg), opts);
        require(validate_timeline(res.timeline).empty(), "attention trace violation");
        out = g->o.data;
    };
    const auto run_rotary = [](std::uint64_t seed, std::vector<float>& out) {
        RotaryConfig cfg;
        cfg.seq = 64;
        cfg.head_dim = 64;
        auto g = std::make_shared<RotaryGlobals>(cfg);
        std::mt19937 rng(97);
        fill_uniform(g->x, rng);
        std::uniform_real_distribution<float> angle(-3.0f, 3.0f);
        for (auto& v : g->sin_tab.data) v = std::sin(angle(rng));
        for (auto& v : g->cos_tab.data) v = std::cos(angle(rng));
        ExecOptions opts;
        opts.seed = seed;
        const ExecResult res =
            execute_functional(rotary_kernel(cfg, g), rotary_pipeline_config(cfg), opts);
        require(validate_timeline(res.timeline).empty(), "rotary trace violation");
        out = g->o.data;
    };
    using Runner = std::function<void(std::uint64_t, std::vector<float>&)>;
    for (const auto& [name, runner] : {std::pair<std::string, Runner>{"gemm", run_gemm},
                                       {"attention", run_attention},
                                       {"rotary", run_rotary}}) {
        std::vector<float> reference;
        runner(0, reference);
        for (std::uint64_t seed = 1; seed < 50; ++seed) {
            std::vector<float> out;
            runner(seed, out);
            require(out == reference, name + ": output differs at seed " + std::to_string(seed));
        }
    }
}

void pipeline_depth_trend() {
    SimulateRequest req;
    req.profile_path = kDataDir + "/scenarios/gemm-pipeline.json";
    const ReportEnvelope env = cmd_simulate(req);
    const auto& points = env.results.at("points");
    require(points.size() == 4u, "expected stages 1..4");
    std::vector<double> thr;
    for (const auto& pt : points) thr.push_back(pt.at("throughput").get<double>());
    for (std::size_t i = 1; i < thr.size(); ++i)
        require(thr[i] > thr[i - 1], "throughput not strictly increasing at stage " +
                                         std::to_string(i + 1));
    require(thr[3] / thr[0] >= 2.0,
            "stage-4/stage-1 ratio " + std::to_string(thr[3] / thr[0]) + " < 2");
}

void occupancy_curve() {
    const OccupancyScenario sc =
        occupancy_scenario_from_json(load_json_file(kDataDir + "/scenarios/occupancy-contention.json"));
    const OccupancyCurve curve = occupancy_sweep(sc);
    const auto& pts = curve.points;
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].throughput_lcsf > pts[argmax].throughput_lcsf) argmax = i;
    require(argmax > 0 && argmax + 1 < pts.size(), "maximum must be interior");
    for (std::size_t i = 1; i <= argmax; ++i)
        require(pts[i].throughput_lcsf >= pts[i - 1].throughput_lcsf * 0.999,
                "curve not rising before the max");
    for (std::size_t i = argmax + 1; i < pts.size(); ++i)
        require(pts[i].throughput_lcsf <= pts[i - 1].throughput_lcsf * 1.001,
                "curve not falling after the max");
    for (const auto& p : pts)
        require(p.throughput_lcsf >= p.throughput_sync * 0.999999,
                "pipelined config below synchronous at " + std::to_string(p.workers) + " workers");
}

void grid_order_traffic() {
    const ReportEnvelope gemm = cmd_grid(kDataDir + "/scenarios/gemm-l2.json");
    const auto sg = gemm.results.at("supergrouped").at("hbm_bytes_fetched").get<std::uint64_t>();
    const auto rm = gemm.results.at("row_major").at("hbm_bytes_fetched").get<std::uint64_t>();
    require(2 * sg <= rm, "supergrouped traffic " + std::to_string(sg) +
                              " not half of row-major " + std::to_string(rm));

    const ReportEnvelope att = cmd_grid(kDataDir + "/scenarios/attention-l2.json");
    const auto& orders = att.results.at("orders");
    const auto good = orders[0].at("traffic").at("hbm_bytes_fetched").get<std::uint64_t>();
    const auto bad = orders[1].at("traffic").at("hbm_bytes_fetched").get<std::uint64_t>();
    require(good < bad, "(N,H,B) order must fetch strictly less than (B,H,N)");
}

void persistence() {
    const ReportEnvelope sweep = cmd_grid(kDataDir + "/scenarios/persistent-ksweep.json");
    for (const auto& pt : sweep.results.at("points"))
        require(pt.at("makespan_persistent").get<double>() <=
                    pt.at("makespan_relaunch").get<double>(),
                "persistent must never lose at k=" + pt.at("k").dump());

    const PersistentAssignment pa = persistent_assign(133, 132, 1.0, 0.1);
    require(std::abs(pa.makespan_relaunch - 2.2) < 1e-12, "two-wave relaunch must cost 2.2");
    require(std::abs(pa.makespan_persistent - 2.1) < 1e-12, "persistent must cost 2.1");
}

void supergroup_enumeration() {
    const std::vector<BlockCoord> a = supergroup_order(4, 2, 2);
    const std::vector<BlockCoord> ea = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {3, 0}, {2, 1}, {3, 1}};
    require(a == ea, "(4,2,2) trace mismatch");
    const std::vector<BlockCoord> b = supergroup_order(3, 2, 2);
    const std::vector<BlockCoord> eb = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {2, 1}};
    require(b == eb, "(3,2,2) remainder trace mismatch");
    for (int r = 1; r <= 16; ++r)
        for (int c = 1; c <= 16; ++c)
            for (int sm : {1, 2, 3, 4, 7, 12, 16}) {
                const auto order = supergroup_order(r, c, sm);
                std::set<std::pair<int, int>> seen;
                for (const auto& bc : order) seen.insert({bc.row, bc.col});
                require(seen.size() == static_cast<std::size_t>(r * c),
                        "not a permutation at " + std::to_string(r) + "x" + std::to_string(c));
            }
}

void cost_model_properties() {
    const MachineParams m = preset_h100();
    std::mt19937 rng(123);
    std::uniform_real_distribution<double> u(0.0, 1e12);
    for (int trial = 0; trial < 1000; ++trial) {
        WorkProfile w;
        w.bytes_hbm = u(rng);
        w.bytes_l2 = u(rng);
        w.bytes_l1 = u(rng);
        w.bytes_shared = u(rng);
        w.ops_tensor = u(rng);
        w.ops_alu = u(rng);
        w.ops_fma = u(rng);
        w.ops_xu = u(rng);
        w.num_setups = u(rng) / 1e10;
        w.num_syncs = u(rng) / 1e10;
        const CostBreakdown c = estimate_cost(w, m);

        require(c.overall == c.term(c.bound_by) + c.c_setup + c.c_sync,
                "overall must equal argmax term plus overheads");
        for (CostTerm t : {CostTerm::Tensor, CostTerm::Alu, CostTerm::Fma, CostTerm::Xu,
                           CostTerm::Hbm, CostTerm::L2, CostTerm::L1, CostTerm::Shared})
            require(c.overall >= c.term(t), "overall below an individual term");

        WorkProfile w2 = w;
        w2.bytes_shared *= 2.0;
        require(estimate_cost(w2, m).overall >= c.overall, "monotonicity violated (shared)");
        w2 = w;
        w2.ops_tensor += 1e12;
        require(estimate_cost(w2, m).overall >= c.overall, "monotonicity violated (tensor)");

        MachineParams m2 = m;
        m2.hbm_bw *= 2;
        m2.l2_bw *= 2;
        m2.l1_bw *= 2;
        m2.smem_bw *= 2;
        m2.pipes.tensor *= 2;
        m2.pipes.alu *= 2;
        m2.pipes.fma *= 2;
        m2.pipes.xu *= 2;
        const CostBreakdown c2 = estimate_cost(w, m2);
        const double halved = (c.overall - c.c_setup - c.c_sync) / 2.0;
        require(std::abs((c2.overall - c2.c_setup - c2.c_sync) - halved) <= 1e-9 * halved,
                "scale covariance violated");
        require(c2.c_setup == c.c_setup && c2.c_sync == c.c_sync,
                "overheads must be rate-independent");
    }
}

} // namespace

int main() {
    const std::vector<Check> checks = {
        {"1. bank-conflict table 8/4/2/1 (tensor-core pattern)", bank_conflict_table},
        {"2. layout permutation + 16B alignment, exhaustive shapes", layout_permutation_and_alignment},
        {"3. swizzle selection picks the largest valid mode", swizzle_selection},
        {"4. kernel-oracle equivalence, 20 seeds per kernel", kernel_oracle_equivalence},
        {"5. online-softmax KV-chunking invariance", online_softmax_chunking},
        {"6. LCSF safety + determinism over 50 interleavings", lcsf_safety_determinism},
        {"7. pipeline-depth throughput trend (>=2x at 4 stages)", pipeline_depth_trend},
        {"8. occupancy curve unimodal; pipelined >= synchronous", occupancy_curve},
        {"9. grid order HBM traffic (gemm >=2x gap; attention strict)", grid_order_traffic},
        {"10. persistent grid never loses; two-wave arithmetic exact", persistence},
        {"11. supergroup enumeration traces + permutation property", supergroup_enumeration},
        {"12. cost model property suite, 1000 random profiles", cost_model_properties},
    };
    int failed = 0;
    for (const auto& check : checks) {
        try {
            check.fn();
            std::printf("[PASS] %s\n", check.name.c_str());
        } catch (const std::exception& e) {
            std::printf("[FAIL] %s: %s\n", check.name.c_str(), e.what());
            ++failed;
        }
    }
    std::printf("%d/%zu acceptance criteria passed\n", static_cast<int>(checks.size()) - failed,
                checks.size());
    return failed;
}
