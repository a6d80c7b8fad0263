#pragma once

// Config-driven experiment drivers: compile-scan, near-solution, phase
// classification, bound reports, and the validation suite, with CSV/JSON
// emission. All commands are deterministic given the config (seeds included);
// runs.csv is byte-identical across repeated runs apart from the wall_ms
// column (the validate command carries no timing in its CSV at all).

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "vqcgenlab/bounds.hpp"
#include "vqcgenlab/learning.hpp"
#include "vqcgenlab/stats.hpp"

namespace vqcgenlab::expcli {

using backends::DenseState;
using backends::MPSState;
using circuits::CircuitStructure;
using circuits::ParamAssignment;
using learning::LabeledPair;
using learning::LossKind;
using learning::LossSpec;
using learning::Model;
using learning::StateHandle;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// CSV emission (RFC 4180; floats at 17 significant digits; rows sorted)
// ---------------------------------------------------------------------------

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

inline std::string fmt17(double x) { return circuits::detail::fmt17(x); }

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void write(const fs::path& path, bool sort_rows = true) const {
        auto sorted = rows;
        if (sort_rows) std::sort(sorted.begin(), sorted.end());
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i)
            os << (i ? "," : "") << csv_escape(header[i]);
        os << "\n";
        for (const auto& row : sorted) {
            for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_escape(row[i]);
            os << "\n";
        }
    }
};

// ---------------------------------------------------------------------------
// Worker pool: independent cells run in parallel, each single-threaded and
// deterministic; results merge through a serialized sink.
// ---------------------------------------------------------------------------

inline int thread_count_from_env(int requested) {
    if (const char* env = std::getenv("VQCGENLAB_THREADS")) {
        const int k = std::atoi(env);
        if (k >= 1) return k;
    }
    return std::max(1, requested);
}

template <typename Cell, typename Fn>
inline void run_cells(const std::vector<Cell>& cells, int threads, Fn&& body) {
    if (threads <= 1) {
        for (const auto& c : cells) body(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                body(cells[i]);
            }
        });
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// RunRecord
// ---------------------------------------------------------------------------

struct RunRecord {
    std::uint64_t seed = 0;
    int n = 0;
    int data_size = 0;
    std::string distribution;
    double train_risk = 0.0;
    double test_risk = 0.0;
    double gap = 0.0;
    double bound_value = 0.0;
    bool success1 = false;
    bool success2 = false;
    std::uint64_t wall_ms = 0;

    std::vector<std::string> to_row() const {
        return {std::to_string(seed),       std::to_string(n),
                std::to_string(data_size),  distribution,
                fmt17(train_risk),          fmt17(test_risk),
                fmt17(gap),                 fmt17(bound_value),
                success1 ? "1" : "0",       success2 ? "1" : "0",
                std::to_string(wall_ms)};
    }
    static std::vector<std::string> header() {
        return {"seed", "n", "N", "distribution", "train_risk", "test_risk",
                "gap",  "bound_value", "success1", "success2", "wall_ms"};
    }
};

// ---------------------------------------------------------------------------
// Shared data generation
// ---------------------------------------------------------------------------

enum class DataDistribution { Basis, MpsChi2, Haar };

inline DataDistribution parse_distribution(const std::string& s) {
    if (s == "basis") return DataDistribution::Basis;
    if (s == "mps_chi2") return DataDistribution::MpsChi2;
    if (s == "haar") return DataDistribution::Haar;
    throw ValidationError("unknown data distribution: " + s);
}

inline std::string distribution_name(DataDistribution d) {
    switch (d) {
        case DataDistribution::Basis: return "basis";
        case DataDistribution::MpsChi2: return "mps_chi2";
        case DataDistribution::Haar: return "haar";
    }
    return "?";
}

/// Draw compilation inputs; basis states are drawn without replacement.
inline std::vector<DenseState> draw_inputs(DataDistribution dist, int n, int count, SeededRng& rng) {
    std::vector<DenseState> out;
    const std::size_t dim = std::size_t(1) << n;
    switch (dist) {
        case DataDistribution::Basis: {
            if (count > static_cast<int>(dim))
                throw ValidationError("draw_inputs: more basis states than exist");
            std::vector<std::size_t> idx(dim);
            for (std::size_t i = 0; i < dim; ++i) idx[i] = i;
            for (int k = 0; k < count; ++k) {
                const std::size_t j = k + rng.uniform_below(dim - k);
                std::swap(idx[k], idx[j]);
                out.push_back(DenseState::basis_state(n, idx[k]));
            }
            break;
        }
        case DataDistribution::MpsChi2:
            for (int k = 0; k < count; ++k)
                out.push_back(backends::mps_to_dense(backends::mps_random(n, 2, rng)));
            break;
        case DataDistribution::Haar:
            for (int k = 0; k < count; ++k) {
                const CMat u = numkit::haar_unitary(static_cast<int>(dim), rng);
                CVec v = u.col(0);
                out.push_back(DenseState(n, std::move(v)));
            }
            break;
    }
    return out;
}

inline std::vector<LabeledPair> pair_with_target(const CMat& target_u,
                                                 const std::vector<DenseState>& ins) {
    std::vector<LabeledPair> out;
    for (const auto& s : ins) {
        DenseState t(s.n, target_u * s.amplitudes);
        out.push_back({s, StateHandle(std::move(t))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// compile-scan
// ---------------------------------------------------------------------------

struct CompileScanConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> n_values{3, 4};
    std::vector<std::string> distributions{"basis", "haar"};
    std::map<std::string, std::vector<int>> n_sizes;  // distribution -> N grid
    double target_risk = 1e-8;
    double frobenius_tol = 1e-5;
    int test_states = 20;
    bool align_phases = true;
    double bound_delta = 0.05;
    learning::VansConfig vans;
    int threads = 2;
};

struct CommandOutput {
    CsvTable runs;
    nlohmann::ordered_json summary;
    std::map<std::string, std::string> circuit_files;  // name -> json payload
};

/// Phase-optimized Frobenius error 2*2^n - 2|tr(U^dagger V)|.
inline double frobenius_phase_error(const CMat& u, const CMat& v) {
    return 2.0 * double(u.rows()) - 2.0 * std::abs((u.adjoint() * v).trace());
}

inline CommandOutput cmd_compile_scan(const CompileScanConfig& cfg) {
    CommandOutput out;
    out.runs.header = RunRecord::header();

    std::mutex sink;
    std::vector<RunRecord> records;
    std::map<std::string, std::string> circuits_out;

    struct SeedCell {
        int n;
        DataDistribution dist;
        int data_size;
        std::uint64_t seed;
    };

    auto run_seed_cell = [&](const SeedCell& cell) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto qft = circuits::build_qft(cell.n);
        const CMat u_target = circuits::unitary_of(qft, circuits::identity_params(qft));

        SeededRng root(cell.seed);
        SeededRng train_rng = root.split(0x7ea100 + cell.n * 131 + cell.data_size);
        SeededRng test_rng = root.split(0x7ea200 + cell.n * 131 + cell.data_size);
        SeededRng opt_rng = root.split(0x7ea300 + cell.n * 131 + cell.data_size);

        const auto train_inputs = draw_inputs(cell.dist, cell.n, cell.data_size, train_rng);
        const auto train = pair_with_target(u_target, train_inputs);
        // Basis training has no held-out basis states at N = 2^n; Haar
        // test states probe full-unitary generalization for that case.
        const auto test_dist =
            cell.dist == DataDistribution::Basis ? DataDistribution::Haar : cell.dist;
        const auto test_inputs = draw_inputs(test_dist, cell.n, cfg.test_states, test_rng);
        const auto test = pair_with_target(u_target, test_inputs);

        learning::VansConfig vans = cfg.vans;
        vans.initial_structure.n_qubits = cell.n;
        vans.target_risk = cfg.target_risk;
        auto res = learning::vans_optimize(train, vans, opt_rng);

        if (cfg.align_phases && res.final_risk < cfg.target_risk && !res.structure.slots.empty()) {
            learning::SweepConfig align = cfg.vans.sweep;
            align.objective = learning::SweepObjective::CoherentSum;
            align.max_sweeps = 250;
            align.stall_tol = 1e-16;
            align.target_risk = -1.0;
            auto [aligned, trace] =
                learning::environment_sweep(res.structure, res.assignment, train, align);
            Model m{Model::Kind::Compiling, res.structure, aligned, 1 << 30};
            const double aligned_risk = learning::empirical_risk(train, m, vans.loss);
            if (aligned_risk <= cfg.target_risk) {
                res.assignment = std::move(aligned);
                res.final_risk = aligned_risk;
            }
        }

        Model model{Model::Kind::Compiling, res.structure, res.assignment, 1 << 30};
        const double test_risk = learning::empirical_risk(test, model, vans.loss);
        const CMat v = circuits::unitary_of(res.structure, res.assignment);
        const double frob = frobenius_phase_error(u_target, v);

        bounds::BoundQuery bq;
        bq.T = res.structure.T();
        bq.N = double(cell.data_size);
        bq.delta = cfg.bound_delta;
        bq.c_loss = vans.loss.c_loss;
        bq.delta_t = res.deltas;
        const auto bound = bounds::gen_bound_mother(bq);

        RunRecord rec;
        rec.seed = cell.seed;
        rec.n = cell.n;
        rec.data_size = cell.data_size;
        rec.distribution = distribution_name(cell.dist);
        rec.train_risk = res.final_risk;
        rec.test_risk = test_risk;
        rec.gap = test_risk - res.final_risk;
        rec.bound_value = bound.value;
        rec.success1 = frob < cfg.frobenius_tol;
        rec.success2 = res.final_risk < cfg.target_risk;
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();

        std::lock_guard<std::mutex> lock(sink);
        records.push_back(rec);
        if (rec.success1 && rec.success2) {
            const std::string name = "circuit_" + rec.distribution + "_n" + std::to_string(cell.n) +
                                     "_N" + std::to_string(cell.data_size) + "_seed" +
                                     std::to_string(cell.seed) + ".json";
            circuits_out[name] = circuits::circuit_to_json(res.structure, res.assignment);
        }
    };

    // Ascending-N scan per (n, distribution); once 7 of 8 seeds succeed the
    // larger data sizes are redundant for both N_min summaries.
    nlohmann::ordered_json nmin = nlohmann::ordered_json::object();
    const int threads = thread_count_from_env(cfg.threads);
    for (int n : cfg.n_values) {
        if (n > 6) throw ValidationError("compile-scan: n capped at 6 for dense verification");
        for (const auto& dist_name : cfg.distributions) {
            const auto dist = parse_distribution(dist_name);
            const auto it = cfg.n_sizes.find(dist_name);
            if (it == cfg.n_sizes.end())
                throw ValidationError("compile-scan: missing N grid for " + dist_name);
            int nmin_k1 = -1, nmin_k7 = -1;
            for (int nsize : it->second) {
                if (dist == DataDistribution::Basis && nsize > (1 << n)) continue;
                std::vector<SeedCell> cells;
                for (auto seed : cfg.seeds) cells.push_back({n, dist, nsize, seed});
                run_cells(cells, threads, run_seed_cell);
                int succ = 0;
                {
                    std::lock_guard<std::mutex> lock(sink);
                    for (const auto& r : records)
                        if (r.n == n && r.distribution == dist_name && r.data_size == nsize &&
                            r.success1 && r.success2)
                            ++succ;
                }
                if (succ >= 1 && nmin_k1 < 0) nmin_k1 = nsize;
                if (succ >= 7 && nmin_k7 < 0) nmin_k7 = nsize;
                if (nmin_k7 >= 0) break;
            }
            nmin[dist_name + "_n" + std::to_string(n) + "_k1"] = nmin_k1;
            nmin[dist_name + "_n" + std::to_string(n) + "_k7"] = nmin_k7;
        }
    }

    out.summary["command"] = "compile-scan";
    out.summary["cells"] = records.size();
    out.summary["N_min"] = nmin;
    for (const auto& r : records) out.runs.rows.push_back(r.to_row());
    out.circuit_files = std::move(circuits_out);
    return out;
}

// ---------------------------------------------------------------------------
// near-solution
// ---------------------------------------------------------------------------

struct NearSolutionConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> n_values{6};
    std::vector<int> n_sizes{1, 2};
    double epsilon = 0.1;
    int train_chi = 2;
    int test_chi = 10;
    int test_states = 20;
    int sweeps = 200;
    double target_risk = 1e-10;
    double bound_delta = 0.05;
    int threads = 2;
};

inline CommandOutput cmd_near_solution(const NearSolutionConfig& cfg) {
    CommandOutput out;
    out.runs.header = RunRecord::header();

    struct Cell {
        int n;
        int data_size;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (int n : cfg.n_values) {
        if (n > 12) throw ValidationError("near-solution: n capped at 12");
        for (int nsize : cfg.n_sizes)
            for (auto seed : cfg.seeds) cells.push_back({n, nsize, seed});
    }

    std::mutex sink;
    std::vector<RunRecord> records;
    std::map<std::string, std::string> circuits_out;

    run_cells(cells, thread_count_from_env(cfg.threads), [&](const Cell& cell) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto qft = circuits::build_qft(cell.n);
        const CMat u_target = circuits::unitary_of(qft, circuits::identity_params(qft));
        auto [structure, exact_params] = circuits::trainablize(qft, circuits::identity_params(qft));

        SeededRng root(cell.seed);
        SeededRng perturb_rng = root.split(0x0a'11'00 + cell.n * 17 + cell.data_size);
        SeededRng train_rng = root.split(0x0a'22'00 + cell.n * 17 + cell.data_size);
        SeededRng test_rng = root.split(0x0a'33'00 + cell.n * 17 + cell.data_size);

        const ParamAssignment start =
            circuits::perturb_near_solution(structure, exact_params, cfg.epsilon, perturb_rng);

        auto make_pairs = [&](int count, int chi, SeededRng& rng) {
            std::vector<LabeledPair> pairs;
            for (int k = 0; k < count; ++k) {
                const MPSState mps = backends::mps_random(cell.n, chi, rng);
                const DenseState in = backends::mps_to_dense(mps);
                DenseState target(cell.n, u_target * in.amplitudes);
                pairs.push_back({mps, StateHandle(std::move(target))});
            }
            return pairs;
        };
        const auto train = make_pairs(cell.data_size, cfg.train_chi, train_rng);
        const auto test = make_pairs(cfg.test_states, cfg.test_chi, test_rng);

        learning::SweepConfig sweep;
        sweep.max_sweeps = cfg.sweeps;
        sweep.target_risk = cfg.target_risk;
        auto [trained, trace] = learning::environment_sweep(structure, start, train, sweep);

        const LossSpec loss = LossSpec::make(LossKind::CompilingFidelity);
        Model model{Model::Kind::Compiling, structure, trained, 1 << 30};
        const double train_risk = learning::empirical_risk(train, model, loss);
        const double test_risk = learning::empirical_risk(test, model, loss);

        bounds::BoundQuery bq;
        bq.T = structure.T();
        bq.N = double(cell.data_size);
        bq.delta = cfg.bound_delta;
        bq.delta_t = learning::delta_distances(structure, start, trained);
        const auto bound = bounds::gen_bound_mother(bq);

        RunRecord rec;
        rec.seed = cell.seed;
        rec.n = cell.n;
        rec.data_size = cell.data_size;
        rec.distribution = "mps_chi" + std::to_string(cfg.train_chi);
        rec.train_risk = train_risk;
        rec.test_risk = test_risk;
        rec.gap = test_risk - train_risk;
        rec.bound_value = bound.value;
        rec.success2 = train_risk < 1e-8;
        rec.success1 = rec.success2 && test_risk < 1e-4;
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        std::lock_guard<std::mutex> lock(sink);
        records.push_back(rec);
        if (rec.success1) {
            const std::string name = "circuit_nearsol_n" + std::to_string(cell.n) + "_N" +
                                     std::to_string(cell.data_size) + "_seed" +
                                     std::to_string(cell.seed) + ".json";
            circuits_out[name] = circuits::circuit_to_json(structure, trained);
        }
    });

    out.summary["command"] = "near-solution";
    out.summary["epsilon"] = cfg.epsilon;
    out.summary["cells"] = cells.size();
    for (const auto& r : records) out.runs.rows.push_back(r.to_row());
    out.circuit_files = std::move(circuits_out);
    return out;
}

// ---------------------------------------------------------------------------
// phase classification
// ---------------------------------------------------------------------------

struct PhaseRegion {
    std::string label;                           // e.g. "I"
    std::string bits;                            // 2-bit class string
    std::vector<std::pair<double, double>> polygon;  // (J1, J2) vertices
};

inline bool point_in_polygon(double x, double y, const std::vector<std::pair<double, double>>& poly) {
    bool inside = false;
    const std::size_t m = poly.size();
    for (std::size_t i = 0, j = m - 1; i < m; j = i++) {
        const auto [xi, yi] = poly[i];
        const auto [xj, yj] = poly[j];
        if (((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi)) inside = !inside;
    }
    return inside;
}

inline double polygon_boundary_distance(double x, double y,
                                        const std::vector<std::pair<double, double>>& poly) {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t m = poly.size();
    for (std::size_t i = 0, j = m - 1; i < m; j = i++) {
        const double ax = poly[j].first, ay = poly[j].second;
        const double bx = poly[i].first, by = poly[i].second;
        const double dx = bx - ax, dy = by - ay;
        const double len2 = dx * dx + dy * dy;
        double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double px = ax + t * dx - x, py = ay + t * dy - y;
        best = std::min(best, std::sqrt(px * px + py * py));
    }
    return best;
}

struct PhaseConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int n = 8;
    std::vector<int> n_sizes{4, 8, 16};
    double margin = 0.3;       // training points stay this far inside regions
    double test_margin = 0.3;  // test grid margin (smaller probes near-boundary states)
    std::vector<PhaseRegion> regions;
    learning::SpsaConfig spsa;
    std::uint64_t decode_shots = 8192;
    int test_per_region = 24;
    double param_init_scale = 0.2;
    int threads = 2;

    // Conservative polygons inside the four phases of the generalized
    // cluster model; critical lines sit near J1 + J2 = 1, J2 = 1 + |J1|,
    // J2 = |J1| - 1 (side wedges), and J2 = -1. Edges keep a ~0.1 cushion;
    // near-edge states are genuinely hard at finite size.
    static std::vector<PhaseRegion> default_regions() {
        return {
            {"I", "00",
             {{-0.85, 1.95}, {-0.1, 1.2}, {0.1, 1.2}, {0.85, 1.95}, {0.85, 4.5}, {-0.85, 4.5}}},
            {"II", "01", {{1.4, 0.3}, {4.5, 3.4}, {4.5, -0.9}, {1.4, -0.3}}},
            {"III", "10", {{-1.4, 0.3}, {-4.5, 3.4}, {-4.5, -0.9}, {-1.4, -0.3}}},
            {"IV", "11", {{0.85, 0.0}, {0.0, 0.85}, {-0.85, 0.0}, {0.0, -0.85}}},
        };
    }
};

inline const PhaseRegion* region_of(const std::vector<PhaseRegion>& regions, double j1, double j2) {
    for (const auto& r : regions)
        if (point_in_polygon(j1, j2, r.polygon)) return &r;
    return nullptr;
}

namespace detail {

struct PhasePoint {
    double j1, j2;
    std::string bits;
};

inline std::vector<PhasePoint> sample_region_points(const PhaseConfig& cfg, int count,
                                                    SeededRng& rng) {
    std::vector<PhasePoint> pts;
    int guard = 0;
    while (static_cast<int>(pts.size()) < count) {
        // iid over regions: small training sets can miss phases entirely,
        // which is where the training-vs-testing accuracy gap comes from
        const auto& r = cfg.regions[rng.uniform_below(cfg.regions.size())];
        double lo1 = 1e300, hi1 = -1e300, lo2 = 1e300, hi2 = -1e300;
        for (const auto& [x, y] : r.polygon) {
            lo1 = std::min(lo1, x);
            hi1 = std::max(hi1, x);
            lo2 = std::min(lo2, y);
            hi2 = std::max(hi2, y);
        }
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const double x = lo1 + (hi1 - lo1) * rng.uniform();
            const double y = lo2 + (hi2 - lo2) * rng.uniform();
            if (point_in_polygon(x, y, r.polygon) &&
                polygon_boundary_distance(x, y, r.polygon) >= cfg.margin) {
                pts.push_back({x, y, r.bits});
                break;
            }
        }
        if (++guard > 100 * count)
            throw ValidationError("phase: could not sample points inside regions (margin too big?)");
    }
    return pts;
}

/// Deterministic test grid: per region, a uniform lattice filtered to the
/// margin-shrunk interior.
inline std::vector<PhasePoint> region_test_grid(const PhaseConfig& cfg) {
    std::vector<PhasePoint> pts;
    for (const auto& r : cfg.regions) {
        double lo1 = 1e300, hi1 = -1e300, lo2 = 1e300, hi2 = -1e300;
        for (const auto& [x, y] : r.polygon) {
            lo1 = std::min(lo1, x);
            hi1 = std::max(hi1, x);
            lo2 = std::min(lo2, y);
            hi2 = std::max(hi2, y);
        }
        const int side = std::max(2, static_cast<int>(std::ceil(std::sqrt(double(cfg.test_per_region)))));
        std::vector<PhasePoint> region_pts;
        for (int i = 0; i < side && static_cast<int>(region_pts.size()) < cfg.test_per_region; ++i)
            for (int j = 0; j < side && static_cast<int>(region_pts.size()) < cfg.test_per_region; ++j) {
                const double x = lo1 + (hi1 - lo1) * (i + 0.5) / side;
                const double y = lo2 + (hi2 - lo2) * (j + 0.5) / side;
                if (point_in_polygon(x, y, r.polygon) &&
                    polygon_boundary_distance(x, y, r.polygon) >= cfg.test_margin)
                    region_pts.push_back({x, y, r.bits});
            }
        pts.insert(pts.end(), region_pts.begin(), region_pts.end());
    }
    return pts;
}

}  // namespace detail

struct PhaseOutput {
    CommandOutput base;
    CsvTable snapshots;  // seed,n,N,iteration,train_acc,test_acc
};

inline PhaseOutput cmd_phase(const PhaseConfig& cfg_in) {
    PhaseConfig cfg = cfg_in;
    if (cfg.regions.empty()) cfg.regions = PhaseConfig::default_regions();
    if (cfg.n != 4 && cfg.n != 8 && cfg.n != 16)
        throw ValidationError("phase: n must be one of {4, 8, 16}");

    PhaseOutput out;
    out.base.runs.header = RunRecord::header();
    out.snapshots.header = {"seed", "n", "N", "iteration", "train_acc", "test_acc"};

    // Ground-state cache shared across cells (exact diagonalization results
    // do not depend on the seed).
    std::mutex cache_mutex;
    std::map<std::pair<long long, long long>, DenseState> cache;
    auto ground = [&](double j1, double j2) {
        const std::pair<long long, long long> key{llround(j1 * 1e9), llround(j2 * 1e9)};
        {
            std::lock_guard<std::mutex> lock(cache_mutex);
            const auto it = cache.find(key);
            if (it != cache.end()) return it->second;
        }
        auto [e, state] = backends::cluster_ground_state({cfg.n, j1, j2});
        std::lock_guard<std::mutex> lock(cache_mutex);
        cache.emplace(key, state);
        return state;
    };

    const auto test_grid = detail::region_test_grid(cfg);
    if (test_grid.empty()) throw ValidationError("phase: empty test grid");

    struct Cell {
        std::uint64_t seed;
        int data_size;
    };
    std::vector<Cell> cells;
    for (auto seed : cfg.seeds)
        for (int nsize : cfg.n_sizes) cells.push_back({seed, nsize});

    std::mutex sink;
    std::vector<RunRecord> records;
    std::vector<std::vector<std::string>> snapshot_rows;

    run_cells(cells, thread_count_from_env(cfg.threads), [&](const Cell& cell) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto qcnn = circuits::build_qcnn(cfg.n);
        const auto groups = qcnn.trainable_group_ids();

        SeededRng root(cell.seed);
        SeededRng train_rng = root.split(0x9a'51'00 + cell.data_size);
        SeededRng opt_rng = root.split(0x9a'52'00 + cell.data_size);
        SeededRng decode_rng = root.split(0x9a'53'00 + cell.data_size);

        const auto train_pts = detail::sample_region_points(cfg, cell.data_size, train_rng);
        std::vector<LabeledPair> train;
        for (const auto& p : train_pts) train.push_back({ground(p.j1, p.j2), p.bits});
        std::vector<LabeledPair> test;
        for (const auto& p : test_grid) test.push_back({ground(p.j1, p.j2), p.bits});

        // Flat parameter vector <-> assignment.
        std::vector<int> sizes;
        int total = 0;
        for (int g : groups) {
            sizes.push_back(qcnn.group_arity(g) == 2 ? 15 : 3);
            total += sizes.back();
        }
        auto to_assignment = [&](const RVec& theta) {
            ParamAssignment a;
            int off = 0;
            for (std::size_t k = 0; k < groups.size(); ++k) {
                a.params[groups[k]] = std::vector<double>(theta.data() + off, theta.data() + off + sizes[k]);
                off += sizes[k];
            }
            return a;
        };

        const LossSpec loss = LossSpec::make(LossKind::QcnnMinProb);
        auto risk_fn = [&](const RVec& theta, std::uint64_t) {
            Model m{Model::Kind::Qcnn, qcnn, to_assignment(theta), 1 << 30};
            return learning::empirical_risk(train, m, loss);
        };

        RVec theta0(total);
        for (int i = 0; i < total; ++i) theta0(i) = cfg.param_init_scale * opt_rng.gaussian();

        learning::SpsaConfig spsa = cfg.spsa;
        auto res = learning::spsa_minimize(risk_fn, theta0, spsa, opt_rng);

        auto accuracy = [&](const RVec& theta, const std::vector<LabeledPair>& set,
                            SeededRng& rng) {
            const auto a = to_assignment(theta);
            int correct = 0;
            for (const auto& pair : set) {
                const auto probs =
                    backends::qcnn_forward_exact(learning::to_dense(pair.input), qcnn, a);
                std::map<std::string, std::uint64_t> counts;
                for (std::uint64_t shot = 0; shot < cfg.decode_shots; ++shot) {
                    double u = rng.uniform();
                    int idx = 3;
                    for (int i = 0; i < 4; ++i) {
                        if (u < probs[i] || i == 3) {
                            idx = i;
                            break;
                        }
                        u -= probs[i];
                    }
                    ++counts[backends::outcome_string(idx)];
                }
                if (learning::min_prob_decode(counts) == pair.label_bits()) ++correct;
            }
            return double(correct) / double(set.size());
        };

        std::vector<std::vector<std::string>> local_snapshots;
        {
            SeededRng srng = decode_rng.split(0);
            const double tr0 = accuracy(theta0, train, srng);
            const double te0 = accuracy(theta0, test, srng);
            local_snapshots.push_back({std::to_string(cell.seed), std::to_string(cfg.n),
                                       std::to_string(cell.data_size), "0", fmt17(tr0), fmt17(te0)});
        }
        for (const auto& [iter, theta] : res.snapshots) {
            SeededRng srng = decode_rng.split(iter);
            const double tr = accuracy(theta, train, srng);
            const double te = accuracy(theta, test, srng);
            local_snapshots.push_back({std::to_string(cell.seed), std::to_string(cfg.n),
                                       std::to_string(cell.data_size), std::to_string(iter),
                                       fmt17(tr), fmt17(te)});
        }
        SeededRng final_rng = decode_rng.split(0xffff);
        const double train_acc = accuracy(res.theta, train, final_rng);
        const double test_acc = accuracy(res.theta, test, final_rng);

        Model final_model{Model::Kind::Qcnn, qcnn, to_assignment(res.theta), 1 << 30};
        const double train_risk = learning::empirical_risk(train, final_model, loss);
        const double test_risk = learning::empirical_risk(test, final_model, loss);

        bounds::BoundQuery bq;
        bq.T = qcnn.T();
        bq.N = double(cell.data_size);
        bq.delta = 0.05;
        bq.m_t.clear();
        for (int g : groups) bq.m_t.push_back(double(qcnn.use_count(g)));
        const auto bound = bounds::gen_bound_fixed(bq);

        RunRecord rec;
        rec.seed = cell.seed;
        rec.n = cfg.n;
        rec.data_size = cell.data_size;
        rec.distribution = "phase_grid";
        rec.train_risk = train_risk;
        rec.test_risk = test_risk;
        rec.gap = test_risk - train_risk;
        rec.bound_value = bound.value;
        rec.success1 = test_acc > 0.25;
        rec.success2 = train_acc >= test_acc - 0.25;
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        std::lock_guard<std::mutex> lock(sink);
        records.push_back(rec);
        local_snapshots.push_back({std::to_string(cell.seed), std::to_string(cfg.n),
                                   std::to_string(cell.data_size),
                                   std::to_string(cfg.spsa.iterations), fmt17(train_acc),
                                   fmt17(test_acc)});
        for (auto& row : local_snapshots) snapshot_rows.push_back(std::move(row));
    });

    // Pooled least-squares slope of test accuracy vs train accuracy per N.
    nlohmann::ordered_json slopes = nlohmann::ordered_json::object();
    for (int nsize : cfg.n_sizes) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int m = 0;
        for (const auto& row : snapshot_rows) {
            if (std::stoi(row[2]) != nsize) continue;
            const double x = std::stod(row[4]), y = std::stod(row[5]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++m;
        }
        const double denom = m * sxx - sx * sx;
        slopes["N" + std::to_string(nsize)] = denom > 1e-12 ? (m * sxy - sx * sy) / denom : 0.0;
    }

    out.base.summary["command"] = "phase";
    out.base.summary["n"] = cfg.n;
    out.base.summary["test_points"] = test_grid.size();
    out.base.summary["slopes"] = slopes;
    for (const auto& r : records) out.base.runs.rows.push_back(r.to_row());
    out.snapshots.rows = std::move(snapshot_rows);
    return out;
}

// ---------------------------------------------------------------------------
// bounds report
// ---------------------------------------------------------------------------

struct BoundsReportConfig {
    bounds::BoundQuery query;
    bool g_t_given = false;      // variable-structure row only when G_T present
    std::optional<int> qcnn_n;   // emit the QCNN headline instantiation
};

inline nlohmann::ordered_json bound_report_json(const std::string& name,
                                                const bounds::BoundReport& r) {
    nlohmann::ordered_json j;
    j["bound"] = name;
    j["value"] = r.value;
    j["optimal_K"] = r.optimal_K;
    j["terms"] = {{"complexity", r.terms.complexity}, {"use_count", r.terms.use_count},
                  {"residual", r.terms.residual},     {"structure", r.terms.structure},
                  {"confidence", r.terms.confidence}, {"shot", r.terms.shot}};
    return j;
}

struct BoundsReportOutput {
    nlohmann::ordered_json summary;
    std::string table;
};

inline BoundsReportOutput cmd_bounds_report(const BoundsReportConfig& cfg) {
    const auto& q = cfg.query;
    q.validate();
    std::vector<std::pair<std::string, bounds::BoundReport>> rows;
    if (!q.delta_t && q.g_t == 1.0) rows.emplace_back("fixed", bounds::gen_bound_fixed(q));
    if (cfg.g_t_given && !q.delta_t) rows.emplace_back("variable", bounds::gen_bound_variable(q));
    if (q.delta_t) rows.emplace_back("opt", bounds::gen_bound_opt(q));
    rows.emplace_back("mother", bounds::gen_bound_mother(q));
    if (cfg.qcnn_n) {
        const auto qcnn = circuits::build_qcnn(*cfg.qcnn_n);
        bounds::BoundQuery qq;
        qq.T = qcnn.T();
        qq.N = q.N;
        qq.delta = q.delta;
        qq.c_loss = q.c_loss;
        qq.mode = q.mode;
        for (int g : qcnn.trainable_group_ids()) qq.m_t.push_back(double(qcnn.use_count(g)));
        rows.emplace_back("qcnn_n" + std::to_string(*cfg.qcnn_n), bounds::gen_bound_fixed(qq));
    }

    BoundsReportOutput out;
    out.summary["command"] = "bounds";
    out.summary["query"] = {{"T", q.T},
                            {"N", q.N},
                            {"delta", q.delta},
                            {"C_loss", q.c_loss},
                            {"G_T", q.g_t},
                            {"kappa", q.kappa},
                            {"mode", q.mode == bounds::BoundMode::Asymptotic ? "asymptotic"
                                                                             : "proof_exact"}};
    nlohmann::ordered_json jrows = nlohmann::ordered_json::array();
    std::ostringstream table;
    table << std::left << std::setw(14) << "bound" << std::right << std::setw(14) << "value"
          << std::setw(6) << "K" << std::setw(14) << "complexity" << std::setw(12) << "use_count"
          << std::setw(12) << "residual" << std::setw(12) << "structure" << std::setw(12)
          << "confidence" << std::setw(12) << "shot" << "\n";
    for (const auto& [name, r] : rows) {
        jrows.push_back(bound_report_json(name, r));
        table << std::left << std::setw(14) << name << std::right << std::setw(14) << std::setprecision(6)
              << r.value << std::setw(6) << r.optimal_K << std::setw(14) << r.terms.complexity
              << std::setw(12) << r.terms.use_count << std::setw(12) << r.terms.residual
              << std::setw(12) << r.terms.structure << std::setw(12) << r.terms.confidence
              << std::setw(12) << r.terms.shot << "\n";
    }
    out.summary["bounds"] = jrows;
    out.table = table.str();
    return out;
}

// ---------------------------------------------------------------------------
// JSON config parsing
// ---------------------------------------------------------------------------

namespace cfgjson {

inline nlohmann::json load(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open config", path.string());
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.what(), path.string());
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline void apply_seed_override(std::vector<std::uint64_t>& seeds, const std::string& csv) {
    if (csv.empty()) return;
    seeds.clear();
    std::istringstream is(csv);
    std::string tok;
    while (std::getline(is, tok, ',')) seeds.push_back(std::stoull(tok));
    if (seeds.empty()) throw ValidationError("--seeds: empty list");
}

inline learning::VansConfig parse_vans(const nlohmann::json& j) {
    learning::VansConfig v;
    v.max_proposals = get_or(j, "max_proposals", v.max_proposals);
    v.t_anneal0 = get_or(j, "t0", v.t_anneal0);
    v.t_decay = get_or(j, "t_decay", v.t_decay);
    v.lambda0 = get_or(j, "lambda0", v.lambda0);
    v.lambda_decay = get_or(j, "lambda_decay", v.lambda_decay);
    v.p_insert = get_or(j, "p_insert", v.p_insert);
    v.removal_threshold = get_or(j, "removal_threshold", v.removal_threshold);
    v.max_gates = get_or(j, "max_gates", v.max_gates);
    v.sweep.max_sweeps = get_or(j, "sweeps", v.sweep.max_sweeps);
    return v;
}

inline CompileScanConfig parse_compile_scan(const nlohmann::json& j) {
    CompileScanConfig c;
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("n_values")) c.n_values = j.at("n_values").get<std::vector<int>>();
    if (j.contains("distributions"))
        c.distributions = j.at("distributions").get<std::vector<std::string>>();
    if (j.contains("N_values"))
        for (const auto& [key, val] : j.at("N_values").items())
            c.n_sizes[key] = val.get<std::vector<int>>();
    c.target_risk = get_or(j, "target_risk", c.target_risk);
    c.frobenius_tol = get_or(j, "frobenius_tol", c.frobenius_tol);
    c.test_states = get_or(j, "test_states", c.test_states);
    c.align_phases = get_or(j, "align_phases", c.align_phases);
    c.bound_delta = get_or(j, "bound_delta", c.bound_delta);
    c.threads = get_or(j, "threads", c.threads);
    if (j.contains("vans")) c.vans = parse_vans(j.at("vans"));
    for (const auto& d : c.distributions)
        if (!c.n_sizes.count(d)) throw ValidationError("compile-scan config: missing N_values for " + d);
    return c;
}

inline NearSolutionConfig parse_near_solution(const nlohmann::json& j) {
    NearSolutionConfig c;
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("n_values")) c.n_values = j.at("n_values").get<std::vector<int>>();
    if (j.contains("N_values")) c.n_sizes = j.at("N_values").get<std::vector<int>>();
    c.epsilon = get_or(j, "epsilon", c.epsilon);
    c.train_chi = get_or(j, "train_chi", c.train_chi);
    c.test_chi = get_or(j, "test_chi", c.test_chi);
    c.test_states = get_or(j, "test_states", c.test_states);
    c.sweeps = get_or(j, "sweeps", c.sweeps);
    c.target_risk = get_or(j, "target_risk", c.target_risk);
    c.threads = get_or(j, "threads", c.threads);
    return c;
}

inline PhaseConfig parse_phase(const nlohmann::json& j) {
    PhaseConfig c;
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.n = get_or(j, "n", c.n);
    if (j.contains("N_values")) c.n_sizes = j.at("N_values").get<std::vector<int>>();
    c.margin = get_or(j, "margin", c.margin);
    c.test_margin = get_or(j, "test_margin", c.margin);
    c.decode_shots = get_or(j, "decode_shots", c.decode_shots);
    c.test_per_region = get_or(j, "test_per_region", c.test_per_region);
    c.param_init_scale = get_or(j, "param_init_scale", c.param_init_scale);
    c.threads = get_or(j, "threads", c.threads);
    if (j.contains("regions")) {
        for (const auto& jr : j.at("regions")) {
            PhaseRegion r;
            r.label = jr.at("label").get<std::string>();
            r.bits = jr.at("bits").get<std::string>();
            if (r.bits.size() != 2) throw ValidationError("phase region: bits must be 2 characters");
            for (const auto& v : jr.at("polygon"))
                r.polygon.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
            if (r.polygon.size() < 3) throw ValidationError("phase region: polygon needs 3+ vertices");
            c.regions.push_back(std::move(r));
        }
    }
    if (j.contains("spsa")) {
        const auto& js = j.at("spsa");
        c.spsa.a = get_or(js, "a", c.spsa.a);
        c.spsa.c = get_or(js, "c", c.spsa.c);
        c.spsa.big_a = get_or(js, "A", c.spsa.big_a);
        c.spsa.iterations = get_or(js, "iterations", c.spsa.iterations);
        c.spsa.snapshot_stride = get_or(js, "snapshot_stride", c.spsa.snapshot_stride);
        if (js.contains("snapshot_iters"))
            c.spsa.snapshot_iters = js.at("snapshot_iters").get<std::vector<int>>();
    }
    return c;
}

inline BoundsReportConfig parse_bounds_query(const nlohmann::json& j) {
    BoundsReportConfig c;
    auto& q = c.query;
    q.T = get_or(j, "T", q.T);
    q.N = get_or(j, "N", q.N);
    q.delta = get_or(j, "delta", q.delta);
    q.c_loss = get_or(j, "C_loss", q.c_loss);
    q.kappa = get_or(j, "kappa", q.kappa);
    if (j.contains("M_t")) q.m_t = j.at("M_t").get<std::vector<double>>();
    else if (j.contains("M")) q.m_t = std::vector<double>(q.T, j.at("M").get<double>());
    if (j.contains("Delta_t")) q.delta_t = j.at("Delta_t").get<std::vector<double>>();
    if (j.contains("c_t")) q.c_t = j.at("c_t").get<std::vector<double>>();
    else if (j.contains("c")) q.c_t = std::vector<double>(q.T, j.at("c").get<double>());
    if (j.contains("G_T")) {
        q.g_t = j.at("G_T").get<double>();
        c.g_t_given = true;
    }
    if (j.contains("sigma_est")) q.sigma_est = j.at("sigma_est").get<double>();
    if (j.contains("mode")) {
        const std::string m = j.at("mode").get<std::string>();
        if (m == "asymptotic") q.mode = bounds::BoundMode::Asymptotic;
        else if (m == "proof_exact") q.mode = bounds::BoundMode::ProofExact;
        else throw ValidationError("bounds query: mode must be asymptotic or proof_exact");
    }
    if (j.contains("qcnn_n")) c.qcnn_n = j.at("qcnn_n").get<int>();
    return c;
}

}  // namespace cfgjson

// ---------------------------------------------------------------------------
// Output writing
// ---------------------------------------------------------------------------

inline void write_outputs(const fs::path& out_dir, const CommandOutput& out) {
    fs::create_directories(out_dir);
    out.runs.write(out_dir / "runs.csv");
    std::ofstream js(out_dir / "summary.json", std::ios::binary);
    js << out.summary.dump(2) << "\n";
    for (const auto& [name, payload] : out.circuit_files) {
        std::ofstream cs(out_dir / name, std::ios::binary);
        cs << payload << "\n";
    }
}

}  // namespace vqcgenlab::expcli
