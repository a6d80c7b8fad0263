#include <doctest.h>

#include "vqcgenlab/expcli.hpp"
#include "vqcgenlab/validate.hpp"

using namespace vqcgenlab;
using namespace vqcgenlab::expcli;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("csv escaping follows RFC 4180") {
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("with,comma") == "\"with,comma\"");
    CHECK(csv_escape("with\"quote") == "\"with\"\"quote\"");
    CHECK(csv_escape("line\nbreak") == "\"line\nbreak\"");
}

TEST_CASE("csv rows are sorted and byte-stable") {
    CsvTable t;
    t.header = {"a", "b"};
    t.rows = {{"2", "x"}, {"1", "y"}};
    const auto dir = fs::temp_directory_path() / "vqcgenlab_csv_test";
    fs::create_directories(dir);
    t.write(dir / "t.csv");
    CHECK(read_file(dir / "t.csv") == "a,b\n1,y\n2,x\n");
}

TEST_CASE("point-in-polygon and boundary distance") {
    const std::vector<std::pair<double, double>> square{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
    CHECK(point_in_polygon(1, 1, square));
    CHECK(!point_in_polygon(3, 1, square));
    CHECK(polygon_boundary_distance(1, 1, square) == doctest::Approx(1.0));
    CHECK(polygon_boundary_distance(0.25, 1.0, square) == doctest::Approx(0.25));
}

TEST_CASE("region lookup at the extreme phase points") {
    const auto regions = PhaseConfig::default_regions();
    REQUIRE(region_of(regions, 4.0, 0.0) != nullptr);
    CHECK(region_of(regions, 4.0, 0.0)->label == "II");
    REQUIRE(region_of(regions, -4.0, 0.0) != nullptr);
    CHECK(region_of(regions, -4.0, 0.0)->label == "III");
    REQUIRE(region_of(regions, 0.0, 4.0) != nullptr);
    CHECK(region_of(regions, 0.0, 4.0)->label == "I");
    REQUIRE(region_of(regions, 0.0, 0.0) != nullptr);
    CHECK(region_of(regions, 0.0, 0.0)->label == "IV");
    CHECK(region_of(regions, 10.0, 10.0) == nullptr);  // outside every region
}

TEST_CASE("draw_inputs distributions") {
    SeededRng rng(401);
    // Basis states drawn without replacement.
    const auto basis = draw_inputs(DataDistribution::Basis, 3, 8, rng);
    std::set<int> seen;
    for (const auto& s : basis) {
        int idx = -1;
        for (int i = 0; i < 8; ++i)
            if (std::abs(s.amplitudes(i)) > 0.5) idx = i;
        CHECK(idx >= 0);
        seen.insert(idx);
    }
    CHECK(seen.size() == 8);
    CHECK_THROWS_AS(draw_inputs(DataDistribution::Basis, 2, 5, rng), ValidationError);

    const auto haar = draw_inputs(DataDistribution::Haar, 3, 2, rng);
    CHECK(std::abs(haar[0].amplitudes.norm() - 1.0) < 1e-12);

    const auto mps = draw_inputs(DataDistribution::MpsChi2, 4, 2, rng);
    CHECK(std::abs(mps[0].amplitudes.norm() - 1.0) < 1e-10);
}

TEST_CASE("frobenius_phase_error") {
    SeededRng rng(402);
    const CMat u = numkit::haar_unitary(8, rng);
    CHECK(frobenius_phase_error(u, u) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(frobenius_phase_error(u, CMat(std::exp(I_UNIT * 0.3) * u)) ==
          doctest::Approx(0.0).epsilon(1e-9));
    CHECK(frobenius_phase_error(u, numkit::haar_unitary(8, rng)) > 1.0);
}

TEST_CASE("bounds report JSON: quadrupling N halves every sqrt term") {
    BoundsReportConfig cfg;
    cfg.query.T = 6;
    cfg.query.N = 100;
    cfg.query.m_t = std::vector<double>(6, 4.0);
    const auto out1 = cmd_bounds_report(cfg);
    cfg.query.N = 400;
    const auto out4 = cmd_bounds_report(cfg);
    const auto& t1 = out1.summary["bounds"][0]["terms"];
    const auto& t4 = out4.summary["bounds"][0]["terms"];
    for (const char* key : {"complexity", "use_count", "confidence"}) {
        const double a = t1[key].get<double>();
        const double b = t4[key].get<double>();
        CHECK(b == doctest::Approx(0.5 * a).epsilon(1e-12));
    }
}

TEST_CASE("bounds report row selection") {
    BoundsReportConfig cfg;
    cfg.query.T = 3;
    cfg.query.N = 50;
    // No G_T, no Delta: fixed + mother only.
    auto out = cmd_bounds_report(cfg);
    std::vector<std::string> names;
    for (const auto& row : out.summary["bounds"]) names.push_back(row["bound"].get<std::string>());
    CHECK(names == std::vector<std::string>{"fixed", "mother"});

    cfg.g_t_given = true;
    cfg.query.g_t = 16.0;
    out = cmd_bounds_report(cfg);
    names.clear();
    for (const auto& row : out.summary["bounds"]) names.push_back(row["bound"].get<std::string>());
    CHECK(names == std::vector<std::string>{"variable", "mother"});

    cfg.qcnn_n = 16;
    out = cmd_bounds_report(cfg);
    bool has_qcnn = false;
    for (const auto& row : out.summary["bounds"])
        if (row["bound"] == "qcnn_n16") {
            has_qcnn = true;
            CHECK(row["value"].get<double>() > 0.0);
            CHECK(std::isfinite(row["value"].get<double>()));
        }
    CHECK(has_qcnn);
}

TEST_CASE("bounds query JSON parsing") {
    const auto j = nlohmann::json::parse(R"({
        "T": 4, "N": 200, "delta": 0.1, "C_loss": 2.0, "M": 3,
        "Delta_t": [0.5, 0.4, 0.1, 0.0], "c": 16, "G_T": 100,
        "sigma_est": 512, "kappa": 3, "mode": "proof_exact", "qcnn_n": 8})");
    const auto cfg = cfgjson::parse_bounds_query(j);
    CHECK(cfg.query.T == 4);
    CHECK(cfg.query.m_t == std::vector<double>(4, 3.0));
    CHECK(cfg.query.delta_t.has_value());
    CHECK(cfg.query.c_t == std::vector<double>(4, 16.0));
    CHECK(cfg.g_t_given);
    CHECK(cfg.query.sigma_est.has_value());
    CHECK(cfg.query.kappa == 3);
    CHECK(cfg.query.mode == bounds::BoundMode::ProofExact);
    CHECK(cfg.qcnn_n == 8);
    CHECK_THROWS_AS(cfgjson::parse_bounds_query(nlohmann::json::parse(R"({"mode": "x"})")),
                    ValidationError);
}

TEST_CASE("near-solution command is deterministic apart from wall_ms") {
    NearSolutionConfig cfg;
    cfg.seeds = {7};
    cfg.n_values = {3};
    cfg.n_sizes = {2};
    cfg.sweeps = 150;
    cfg.test_states = 5;
    cfg.threads = 1;
    const auto a = cmd_near_solution(cfg);
    const auto b = cmd_near_solution(cfg);
    REQUIRE(a.runs.rows.size() == b.runs.rows.size());
    for (std::size_t i = 0; i < a.runs.rows.size(); ++i)
        for (std::size_t j = 0; j + 1 < a.runs.rows[i].size(); ++j)  // skip wall_ms
            CHECK(a.runs.rows[i][j] == b.runs.rows[i][j]);

    // RunRecord invariant: gap = test - train at full precision.
    for (const auto& row : a.runs.rows) {
        const double train = std::stod(row[4]), test = std::stod(row[5]), gap = std::stod(row[6]);
        CHECK(gap == doctest::Approx(test - train).epsilon(1e-12));
    }
}

TEST_CASE("phase command labeling error path") {
    PhaseConfig cfg;
    cfg.regions = {{"I", "00", {{-0.1, -0.1}, {0.1, -0.1}, {0.1, 0.1}, {-0.1, 0.1}}}};
    cfg.margin = 5.0;  // margin larger than the region: sampling must fail
    cfg.n = 4;
    cfg.seeds = {1};
    cfg.n_sizes = {2};
    CHECK_THROWS_AS(cmd_phase(cfg), ValidationError);
}

TEST_CASE("validate registry lists at least 12 suites and passes") {
    const auto suites = validate::suite_registry();
    CHECK(suites.size() >= 12);
}

TEST_CASE("validate mutation harness catches an injected sign error") {
    validate::SuiteContext ctx;
    // Break the diamond formula: flip the inequality scale by halving.
    ctx.diamond_fn = [](const channels::UnitaryGate& u, const channels::UnitaryGate& v) {
        return 4.0 * channels::spectral_distance(u, v);  // violates lemma 3 badly
    };
    for (const auto& [name, fn] : validate::suite_registry()) {
        if (name != "diamond_lemma3") continue;
        const auto res = fn(ctx);
        CHECK(!res.pass);
        CHECK(!res.counterexample.empty());
    }
}
