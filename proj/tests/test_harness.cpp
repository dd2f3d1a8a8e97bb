#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ope/harness.hpp"
#include "xml_check.hpp"

using namespace ope;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<GridPoint> grid(double ca, double cg) {
    std::vector<GridPoint> pts;
    for (int k = 2; k <= 10; ++k)
        for (double g : {0.3, 0.6, 0.9}) pts.push_back({k / 10.0, g, ca * k / 10.0 + cg * g});
    return pts;
}

ExperimentConfig small_config() {
    return ExperimentConfig::from_json(json{{"environment", {{"name", "random-dpomdp"}, {"params", {{"n_z", 2}, {"n_o", 2}, {"condition_cap", 1e3}}}}},
                                            {"estimators", {"theorem2", "theorem1", {{"name", "naive-is"}, {"context", "last-observation"}}}},
                                            {"alphas", {0.0, 1.0}},
                                            {"horizon", 2},
                                            {"seeds", {1, 2}}});
}

}  // namespace

TEST_CASE("affine fit recovers exact coefficients") {
    const auto f = fit_affine(grid(0.5, 0.25));
    CHECK(f.c_alpha == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f.c_gamma == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(f.max_residual <= 1e-12);

    const auto z = fit_affine(grid(0.0, 0.0));
    CHECK(std::abs(z.c_alpha) <= 1e-15);
    CHECK(std::abs(z.c_gamma) <= 1e-15);

    CHECK_THROWS_AS(fit_affine({{0.2, 0.3, 1.0}, {0.4, 0.3, 2.0}}), UsageError);
    CHECK_THROWS_AS(fit_affine({{0.2, 0.3, 1.0}, {0.4, 0.6, 2.0}, {0.6, 0.9, 3.0}}), UsageError);
}

TEST_CASE("config parsing and validation") {
    const auto c = small_config();
    CHECK(c.environment.name == "random-dpomdp");
    CHECK(c.estimators.size() == 3);
    CHECK(c.estimators[2].mode == ContextMode::LastObservation);
    CHECK(c.horizon == 2);
    const auto back = ExperimentConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());

    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"environment", "moon"}}), UsageError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"environment", "medical"}, {"alphas", {1.5}}}), UsageError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"environment", "medical"}, {"estimators", {"dr"}}}), UsageError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"alphas", {0.5}}}), UsageError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"environment", {{"name", "files"}, {"model", "/nonexistent.json"}}}}),
                    UsageError);
}

TEST_CASE("population-mode estimates equal the oracle") {
    const auto table = run_experiment(small_config(), 2);
    REQUIRE(table.rows.size() == 2 * 2 * 3);
    for (const auto& r : table.rows) {
        CHECK(r.error.empty());
        if (r.estimator == "naive-is") continue;
        CHECK(std::abs(r.v_hat - r.oracle_v_pie) <= 1e-8);
    }
    // Row order: alpha, then seed, then estimator.
    CHECK(table.rows[0].alpha == 0.0);
    CHECK(table.rows[3].seed == 2);
    CHECK(table.rows[6].alpha == 1.0);
    CHECK(table.rows[1].estimator == "theorem1");
}

TEST_CASE("failing estimators become error rows") {
    auto c = ExperimentConfig::from_json(json{{"environment", "figure3"}, {"estimators", {"theorem2", "oracle-is"}}, {"alphas", {0.5}}});
    const auto table = run_experiment(c);
    REQUIRE(table.rows.size() == 2);
    CHECK(std::isnan(table.rows[0].v_hat));
    CHECK_FALSE(table.rows[0].error.empty());
    CHECK(std::isfinite(table.rows[0].oracle_v_pie));
    CHECK(table.has_error(CellError::Other));
    CHECK_FALSE(table.has_error(CellError::Numerical));
}

TEST_CASE("empty estimator list gives oracle-only rows") {
    const auto c = ExperimentConfig::from_json(json{{"environment", "assumption1"}, {"alphas", {0.0, 0.5}}});
    const auto table = run_experiment(c);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].estimator == "oracle");
    CHECK(table.rows[0].v_hat == table.rows[0].oracle_v_pie);
}

TEST_CASE("CSV schema and quoting") {
    ResultTable t;
    ResultRow r;
    r.alpha = 0.25;
    r.estimator = "theorem2";
    r.error = "bad, \"quoted\"";
    t.rows.push_back(r);
    const auto csv = t.csv();
    std::istringstream in(csv);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "alpha,estimator,v_hat,oracle_v_pie,oracle_v_pib,norm_residual,cond_number,dropped,seed,n,error");
    CHECK(row == "0.25,theorem2,0,0,0,0,0,0,0,0,\"bad, \"\"quoted\"\"\"");
}

TEST_CASE("experiment outputs are byte-identical across thread counts") {
    auto c = small_config();
    c.n = 3000;
    const auto one = run_experiment(c, 1).csv();
    CHECK(one == run_experiment(c, 4).csv());
    CHECK(one == run_experiment(c, 8).csv());
}

TEST_CASE("SVG output is self-contained XML") {
    const auto table = run_experiment(small_config(), 1);
    const auto svg = experiment_svg(table);
    std::string err;
    CHECK_MESSAGE(xml_check::well_formed(svg, &err), err);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("href") == std::string::npos);

    const auto labelled = render_svg({{"a<b", {0.0, 1.0}, {1.0, 2.0}}}, "alpha & more", "value", "t");
    CHECK(xml_check::well_formed(labelled));
    CHECK(xml_check::well_formed(render_svg({}, "x", "y", "empty")));
}

TEST_CASE("experiment writes results and plot") {
    auto c = ExperimentConfig::from_json(json{{"environment", "assumption1"}, {"estimators", {"naive-is"}}, {"alphas", {0.5}}});
    c.output_dir = (fs::temp_directory_path() / "ope_harness_test").string();
    fs::remove_all(c.output_dir);
    write_experiment_outputs(c, run_experiment(c));
    CHECK(fs::exists(fs::path(c.output_dir) / "results.csv"));
    CHECK(fs::exists(fs::path(c.output_dir) / "plot.svg"));
    fs::remove_all(c.output_dir);
}

TEST_CASE("matrix dumps") {
    const auto p = build_problem(EnvironmentSpec{"random-dpomdp", json::object(), "", "", ""}, 0.0, 0.9, 1, 3);
    const PopulationSource src(p.model, p.behavior);
    const auto dir = (fs::temp_directory_path() / "ope_dump_test").string();
    fs::remove_all(dir);
    dump_estimator_matrices(src, 1, dir);
    std::ifstream in(fs::path(dir) / "matrices.json");
    const auto j = json::parse(in);
    CHECK(j.size() == 1 + 2 * 2 * 2);
    CHECK(fs::exists(fs::path(dir) / "index_sets.json"));
    fs::remove_all(dir);
}
