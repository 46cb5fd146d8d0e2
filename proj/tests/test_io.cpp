#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "nlselect/csv.hpp"
#include "nlselect/rng.hpp"
#include "nlselect/run.hpp"

using namespace nlselect;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "nlselect_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

TEST_CASE("csv ingestion standardizes and names columns") {
    const fs::path dir = scratch_dir("ingest");
    const fs::path file = dir / "data.csv";
    write_file(file,
               "a,y,b\n"
               "1,1,2\n"
               "2,0,1\n"
               "\n"
               "3,2,4\n"
               "4,5,3\n"
               "5,3,10\n");

    const auto ingest = io::ingest_csv(file.string(), "y");
    CHECK(ingest.response == "y");
    REQUIRE(ingest.predictors.size() == 2);
    CHECK(ingest.predictors[0] == "a");
    CHECK(ingest.predictors[1] == "b");
    CHECK(ingest.dataset.n() == 5);
    CHECK(ingest.dataset.p() == 2);
    CHECK(ingest.dataset.standardized);

    CHECK(ingest.x_mean[0] == doctest::Approx(3.0));
    CHECK(ingest.x_scale[0] == doctest::Approx(std::sqrt(10.0 / 4.0)));
    CHECK(ingest.x_mean[1] == doctest::Approx(4.0));
    CHECK(ingest.y_mean == doctest::Approx(2.2));

    // standardized columns reproduce (raw - mean) / scale
    CHECK(ingest.dataset.X(0, 0) ==
          doctest::Approx((1.0 - 3.0) / std::sqrt(10.0 / 4.0)));
    CHECK(ingest.dataset.y[3] == doctest::Approx(5.0 - 2.2));
    CHECK(std::abs(ingest.dataset.X.col(1).mean()) <= 1e-12);

    // CRLF line endings parse identically
    const fs::path crlf = dir / "crlf.csv";
    write_file(crlf, "a,y\r\n1,1\r\n2,0\r\n3,2\r\n");
    const auto win = io::ingest_csv(crlf.string(), "y");
    CHECK(win.dataset.n() == 3);
    CHECK(win.predictors[0] == "a");
}

TEST_CASE("csv ingestion rejects malformed input") {
    const fs::path dir = scratch_dir("ingest_bad");
    const auto path = [&](const char* name) { return (dir / name).string(); };

    write_file(dir / "missing.csv", "a,b\n1,2\n3,4\n");
    CHECK_THROWS_AS(io::ingest_csv(path("missing.csv"), "y"), MissingColumn);

    write_file(dir / "cell.csv", "a,y\n1,2\nx,4\n");
    CHECK_THROWS_AS(io::ingest_csv(path("cell.csv"), "y"), MalformedCsv);

    write_file(dir / "ragged.csv", "a,y\n1,2\n3,4,5\n");
    CHECK_THROWS_AS(io::ingest_csv(path("ragged.csv"), "y"), MalformedCsv);

    write_file(dir / "empty.csv", "");
    CHECK_THROWS_AS(io::ingest_csv(path("empty.csv"), "y"), MalformedCsv);

    write_file(dir / "narrow.csv", "y\n1\n2\n");
    CHECK_THROWS_AS(io::ingest_csv(path("narrow.csv"), "y"), MalformedCsv);

    write_file(dir / "short.csv", "a,y\n1,2\n");
    CHECK_THROWS_AS(io::ingest_csv(path("short.csv"), "y"), MalformedCsv);

    CHECK_THROWS_AS(io::ingest_csv(path("no_such_file.csv"), "y"),
                    MalformedCsv);

    write_file(dir / "constant.csv", "a,b,y\n1,7,2\n2,7,4\n3,7,6\n");
    try {
        io::ingest_csv(path("constant.csv"), "y");
        FAIL("expected ZeroVarianceColumn");
    } catch (const ZeroVarianceColumn& err) {
        CHECK(std::string(err.what()).find("'b'") != std::string::npos);
    }
}

TEST_CASE("doubles format to the shortest round-trip form") {
    CHECK(io::format_double(2.0) == "2");
    CHECK(io::format_double(2.5) == "2.5");
    CHECK(io::format_double(0.1) == "0.1");
    CHECK(io::format_double(-0.0125) == "-0.0125");
    CHECK(io::format_double(1e300) == "1e+300");
    CHECK(io::format_double(std::nan("")) == "nan");
    CHECK(io::format_double(INFINITY) == "inf");
    CHECK(io::format_double(-INFINITY) == "-inf");

    const double tricky[] = {1.0 / 3.0,       0.1 + 0.2,      5e-324,
                             1.7976931348623157e308,          -0.0,
                             123456.789,      2.2250738585072014e-308,
                             9007199254740993.0};
    for (double v : tricky) {
        const std::string s = io::format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
}

TEST_CASE("tables carry the documented headers") {
    simulation::RatioRow ratio;
    ratio.p = 100;
    ratio.scenario = 2;
    ratio.design = simulation::Design::ar1;
    ratio.mean_log_ratio = -3.5;
    ratio.std_error = 0.25;
    CHECK(io::ratio_table_csv({ratio}) ==
          "p,scenario,design,mean_log_ratio,stderr\n"
          "100,2,ar1,-3.5,0.25\n");

    simulation::MetricRow metric;
    metric.p = 200;
    metric.design = simulation::Design::isotropic;
    metric.pattern = simulation::Pattern::large;
    metric.method = simulation::Method::hyper_pmom;
    metric.metrics = {0.95, 1.0, 0.0125};
    CHECK(io::metrics_table_csv({metric}) ==
          "p,design,pattern,method,ppv,tpr,fpr\n"
          "200,iso,large,hyper-pmom,0.95,1,0.0125\n");

    CHECK(io::roc_table_csv({{1.5, 0.0, 0.0}, {0.0, 1.0, 1.0}}) ==
          "threshold,fpr,tpr\n"
          "1.5,0,0\n"
          "0,1,1\n");
}

TEST_CASE("text files write verbatim") {
    const fs::path dir = scratch_dir("textfile");
    const fs::path file = dir / "out.txt";
    const std::string content = "alpha,beta\n1,2\n";
    io::write_text_file(file.string(), content);
    CHECK(read_file(file) == content);

    CHECK_THROWS_AS(
        io::write_text_file((dir / "missing" / "out.txt").string(), content),
        Error);
}

TEST_CASE("environment seed overrides the configured seed") {
    unsetenv("NLSELECT_SEED");
    RunConfig config;
    config.seed = 9;
    CHECK(!apply_env_seed(config));
    CHECK(config.seed == 9);

    setenv("NLSELECT_SEED", "42", 1);
    CHECK(apply_env_seed(config));
    CHECK(config.seed == 42);

    setenv("NLSELECT_SEED", "", 1);
    config.seed = 9;
    CHECK(!apply_env_seed(config));
    CHECK(config.seed == 9);

    setenv("NLSELECT_SEED", "12abc", 1);
    CHECK_THROWS_AS(apply_env_seed(config), Error);
    unsetenv("NLSELECT_SEED");
}

TEST_CASE("run configuration is validated") {
    RunConfig config;
    config.out_dir = scratch_dir("badrun").string();
    config.threads = 0;
    CHECK_THROWS_AS(run(config), Error);
    config.threads = 1;
    config.hyper.r = 0;
    CHECK_THROWS_AS(run(config), Error);
}

TEST_CASE("verify run writes a passing report") {
    RunConfig config;
    config.command = RunConfig::Command::verify;
    const fs::path dir = scratch_dir("verify");
    config.out_dir = dir.string();

    CHECK(run(config) == 0);
    const auto report = nlohmann::json::parse(read_file(dir / "verify_report.json"));
    CHECK(report["ok"].get<bool>());
    REQUIRE(report["checks"].is_array());
    CHECK(report["checks"].size() >= 8);
    for (const auto& check : report["checks"]) {
        CHECK(check["ok"].get<bool>());
    }
    const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    CHECK(manifest["outputs"][0].get<std::string>() == "verify_report.json");
}

TEST_CASE("selection run produces ranked artifacts deterministically") {
    const fs::path dir = scratch_dir("select");
    Rng rng(88);
    std::string csv = "v0,v1,v2,v3,v4,v5,y\n";
    for (int i = 0; i < 40; ++i) {
        double x[6];
        for (auto& v : x) v = rng.normal();
        const double y = 3.0 * x[2] - 2.0 * x[4] + 0.5 * rng.normal();
        for (auto v : x) csv += io::format_double(v) + ",";
        csv += io::format_double(y) + "\n";
    }
    const fs::path data = dir / "data.csv";
    write_file(data, csv);

    RunConfig config;
    config.command = RunConfig::Command::select;
    config.data_path = data.string();
    config.out_dir = (dir / "a").string();
    CHECK(run(config) == 0);

    const auto selection =
        nlohmann::json::parse(read_file(dir / "a" / "selection.json"));
    CHECK(selection["response"].get<std::string>() == "y");
    CHECK(selection["n"].get<int>() == 40);
    CHECK(selection["n_test"].get<int>() == 8);
    CHECK(selection["n_train"].get<int>() == 32);
    CHECK(selection["p"].get<int>() == 6);
    REQUIRE(selection["selected"].size() == 2);
    CHECK(selection["selected"][0]["index"].get<int>() == 2);
    CHECK(selection["selected"][0]["name"].get<std::string>() == "v2");
    CHECK(selection["selected"][1]["index"].get<int>() == 4);
    CHECK(selection["mspe_holdout"].get<double>() < 1.0);
    CHECK(selection["models_scored"].get<int>() > 10);
    CHECK(selection["failed_evaluations"].get<int>() == 0);

    const std::string top = read_file(dir / "a" / "top_models.csv");
    CHECK(top.rfind("rank,model,log_marginal,log_posterior\n", 0) == 0);
    CHECK(top.find("1,2;4,") != std::string::npos);
    const std::string inclusion = read_file(dir / "a" / "inclusion.csv");
    CHECK(inclusion.rfind("variable,inclusion_prob\n", 0) == 0);
    CHECK(inclusion.find("v2,1\n") != std::string::npos);

    // identical configuration and data give byte-identical artifacts
    RunConfig again = config;
    again.out_dir = (dir / "b").string();
    CHECK(run(again) == 0);
    CHECK(read_file(dir / "b" / "selection.json") ==
          read_file(dir / "a" / "selection.json"));
    CHECK(read_file(dir / "b" / "top_models.csv") == top);
    CHECK(read_file(dir / "b" / "inclusion.csv") == inclusion);
}

TEST_CASE("simulate run writes metric and roc tables") {
    RunConfig config;
    config.command = RunConfig::Command::simulate;
    config.p_sweep = {12};
    config.n = 30;
    config.reps = 2;
    const fs::path dir = scratch_dir("simulate");
    config.out_dir = dir.string();

    CHECK(run(config) == 0);
    const std::string metrics = read_file(dir / "metrics.csv");
    CHECK(metrics.rfind("p,design,pattern,method,ppv,tpr,fpr\n", 0) == 0);
    CHECK(metrics.find("12,iso,large,hyper-pmom,") != std::string::npos);
    CHECK(metrics.find("12,iso,large,fixed-tau,") != std::string::npos);

    const std::string roc = read_file(dir / "roc_p12.csv");
    CHECK(roc.rfind("threshold,fpr,tpr\n", 0) == 0);
    CHECK(roc.find("1.5,0,0\n") != std::string::npos);
    CHECK(roc.substr(roc.size() - 6) == "0,1,1\n");
}

TEST_CASE("ratio run writes all four scenarios") {
    RunConfig config;
    config.command = RunConfig::Command::ratio;
    config.p_sweep = {100};
    config.reps = 1;
    const fs::path dir = scratch_dir("ratio");
    config.out_dir = dir.string();

    CHECK(run(config) == 0);
    const std::string ratio = read_file(dir / "ratio.csv");
    CHECK(ratio.rfind("p,scenario,design,mean_log_ratio,stderr\n", 0) == 0);
    for (int scenario = 1; scenario <= 4; ++scenario) {
        const std::string prefix =
            "100," + std::to_string(scenario) + ",iso,";
        CHECK(ratio.find(prefix) != std::string::npos);
    }
}

TEST_CASE("version string is stable") {
    CHECK(version_string() == "0.1.0");
}
