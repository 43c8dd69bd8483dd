#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include <cbdemand/csv.hpp>
#include <cbdemand/model_io.hpp>
#include <cbdemand/pipeline.hpp>

#include "fixture.hpp"

using namespace cbdemand;
namespace fs = std::filesystem;

#ifndef CBDEMAND_BIN
#error "CBDEMAND_BIN must point at the CLI binary"
#endif

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CBDEMAND_BIN) + " " + args + " >cli_stdout.txt 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cli_output() {
    std::ifstream in("cli_stdout.txt");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fixture::Generated& cli_fixture() {
    static const auto g =
        fixture::write_fixture("fixture_cli", 4, 2, Date::from_ymd(2013, 1, 1),
                               Date::from_ymd(2013, 12, 31), 4242);
    return g;
}

std::string write_config() {
    const auto& g = cli_fixture();
    RunConfig cfg;
    cfg.calendar_path = g.calendar;
    cfg.sales_path = g.sales;
    cfg.prices_path = g.prices;
    cfg.from = g.from;
    cfg.to = g.to;
    cfg.split = Date::from_ymd(2013, 11, 1);
    cfg.epoch = g.from;
    cfg.hp.width.max_cycles = 3;
    cfg.out_dir = "cli_out";
    std::ofstream out("cli_config.json");
    out << run_config_to_json(cfg).dump(2) << '\n';
    return "cli_config.json";
}

}  // namespace

TEST_CASE("experiment subcommand produces the artifact set") {
    fs::remove_all("cli_out");
    const std::string cfg = write_config();
    CHECK(run_cli("experiment --config " + cfg + " --mode a --seed 3") == 0);
    for (const char* name : {"model.json", "forecasts.csv", "calibration.csv", "report.json",
                             "manifest.json", "figures/pit_nbd.svg"})
        CHECK(fs::exists(fs::path("cli_out") / name));
    CHECK(cli_output().find("EMD accuracy") != std::string::npos);
}

TEST_CASE("ingest subcommand writes the long table") {
    const std::string cfg = write_config();
    CHECK(run_cli("ingest --config " + cfg + " --out cli_ingest") == 0);
    std::ifstream in("cli_ingest/table.csv");
    REQUIRE(in);
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("item_id,store_id,date,sales", 0) == 0);
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4 * 2 * 365);
}

TEST_CASE("train then predict with explanations") {
    const std::string cfg = write_config();
    CHECK(run_cli("train --config " + cfg + " --mode a --out cli_model") == 0);
    REQUIRE(fs::exists("cli_model/model.json"));

    CHECK(run_cli("predict --config " + cfg + " --model cli_model/model.json"
                  " --from 2013-11-05 --to 2013-11-06 --quantiles 0.5,0.9 --explain"
                  " --out cli_pred") == 0);
    REQUIRE(fs::exists("cli_pred/forecasts.csv"));
    REQUIRE(fs::exists("cli_pred/explanations.jsonl"));

    // 8 series x 2 days
    std::ifstream in("cli_pred/forecasts.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line ==
          "item_id,store_id,date,mu_ml,correction_factor,mu_final,inv_r,q0_5,q0_9,sales");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 16);

    // The explanation payload reproduces mu_ml exactly: fold c through the
    // mean factors in model feature order.
    const ModelArtifact artifact = load_artifact("cli_model/model.json");
    std::ifstream ex("cli_pred/explanations.jsonl");
    std::size_t checked = 0;
    while (std::getline(ex, line)) {
        const auto j = nlohmann::json::parse(line);
        std::map<std::string, double> factor_of;
        for (const auto& f : j.at("mean_factors"))
            factor_of[f.at("feature").get<std::string>()] = f.at("factor").get<double>();
        double acc = j.at("c").get<double>();
        for (const auto& name : artifact.mean_model.feature_names) acc *= factor_of.at(name);
        CHECK(acc == j.at("mu_ml").get<double>());

        // width factors multiply into r_hat via 1 + 1/prod
        double prod = 1.0;
        for (const auto& f : j.at("width_factors")) prod *= f.at("factor").get<double>();
        const double r_hat = j.at("r_hat").get<double>();
        if (r_hat > 0.0)  // -1 encodes the Poisson limit
            CHECK(1.0 + 1.0 / prod == Catch::Approx(r_hat).epsilon(1e-12));
        ++checked;
    }
    CHECK(checked == 16);
}

TEST_CASE("predict emits a decision column") {
    REQUIRE(fs::exists("cli_model/model.json"));  // from the train test
    const std::string cfg = write_config();
    CHECK(run_cli("predict --config " + cfg + " --model cli_model/model.json"
                  " --from 2013-11-05 --to 2013-11-05 --quantiles 0.75"
                  " --decision newsvendor:3,1 --out cli_pred_dec") == 0);
    std::ifstream in("cli_pred_dec/forecasts.csv");
    REQUIRE(in);
    std::string line;
    std::getline(in, line);
    CHECK(line ==
          "item_id,store_id,date,mu_ml,correction_factor,mu_final,inv_r,q0_75,decision,sales");
    int rows = 0;
    while (std::getline(in, line)) {
        const auto f = split_csv_line(line);
        // b=3, h=1 -> the 0.75 newsvendor quantile equals the q0_75 column
        CHECK(f[8] == f[7]);
        ++rows;
    }
    CHECK(rows == 8);

    CHECK(run_cli("predict --config " + cfg + " --model cli_model/model.json"
                  " --decision newsvendor:0,1 --out cli_pred_dec") == 2);
}

TEST_CASE("evaluate subcommand consumes forecasts") {
    REQUIRE(fs::exists("cli_out/forecasts.csv"));  // from the experiment test
    CHECK(run_cli("evaluate --forecasts cli_out/forecasts.csv --out cli_eval --seed 3") == 0);
    CHECK(fs::exists("cli_eval/report.json"));
    CHECK(fs::exists("cli_eval/calibration.csv"));

    std::ifstream in("cli_eval/report.json");
    nlohmann::json report;
    in >> report;
    CHECK(report.at("rows").get<long long>() > 0);
    CHECK(report.at("emd_accuracy").at("nbd").get<double>() > 0.5);
}

TEST_CASE("exit codes distinguish config, data and usage errors") {
    CHECK(run_cli("train") == 2);  // --config missing
    CHECK(run_cli("definitely-not-a-subcommand") == 2);

    {  // config parse error
        std::ofstream bad("cli_bad_config.json");
        bad << "{ not json";
    }
    CHECK(run_cli("experiment --config cli_bad_config.json") == 2);

    {  // config with a missing data file -> data error
        std::ifstream in(write_config());
        nlohmann::ordered_json j;
        in >> j;
        j["data"]["sales"] = "no_such_file.csv";
        std::ofstream out("cli_missing_data.json");
        out << j.dump(2);
    }
    CHECK(run_cli("experiment --config cli_missing_data.json --out cli_out_missing") == 3);

    CHECK(run_cli("--help") == 0);
}
