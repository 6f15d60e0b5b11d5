#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "demandforge/csv.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("df_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

int run_cli(const std::string& args, const std::string& stdout_file = "",
            const std::string& stderr_file = "") {
  std::string cmd = std::string(DF_CLI_PATH) + " " + args;
  if (!stdout_file.empty()) cmd += " > " + stdout_file;
  if (!stderr_file.empty()) cmd += " 2> " + stderr_file;
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string small_synth_json() {
  return R"({"synth": {"seed": 12, "products": 10, "firms": 3, "groups": 2,
              "regions": 3, "periods": 24}})";
}

void write(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("unknown subcommand exits 2 with a usage record") {
  TempDir tmp;
  int code = run_cli("frobnicate", tmp.file("out.txt"), tmp.file("err.txt"));
  CHECK(code == 2);
  std::string err = df::read_text_file(tmp.file("err.txt"));
  CHECK(err.find("UsageError") != std::string::npos);
}

TEST_CASE("missing required option exits 2") {
  TempDir tmp;
  int code = run_cli("estimate", tmp.file("out.txt"), tmp.file("err.txt"));
  CHECK(code == 2);
}

TEST_CASE("help exits 0") {
  TempDir tmp;
  CHECK(run_cli("--help", tmp.file("out.txt")) == 0);
  std::string text = df::read_text_file(tmp.file("out.txt"));
  CHECK(text.find("simulate-data") != std::string::npos);
}

TEST_CASE("simulate -> estimate -> counterfactual round trip") {
  TempDir tmp;
  write(tmp.file("cfg.json"), small_synth_json());

  int code = run_cli("simulate-data --config " + tmp.file("cfg.json") +
                         " --out " + tmp.file("panel.csv") + " --out-dir " +
                         tmp.file("sim"),
                     tmp.file("sim_out.txt"));
  REQUIRE(code == 0);
  CHECK(fs::exists(tmp.file("panel.csv")));
  CHECK(fs::exists(tmp.file("panel.markets.csv")));
  std::string manifest = df::read_text_file(tmp.file("sim") + "/manifest.json");
  CHECK(manifest.find("\"seed\": 12") != std::string::npos);

  code = run_cli("estimate --panel " + tmp.file("panel.csv") + " --markets " +
                     tmp.file("panel.markets.csv") + " --config " +
                     tmp.file("cfg.json") + " --out-dir " + tmp.file("est"),
                 tmp.file("est_out.txt"), tmp.file("est_err.txt"));
  REQUIRE(code == 0);
  df::CsvTable coefs = df::read_csv(tmp.file("est") + "/coefficients.csv");
  REQUIRE(coefs.rows.size() == 4);
  CHECK(coefs.rows[0][0] == "alpha");
  CHECK(coefs.rows[1][0] == "sigma");
  CHECK(coefs.rows[2][0] == "beta1");
  CHECK(coefs.rows[3][0] == "beta2");
  CHECK(fs::exists(tmp.file("est") + "/first_stage.csv"));
  CHECK(fs::exists(tmp.file("est") + "/coefficients.json"));

  write(tmp.file("identity.json"), R"({"name": "identity"})");
  code = run_cli("counterfactual --panel " + tmp.file("panel.csv") +
                     " --markets " + tmp.file("panel.markets.csv") +
                     " --config " + tmp.file("cfg.json") + " --scenario " +
                     tmp.file("identity.json") + " --out-dir " + tmp.file("cf"),
                 tmp.file("cf_out.txt"));
  REQUIRE(code == 0);
  df::CsvTable rep = df::read_csv(tmp.file("cf") + "/report.csv");
  int gap_col = rep.column("vol_gap_pct");
  REQUIRE(gap_col >= 0);
  for (const auto& row : rep.rows) {
    double gap = std::stod(row[static_cast<size_t>(gap_col)]);
    CHECK(std::abs(gap) < 1e-9);
  }
  CHECK(fs::exists(tmp.file("cf") + "/monthly.csv"));
}

TEST_CASE("same config and seed reproduce byte-identical outputs") {
  TempDir tmp;
  write(tmp.file("cfg.json"), small_synth_json());
  // identical layouts under two roots so the manifests are comparable
  auto gen = [&](const std::string& tag, int threads) {
    fs::create_directories(tmp.file(tag));
    int code = run_cli("--threads " + std::to_string(threads) +
                           " simulate-data --config " + tmp.file("cfg.json") +
                           " --out " + tmp.file(tag + "/panel.csv"),
                       tmp.file(tag + "_log.txt"));
    REQUIRE(code == 0);
  };
  gen("a", 1);
  gen("b", 8);
  CHECK(df::read_text_file(tmp.file("a/panel.csv")) ==
        df::read_text_file(tmp.file("b/panel.csv")));
  CHECK(df::read_text_file(tmp.file("a/manifest.json")) ==
        df::read_text_file(tmp.file("b/manifest.json")));

  auto est = [&](const std::string& tag, int threads) {
    int code = run_cli("--threads " + std::to_string(threads) +
                           " estimate --panel " + tmp.file("a/panel.csv") +
                           " --markets " + tmp.file("a/panel.markets.csv") +
                           " --config " + tmp.file("cfg.json") + " --out-dir " +
                           tmp.file("est_" + tag),
                       tmp.file("est_" + tag + ".txt"));
    REQUIRE(code == 0);
  };
  est("t1", 1);
  est("t8", 8);
  CHECK(df::read_text_file(tmp.file("est_t1") + "/coefficients.csv") ==
        df::read_text_file(tmp.file("est_t8") + "/coefficients.csv"));
  df::CsvTable c1 = df::read_csv(tmp.file("est_t1") + "/coefficients.csv");
  df::CsvTable c8 = df::read_csv(tmp.file("est_t8") + "/coefficients.csv");
  REQUIRE(c1.rows.size() == c8.rows.size());
  // manifests live in different directories but must agree on every hash
  std::string m1 = df::read_text_file(tmp.file("est_t1") + "/manifest.json");
  std::string m8 = df::read_text_file(tmp.file("est_t8") + "/manifest.json");
  CHECK(m1 == m8);
}

TEST_CASE("malformed panel exits 3 with a data error record") {
  TempDir tmp;
  write(tmp.file("bad.csv"), "not,a,panel\n1,2,3\n");
  write(tmp.file("markets.csv"),
        "region_id,period,population,size_unit,expenditure_size\nA,1,10,10,100\n");
  int code = run_cli("estimate --panel " + tmp.file("bad.csv") + " --markets " +
                         tmp.file("markets.csv") + " --out-dir " + tmp.file("x"),
                     tmp.file("out.txt"), tmp.file("err.txt"));
  CHECK(code == 3);
  std::string err = df::read_text_file(tmp.file("err.txt"));
  CHECK(err.find("MissingColumn") != std::string::npos);
}

TEST_CASE("elasticities, costs, summaries, scores and tau run end to end") {
  TempDir tmp;
  write(tmp.file("cfg.json"), small_synth_json());
  REQUIRE(run_cli("simulate-data --config " + tmp.file("cfg.json") + " --out " +
                      tmp.file("p.csv") + " --out-dir " + tmp.file("sim"),
                  tmp.file("log.txt")) == 0);
  std::string data_args = " --panel " + tmp.file("p.csv") + " --markets " +
                          tmp.file("p.markets.csv") + " --config " +
                          tmp.file("cfg.json");

  CHECK(run_cli("elasticities" + data_args + " --out-dir " + tmp.file("ela"),
                tmp.file("ela.txt")) == 0);
  df::CsvTable ela = df::read_csv(tmp.file("ela") + "/elasticities.csv");
  CHECK(ela.rows.size() == 3);  // own / cross_same / cross_other

  CHECK(run_cli("recover-costs" + data_args + " --out-dir " + tmp.file("rc"),
                tmp.file("rc.txt")) == 0);
  df::CsvTable costs = df::read_csv(tmp.file("rc") + "/costs.csv");
  CHECK(costs.rows.size() > 100);
  int mc_col = costs.column("mc");
  int price_col = costs.column("price");
  REQUIRE(mc_col >= 0);
  // markups are positive for most rows in a generated panel
  int positive = 0;
  for (const auto& row : costs.rows)
    if (std::stod(row[static_cast<size_t>(price_col)]) >
        std::stod(row[static_cast<size_t>(mc_col)]))
      ++positive;
  CHECK(positive == static_cast<int>(costs.rows.size()));

  CHECK(run_cli("summarize" + data_args + " --out-dir " + tmp.file("sum"),
                tmp.file("sum.txt")) == 0);
  CHECK(fs::exists(tmp.file("sum") + "/summary_by_group.csv"));
  CHECK(fs::exists(tmp.file("sum") + "/summary_by_firm.csv"));

  CHECK(run_cli("build-scores" + data_args + " --out " + tmp.file("scored.csv") +
                    " --out-dir " + tmp.file("bs"),
                tmp.file("bs.txt")) == 0);
  df::CsvTable scored = df::read_csv(tmp.file("scored.csv"));
  CHECK(scored.column("imgscore") >= 0);
  CHECK(scored.column("cumadv") >= 0);

  write(tmp.file("scen.json"),
        R"({"name": "drop", "target_firm": "F2",
            "image_rule": {"kind": "mean_of_rivals"}})");
  CHECK(run_cli("ad-equivalence" + data_args + " --scenario " +
                    tmp.file("scen.json") + " --out-dir " + tmp.file("tau"),
                tmp.file("tau.txt")) == 0);
  CHECK(fs::exists(tmp.file("tau") + "/tau.json"));
  df::CsvTable grid = df::read_csv(tmp.file("tau") + "/tau_grid.csv");
  CHECK(grid.rows.size() == 6);  // 0.0 .. 1.0 in 0.2 steps
}
