#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = PREWARP_CLI_PATH;

struct CliResult {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "prewarp_cli_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CliResult run_cli(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = kCli + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CliResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  res.out = slurp(out);
  res.err = slurp(err);
  return res;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

const std::string kSmallRun =
    "run --fn ridge2d --n 200 --n-test 50 --methods KNN,S-KNN --reps 2 --seed 7 "
    "--bags 1 --bag-size 200 --n-starts 2 --max-iters 30";

}  // namespace

TEST_CASE("run emits one report line per cell per repetition") {
  CliResult res = run_cli(kSmallRun);
  CHECK(res.exit_code == 0);
  // 2 methods x 2 reps + final summary line
  CHECK(count_lines(res.out) == 5);
  CHECK(res.out.find("\"label\":\"KNN\"") != std::string::npos);
  CHECK(res.out.find("\"label\":\"S-KNN\"") != std::string::npos);
  CHECK(res.out.find("\"config\"") != std::string::npos);  // resolved config embedded
  CHECK(res.err.find("median") != std::string::npos);      // human table on stderr
}

TEST_CASE("invalid method prefixes exit with a usage error and the grammar") {
  CliResult res = run_cli("run --fn ridge2d --n 100 --n-test 20 --methods X-KNN");
  CHECK(res.exit_code == 1);
  CHECK(res.err.find("B|R|L|S") != std::string::npos);
  CHECK(res.out.empty());
}

TEST_CASE("repeated runs with one seed produce byte-identical outputs") {
  const fs::path out1 = work_dir() / "det1.jsonl";
  const fs::path out2 = work_dir() / "det2.jsonl";
  CliResult r1 = run_cli(kSmallRun + " --out " + out1.string());
  CliResult r2 = run_cli(kSmallRun + " --out " + out2.string());
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(out1) == slurp(out2));
  CHECK(slurp(out1.string() + ".summary.json") == slurp(out2.string() + ".summary.json"));
  CHECK(slurp(out1.string() + ".warp.rep0.S.json") == slurp(out2.string() + ".warp.rep0.S.json"));
  CHECK(!slurp(out1).empty());
}

TEST_CASE("gen-data writes a csv the pipeline can consume") {
  const fs::path csv = work_dir() / "gen.csv";
  CliResult gen = run_cli("gen-data --fn ridge2d --n 260 --seed 3 --out " + csv.string());
  CHECK(gen.exit_code == 0);
  CHECK(gen.out.find("\"fn\":\"ridge2d\"") != std::string::npos);

  CliResult run = run_cli("run --csv " + csv.string() +
                          " --n 200 --n-test 50 --methods KNN --reps 1 --seed 5");
  CHECK(run.exit_code == 0);
  CHECK(count_lines(run.out) == 2);
}

TEST_CASE("warp files round-trip through inspect losslessly") {
  const fs::path warp = work_dir() / "warp.json";
  CliResult w = run_cli("warp --fn ridge2d --n 300 --method L --bags 1 --bag-size 300 "
                        "--seed 11 --n-starts 2 --max-iters 30 --mc 400 --out " + warp.string());
  REQUIRE(w.exit_code == 0);
  CHECK(w.err.find("eigenvalues") != std::string::npos);

  CliResult ins = run_cli("inspect " + warp.string());
  CHECK(ins.exit_code == 0);
  CHECK(ins.out == slurp(warp));
}

TEST_CASE("warp spectra reflect structure") {
  SUBCASE("ridge2d has a dominant direction") {
    const fs::path warp = work_dir() / "warp_ridge.json";
    CliResult w = run_cli("warp --fn ridge2d --n 400 --method L --bags 1 --bag-size 400 "
                          "--seed 2 --n-starts 2 --mc 1000 --out " + warp.string());
    REQUIRE(w.exit_code == 0);
    // lambda_1 / lambda_2 printed on stderr as the spectral spread
    const auto pos = w.err.find("lambda_1/lambda_p = ");
    REQUIRE(pos != std::string::npos);
    const double ratio = std::strtod(w.err.c_str() + pos + 20, nullptr);
    CHECK(ratio >= 50.0);
  }
  SUBCASE("isotropic data keeps a near-identity bandwidth warp") {
    // draw y depending symmetrically on both inputs
    const fs::path warp = work_dir() / "warp_b.json";
    CliResult w = run_cli("warp --fn piston --n 300 --method B --bags 1 --bag-size 300 "
                          "--seed 4 --n-starts 3 --out " + warp.string());
    CHECK(w.exit_code == 0);
    CHECK(!slurp(warp).empty());
  }
}

TEST_CASE("truncate reports ranks and can update the warp file") {
  const fs::path warp = work_dir() / "warp_trunc.json";
  CliResult w = run_cli("warp --fn linear-embed --dim 6 --n 400 --method S --bags 1 "
                        "--bag-size 400 --seed 6 --n-starts 2 --out " + warp.string());
  REQUIRE(w.exit_code == 0);

  CliResult t = run_cli("truncate --fn linear-embed --dim 6 --n 400 --seed 6 --warp " +
                        warp.string() + " --update");
  CHECK(t.exit_code == 0);
  CHECK(t.out.find("\"r\":") != std::string::npos);
  CHECK(t.err.find("updated") != std::string::npos);

  // the stored rank should now match the reported one
  const std::string updated = slurp(warp);
  const auto rpos = t.out.find("\"r\":");
  const int r = std::atoi(t.out.c_str() + rpos + 4);
  CHECK(updated.find("\"r\": " + std::to_string(r)) != std::string::npos);
  CHECK(r <= 2);  // the embedded ridge only spans two input directions
}

TEST_CASE("predict scores a single model") {
  CliResult res = run_cli("predict --fn ridge2d --n 300 --n-test 60 --model KNN --seed 9");
  CHECK(res.exit_code == 0);
  CHECK(res.out.find("\"mse\":") != std::string::npos);
  CHECK(res.out.find("\"neg_score\":null") != std::string::npos);

  CliResult gp = run_cli("predict --fn ridge2d --n 250 --n-test 40 --model sGP --seed 9 "
                         "--bag-size 250 --n-starts 2");
  CHECK(gp.exit_code == 0);
  CHECK(gp.out.find("\"neg_score\":") != std::string::npos);
  CHECK(gp.out.find("\"neg_score\":null") == std::string::npos);
}

TEST_CASE("exit codes distinguish usage, data, and numerical failures") {
  CHECK(run_cli("run --fn no-such-function --n 50 --n-test 10 --methods KNN").exit_code == 1);
  CHECK(run_cli("run --csv /nonexistent.csv --n 50 --n-test 10 --methods KNN").exit_code == 2);
  CHECK(run_cli("inspect /nonexistent.file").exit_code == 2);
  CHECK(run_cli("nonsense-subcommand").exit_code == 1);
  CHECK(run_cli("--help").exit_code == 0);
}
