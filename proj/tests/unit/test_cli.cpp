#include <doctest.h>

#include <json.hpp>

#include <spectra_lr/certificate.hpp>
#include <spectra_lr/spectrahedron.hpp>
#include <spectra_lr_cli/cli.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace spectra_lr;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path tmpDir(const std::string& name) {
  const char* base = std::getenv("SPECTRA_LR_TEST_TMP");
  const fs::path dir = fs::path(base != nullptr ? base : fs::temp_directory_path().string()) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

json readJson(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

/// Trace text with the elapsed_s column blanked.
std::string traceWithoutTimes(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (line.back() == ',') cols.emplace_back();
    if (cols.size() >= 5 && cols[4] != "elapsed_s") cols[4].clear();
    for (std::size_t k = 0; k < cols.size(); ++k) out += (k ? "," : "") + cols[k];
    out += "\n";
  }
  return out;
}

void writeModel(const fs::path& p, const json& u, const json& m, double g) {
  json model;
  model["schema"] = 1;
  model["kind"] = "completion";
  model["g"] = g;
  model["U"] = u;
  model["M"] = {{"format", "dense"}, {"rows", m.size()}, {"cols", m[0].size()}, {"data", m}};
  std::ofstream(p) << model.dump();
}

double valueAfter(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string k;
  double v = 0.0;
  while (in >> k) {
    if (k == key) {
      in >> v;
      return v;
    }
  }
  FAIL("missing key " << key);
  return v;
}

const std::vector<std::string> kSmallCompletion = {"complete", "--synth", "d=40,T=60,r=2,frac=0.41",
                                                   "--rank", "2", "--C", "1000", "--seed", "3",
                                                   "--cert-every", "2"};

std::vector<std::string> with(std::vector<std::string> base, std::initializer_list<std::string> extra) {
  base.insert(base.end(), extra);
  return base;
}

}  // namespace

TEST_CASE("argument errors name the flag") {
  const Run noRank = invoke({"complete", "--synth", "d=10,T=8,r=2,frac=0.5"});
  CHECK(noRank.code == cli::kInputError);
  CHECK(noRank.err.find("--rank") != std::string::npos);

  const Run badC = invoke({"complete", "--synth", "d=10,T=8,r=2,frac=0.5", "--rank", "2", "--C", "-1"});
  CHECK(badC.code == cli::kInputError);
  CHECK(badC.err.find("--C") != std::string::npos);
  CHECK(badC.err.find("-1") != std::string::npos);

  const Run badKey = invoke({"complete", "--synth", "d=10,T=8,q=2", "--rank", "2"});
  CHECK(badKey.code == cli::kInputError);
  CHECK(badKey.err.find("--synth") != std::string::npos);

  const Run badSolver = invoke({"complete", "--synth", "d=10,T=8,r=2,frac=0.5", "--rank", "2", "--solver", "sgd"});
  CHECK(badSolver.code == cli::kInputError);
  CHECK(badSolver.err.find("sgd") != std::string::npos);

  const Run missing = invoke({"complete", "--train", "/nonexistent/train.txt", "--rank", "2"});
  CHECK(missing.code == cli::kInputError);
  CHECK(missing.err.find("/nonexistent/train.txt") != std::string::npos);

  CHECK(invoke({"frobnicate"}).code == cli::kInputError);
  CHECK(invoke({}).code == cli::kInputError);
  CHECK(invoke({"--help"}).code == cli::kOk);
  CHECK(invoke({"--version"}).code == cli::kOk);
}

TEST_CASE("completion run writes the documented artifacts") {
  const fs::path dir = tmpDir("complete");
  const Run r = invoke(with(kSmallCompletion, {"-o", dir.string()}));
  REQUIRE(r.code == cli::kOk);
  const json summary = readJson(dir / "summary.json");
  CHECK(summary.at("status") == "converged");
  CHECK(summary.at("rank") == 2);
  CHECK(summary.at("test_metric").at("name") == "rmse");
  CHECK(summary.at("test_metric").at("value").get<double>() < 0.05);
  CHECK(summary.at("relative_gap").get<double>() <= 1e-5);
  const json model = readJson(dir / "model.json");
  CHECK(model.at("U").size() == 40);
  CHECK(model.at("U")[0].size() == 2);
  const std::string trace = slurp(dir / "trace.csv");
  CHECK(trace.rfind("iter,g,gradnorm,step,elapsed_s,duality_gap\n", 0) == 0);

  SUBCASE("check-cert reproduces the summary gap") {
    const Run c = invoke({"check-cert", dir.string(), "--threshold", "1e-5"});
    CHECK(c.code == cli::kOk);
    CHECK(c.out.find("\ncertified") != std::string::npos);
    CHECK(valueAfter(c.out, "duality_gap") == summary.at("duality_gap").get<double>());
    CHECK(valueAfter(c.out, "relative_gap") == summary.at("relative_gap").get<double>());
    const Run strict = invoke({"check-cert", "--model", (dir / "model.json").string(), "--threshold", "0"});
    CHECK(strict.code == (summary.at("duality_gap").get<double>() == 0.0 ? cli::kOk : cli::kNotConverged));
  }
}

TEST_CASE("runs are reproducible and thread-count independent") {
  const fs::path a = tmpDir("repro_a");
  const fs::path b = tmpDir("repro_b");
  const fs::path c = tmpDir("repro_c");
  REQUIRE(invoke(with(kSmallCompletion, {"-o", a.string()})).code == cli::kOk);
  REQUIRE(invoke(with(kSmallCompletion, {"-o", b.string()})).code == cli::kOk);
  REQUIRE(invoke(with(kSmallCompletion, {"-o", c.string(), "--threads", "3"})).code == cli::kOk);
  CHECK(traceWithoutTimes(a / "trace.csv") == traceWithoutTimes(b / "trace.csv"));
  CHECK(traceWithoutTimes(a / "trace.csv") == traceWithoutTimes(c / "trace.csv"));
  CHECK(slurp(a / "model.json") == slurp(b / "model.json"));
  CHECK(slurp(a / "model.json") == slurp(c / "model.json"));
}

TEST_CASE("synth hankel is deterministic") {
  const fs::path a = tmpDir("synth_a");
  const fs::path b = tmpDir("synth_b");
  for (const fs::path& dir : {a, b}) {
    REQUIRE(invoke({"synth", "--hankel", "r0=3,d=10,T=12,sigma=0.05", "--seed", "9", "-o", dir.string()}).code ==
            cli::kOk);
  }
  for (const char* name : {"yTrue.txt", "yNoisy.txt"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(a / name));
    CHECK(slurp(a / name) == slurp(b / name));
  }
  const fs::path c = tmpDir("synth_c");
  REQUIRE(invoke({"synth", "--hankel", "r0=3,d=10,T=12,sigma=0.05", "--seed", "10", "-o", c.string()}).code ==
          cli::kOk);
  CHECK(slurp(a / "yNoisy.txt") != slurp(c / "yNoisy.txt"));

  SUBCASE("the signal feeds the hankel subcommand") {
    const fs::path out = tmpDir("hankel_run");
    const Run r = invoke({"hankel", "--train", (a / "yNoisy.txt").string(), "--truth", (a / "yTrue.txt").string(),
                       "--dims", "10,12", "--rank", "3", "--C", "100", "-o", out.string()});
    CHECK(r.code != cli::kInputError);
    CHECK(r.code != cli::kInternalError);
    const json summary = readJson(out / "summary.json");
    CHECK(summary.at("test_metric").at("name") == "rmse_true");
  }

  SUBCASE("mismatched dims are rejected") {
    const Run r = invoke({"hankel", "--train", (a / "yNoisy.txt").string(), "--dims", "10,10", "--rank", "3",
                       "-o", tmpDir("hankel_bad").string()});
    CHECK(r.code == cli::kInputError);
    CHECK(r.err.find("--dims") != std::string::npos);
  }
}

TEST_CASE("check-cert on hand-built models") {
  const fs::path dir = tmpDir("cert");

  SUBCASE("U spans the top singular vector: zero gap") {
    writeModel(dir / "model.json", json::array({json::array({1.0}), json::array({0.0})}),
               json::array({json::array({3.0, 0.0}), json::array({0.0, 1.0})}), 2.0);
    const Run r = invoke({"check-cert", dir.string()});
    CHECK(r.code == cli::kOk);
    CHECK(valueAfter(r.out, "duality_gap") == 0.0);
    CHECK(valueAfter(r.out, "sigma1") == doctest::Approx(3.0));
  }

  SUBCASE("U on the weak direction") {
    writeModel(dir / "model.json", json::array({json::array({1.0}), json::array({0.0})}),
               json::array({json::array({1.0, 0.0}), json::array({0.0, 3.0})}), 10.0);
    const Run r = invoke({"check-cert", dir.string()});
    CHECK(r.code == cli::kNotConverged);
    CHECK(r.out.find("not certified") != std::string::npos);
    // (3^2 - 1^2) / 2.
    CHECK(valueAfter(r.out, "duality_gap") == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(valueAfter(r.out, "relative_gap") == doctest::Approx(0.4).epsilon(1e-9));
  }

  SUBCASE("matches the library on a random dual") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    Matrix u(5, 2), m(5, 4);
    for (Index i = 0; i < u.size(); ++i) u.data()[i] = normal(rng);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    u /= u.norm();
    json uj = json::array(), mj = json::array();
    for (Index i = 0; i < 5; ++i) {
      uj.push_back(json::array({u(i, 0), u(i, 1)}));
      mj.push_back(json::array({m(i, 0), m(i, 1), m(i, 2), m(i, 3)}));
    }
    writeModel(dir / "model.json", uj, mj, 1.5);
    const Run r = invoke({"check-cert", dir.string(), "--threshold", "1e9"});
    CHECK(r.code == cli::kOk);
    const GapReport rep = dualityGap(ManifoldPoint::normalized(u), CompositeDual::fromDense(m), 1.5);
    CHECK(valueAfter(r.out, "duality_gap") == doctest::Approx(rep.gap).epsilon(1e-12));
    CHECK(valueAfter(r.out, "sigma1") == doctest::Approx(rep.sigma1).epsilon(1e-12));
  }

  SUBCASE("U off the unit sphere is an input error") {
    writeModel(dir / "model.json", json::array({json::array({2.0}), json::array({0.0})}),
               json::array({json::array({3.0, 0.0}), json::array({0.0, 1.0})}), 2.0);
    const Run r = invoke({"check-cert", dir.string()});
    CHECK(r.code == cli::kInputError);
    CHECK(r.err.find("--model") != std::string::npos);
  }

  SUBCASE("malformed files") {
    std::ofstream(dir / "model.json") << "{\"U\": [[1.0]]";
    CHECK(invoke({"check-cert", dir.string()}).code == cli::kInputError);
    std::ofstream(dir / "model.json") << "{\"U\": [[1.0]], \"g\": 0}";
    CHECK(invoke({"check-cert", dir.string()}).code == cli::kInputError);
    CHECK(invoke({"check-cert", (dir / "missing.json").string()}).code == cli::kInputError);
  }
}
