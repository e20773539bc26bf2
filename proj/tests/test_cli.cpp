#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "evd/io.hpp"
#include "evd/matgen.hpp"
#include "evd/trace.hpp"
#include "evd/verify.hpp"

namespace fs = std::filesystem;
using namespace evd;

namespace {

struct Out {
  int code;
  std::string text;
};

const fs::path& work() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("evd_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Out cli(const std::string& args) {
  const auto log = work() / "stdout.txt";
  const std::string cmd = std::string(EVD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json json_of(const std::string& text) { return nlohmann::json::parse(text.substr(text.find('{'))); }

std::string dir(const std::string& name) { return (work() / name).string(); }

}  // namespace

TEST(CliGen, DeterministicBytes) {
  ASSERT_EQ(cli("gen --dist geometric --n 512 --seed 7 --out " + dir("g1")).code, 0);
  ASSERT_EQ(cli("gen --dist geometric --n 512 --seed 7 --out " + dir("g2")).code, 0);
  EXPECT_EQ(bytes(dir("g1") + "/A.evd"), bytes(dir("g2") + "/A.evd"));
  EXPECT_EQ(bytes(dir("g1") + "/A.evd").size(), 12u + 8u * 512 * 512);
  ASSERT_EQ(cli("gen --dist geometric --n 512 --seed 8 --out " + dir("g3")).code, 0);
  EXPECT_NE(bytes(dir("g1") + "/A.evd"), bytes(dir("g3") + "/A.evd"));
}

TEST(CliGen, Cluster0Sidecar) {
  ASSERT_EQ(cli("gen --dist cluster0 --n 64 --out " + dir("c0")).code, 0);
  auto s = io::read_vector(dir("c0") + "/spectrum.evd");
  ASSERT_EQ(s.size(), 64u);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) EXPECT_EQ(s[i], 1e6 / 1e8);
  EXPECT_EQ(s.back(), 1e6);
  auto m = nlohmann::json::parse(bytes(dir("c0") + "/gen.json"));
  EXPECT_EQ(m["config"]["dist"], "cluster0");
}

TEST(CliGen, UnknownDistIsUsageError) {
  auto r = cli("gen --dist lognormal --n 8 --out " + dir("bad"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.text.find("lognormal"), std::string::npos);
}

TEST(CliUsage, HelpAndMissingSubcommand) {
  EXPECT_EQ(cli("--help").code, 0);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("solve --vectors maybe").code, 2);
  EXPECT_EQ(cli("solve --workers 0").code, 2);
}

TEST(CliSolve, OneWorkerOrdersIdenticalLambda) {
  ASSERT_EQ(cli("solve --n 200 --dist normal --seed 3 --workers 1 --band 16 --order sequential --out " + dir("s_seq")).code, 0);
  ASSERT_EQ(cli("solve --n 200 --dist normal --seed 3 --workers 1 --band 16 --order pipelined --out " + dir("s_pip")).code, 0);
  EXPECT_EQ(bytes(dir("s_seq") + "/lambda.evd"), bytes(dir("s_pip") + "/lambda.evd"));
  EXPECT_EQ(bytes(dir("s_seq") + "/Q.evd"), bytes(dir("s_pip") + "/Q.evd"));
}

TEST(CliSolve, FourWorkersManifestPassesBounds) {
  auto r = cli("solve --workers 4 --n 1024 --dist uniform --out " + dir("s4") + " --trace " + dir("s4.jsonl"));
  ASSERT_EQ(r.code, 0) << r.text;
  auto m = nlohmann::json::parse(bytes(dir("s4") + "/manifest.json"));
  EXPECT_TRUE(m["metrics"]["accuracy"]["bound_ok"].get<bool>());
  EXPECT_LE(m["metrics"]["accuracy"]["backward"].get<double>(), 1e-15);
  EXPECT_GT(m["metrics"]["gflops_4n3"].get<double>(), 0.0);
  EXPECT_EQ(m["config"]["generate"]["n"], 1024);
  EXPECT_EQ(m["config"]["workers"], 4);
  EXPECT_TRUE(fs::exists(dir("s4") + "/ledger.csv"));
  EXPECT_TRUE(fs::exists(dir("s4") + "/flops.csv"));
  std::ifstream tr(dir("s4.jsonl"));
  EXPECT_FALSE(read_jsonl(tr).empty());
  auto csv = bytes(dir("s4") + "/ledger.csv");
  EXPECT_EQ(csv.rfind("src,dst,stage,words\n", 0), 0u);
}

TEST(CliSolve, ConventionalAndPipelinedBothVerify) {
  ASSERT_EQ(cli("gen --dist arithmetic --n 256 --seed 2 --out " + dir("cv")).code, 0);
  for (std::string order : {"conventional", "pipelined"}) {
    const auto out = dir("cv_" + order);
    ASSERT_EQ(cli("solve --matrix " + dir("cv") + "/A.evd --workers 4 --band 8 --order " + order + " --out " + out).code, 0);
    auto v = cli("verify --matrix " + dir("cv") + "/A.evd --lambda " + out + "/lambda.evd --q " + out + "/Q.evd");
    EXPECT_EQ(v.code, 0) << v.text;
    EXPECT_LE(json_of(v.text)["backward"].get<double>(), 1e-15);
  }
}

TEST(CliVerify, PerturbedQFailsAndSpectrumMode) {
  ASSERT_EQ(cli("gen --dist uniform --n 128 --seed 4 --out " + dir("pv")).code, 0);
  const auto a = dir("pv") + "/A.evd", out = dir("pv_s");
  ASSERT_EQ(cli("solve --matrix " + a + " --workers 2 --band 8 --out " + out).code, 0);
  EXPECT_EQ(cli("verify --matrix " + a + " --lambda " + out + "/lambda.evd --q " + out + "/Q.evd").code, 0);
  Matrix q = io::read_matrix(out + "/Q.evd");
  q(17, 5) += 1e-3;
  io::write_matrix(out + "/Qbad.evd", q);
  EXPECT_EQ(cli("verify --matrix " + a + " --lambda " + out + "/lambda.evd --q " + out + "/Qbad.evd").code, 1);
  EXPECT_EQ(cli("verify --matrix " + a + " --lambda " + out + "/lambda.evd --spectrum " + dir("pv") + "/spectrum.evd").code, 0);
  // Values-only solve still verifies against the sidecar.
  ASSERT_EQ(cli("solve --matrix " + a + " --workers 2 --band 8 --vectors off --out " + dir("pv_v")).code, 0);
  EXPECT_FALSE(fs::exists(dir("pv_v") + "/Q.evd"));
  EXPECT_EQ(cli("verify --matrix " + a + " --lambda " + dir("pv_v") + "/lambda.evd --spectrum " + dir("pv") + "/spectrum.evd").code, 0);
  EXPECT_EQ(cli("verify --matrix " + a + " --lambda " + out + "/lambda.evd").code, 2);
  EXPECT_EQ(cli("verify --matrix " + dir("nope.evd") + " --lambda " + out + "/lambda.evd --q " + out + "/Q.evd").code, 2);
}

TEST(CliSolve, NonFiniteInputIsNumericalFailure) {
  Matrix a = Matrix::identity(32);
  a(3, 3) = std::numeric_limits<double>::quiet_NaN();
  io::write_matrix(dir("nan.evd"), a);
  EXPECT_EQ(cli("solve --matrix " + dir("nan.evd") + " --workers 2 --band 4 --out " + dir("nan_out")).code, 3);
}

TEST(CliSimulate, UnitModelTwoWorkers) {
  std::ofstream(dir("unit.json")) << R"({"kind": "unit"})";
  auto r = cli("simulate --workers 2 --model " + dir("unit.json"));
  ASSERT_EQ(r.code, 0);
  auto j = json_of(r.text);
  EXPECT_EQ(j["makespan_pipelined"], 6.0);
  EXPECT_EQ(j["makespan_sequential"], 7.0);
}

TEST(CliSimulate, OneWorkerRatioIsOne) {
  std::ofstream(dir("unit1.json")) << R"({"kind": "unit", "back_skew": 0.0})";
  auto j = json_of(cli("simulate --workers 1 --model " + dir("unit1.json")).text);
  EXPECT_EQ(j["ratio"], 1.0);
}

TEST(CliSimulate, DefaultModelFourWorkersPipelinedWins) {
  auto r = cli("simulate --workers 4 --trace " + dir("sim.jsonl"));
  ASSERT_EQ(r.code, 0);
  EXPECT_LT(json_of(r.text)["ratio"].get<double>(), 1.0);
  std::ifstream tr(dir("sim.jsonl"));
  auto ev = read_jsonl(tr);
  EXPECT_TRUE(validate_trace(ev, {false, 1, 4}).empty());
}

TEST(CliSimulate, MalformedModel) {
  std::ofstream(dir("broken.json")) << "{ not json";
  EXPECT_EQ(cli("simulate --model " + dir("broken.json")).code, 2);
  std::ofstream(dir("neg.json")) << R"({"p": -5})";
  EXPECT_EQ(cli("simulate --model " + dir("neg.json")).code, 2);
}
