// evd_cli: gen / solve / verify / simulate.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or input error,
// 3 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "evd/io.hpp"
#include "evd/matgen.hpp"
#include "evd/model.hpp"
#include "evd/pipeline.hpp"
#include "evd/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evd;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kOk = 0, kVerifyFailed = 1, kUsage = 2, kNumerical = 3;

struct UsageError : Error {
  using Error::Error;
};

struct GenFlags {
  index_t n = 512;
  std::string dist = "uniform";
  double cond = 1e8;
  double lmax = 1e6;
  std::uint64_t seed = 0;
};

struct SolveFlags {
  GenFlags gen;
  std::string matrix;  // read from here if set, else generate from gen
  int workers = 1;
  index_t band = 32;
  std::string order = "pipelined";
  double skew = 0.05;
  bool auto_skew = false;
  std::string vectors = "on";
  std::string trace;
  std::string out = "evd_out";
};

struct VerifyFlags {
  std::string matrix, lambda, q, spectrum;
  double slack = 16.0;
  double tol = 1e-12;
};

struct SimFlags {
  std::string model;
  int workers = 4;
  std::optional<index_t> n, band;
  std::string trace;
};

void add_gen_flags(CLI::App* c, GenFlags& g) {
  c->add_option("--n", g.n, "Matrix order")->check(CLI::PositiveNumber);
  c->add_option("--dist", g.dist, "Spectrum: cluster0 cluster1 geometric arithmetic normal uniform");
  c->add_option("--cond", g.cond, "Condition number for the controlled spectra");
  c->add_option("--lmax", g.lmax, "Largest eigenvalue for the controlled spectra");
  c->add_option("--seed", g.seed, "Random seed");
}

SpectrumSpec spec_of(const GenFlags& g) {
  auto kind = parse_spectrum_kind(g.dist);
  if (!kind) throw UsageError("unknown distribution '" + g.dist + "'");
  return {*kind, g.n, g.cond, g.lmax, g.seed};
}

json gen_json(const GenFlags& g) {
  return {{"n", g.n}, {"dist", g.dist}, {"cond", g.cond}, {"lmax", g.lmax}, {"seed", g.seed}};
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw io::IoError("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

int cmd_gen(const GenFlags& g, const std::string& out) {
  const auto tm = generate(spec_of(g));
  fs::create_directories(out);
  const fs::path dir(out);
  io::write_matrix(dir / "A.evd", tm.a.matrix());
  io::write_vector(dir / "spectrum.evd", tm.spectrum);
  write_json(dir / "gen.json", {{"command", "gen"}, {"version", kVersion}, {"config", gen_json(g)},
                                {"artifacts", {{"matrix", "A.evd"}, {"spectrum", "spectrum.evd"}}}});
  std::cout << (dir / "A.evd").string() << '\n';
  return kOk;
}

int cmd_solve(const SolveFlags& f) {
  std::optional<std::vector<double>> spectrum;
  std::optional<SymmetricMatrix> a;
  if (!f.matrix.empty()) {
    a.emplace(io::read_matrix(f.matrix));
  } else {
    auto tm = generate(spec_of(f.gen));
    spectrum = tm.spectrum;
    a.emplace(std::move(tm.a));
  }
  PipelineConfig cfg;
  cfg.workers = f.workers;
  cfg.b = f.band;
  cfg.order = parse_order(f.order);
  cfg.back_skew = f.skew;
  cfg.auto_skew = f.auto_skew;
  cfg.seed = f.gen.seed;
  cfg.want_vectors = f.vectors == "on";
  cfg.trace_path = f.trace;
  try {
    cfg.validate(a->n());
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const PipelineResult r = run(*a, cfg);

  const fs::path dir(f.out);
  fs::create_directories(dir);
  json artifacts{{"lambda", "lambda.evd"}, {"ledger", "ledger.csv"}, {"flops", "flops.csv"}};
  io::write_vector(dir / "lambda.evd", r.eig.lambda);
  if (r.eig.q) {
    io::write_matrix(dir / "Q.evd", *r.eig.q);
    artifacts["q"] = "Q.evd";
  }
  if (!f.trace.empty()) artifacts["trace"] = f.trace;
  {
    std::ofstream os(dir / "ledger.csv");
    r.ledger.write_csv(os);
    std::ofstream fl(dir / "flops.csv");
    fl << "stage,multiply_adds\n";
    for (const auto& [stage, count] : r.flops.breakdown()) fl << stage << ',' << count << '\n';
  }

  const double n = static_cast<double>(a->n());
  json metrics{{"seconds", r.seconds},
               {"gflops_4n3", 4.0 * n * n * n / std::max(r.seconds, 1e-12) / 1e9},
               {"multiply_adds", r.flops.total()},
               {"comm_words", r.ledger.total_words()},
               {"comm_words_sbr", r.ledger.stage_words("SBR")},
               {"comm_words_bc", r.ledger.stage_words("BC")},
               {"band_used", r.band},
               {"back_skew_used", r.skew},
               {"back_plan", r.plan.sizes}};
  if (r.eig.q) metrics["accuracy"] = accuracy_report(a->view(), r.eig.q->view(), r.eig.lambda);
  if (spectrum) {
    double err = 0.0;
    for (std::size_t i = 0; i < spectrum->size(); ++i) err = std::max(err, std::abs((*spectrum)[i] - r.eig.lambda[i]));
    metrics["lambda_max_abs_error"] = err;
  }
  json config{{"workers", f.workers}, {"band", f.band},         {"order", f.order},  {"skew", f.skew},
              {"auto_skew", f.auto_skew}, {"vectors", f.vectors}, {"trace", f.trace}, {"out", f.out}};
  if (f.matrix.empty())
    config["generate"] = gen_json(f.gen);
  else
    config["matrix"] = fs::absolute(f.matrix).string();
  json manifest{{"command", "solve"}, {"version", kVersion}, {"config", config},
                {"metrics", metrics}, {"artifacts", artifacts}};
  write_json(dir / "manifest.json", manifest);
  std::cout << metrics.dump(2) << '\n';
  return kOk;
}

int cmd_verify(const VerifyFlags& f) {
  const Matrix a = io::read_matrix(f.matrix);
  const auto lambda = io::read_vector(f.lambda);
  if (static_cast<index_t>(lambda.size()) != a.rows()) throw UsageError("lambda length does not match the matrix");
  json report;
  bool ok = true;
  if (!f.q.empty()) {
    const Matrix q = io::read_matrix(f.q);
    if (q.rows() != a.rows() || q.cols() != a.cols()) throw UsageError("Q shape does not match the matrix");
    const auto r = accuracy_report(a.view(), q.view(), lambda, f.slack);
    report = r;
    ok = r.bound_ok;
  } else if (!f.spectrum.empty()) {
    const auto s = io::read_vector(f.spectrum);
    if (s.size() != lambda.size()) throw UsageError("spectrum length does not match lambda");
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      err = std::max(err, std::abs(s[i] - lambda[i]));
      scale = std::max(scale, std::abs(s[i]));
    }
    ok = err <= f.tol * std::max(scale, 1.0);
    report = {{"lambda_max_abs_error", err}, {"tolerance", f.tol * std::max(scale, 1.0)}, {"bound_ok", ok}};
  } else {
    throw UsageError("verify needs --q or --spectrum");
  }
  std::cout << report.dump(2) << '\n';
  return ok ? kOk : kVerifyFailed;
}

int cmd_simulate(const SimFlags& f) {
  CostModel m;
  if (!f.model.empty()) {
    std::ifstream in(f.model);
    if (!in) throw io::IoError("cannot open " + f.model);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError(std::string("malformed cost model: ") + e.what());
    }
    m = cost_model_from_json(j);
  }
  if (f.n) m.n = *f.n;
  if (f.band) m.b = *f.band;
  const auto p = simulate(m, f.workers, Order::Pipelined);
  const auto s = simulate(m, f.workers, Order::Sequential);
  if (!f.trace.empty()) {
    std::ofstream os(f.trace);
    if (!os) throw io::IoError("cannot write " + f.trace);
    write_jsonl(os, p.trace);
  }
  json report{{"model", m.kind == CostModel::Kind::Unit ? "unit" : "analytic"},
              {"workers", f.workers},
              {"n", m.n},
              {"b", m.b},
              {"makespan_pipelined", p.makespan},
              {"makespan_sequential", s.makespan},
              {"ratio", p.makespan / s.makespan},
              {"idle_pipelined", idle_fraction(p.trace, f.workers)},
              {"idle_sequential", idle_fraction(s.trace, f.workers)}};
  std::cout << report.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage symmetric eigensolver with a pipelined multi-worker back transformation.\n"
               "Throughput is reported as 4n^3/time, the usual EVD normalization, although the\n"
               "two-stage method performs more arithmetic than that."};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenFlags gen;
  std::string gen_out = "evd_out";
  auto* g = app.add_subcommand("gen", "Generate a symmetric test matrix with a prescribed spectrum");
  add_gen_flags(g, gen);
  g->add_option("--out", gen_out, "Output directory");

  SolveFlags solve;
  auto* s = app.add_subcommand("solve", "Solve A = Q diag(lambda) Q^T");
  add_gen_flags(s, solve.gen);
  s->add_option("--matrix", solve.matrix, "EVD1 input matrix (otherwise generated from --n/--dist/...)");
  s->add_option("--workers", solve.workers, "Number of workers")->check(CLI::PositiveNumber);
  s->add_option("--band", solve.band, "Semi-bandwidth b")->check(CLI::PositiveNumber);
  s->add_option("--order", solve.order, "Stage order")
      ->check(CLI::IsMember({"pipelined", "sequential", "conventional"}));
  s->add_option("--skew", solve.skew, "Back-transform load-balance skew")->check(CLI::Range(0.0, 0.05));
  s->add_flag("--auto-skew", solve.auto_skew, "Rerun once with a skew tuned from the first trace");
  s->add_option("--vectors", solve.vectors, "Compute eigenvectors")->check(CLI::IsMember({"on", "off"}));
  s->add_option("--trace", solve.trace, "Write the JSONL timeline here");
  s->add_option("--out", solve.out, "Output directory");

  VerifyFlags ver;
  auto* v = app.add_subcommand("verify", "Check a solution; exit 0 iff it passes");
  v->add_option("--matrix", ver.matrix, "EVD1 input matrix")->required();
  v->add_option("--lambda", ver.lambda, "EVD1 eigenvalue vector")->required();
  v->add_option("--q", ver.q, "EVD1 eigenvector matrix");
  v->add_option("--spectrum", ver.spectrum, "Spectrum sidecar from gen (eigenvalues-only check)");
  v->add_option("--slack", ver.slack, "Slack c in the orthogonality bound 2 eps c");
  v->add_option("--tol", ver.tol, "Relative tolerance of the eigenvalues-only check");

  SimFlags sim;
  auto* m = app.add_subcommand("simulate", "Simulate pipelined and sequential schedules");
  m->add_option("--model", sim.model, "Cost model JSON (default: calibrated analytic model)");
  m->add_option("--workers", sim.workers, "Number of workers")->check(CLI::PositiveNumber);
  m->add_option("--n", sim.n, "Override the model's matrix order");
  m->add_option("--band", sim.band, "Override the model's bandwidth");
  m->add_option("--trace", sim.trace, "Write the pipelined trace here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return cmd_gen(gen, gen_out);
    if (*s) return cmd_solve(solve);
    if (*v) return cmd_verify(ver);
    if (*m) return cmd_simulate(sim);
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.numerical() ? kNumerical : kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
