// kdist: kernel distance computations, coresets, embeddings, and rigid
// alignment between weighted point sets.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kd/align.hpp"
#include "kd/bench.hpp"
#include "kd/coreset.hpp"
#include "kd/features.hpp"
#include "kd/io.hpp"
#include "kd/kappa.hpp"
#include "kd/wspd.hpp"

using json = nlohmann::json;
using namespace kd;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

int exit_code_for(const error& e) {
  switch (e.kind()) {
    case errc::parse_error:
    case errc::io_error:
      return 2;
    case errc::invalid_argument:
    case errc::dimension_mismatch:
      return 3;
    case errc::numerical_instability:
      return 4;
    case errc::budget_exceeded:
      return 5;
  }
  return 3;
}

void apply_threads(int threads) {
#ifdef _OPENMP
  if (threads <= 0) {
    const char* env = std::getenv("KERNELDIST_THREADS");
    if (env) threads = std::atoi(env);
  }
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

void emit(const json& report, const std::string& out) {
  std::string text = report.dump(2);
  text += '\n';
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream os(out);
    require(bool(os), errc::io_error, "cannot open " + out + " for writing");
    os << text;
    require(bool(os), errc::io_error, "write failed: " + out);
  }
}

json motion_json(const RigidMotion& m) {
  json j;
  j["anchor"] = m.anchor;
  j["translation"] = m.translation;
  if (m.dim == 2)
    j["angle"] = m.angle;
  else if (m.dim == 3)
    j["rotation"] = std::vector<double>(m.rot.begin(), m.rot.end());
  j["origin_translation"] = m.origin_translation();
  return j;
}

struct CommonOpts {
  double eps = 0.1;
  double delta = 0.1;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--eps", o.eps, "approximation parameter");
  cmd->add_option("--delta", o.delta, "failure probability");
  cmd->add_option("--sigma", o.sigma, "Gaussian kernel bandwidth");
  cmd->add_option("--seed", o.seed, "random seed (one seed drives all streams)");
  cmd->add_option("--threads", o.threads, "worker threads (default: cores, or KERNELDIST_THREADS)");
  cmd->add_option("--out", o.out, "output path (default: stdout)");
}

int run_dist(const std::string& file_p, const std::string& file_q, const std::string& method,
             const CommonOpts& o) {
  apply_threads(o.threads);
  GaussianKernel k(o.sigma);
  WeightedPointSet P = load_point_set(file_p).points;
  WeightedPointSet Q = load_point_set(file_q).points;

  json cert;
  double t0 = now_ms();
  double dk2 = 0.0;
  if (method == "exact") {
    dk2 = kernel_distance_sq_exact(k, P, Q);
  } else if (method == "wspd") {
    dk2 = kernel_distance_sq_wspd(k, P, Q, o.eps);
    cert["alpha"] = wspd_alpha_for(o.eps);
    cert["prune_radius"] = wspd_prune_radius(k, o.eps);
  } else if (method == "rff") {
    std::size_t rho = rff_dimension(o.eps, o.delta, std::max(P.size(), Q.size()));
    FourierBasis basis = draw_frequencies(o.sigma, P.dim(), rho, o.seed);
    dk2 = kernel_distance_sq_features(rff_embed(basis, P), rff_embed(basis, Q));
    cert["rho"] = rho;
  } else if (method == "ifgt") {
    WeightedPointSet U(P.dim());
    for (std::size_t i = 0; i < P.size(); ++i) U.add(P.point(i), P.mass(i));
    for (std::size_t i = 0; i < Q.size(); ++i) U.add(Q.point(i), Q.mass(i));
    std::vector<double> c = U.centroid();
    double Delta = 2.0 * U.radius_about(c) / o.sigma;
    int tau = ifgt_choose_tau(std::min(0.999, o.eps / 3.0), std::max(Delta, 1e-9));
    TaylorBasis basis = make_taylor_basis(o.sigma, tau, c);
    dk2 = kernel_distance_sq_features(ifgt_embed(basis, P), ifgt_embed(basis, Q));
    cert["tau"] = tau;
    cert["rho"] = basis.rho;
    cert["normalized_diameter"] = Delta;
  } else {
    throw error(errc::invalid_argument, "unknown method '" + method + "'");
  }
  double ms = now_ms() - t0;

  json rep;
  rep["command"] = "dist";
  rep["method"] = method;
  rep["d_k_sq"] = dk2;
  rep["d_k"] = std::sqrt(std::max(0.0, dk2));
  rep["params"] = {{"eps", o.eps},       {"delta", o.delta}, {"sigma", o.sigma},
                   {"seed", o.seed},     {"dim", P.dim()},   {"n_p", P.size()},
                   {"n_q", Q.size()},    {"w_p", P.total_mass()},
                   {"w_q", Q.total_mass()}};
  if (!cert.is_null()) rep["certificate"] = cert;
  rep["wall_time_ms"] = ms;
  emit(rep, o.out);
  return 0;
}

int run_align(const std::string& file_p, const std::string& file_q, const std::string& mode,
              bool use_coreset, const CommonOpts& o) {
  apply_threads(o.threads);
  GaussianKernel k(o.sigma);
  WeightedPointSet P = load_point_set(file_p).points;
  WeightedPointSet Q = load_point_set(file_q).points;

  double t0 = now_ms();
  AlignResult res;
  if (mode == "translate") {
    res = use_coreset ? best_translation_coreset(k, P, Q, o.eps, o.delta, o.seed)
                      : best_translation(k, P, Q, o.eps);
  } else if (mode == "rigid") {
    res = use_coreset ? best_rigid_motion_coreset(k, P, Q, o.eps, o.delta, o.seed)
                      : best_rigid_motion(k, P, Q, o.eps);
  } else {
    throw error(errc::invalid_argument, "unknown mode '" + mode + "'");
  }
  double ms = now_ms() - t0;

  json rep;
  rep["command"] = "align";
  rep["mode"] = mode;
  rep["coreset"] = use_coreset;
  rep["achieved_d_k_sq"] = res.dk2;
  rep["kappa"] = res.kappa;
  rep["motion"] = motion_json(res.motion);
  rep["candidates_evaluated"] = res.candidates_evaluated;
  rep["params"] = {{"eps", o.eps},   {"delta", o.delta},  {"sigma", o.sigma},
                   {"seed", o.seed}, {"dim", P.dim()},    {"n_p", P.size()},
                   {"n_q", Q.size()}};
  rep["wall_time_ms"] = ms;
  emit(rep, o.out);
  return 0;
}

int run_coreset(const std::string& file_p, const std::string& coreset_out,
                const std::string& report_out, const CommonOpts& o, bool with_balls) {
  apply_threads(o.threads);
  GaussianKernel k(o.sigma);
  WeightedPointSet P = load_point_set(file_p).points;

  double t0 = now_ms();
  std::size_t size = coreset_size_random(o.eps, o.delta, P.dim());
  Coreset S = coreset_random(P, size, o.seed);
  S.epsilon_target = o.eps;
  std::vector<double> queries = default_discrepancy_queries(k, P, o.eps);
  DiscrepancyReport dr;
  dr.kernel_discrepancy = kernel_discrepancy(k, P, S, queries);
  dr.query_count = queries.size() / P.dim();
  if (with_balls) dr.ball_discrepancy = ball_discrepancy(P, S);
  double ms = now_ms() - t0;

  save_point_set_csv(coreset_out, S.subset);

  json rep;
  rep["command"] = "coreset";
  rep["coreset_file"] = coreset_out;
  rep["size"] = S.subset.size();
  rep["parent_size"] = P.size();
  rep["kernel_discrepancy"] = dr.kernel_discrepancy;
  if (with_balls) rep["ball_discrepancy"] = dr.ball_discrepancy;
  rep["query_count"] = dr.query_count;
  rep["params"] = {{"eps", o.eps},   {"delta", o.delta}, {"sigma", o.sigma},
                   {"seed", o.seed}, {"dim", P.dim()}};
  rep["wall_time_ms"] = ms;
  emit(rep, report_out);
  return 0;
}

int run_embed(const std::string& file_p, const std::string& basis_name, std::size_t rho, int tau,
              const std::string& center_str, const CommonOpts& o) {
  apply_threads(o.threads);
  require(!o.out.empty(), errc::invalid_argument, "embed requires --out");
  WeightedPointSet P = load_point_set(file_p).points;

  std::vector<double> center;
  if (!center_str.empty()) {
    std::stringstream ss(center_str);
    std::string tok;
    while (std::getline(ss, tok, ',')) center.push_back(std::stod(tok));
    require(static_cast<int>(center.size()) == P.dim(), errc::dimension_mismatch,
            "--center arity must match the data dimension");
  } else {
    center = P.centroid();
  }

  FeatureVector fv;
  if (basis_name == "rff") {
    if (rho == 0) rho = rff_dimension(o.eps, o.delta, P.size());
    FourierBasis basis = draw_frequencies(o.sigma, P.dim(), rho, o.seed);
    fv = rff_embed(basis, P);
  } else if (basis_name == "ifgt") {
    if (tau == 0) {
      double Delta = std::max(2.0 * P.radius_about(center) / o.sigma, 1e-9);
      tau = ifgt_choose_tau(o.eps, Delta);
    }
    TaylorBasis basis = make_taylor_basis(o.sigma, tau, center);
    fv = ifgt_embed(basis, P);
  } else {
    throw error(errc::invalid_argument, "unknown basis '" + basis_name + "'");
  }
  write_feature_vector_file(o.out, fv);
  return 0;
}

int run_bench(const std::string& suite, const std::string& sizes_str, const CommonOpts& o) {
  apply_threads(o.threads);
  require(!suite.empty(), errc::invalid_argument, "bench requires a suite name");
  require(suite == "scaling", errc::invalid_argument, "unknown bench suite '" + suite + "'");
  std::vector<std::size_t> sizes;
  std::stringstream ss(sizes_str);
  std::string tok;
  while (std::getline(ss, tok, ',')) sizes.push_back(std::stoull(tok));
  if (sizes.empty()) sizes = {2000, 20000};

  std::vector<BenchRow> rows = bench_scaling(sizes, o.eps, o.delta, o.sigma, o.seed);
  std::string csv = bench_csv(rows);
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream os(o.out);
    require(bool(os), errc::io_error, "cannot open " + o.out + " for writing");
    os << csv;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel distance toolkit"};
  app.require_subcommand(1);

  CommonOpts o;

  std::string file_p, file_q, method = "exact", mode = "translate";
  bool use_coreset = false;

  auto* dist = app.add_subcommand("dist", "kernel distance between two point sets");
  dist->add_option("P", file_p, "first point set (CSV or JSON)")->required();
  dist->add_option("Q", file_q, "second point set")->required();
  dist->add_option("--method", method, "exact | wspd | rff | ifgt");
  add_common(dist, o);

  auto* align = app.add_subcommand("align", "minimize the kernel distance under motion");
  align->add_option("P", file_p, "fixed point set")->required();
  align->add_option("Q", file_q, "moving point set")->required();
  align->add_option("--mode", mode, "translate | rigid");
  align->add_flag("--coreset", use_coreset, "search on coresets, evaluate on full sets");
  add_common(align, o);

  std::string coreset_out = "coreset.csv", report_out;
  bool with_balls = false;
  auto* coreset = app.add_subcommand("coreset", "random coreset with a discrepancy report");
  coreset->add_option("P", file_p, "input point set")->required();
  coreset->add_option("--coreset-out", coreset_out, "coreset CSV path");
  coreset->add_option("--report", report_out, "report JSON path (default: stdout)");
  coreset->add_flag("--balls", with_balls, "also compute the exact ball discrepancy");
  add_common(coreset, o);

  std::string basis_name = "rff", center_str;
  std::size_t rho = 0;
  int tau = 0;
  auto* embed = app.add_subcommand("embed", "write a feature-vector binary");
  embed->add_option("P", file_p, "input point set")->required();
  embed->add_option("--basis", basis_name, "rff | ifgt");
  embed->add_option("--rho", rho, "feature dimension (rff; default from --eps/--delta)");
  embed->add_option("--tau", tau, "truncation degree (ifgt; default from --eps)");
  embed->add_option("--center", center_str, "expansion center, comma-separated (ifgt)");
  add_common(embed, o);

  std::string suite = "scaling", sizes_str;
  auto* bench = app.add_subcommand("bench", "timing tables (CSV)");
  bench->add_option("--suite", suite, "suite name (scaling)");
  bench->add_option("--sizes", sizes_str, "comma-separated instance sizes");
  add_common(bench, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    return 3;
  }

  try {
    if (app.got_subcommand(dist)) return run_dist(file_p, file_q, method, o);
    if (app.got_subcommand(align)) return run_align(file_p, file_q, mode, use_coreset, o);
    if (app.got_subcommand(coreset)) return run_coreset(file_p, coreset_out, report_out, o, with_balls);
    if (app.got_subcommand(embed)) return run_embed(file_p, basis_name, rho, tau, center_str, o);
    if (app.got_subcommand(bench)) return run_bench(suite, sizes_str, o);
  } catch (const error& e) {
    std::cerr << "error: " << e.what();
    if (e.line() >= 0) std::cerr << " (line " << e.line() << ")";
    std::cerr << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
