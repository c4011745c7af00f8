#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "distilab/distilab.hpp"

namespace fs = std::filesystem;
using namespace distilab;

namespace {

std::vector<long long> parse_list(const std::string& s) {
  std::vector<long long> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    out.push_back(static_cast<long long>(std::stod(cell)));
  }
  if (out.empty()) throw std::invalid_argument("empty list '" + s + "'");
  return out;
}

Surrogate parse_surrogate(const std::string& s) {
  if (s == "relu") return {SurrogateKind::relu, 0.0};
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  if (kind != "softplus") throw std::invalid_argument("surrogate must be relu or softplus[:gamma]");
  Surrogate h{SurrogateKind::softplus, 8.0};
  if (colon != std::string::npos) h.gamma_s = std::stod(s.substr(colon + 1));
  return h;
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  os << std::setw(2) << j << '\n';
}

void write_runs(const fs::path& dir, const std::string& stem, const std::vector<RunReport>& runs) {
  std::ofstream csv(dir / (stem + ".csv"));
  write_runs_csv(csv, runs);
  write_json(dir / (stem + "_summary.json"), runs_summary(runs));
  std::cout << "wrote " << (dir / (stem + ".csv")).string() << " and " << (dir / (stem + "_summary.json")).string()
            << '\n';
}

int cmd_distill(const std::string& config, bool save_sets) {
  const ExperimentConfig cfg = load_config(config);
  const fs::path dir = prepare_dir(cfg.output_dir);
  std::vector<RunReport> runs;
  for (auto seed : cfg.seeds) {
    runs.push_back(run_pipeline(cfg, seed));
    const auto& r = runs.back();
    std::cout << "seed " << seed << ": distilled mse " << r.mse.at("distilled") << ", teacher_t2 mse "
              << r.mse.at("teacher_t2") << ", |cos| " << r.cos_beta << ", rank " << r.rank << '/' << r.max_rank
              << '\n';
    if (save_sets) {
      const StageT1 s = run_stage_t1(cfg, seed);
      const std::string tag = "seed" + std::to_string(seed);
      io::write_distilled_set((dir / ("D1_" + tag + ".csv")).string(), s.D1);
      io::write_network((dir / ("theta1_" + tag + ".csv")).string(), s.theta1);
    }
  }
  write_runs(dir, "distill", runs);
  return 0;
}

int cmd_sweep(const std::string& config, const std::vector<std::string>& axes) {
  ExperimentConfig cfg = load_config(config);
  std::vector<long long> Ns{cfg.N}, Js{cfg.Jstar};
  for (const auto& a : axes) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--axis expects NAME=v1,v2,...");
    const std::string name = a.substr(0, eq);
    const auto vals = parse_list(a.substr(eq + 1));
    if (name == "N")
      Ns = vals;
    else if (name == "Jstar")
      Js = vals;
    else
      throw std::invalid_argument("unknown axis '" + name + "' (use N or Jstar)");
  }
  const fs::path dir = prepare_dir(cfg.output_dir);
  write_runs(dir, "sweep", sweep(cfg, Ns, Js));
  return 0;
}

int cmd_transfer(const std::string& config, const std::string& ns) {
  const ExperimentConfig cfg = load_config(config);
  const auto n = ns.empty() ? cfg.transfer_n : parse_list(ns);
  const fs::path dir = prepare_dir(cfg.output_dir);
  const auto rows = transfer(cfg, n);
  std::ofstream csv(dir / "transfer.csv");
  write_transfer_csv(csv, rows, cfg.Jstar);
  write_json(dir / "transfer_summary.json", transfer_summary(rows));
  std::cout << transfer_summary(rows).dump(2) << '\n';
  return 0;
}

int cmd_rank(const std::string& config) {
  const ExperimentConfig cfg = load_config(config);
  const fs::path dir = prepare_dir(cfg.output_dir);
  const auto rows = rank_table(cfg);
  std::ofstream csv(dir / "rank.csv");
  write_rank_csv(csv, rows, cfg.rank_axis);
  const auto summary = rank_summary(rows, cfg.rank_axis);
  write_json(dir / "rank_summary.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_oracle(int d, const std::string& link, const std::string& surrogate, long long samples, long long nx,
               std::uint64_t seed, const std::string& out) {
  const Surrogate h = parse_surrogate(surrogate);
  const Activation act = Activation::from(h);
  const MultiIndexTask task = make_task(d, 1, parse_link(link, 1), 0.0, seed);
  Rng rng = make_rng(seed, 99);
  const Eigen::VectorXd xt = uniform_sphere(rng, d);
  const QuadratureRule rule = sphere_rule(d);
  const Eigen::VectorXd closed = popgrad_single_closed(task, xt, act, rule);
  const McEstimate mc = popgrad_mc(task, xt, act, std::max<long long>(2, samples / nx), nx, seed);

  std::ofstream file;
  if (!out.empty()) file.open(out);
  std::ostream& os = out.empty() ? std::cout : file;
  os << std::setprecision(10) << "term,closed,mc,se,gap\n";
  for (int k = 0; k < d; ++k)
    os << "G[" << k << "]," << closed(k) << ',' << mc.mean(k) << ',' << mc.se(k) << ','
       << std::abs(closed(k) - mc.mean(k)) << '\n';
  const double combined = mc.se.norm();
  os << "G_norm," << closed.norm() << ',' << mc.mean.norm() << ',' << combined << ',' << (closed - mc.mean).norm()
     << '\n';
  os << "c_d," << leading_coefficient(d, act) << ",,,\n";
  for (const auto& row : ibp_suite(act, d)) os << '"' << row.name << "\"," << row.lhs << ',' << row.rhs << ",0," << row.gap << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distilab: progressive dataset distillation laboratory"};
  app.require_subcommand(1);

  std::string config;
  bool save_sets = false;
  auto* distill = app.add_subcommand("distill", "run the full pipeline for every seed in the config");
  distill->add_option("--config", config, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
  distill->add_flag("--save-sets", save_sets, "also write the first distilled set and network per seed");

  std::vector<std::string> axes;
  auto* sw = app.add_subcommand("sweep", "grid over N and Jstar");
  sw->add_option("--config", config, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
  sw->add_option("--axis", axes, "axis values, e.g. N=100,1000 or Jstar=1000,10000");

  std::string ns;
  auto* tr = app.add_subcommand("transfer", "fine-tune on a new target from the first distilled set");
  tr->add_option("--config", config, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
  tr->add_option("--n", ns, "comma-separated fine-tuning sample sizes");

  auto* rk = app.add_subcommand("rank-check", "regularity and reconstruction rates over sizes and seeds");
  rk->add_option("--config", config, "JSON experiment configuration")->required()->check(CLI::ExistingFile);

  int d = 32;
  std::string link = "he2/sqrt(2)", surrogate = "softplus:8", out;
  long long samples = 10000000, nx = 1000;
  std::uint64_t seed = 1;
  auto* orc = app.add_subcommand("oracle", "closed-form population gradient against Monte Carlo");
  orc->add_option("--d", d, "ambient dimension")->check(CLI::Range(3, 100000));
  orc->add_option("--link", link, "single-index link, e.g. he2, he2/2+he4/24");
  orc->add_option("--surrogate", surrogate, "softplus[:gamma]");
  orc->add_option("--samples", samples, "total Monte-Carlo samples");
  orc->add_option("--nx", nx, "inputs per sampled weight");
  orc->add_option("--seed", seed, "random seed");
  orc->add_option("--out", out, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*distill) return cmd_distill(config, save_sets);
    if (*sw) return cmd_sweep(config, axes);
    if (*tr) return cmd_transfer(config, ns);
    if (*rk) return cmd_rank(config);
    if (*orc) return cmd_oracle(d, link, surrogate, samples, nx, seed, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
