#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "distilab/construction.hpp"
#include "distilab/distillation.hpp"
#include "distilab/network.hpp"
#include "distilab/random.hpp"
#include "distilab/task_model.hpp"
#include "distilab/training.hpp"

namespace distilab {

struct TaskSpec {
  int d = 10;
  int r = 1;
  std::string link = "he2/2+he4/24";
  double zeta = 0.0;
};

struct PlanOverrides {
  std::array<std::array<RoleHyper, 4>, 2> roles{};
  std::optional<double> xi_const;
  std::optional<double> retrain_xi_const;
  std::optional<std::vector<double>> lambda_grid;
};

struct ExperimentConfig {
  TaskSpec task;
  long long N = 100000;
  long long Jstar = 100000;
  int L = 100;
  std::optional<int> J;   // default ceil(2 Jstar / L)
  std::optional<int> M1;  // default from the phase plan
  std::optional<int> M2;  // size of the RandomII set; default |C|
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string t1_mode = "surrogate";     // surrogate | relu
  std::string t2_mode = "gm";            // gm | pm
  std::string construction = "compact";  // compact | per_point
  Surrogate surrogate{SurrogateKind::softplus, 8.0};
  std::optional<LabelMode> label_mode;  // default constant 1 (r = 1) or chi (r > 1)
  long long test_size = 10000;
  bool baselines = true;
  PlanOverrides plan;
  std::string output_dir = "distilab_out";
  std::string transfer_link = "he3/sqrt(6)";
  std::vector<long long> transfer_n{10, 100, 1000};
  double finetune_tol = 1e-6;
  std::string rank_axis = "L";  // L | M1
  std::vector<int> rank_sizes{10, 100};
  double recon_tol = 1e-3;
};

inline TaskMode task_mode(const ExperimentConfig& c) { return c.task.r == 1 ? TaskMode::single : TaskMode::multi; }

inline int resolve_J(const ExperimentConfig& c) {
  if (c.J) return *c.J;
  return static_cast<int>(std::max<long long>(1, (2 * c.Jstar + c.L - 1) / c.L));
}

inline PhasePlan resolve_plan(const ExperimentConfig& c) {
  PhasePlan p = default_plan(c.task.d, c.task.r, task_mode(c));
  for (int t = 0; t < 2; ++t)
    for (int role = 0; role < 4; ++role) {
      const RoleHyper& o = c.plan.roles[t][role];
      RoleHyper& h = p.roles[t][role];
      if (o.eta) {
        h.eta = o.eta;
        if (t == 0 && !o.lambda) h.lambda = 1.0 / *o.eta;
      }
      if (o.lambda) h.lambda = o.lambda;
      if (o.xi) h.xi = o.xi;
    }
  if (c.plan.xi_const) p.xi_const = *c.plan.xi_const;
  if (c.plan.retrain_xi_const) p.retrain_xi_const = *c.plan.retrain_xi_const;
  if (c.plan.lambda_grid) p.lambda_grid = *c.plan.lambda_grid;
  p.J = resolve_J(c);
  if (c.M1) p.M1 = *c.M1;
  return p;
}

namespace tags {
enum : std::uint64_t { task = 1, train, test, reference, d1, bias, t2, random_pick, transfer_data, scratch, init_base = 1000 };
}

// Everything produced by the first phase.
struct StageT1 {
  MultiIndexTask task;
  LabeledSet train;
  PhasePlan plan;
  NetworkParams reference;  // (a, W^(0), 0)
  DistilledSet D0;
  DistilledSet D1;
  NetworkParams theta1;  // (a, W^(1), b^(0))
  double cos_beta = 0.0;
};

// |cos| to beta for r = 1, norm fraction inside span(B) otherwise; averaged over points.
inline double subspace_alignment(const MultiIndexTask& task, const Eigen::MatrixXd& X) {
  double acc = 0.0;
  for (Eigen::Index m = 0; m < X.rows(); ++m) {
    const Eigen::VectorXd x = X.row(m).transpose();
    const double n = x.norm();
    if (n > 0) acc += (task.B.transpose() * x).norm() / n;
  }
  return X.rows() ? acc / static_cast<double>(X.rows()) : 0.0;
}

inline StageT1 run_stage_t1(const ExperimentConfig& cfg, std::uint64_t seed) {
  StageT1 s;
  s.task = make_task(cfg.task.d, cfg.task.r, parse_link(cfg.task.link, cfg.task.r), cfg.task.zeta,
                     derive_seed(seed, tags::task));
  s.train = preprocess(sample_dataset(s.task, cfg.N, derive_seed(seed, tags::train)));
  s.plan = resolve_plan(cfg);
  const int d = cfg.task.d;
  s.reference = init_symmetric(d, cfg.L, derive_seed(seed, tags::reference));

  std::vector<NetworkParams> inits;
  inits.reserve(static_cast<std::size_t>(s.plan.J));
  for (int j = 0; j < s.plan.J; ++j) inits.push_back(init_symmetric(d, cfg.L, derive_seed(seed, tags::init_base + j)));
  const std::vector<Eigen::MatrixXd> grads = teacher_grads_t1(inits, s.train);

  const LabelMode label = cfg.label_mode ? *cfg.label_mode
                                         : (cfg.task.r == 1 ? LabelMode::constant(1.0) : LabelMode::chi());
  s.D0 = init_D1(s.plan.M1, d, label, derive_seed(seed, tags::d1));
  const RoleHyper& hD = s.plan.at(1, Role::distill);
  if (cfg.t1_mode == "relu")
    s.D1 = gm_t1_relu(s.D0, inits, grads, *hD.eta);
  else if (cfg.t1_mode == "surrogate")
    s.D1 = gm_t1(s.D0, inits, grads, cfg.surrogate, *hD.eta, *hD.lambda);
  else
    throw std::invalid_argument("t1_mode must be 'surrogate' or 'relu'");
  s.cos_beta = subspace_alignment(s.task, s.D1.X);

  s.theta1 = s.reference;
  s.theta1.W = retrain_t1(s.reference, s.D1, *s.plan.at(1, Role::retrain).eta).W;
  s.theta1 = reinit_bias(s.theta1, derive_seed(seed, tags::bias));
  return s;
}

// Test MSE against the noiseless target, predictions un-preprocessed.
struct Evaluator {
  Eigen::MatrixXd X;
  Eigen::VectorXd f;
  Preprocessing meta;

  static Evaluator make(const MultiIndexTask& task, const Preprocessing& meta, long long n, std::uint64_t seed) {
    MultiIndexTask clean = task;
    clean.zeta = 0.0;
    LabeledSet T = sample_dataset(clean, n, seed);
    return Evaluator{std::move(T.X), std::move(T.y), meta};
  }

  double mse(const NetworkParams& p) const {
    Eigen::VectorXd pred = forward_batch(p, X);
    pred.array() += meta.alpha;
    pred += X * meta.gamma;
    return (pred - f).squaredNorm() / static_cast<double>(f.size());
  }
};

struct RunReport {
  std::uint64_t seed = 0;
  long long N = 0, Jstar = 0;
  int J = 0, L = 0, M1 = 0, M2 = 0;
  std::map<std::string, double> mse;  // full, distilled, random1, random2, teacher_t2
  double cos_beta = 0.0;
  bool rank_ok = false;
  long long rank = 0, max_rank = 0;
  double recon_gap = 0.0;  // |distilled - teacher_t2| / teacher_t2
  long long memory_numbers = 0;
  double lambda2 = 0.0, eta2 = 0.0;
  long long xi2 = 0, xiR = 0;
  double wall_ms = 0.0;
};

inline bool same_results(const RunReport& a, const RunReport& b) {
  return a.seed == b.seed && a.mse == b.mse && a.cos_beta == b.cos_beta && a.rank_ok == b.rank_ok &&
         a.rank == b.rank && a.recon_gap == b.recon_gap && a.M2 == b.M2 && a.xi2 == b.xi2 && a.xiR == b.xiR;
}

namespace detail {

inline double teacher_ridge_mse(const NetworkParams& theta1, const StageT1& s, const Evaluator& ev, std::uint64_t seed) {
  TeacherT2 t = teacher_train_t2(theta1, s.train, s.plan, 0, seed);
  NetworkParams p = theta1;
  p.a = t.AT.col(0);
  return ev.mse(p);
}

}  // namespace detail

inline RunReport run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  StageT1 s = run_stage_t1(cfg, seed);
  RunReport rep;
  rep.seed = seed;
  rep.N = cfg.N;
  rep.Jstar = cfg.Jstar;
  rep.J = s.plan.J;
  rep.L = cfg.L;
  rep.M1 = s.plan.M1;
  rep.cos_beta = s.cos_beta;

  const NetworkParams& th = s.theta1;
  const std::uint64_t t2seed = derive_seed(seed, tags::t2);
  const TeacherT2 teach = teacher_train_t2(th, s.train, s.plan, s.plan.J, t2seed);
  rep.lambda2 = teach.setting.lambda;
  rep.eta2 = teach.setting.eta;
  rep.xi2 = teach.setting.xi;

  const ConstructionStrategy strat =
      cfg.construction == "per_point" ? ConstructionStrategy::per_point : ConstructionStrategy::compact;
  if (cfg.construction != "per_point" && cfg.construction != "compact")
    throw std::invalid_argument("construction must be 'compact' or 'per_point'");
  D2Init init = init_D2(th.W, th.b, strat, s.D1);
  DistilledSet D2 = init.set;
  const int M2 = static_cast<int>(D2.size());
  rep.M2 = M2;
  const Eigen::MatrixXd Kt = kernel(th, D2.X);
  const Eigen::MatrixXd A0 = teach.A0.rightCols(s.plan.J);
  D2.y = label_D2_init(th, A0, D2.X);

  NetworkParams distilled = th;
  const RoleHyper& hR = s.plan.at(2, Role::retrain);
  const RoleHyper& hD = s.plan.at(2, Role::distill);
  if (cfg.t2_mode == "gm") {
    const double etaD = hD.eta ? *hD.eta : M2 * teach.setting.eta;
    DistilledSet D2g = gm_t2(D2, A0, teach.grad_sums.rightCols(s.plan.J), Kt, etaD);
    GdRetrainOptions o;
    o.eta = hR.eta;
    o.xi = hR.xi;
    o.xi_const = s.plan.retrain_xi_const;
    const GdRetrainResult r = retrain_t2_gd(th, D2g, o);
    distilled.a = r.a;
    rep.xiR = r.xi;
  } else if (cfg.t2_mode == "pm") {
    RidgeProblem rp = RidgeProblem::from_kernel(Kt, D2.y);
    const double etaR = hR.eta ? *hR.eta : stable_step(rp.gram, 0.0);
    PmOptions o;
    o.eta_S = etaR;
    o.eta_D = hD.eta;
    // The plan's single-step gradient-matching defaults (lambda 0, xi 1) mean "auto" here.
    if (hD.lambda && *hD.lambda > 0) o.lambda_D = hD.lambda;
    if (hD.xi && *hD.xi > 1) o.xi_D = hD.xi;
    const PmResult pm = pm_t2(D2, s.train, th, o);
    distilled.a = retrain_t2_onestep(th, pm.set, etaR);
    rep.xiR = 1;
  } else {
    throw std::invalid_argument("t2_mode must be 'gm' or 'pm'");
  }

  const RegularityResult reg = check_regularity(Kt, th.W, th.b);
  rep.rank_ok = reg.ok;
  rep.rank = reg.rank;
  rep.max_rank = reg.max_rank;

  const Evaluator ev = Evaluator::make(s.task, *s.train.meta, cfg.test_size, derive_seed(seed, tags::test));
  NetworkParams teacher = th;
  teacher.a = teach.AT.col(0);
  rep.mse["teacher_t2"] = ev.mse(teacher);
  rep.mse["distilled"] = ev.mse(distilled);
  rep.recon_gap = std::abs(rep.mse["distilled"] - rep.mse["teacher_t2"]) / rep.mse["teacher_t2"];
  const int d = cfg.task.d;
  rep.memory_numbers = static_cast<long long>(s.plan.M1) * (d + 1) + M2 +
                       (strat == ConstructionStrategy::compact ? d : static_cast<long long>(s.plan.M1) * d);

  if (cfg.baselines) {
    const double etaR1 = *s.plan.at(1, Role::retrain).eta;
    // Random training points stand in for the distilled ones, drawn without replacement.
    const int M2r = cfg.M2 ? *cfg.M2 : M2;
    const Eigen::Index need = s.plan.M1 + M2r;
    if (need > s.train.size()) throw std::invalid_argument("baselines need more training points than available");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(s.train.size()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(seed, tags::random_pick);
    for (Eigen::Index k = 0; k < need; ++k) {
      std::uniform_int_distribution<Eigen::Index> pick(k, s.train.size() - 1);
      std::swap(idx[k], idx[pick(rng)]);
    }
    DistilledSet R1;
    R1.phase = 1;
    R1.X.resize(s.plan.M1, d);
    R1.y.resize(s.plan.M1);
    for (int m = 0; m < s.plan.M1; ++m) {
      R1.X.row(m) = s.train.X.row(idx[m]);
      R1.y(m) = s.train.y(idx[m]);
    }
    NetworkParams thr = th;
    thr.W = retrain_t1(s.reference, R1, etaR1).W;
    rep.mse["random1"] = detail::teacher_ridge_mse(thr, s, ev, t2seed);

    DistilledSet R2;
    R2.phase = 2;
    R2.X.resize(M2r, d);
    R2.y.resize(M2r);
    for (int m = 0; m < M2r; ++m) {
      R2.X.row(m) = s.train.X.row(idx[s.plan.M1 + m]);
      R2.y(m) = s.train.y(idx[s.plan.M1 + m]);
    }
    GdRetrainOptions o;
    o.xi_const = s.plan.retrain_xi_const;
    NetworkParams r2 = thr;
    r2.a = retrain_t2_gd(thr, R2, o).a;
    rep.mse["random2"] = ev.mse(r2);

    const RoleHyper& hT = s.plan.at(1, Role::teacher);
    NetworkParams full = th;
    full.W = phase1_step(s.reference, s.train, *hT.eta, *hT.lambda).params.W;
    rep.mse["full"] = detail::teacher_ridge_mse(full, s, ev, t2seed);
  }
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

inline std::vector<RunReport> sweep(const ExperimentConfig& cfg, const std::vector<long long>& Ns,
                                    const std::vector<long long>& Jstars) {
  std::vector<RunReport> out;
  for (long long N : Ns)
    for (long long Js : Jstars)
      for (std::uint64_t seed : cfg.seeds) {
        ExperimentConfig c = cfg;
        c.N = N;
        c.Jstar = Js;
        out.push_back(run_pipeline(c, seed));
      }
  return out;
}

struct TransferRow {
  std::uint64_t seed = 0;
  long long n = 0;
  double mse_pretrained = 0.0;
  double mse_scratch = 0.0;
  double cos_beta = 0.0;
  double wall_ms = 0.0;
};

// Second-layer ridge on n samples with the grid-selected ridge, run until the contraction reaches tol.
inline double finetune_mse(const NetworkParams& theta, const LabeledSet& Dn, const Evaluator& ev,
                           const std::vector<double>& grid, double tol, std::uint64_t seed) {
  const Eigen::MatrixXd K = kernel(theta, Dn.X);
  RidgeProblem rp = RidgeProblem::from_kernel(K, Dn.y);
  const double lambda = select_ridge_lambda(K, Dn.y, grid, seed);
  const double eta = stable_step(rp.gram, lambda);
  const long long xi = static_cast<long long>(std::ceil(std::log(tol) / std::log1p(-eta * lambda)));
  RidgeSolver solver(std::move(rp), eta, lambda);
  NetworkParams p = theta;
  p.a = solver.run(Eigen::VectorXd::Zero(theta.width()), xi).a;
  return ev.mse(p);
}

inline std::vector<TransferRow> transfer(const ExperimentConfig& cfg, const std::vector<long long>& ns) {
  std::vector<TransferRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    const auto start = std::chrono::steady_clock::now();
    const StageT1 s = run_stage_t1(cfg, seed);
    MultiIndexTask g = s.task;
    g.link = parse_link(cfg.transfer_link, g.r);
    NetworkParams scratch = reinit_bias(init_symmetric(cfg.task.d, cfg.L, derive_seed(seed, tags::scratch)),
                                        derive_seed(seed, tags::bias));
    const double t1_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    for (long long n : ns) {
      const auto t0 = std::chrono::steady_clock::now();
      const LabeledSet Dn = preprocess(sample_dataset(g, n, derive_seed(seed, tags::transfer_data + 100 * n)));
      const Evaluator ev = Evaluator::make(g, *Dn.meta, cfg.test_size, derive_seed(seed, tags::test));
      TransferRow r;
      r.seed = seed;
      r.n = n;
      r.cos_beta = s.cos_beta;
      const std::uint64_t fs = derive_seed(seed, tags::random_pick + n);
      r.mse_pretrained = finetune_mse(s.theta1, Dn, ev, s.plan.lambda_grid, cfg.finetune_tol, fs);
      r.mse_scratch = finetune_mse(scratch, Dn, ev, s.plan.lambda_grid, cfg.finetune_tol, fs);
      r.wall_ms = t1_ms + std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      rows.push_back(r);
    }
  }
  return rows;
}

struct RankRow {
  int size = 0;
  RunReport report;
  bool recon_ok = false;
};

inline std::vector<RankRow> rank_table(const ExperimentConfig& cfg) {
  std::vector<RankRow> rows;
  for (int size : cfg.rank_sizes)
    for (std::uint64_t seed : cfg.seeds) {
      ExperimentConfig c = cfg;
      c.baselines = false;
      if (cfg.rank_axis == "L")
        c.L = size;
      else if (cfg.rank_axis == "M1")
        c.M1 = size;
      else
        throw std::invalid_argument("rank_axis must be 'L' or 'M1'");
      RankRow r;
      r.size = size;
      r.report = run_pipeline(c, seed);
      r.recon_ok = r.report.recon_gap <= cfg.recon_tol;
      rows.push_back(std::move(r));
    }
  return rows;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- configuration ----------------------------------------------------------------------------

namespace detail {

inline const char* role_name(int r) {
  static const char* names[] = {"teacher", "student", "distill", "retrain"};
  return names[r];
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
void read_val(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("task")) {
    const auto& t = j.at("task");
    detail::read_val(t, "d", c.task.d);
    detail::read_val(t, "r", c.task.r);
    detail::read_val(t, "link", c.task.link);
    detail::read_val(t, "zeta", c.task.zeta);
  }
  detail::read_val(j, "N", c.N);
  detail::read_val(j, "Jstar", c.Jstar);
  detail::read_val(j, "L", c.L);
  detail::read_opt(j, "J", c.J);
  detail::read_opt(j, "M1", c.M1);
  detail::read_opt(j, "M2", c.M2);
  detail::read_val(j, "seeds", c.seeds);
  detail::read_val(j, "t1_mode", c.t1_mode);
  detail::read_val(j, "t2_mode", c.t2_mode);
  detail::read_val(j, "construction", c.construction);
  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    std::string kind = "softplus";
    detail::read_val(s, "kind", kind);
    c.surrogate.kind = kind == "relu" ? SurrogateKind::relu : SurrogateKind::softplus;
    detail::read_val(s, "gamma_s", c.surrogate.gamma_s);
  }
  if (j.contains("label_mode")) {
    const auto& s = j.at("label_mode");
    std::string kind = s.value("kind", std::string("constant"));
    if (kind == "chi")
      c.label_mode = LabelMode::chi();
    else
      c.label_mode = LabelMode::constant(s.value("value", 1.0));
  }
  detail::read_val(j, "test_size", c.test_size);
  detail::read_val(j, "baselines", c.baselines);
  detail::read_val(j, "output_dir", c.output_dir);
  detail::read_val(j, "transfer_link", c.transfer_link);
  detail::read_val(j, "transfer_n", c.transfer_n);
  detail::read_val(j, "finetune_tol", c.finetune_tol);
  detail::read_val(j, "rank_axis", c.rank_axis);
  detail::read_val(j, "rank_sizes", c.rank_sizes);
  detail::read_val(j, "recon_tol", c.recon_tol);
  if (j.contains("plan")) {
    const auto& p = j.at("plan");
    for (int t = 0; t < 2; ++t) {
      const std::string tk = t == 0 ? "t1" : "t2";
      if (!p.contains(tk)) continue;
      for (int r = 0; r < 4; ++r) {
        if (!p.at(tk).contains(detail::role_name(r))) continue;
        const auto& h = p.at(tk).at(detail::role_name(r));
        detail::read_opt(h, "eta", c.plan.roles[t][r].eta);
        detail::read_opt(h, "lambda", c.plan.roles[t][r].lambda);
        detail::read_opt(h, "xi", c.plan.roles[t][r].xi);
      }
    }
    detail::read_opt(p, "xi_const", c.plan.xi_const);
    detail::read_opt(p, "retrain_xi_const", c.plan.retrain_xi_const);
    detail::read_opt(p, "lambda_grid", c.plan.lambda_grid);
  }
  if (c.seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
  if (c.L < 2 || c.L % 2) throw std::invalid_argument("config: L must be even and positive");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  return config_from_json(nlohmann::json::parse(is));
}

// ---- reporting --------------------------------------------------------------------------------

inline const std::vector<std::string>& paradigm_names() {
  static const std::vector<std::string> names{"full", "distilled", "random1", "random2", "teacher_t2"};
  return names;
}

inline void write_runs_csv(std::ostream& os, const std::vector<RunReport>& runs) {
  os << std::setprecision(10);
  os << "run_id,seed,paradigm,N,Jstar,mse,cos_beta,rank_ok,wall_ms\n";
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const RunReport& r = runs[k];
    for (const auto& name : paradigm_names()) {
      auto it = r.mse.find(name);
      if (it == r.mse.end()) continue;
      os << k << ',' << r.seed << ',' << name << ',' << r.N << ',' << r.Jstar << ',' << it->second << ','
         << r.cos_beta << ',' << (r.rank_ok ? 1 : 0) << ',' << r.wall_ms << '\n';
    }
  }
}

inline nlohmann::json runs_summary(const std::vector<RunReport>& runs) {
  std::map<std::pair<long long, long long>, std::vector<const RunReport*>> cells;
  for (const auto& r : runs) cells[{r.N, r.Jstar}].push_back(&r);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, rs] : cells) {
    nlohmann::json cell;
    cell["N"] = key.first;
    cell["Jstar"] = key.second;
    cell["runs"] = rs.size();
    std::vector<double> cosv, rank;
    for (const auto* r : rs) {
      cosv.push_back(r->cos_beta);
      rank.push_back(r->rank_ok ? 1.0 : 0.0);
    }
    cell["median_cos_beta"] = median(cosv);
    cell["rank_rate"] = std::accumulate(rank.begin(), rank.end(), 0.0) / static_cast<double>(rank.size());
    for (const auto& name : paradigm_names()) {
      std::vector<double> v;
      for (const auto* r : rs)
        if (auto it = r->mse.find(name); it != r->mse.end()) v.push_back(it->second);
      if (!v.empty()) cell["median_mse"][name] = median(v);
    }
    out.push_back(cell);
  }
  return nlohmann::json{{"cells", out}};
}

inline void write_transfer_csv(std::ostream& os, const std::vector<TransferRow>& rows, long long Jstar) {
  os << std::setprecision(10);
  os << "run_id,seed,paradigm,N,Jstar,mse,cos_beta,rank_ok,wall_ms\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    os << k << ',' << r.seed << ",pretrained," << r.n << ',' << Jstar << ',' << r.mse_pretrained << ',' << r.cos_beta
       << ",," << r.wall_ms << '\n';
    os << k << ',' << r.seed << ",scratch," << r.n << ',' << Jstar << ',' << r.mse_scratch << ',' << r.cos_beta
       << ",," << r.wall_ms << '\n';
  }
}

inline nlohmann::json transfer_summary(const std::vector<TransferRow>& rows) {
  std::map<long long, std::pair<std::vector<double>, std::vector<double>>> by_n;
  for (const auto& r : rows) {
    by_n[r.n].first.push_back(r.mse_pretrained);
    by_n[r.n].second.push_back(r.mse_scratch);
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [n, v] : by_n)
    out.push_back({{"n", n}, {"median_mse_pretrained", median(v.first)}, {"median_mse_scratch", median(v.second)}});
  return nlohmann::json{{"cells", out}};
}

inline void write_rank_csv(std::ostream& os, const std::vector<RankRow>& rows, const std::string& axis) {
  os << std::setprecision(10);
  os << axis << ",seed,rank,max_rank,rank_ok,mse_distilled,mse_teacher_t2,recon_gap,recon_ok,wall_ms\n";
  for (const auto& r : rows) {
    const auto& p = r.report;
    os << r.size << ',' << p.seed << ',' << p.rank << ',' << p.max_rank << ',' << (p.rank_ok ? 1 : 0) << ','
       << p.mse.at("distilled") << ',' << p.mse.at("teacher_t2") << ',' << p.recon_gap << ',' << (r.recon_ok ? 1 : 0)
       << ',' << p.wall_ms << '\n';
  }
}

inline nlohmann::json rank_summary(const std::vector<RankRow>& rows, const std::string& axis) {
  std::map<int, std::pair<int, std::pair<int, int>>> agg;  // size -> (runs, (rank ok, recon ok))
  for (const auto& r : rows) {
    auto& a = agg[r.size];
    ++a.first;
    a.second.first += r.report.rank_ok;
    a.second.second += r.recon_ok;
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [size, a] : agg)
    out.push_back({{axis, size},
                   {"runs", a.first},
                   {"rank_rate", static_cast<double>(a.second.first) / a.first},
                   {"recon_rate", static_cast<double>(a.second.second) / a.first}});
  return nlohmann::json{{"cells", out}};
}

}  // namespace distilab
