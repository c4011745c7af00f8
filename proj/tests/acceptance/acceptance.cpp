// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if every requested criterion passes.
//   acceptance --criterion N     run a single criterion
//   acceptance                   run all of them
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "distilab/distilab.hpp"

using namespace distilab;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

ExperimentConfig base_config() {
  ExperimentConfig c;
  c.task = TaskSpec{10, 1, "he2/2+he4/24", 0.0};
  return c;
}

NetworkParams random_params(int d, int L, Rng& rng) {
  NetworkParams p;
  p.W = gaussian_matrix(rng, d, L);
  p.a = gaussian_vector(rng, L);
  p.b = 0.5 * gaussian_vector(rng, L);
  return p;
}

LabeledSet random_set(int n, int d, Rng& rng) {
  LabeledSet D;
  D.X = gaussian_matrix(rng, n, d);
  D.y = gaussian_vector(rng, n);
  return D;
}

// ---- 1, 2: regularity and reconstruction rates ------------------------------------------------

std::vector<RankRow> rank_rows() {
  ExperimentConfig c = base_config();
  c.N = 10000;
  c.Jstar = 10000;
  c.seeds.clear();
  for (std::uint64_t s = 1; s <= 20; ++s) c.seeds.push_back(s);
  c.rank_sizes = {10, 100};
  return rank_table(c);
}

Verdict rate_check(bool recon) {
  const auto rows = rank_rows();
  std::map<int, std::pair<int, int>> agg;
  for (const auto& r : rows) {
    auto& a = agg[r.size];
    a.first += recon ? r.recon_ok : r.report.rank_ok;
    ++a.second;
  }
  Verdict v{true, ""};
  for (const auto& [L, a] : agg) {
    v.pass &= a.first >= 19 && a.second == 20;
    v.detail += "L=" + std::to_string(L) + ": " + std::to_string(a.first) + "/" + std::to_string(a.second) + "  ";
  }
  if (recon) {
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, r.report.recon_gap);
    v.detail += "max relative gap " + fmt(worst);
  }
  return v;
}

// ---- 3: second-phase label update against the telescoped closed form --------------------------

Verdict c3() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng = make_rng(seed, 3);
    std::uniform_int_distribution<int> size(2, 8), jn(1, 5);
    const int d = std::max(3, size(rng)), L = size(rng), M = size(rng), J = jn(rng);
    const NetworkParams th = random_params(d, L, rng);
    PhasePlan plan = default_plan(d, 1, TaskMode::single);
    plan.at(2, Role::teacher).lambda = 0.05;
    plan.at(2, Role::teacher).xi = std::uniform_int_distribution<int>(1, 200)(rng);
    const TeacherT2 t = teacher_train_t2(th, random_set(40, d, rng), plan, J, seed);
    DistilledSet D2;
    D2.X = gaussian_matrix(rng, M, d);
    const Eigen::MatrixXd A0 = t.A0.rightCols(J), AT = t.AT.rightCols(J);
    D2.y = label_D2_init(th, A0, D2.X);
    const Eigen::MatrixXd Kt = kernel(th, D2.X);
    const DistilledSet out = gm_t2(D2, A0, t.grad_sums.rightCols(J), Kt, M * t.setting.eta);
    const Eigen::VectorXd closed = Kt.transpose() * AT.rowwise().mean();
    worst = std::max(worst, (out.y - closed).cwiseAbs().maxCoeff() / std::max(1.0, closed.cwiseAbs().maxCoeff()));
  }
  return {worst <= 1e-10, "50 instances, max gap " + fmt(worst)};
}

// ---- 4: pseudoinverse retraining and column-space invariance ----------------------------------

Verdict c4() {
  double worst_pinv = 0.0, worst_span = 0.0;
  int tested = 0;
  for (std::uint64_t seed = 1; tested < 50; ++seed) {
    Rng rng = make_rng(seed, 4);
    std::uniform_int_distribution<int> size(2, 8);
    const int d = size(rng), L = size(rng), M = size(rng);
    const NetworkParams th = random_params(d, L, rng);
    DistilledSet D2;
    D2.X = gaussian_matrix(rng, M, d);
    D2.y = gaussian_vector(rng, M);
    const Eigen::MatrixXd Kt = kernel(th, D2.X);
    if (Kt.squaredNorm() == 0) continue;  // every unit dead on every point: nothing to retrain
    ++tested;
    // Pseudoinverse with the same positivity rule as the solver: sigma^2 > 1e-10 sigma_max^2.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Kt, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd s = svd.singularValues();
    Eigen::Index rk = 0;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(L);
    const Eigen::VectorXd uty = svd.matrixV().transpose() * D2.y;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) * s(i) > 1e-10 * s(0) * s(0)) c(rk++) = uty(i) / s(i);
    const Eigen::VectorXd pinv = svd.matrixU() * c;
    const Eigen::MatrixXd U = svd.matrixU().leftCols(rk);

    const GdRetrainResult r = retrain_t2_gd(th, D2);
    if (pinv.norm() > 0) worst_pinv = std::max(worst_pinv, (r.a - pinv).norm() / pinv.norm());
    auto off_span = [&](const Eigen::VectorXd& a) { return (a - U * (U.transpose() * a)).norm() / std::max(1.0, pinv.norm()); };
    worst_span = std::max(worst_span, off_span(r.a));
    GdRetrainOptions rec;
    rec.xi = std::min<long long>(r.xi, 5000);
    rec.ridge.record = true;
    for (const auto& a : retrain_t2_gd(th, D2, rec).iterates) worst_span = std::max(worst_span, off_span(a));
  }
  return {worst_pinv <= 1e-6 && worst_span <= 1e-10,
          "50 instances, max relative pinv gap " + fmt(worst_pinv) + ", max off-span " + fmt(worst_span)};
}

// ---- 5: alignment of the first distilled point ------------------------------------------------

double median_cos(long long N, long long Js) {
  ExperimentConfig c = base_config();
  c.N = N;
  c.Jstar = Js;
  std::vector<double> v;
  for (std::uint64_t s : c.seeds) v.push_back(run_stage_t1(c, s).cos_beta);
  return median(v);
}

int inversions(const std::vector<double>& v) {
  int n = 0;
  for (std::size_t i = 1; i < v.size(); ++i) n += v[i] < v[i - 1];
  return n;
}

Verdict c5() {
  const std::vector<long long> grid{100, 1000, 10000, 100000};
  std::vector<double> alongN, alongJ;
  for (long long N : grid) alongN.push_back(median_cos(N, 100000));
  for (long long J : grid) alongJ.push_back(J == 100000 ? alongN.back() : median_cos(100000, J));
  const double top = alongN.back();
  const int iN = inversions(alongN), iJ = inversions(alongJ);
  std::string d = "median |cos| at 1e5: " + fmt(top) + "; along N:";
  for (double x : alongN) d += " " + fmt(x);
  d += " (" + std::to_string(iN) + " inversions); along J*:";
  for (double x : alongJ) d += " " + fmt(x);
  d += " (" + std::to_string(iJ) + " inversions)";
  return {top >= 0.9 && iN <= 1 && iJ <= 1, d};
}

// ---- 6: paradigm ordering ---------------------------------------------------------------------

Verdict c6() {
  const ExperimentConfig c = base_config();
  std::map<std::string, std::vector<double>> m;
  for (std::uint64_t s : c.seeds)
    for (const auto& [k, v] : run_pipeline(c, s).mse) m[k].push_back(v);
  const double dist = median(m["distilled"]), r1 = median(m["random1"]), r2 = median(m["random2"]),
               full = median(m["full"]);
  const bool order = dist < r1 && dist < r2;
  const bool close = dist <= 2.0 * full;
  return {order && close, "median mse distilled " + fmt(dist) + ", random1 " + fmt(r1) + ", random2 " + fmt(r2) +
                              ", full " + fmt(full) + " (ratio " + fmt(dist / full) + ", need <= 2)"};
}

// ---- 7: closed-form population gradient against Monte Carlo -----------------------------------

Verdict c7() {
  double worst_z = 0.0;
  for (int d : {8, 32})
    for (const char* link : {"he2/sqrt(2)", "he2/2+he4/24"})
      for (double g : {4.0, 8.0}) {
        const MultiIndexTask t = make_task(d, 1, parse_link(link), 0.0, 7);
        Rng rng = make_rng(11, d);
        const Eigen::VectorXd xt = uniform_sphere(rng, d);
        const Activation h = Activation::from({SurrogateKind::softplus, g});
        const Eigen::VectorXd closed = popgrad_single_closed(t, xt, h, sphere_rule(d));
        const McEstimate mc = popgrad_mc(t, xt, h, 10000, 1000, 13);
        for (int k = 0; k < d; ++k) worst_z = std::max(worst_z, std::abs(closed(k) - mc.mean(k)) / mc.se(k));
      }
  std::vector<double> cosv;
  const MultiIndexTask t = make_task(64, 2, parse_link("he2(0)/2+he2(1)/2", 2), 0.0, 7);
  const Eigen::MatrixXd H = task_spectra(t).H;
  const Activation h = Activation::from({SurrogateKind::softplus, 8.0});
  for (int draw = 0; draw < 5; ++draw) {
    Rng rng = make_rng(17, draw);
    const Eigen::VectorXd xt = uniform_sphere(rng, 64);
    cosv.push_back(cosine(popgrad_mc(t, xt, h, 100000, 100, 19 + draw).mean, H * xt));
  }
  const double cmin = *std::min_element(cosv.begin(), cosv.end());
  // The alignment statistic is the median over independent x~ draws; the minimum is reported alongside.
  return {worst_z <= 5.0 && median(cosv) >= 0.95, "max |z| over 8 settings " + fmt(worst_z) + "; cos(mc, H x~) at d=64: min " +
                                              fmt(cmin) + ", median " + fmt(median(cosv))};
}

// ---- 8: identity suite ------------------------------------------------------------------------

Verdict c8() {
  const int n = 1000000, K = 6;
  Rng rng = make_rng(8, 0);
  std::normal_distribution<double> gauss;
  std::vector<double> sum((K + 1) * (K + 1), 0.0), sumsq(sum.size(), 0.0);
  for (int s = 0; s < n; ++s) {
    const auto h = hermite_all(K, gauss(rng));
    for (int j = 0; j <= K; ++j)
      for (int k = 0; k <= K; ++k) {
        const double v = h[j] * h[k];
        sum[j * (K + 1) + k] += v;
        sumsq[j * (K + 1) + k] += v * v;
      }
  }
  double worst_z = 0.0;
  for (int j = 0; j <= K; ++j)
    for (int k = 0; k <= K; ++k) {
      const double mean = sum[j * (K + 1) + k] / n;
      const double se = std::sqrt((sumsq[j * (K + 1) + k] / n - mean * mean) / n);
      worst_z = std::max(worst_z, std::abs(mean - (j == k ? factorial(k) : 0.0)) / se);
    }

  double ibp = 0.0, second = 0.0;
  for (int d : {3, 10, 32, 64, 256})
    for (const Activation& h : {Activation::quadratic(), Activation::from({SurrogateKind::softplus, 4.0}),
                                Activation::from({SurrogateKind::softplus, 8.0})})
      for (const auto& row : ibp_suite(h, d)) {
        ibp = std::max(ibp, row.gap);
        if (row.name.rfind("E[t^2]", 0) == 0) second = std::max(second, row.gap);
      }

  double sym_excess = 0.0, map_gap = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng r = make_rng(trial, 8);
    const int k = 2 + trial % 3, d = 2 + trial % 4;
    DenseTensor T(k, d);
    for (double& v : T.values()) v = gauss(r);
    sym_excess = std::max(sym_excess, sym(T).frobenius_norm() - T.frobenius_norm());
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_matrix(r, d, d)).householderQ();
    map_gap = std::max(map_gap, std::abs(map_action(Q, T).frobenius_norm() - T.frobenius_norm()));
  }
  const bool ok = worst_z <= 5.0 && ibp <= 1e-8 && sym_excess <= 1e-10 && map_gap <= 1e-10 && second <= 1e-12;
  return {ok, "hermite max |z| " + fmt(worst_z) + ", ibp max gap " + fmt(ibp) + ", E[t^2] gap " + fmt(second) +
                  ", sym excess " + fmt(sym_excess) + ", map invariance gap " + fmt(map_gap)};
}

// ---- 9: analytic gradients against finite differences -----------------------------------------

Verdict c9() {
  double worst_w = 0.0, worst_a = 0.0, worst_gm = 0.0;
  const double h = 1e-6;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-8, std::max(std::abs(a), std::abs(b))); };
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng = make_rng(seed, 9);
    std::uniform_int_distribution<int> size(2, 4);
    const int d = size(rng), L = size(rng);
    const NetworkParams p = random_params(d, L, rng);
    const LabeledSet D = random_set(4, d, rng);
    const Eigen::MatrixXd gw = grad_w(p, D);
    const double lambda = 0.1;
    const Eigen::VectorXd ga = grad_a(p, D, lambda);
    auto reg = [&](const NetworkParams& q) { return loss(q, D) + 0.5 * lambda * q.a.squaredNorm(); };
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < L; ++j) {
        NetworkParams up = p, dn = p;
        up.W(i, j) += h;
        dn.W(i, j) -= h;
        worst_w = std::max(worst_w, rel((loss(up, D) - loss(dn, D)) / (2 * h), gw(i, j)));
      }
    for (int j = 0; j < L; ++j) {
      NetworkParams up = p, dn = p;
      up.a(j) += h;
      dn.a(j) -= h;
      worst_a = std::max(worst_a, rel((reg(up) - reg(dn)) / (2 * h), ga(j)));
    }

    // Matching loss at d = 4, L = 4, J = 2.
    std::vector<NetworkParams> inits{init_symmetric(4, 4, seed * 7), init_symmetric(4, 4, seed * 7 + 1)};
    const auto grads = teacher_grads_t1(inits, random_set(100, 4, rng));
    const DistilledSet D0 = init_D1(2, 4, LabelMode::chi(), seed);
    const Surrogate sp{SurrogateKind::softplus, 8.0};
    const DistilledSet D1 = gm_t1(D0, inits, grads, sp, 2.0, 0.5);
    worst_gm = std::max(worst_gm, gm_t1_fd_gap(D0, D1, inits, grads, sp, 2.0));
  }
  return {worst_w <= 1e-5 && worst_a <= 1e-5 && worst_gm <= 1e-5,
          "max relative gap grad_w " + fmt(worst_w) + ", grad_a " + fmt(worst_a) + ", gm_t1 " + fmt(worst_gm)};
}

// ---- 10: transfer -----------------------------------------------------------------------------

Verdict c10() {
  const ExperimentConfig c = base_config();
  const auto rows = transfer(c, {1000});
  std::vector<double> pre, scr;
  for (const auto& r : rows) {
    pre.push_back(r.mse_pretrained);
    scr.push_back(r.mse_scratch);
  }
  const double ratio = median(scr) / median(pre);
  return {ratio >= 2.0, "n=1000 median mse pretrained " + fmt(median(pre)) + ", scratch " + fmt(median(scr)) +
                            " (ratio " + fmt(ratio) + ", need >= 2)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distilab acceptance suite"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Verdict()>> checks{
      [] { return rate_check(false); }, [] { return rate_check(true); }, c3, c4, c5, c6, c7, c8, c9, c10};
  bool all = true;
  for (int k = 1; k <= 10; ++k) {
    if (only && k != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = checks[k - 1]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << k << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "  [" << fmt(sec)
              << " s]" << std::endl;
    all &= v.pass;
  }
  return all ? 0 : 1;
}
