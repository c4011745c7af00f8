#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "distilab/hermite.hpp"
#include "distilab/random.hpp"
#include "distilab/tensor.hpp"

namespace distilab {

// coef * prod_j He_{degrees[j]}(z_j)
struct HermiteTerm {
  std::vector<int> degrees;
  double coef = 0.0;

  int total_degree() const {
    int s = 0;
    for (int k : degrees) s += k;
    return s;
  }
};

class Link {
 public:
  Link() = default;
  Link(std::vector<HermiteTerm> terms, int r) : terms_(std::move(terms)), r_(r) {
    if (r_ < 1) throw std::invalid_argument("Link: r must be positive");
    for (auto& t : terms_) {
      if (static_cast<int>(t.degrees.size()) > r_)
        throw std::invalid_argument("Link: term uses more coordinates than r");
      t.degrees.resize(r_, 0);
      for (int k : t.degrees)
        if (k < 0) throw std::invalid_argument("Link: negative degree");
    }
  }

  const std::vector<HermiteTerm>& terms() const { return terms_; }
  int r() const { return r_; }
  bool empty() const { return terms_.empty(); }

  int degree() const {
    int p = 0;
    for (const auto& t : terms_) p = std::max(p, t.total_degree());
    return p;
  }

  int max_coordinate_degree() const {
    int p = 0;
    for (const auto& t : terms_)
      for (int k : t.degrees) p = std::max(p, k);
    return p;
  }

  double operator()(std::span<const double> z) const {
    const int kmax = max_coordinate_degree();
    thread_local std::vector<double> table;
    table.assign(static_cast<std::size_t>(r_) * (kmax + 1), 0.0);
    for (int j = 0; j < r_; ++j) {
      double* h = table.data() + static_cast<std::size_t>(j) * (kmax + 1);
      h[0] = 1.0;
      if (kmax >= 1) h[1] = z[j];
      for (int n = 1; n < kmax; ++n) h[n + 1] = z[j] * h[n] - n * h[n - 1];
    }
    double s = 0.0;
    for (const auto& t : terms_) {
      double p = t.coef;
      for (int j = 0; j < r_; ++j) p *= table[static_cast<std::size_t>(j) * (kmax + 1) + t.degrees[j]];
      s += p;
    }
    return s;
  }

  double operator()(const Eigen::VectorXd& z) const {
    return (*this)(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
  }

  // E[link(z)^2] under N(0, I_r), exact by Hermite orthogonality.
  double second_moment() const {
    double s = 0.0;
    for (std::size_t a = 0; a < terms_.size(); ++a)
      for (std::size_t b = 0; b < terms_.size(); ++b) {
        if (terms_[a].degrees != terms_[b].degrees) continue;
        double f = terms_[a].coef * terms_[b].coef;
        for (int k : terms_[a].degrees) f *= factorial(k);
        s += f;
      }
    return s;
  }

 private:
  std::vector<HermiteTerm> terms_;
  int r_ = 1;
};

namespace detail {

class LinkParser {
 public:
  explicit LinkParser(std::string s) : s_(std::move(s)) {}

  std::vector<HermiteTerm> parse(int& max_index) {
    std::vector<HermiteTerm> terms;
    skip();
    double sign = 1.0;
    if (peek() == '+' || peek() == '-') sign = (get() == '-') ? -1.0 : 1.0;
    for (;;) {
      HermiteTerm t = term(max_index);
      t.coef *= sign;
      terms.push_back(std::move(t));
      skip();
      if (pos_ >= s_.size()) break;
      const char c = get();
      if (c == '+')
        sign = 1.0;
      else if (c == '-')
        sign = -1.0;
      else
        fail("expected '+' or '-'");
    }
    return terms;
  }

 private:
  HermiteTerm term(int& max_index) {
    HermiteTerm t{{}, 1.0};
    bool have_factor = false;
    char op = '*';
    for (;;) {
      skip();
      if (starts_with("he")) {
        if (op == '/') fail("cannot divide by a Hermite factor");
        pos_ += 2;
        const int k = integer();
        int j = 0;
        skip();
        if (peek() == '(') {
          ++pos_;
          j = integer();
          expect(')');
        }
        if (static_cast<int>(t.degrees.size()) <= j) t.degrees.resize(j + 1, 0);
        if (t.degrees[j] != 0) fail("repeated Hermite factor on one coordinate");
        t.degrees[j] = k;
        max_index = std::max(max_index, j);
      } else {
        const double v = number();
        if (op == '*')
          t.coef *= v;
        else
          t.coef /= v;
      }
      have_factor = true;
      skip();
      if (peek() == '*' || peek() == '/') {
        op = get();
        continue;
      }
      break;
    }
    if (!have_factor) fail("empty term");
    return t;
  }

  double number() {
    skip();
    if (starts_with("sqrt")) {
      pos_ += 4;
      expect('(');
      const double v = number();
      expect(')');
      return std::sqrt(v);
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s_.substr(pos_), &used);
    } catch (const std::exception&) {
      fail("expected a number");
    }
    pos_ += used;
    return v;
  }

  int integer() {
    skip();
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("expected an integer");
    return std::stoi(s_.substr(start, pos_ - start));
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  char peek() {
    skip();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  char get() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    return s_[pos_++];
  }
  void expect(char c) {
    if (get() != c) fail(std::string("expected '") + c + "'");
  }
  bool starts_with(const char* p) const { return s_.compare(pos_, std::char_traits<char>::length(p), p) == 0; }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("link expression '" + s_ + "': " + what + " at position " +
                                std::to_string(pos_));
  }

  std::string s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Parses expressions such as "he2/2 + he4/24", "he3/sqrt(6)" or "he2(0)*he1(1) - 0.5*he2(1)".
// A bare "heK" acts on coordinate 0. Preset names: "exp1" and "transfer".
inline Link parse_link(const std::string& expr, int r = 0) {
  std::string s = expr;
  if (s == "exp1") s = "he2/2+he4/24";
  if (s == "transfer") s = "he3/sqrt(6)";
  std::string lowered;
  for (char c : s) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  int max_index = 0;
  auto terms = detail::LinkParser(lowered).parse(max_index);
  const int need = max_index + 1;
  if (r == 0) r = need;
  if (need > r) throw std::invalid_argument("parse_link: coordinate index exceeds r");
  return Link(std::move(terms), r);
}

struct MultiIndexTask {
  int d = 0;
  int r = 0;
  Eigen::MatrixXd B;  // d x r, orthonormal columns
  Link link;
  double zeta = 0.0;

  int degree() const { return link.degree(); }
  Eigen::VectorXd beta() const { return B.col(0); }
};

inline MultiIndexTask make_task(int d, int r, Link link, double zeta, std::uint64_t seed) {
  if (r < 1 || r > d) throw std::invalid_argument("make_task: need 1 <= r <= d");
  if (link.empty()) throw std::invalid_argument("make_task: empty link");
  if (link.r() != r) link = Link(link.terms(), r);
  if (zeta < 0) throw std::invalid_argument("make_task: zeta must be nonnegative");
  Rng rng = make_rng(seed, 0x7461736bULL);
  Eigen::MatrixXd g = gaussian_matrix(rng, d, r);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, r);
  return MultiIndexTask{d, r, std::move(q), std::move(link), zeta};
}

inline Eigen::VectorXd eval_target_batch(const MultiIndexTask& task, const Eigen::MatrixXd& X);

// Routed through the batch path so single and batched evaluations round identically.
inline double eval_target(const MultiIndexTask& task, const Eigen::VectorXd& x) {
  if (x.size() != task.d) throw std::invalid_argument("eval_target: wrong input length");
  return eval_target_batch(task, x.transpose())(0);
}

inline Eigen::VectorXd eval_target_batch(const MultiIndexTask& task, const Eigen::MatrixXd& X) {
  if (X.cols() != task.d) throw std::invalid_argument("eval_target: wrong input width");
  const Eigen::MatrixXd Z = X * task.B;
  Eigen::VectorXd out(X.rows());
  std::vector<double> z(task.r);
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    for (int j = 0; j < task.r; ++j) z[j] = Z(n, j);
    out(n) = task.link(std::span<const double>(z));
  }
  return out;
}

struct Preprocessing {
  double alpha = 0.0;
  Eigen::VectorXd gamma;
};

struct LabeledSet {
  Eigen::MatrixXd X;  // N x d
  Eigen::VectorXd y;
  std::optional<Preprocessing> meta;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
};

inline LabeledSet sample_dataset(const MultiIndexTask& task, Eigen::Index N, std::uint64_t seed) {
  if (N < 1) throw std::invalid_argument("sample_dataset: N must be positive");
  Rng rng = make_rng(seed, 0x64617461ULL);
  LabeledSet D;
  D.X = gaussian_matrix(rng, task.d, N).transpose();
  D.y = eval_target_batch(task, D.X);
  if (task.zeta > 0) {
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index n = 0; n < N; ++n) D.y(n) += coin(rng) ? task.zeta : -task.zeta;
  }
  return D;
}

// y_n <- y_n - alpha - <gamma, x_n> with alpha = mean(y), gamma = mean(y_n x_n).
inline LabeledSet preprocess(const LabeledSet& D) {
  if (D.X.rows() != D.y.size()) throw std::invalid_argument("preprocess: row count mismatch");
  const double N = static_cast<double>(D.y.size());
  Preprocessing p;
  p.alpha = D.y.mean();
  p.gamma = D.X.transpose() * D.y / N;
  LabeledSet out;
  out.X = D.X;
  out.y = D.y - Eigen::VectorXd::Constant(D.y.size(), p.alpha) - D.X * p.gamma;
  out.meta = std::move(p);
  return out;
}

struct TaskSpectra {
  std::vector<DenseTensor> C;     // C_k over R^r, k = 0..p
  std::vector<DenseTensor> C_se;  // per-entry standard errors (mc mode only)
  Eigen::MatrixXd H;
  double lambdaMin = 0.0;
  double lambdaMax = 0.0;
  double kappa = 0.0;
};

enum class SpectraMode { analytic, mc };

namespace detail {

inline std::vector<int> index_counts(std::span<const int> idx, int r) {
  std::vector<int> c(r, 0);
  for (int i : idx) ++c[i];
  return c;
}

// E[d^alpha link] is nonzero only when alpha equals a term's multi-degree.
inline DenseTensor analytic_ck(const Link& link, int k) {
  const int r = link.r();
  DenseTensor t(k, r);
  std::vector<int> idx(k);
  for (std::size_t f = 0; f < t.size(); ++f) {
    t.unflatten(f, idx);
    const auto counts = index_counts(idx, r);
    double v = 0.0;
    for (const auto& term : link.terms()) {
      if (term.degrees != counts) continue;
      double p = term.coef;
      for (int m : term.degrees) p *= factorial(m);
      v += p;
    }
    t.values()[f] = v;
  }
  return t;
}

// Mixed central difference of order k along coordinates idx at z.
inline double mixed_central_difference(const Link& link, std::vector<double>& z, std::span<const int> idx,
                                       double h) {
  const int k = static_cast<int>(idx.size());
  if (k == 0) return link(std::span<const double>(z));
  double acc = 0.0;
  for (int mask = 0; mask < (1 << k); ++mask) {
    double sign = 1.0;
    for (int t = 0; t < k; ++t) {
      const double s = (mask >> t & 1) ? 1.0 : -1.0;
      sign *= s;
      z[idx[t]] += s * h;
    }
    acc += sign * link(std::span<const double>(z));
    for (int t = 0; t < k; ++t) z[idx[t]] -= ((mask >> t & 1) ? 1.0 : -1.0) * h;
  }
  return acc / std::pow(2.0 * h, k);
}

}  // namespace detail

inline void finalize_spectra(TaskSpectra& s, const MultiIndexTask& task) {
  const int r = task.r;
  Eigen::MatrixXd c2 = Eigen::MatrixXd::Zero(r, r);
  if (s.C.size() > 2) c2 = s.C[2].as_matrix();
  s.H = task.B * c2 * task.B.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (c2 + c2.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseAbs();
  s.lambdaMax = ev.maxCoeff();
  s.lambdaMin = ev.minCoeff();
  s.kappa = s.lambdaMin > 0 ? s.lambdaMax / s.lambdaMin : std::numeric_limits<double>::infinity();
}

inline TaskSpectra task_spectra(const MultiIndexTask& task, SpectraMode mode = SpectraMode::analytic,
                                long long mcSamples = 0, std::uint64_t seed = 0) {
  const int p = std::max(task.degree(), 2);
  const int r = task.r;
  TaskSpectra s;
  if (mode == SpectraMode::analytic) {
    for (int k = 0; k <= p; ++k) s.C.push_back(detail::analytic_ck(task.link, k));
    finalize_spectra(s, task);
    return s;
  }
  if (mcSamples < 100) throw std::invalid_argument("task_spectra: mc mode needs at least 100 samples");

  // Sorted index tuples only; permutations are filled in afterwards.
  struct Slot {
    int k;
    std::vector<int> idx;
    double sum = 0.0, sumsq = 0.0;
  };
  std::vector<Slot> slots;
  for (int k = 0; k <= p; ++k) {
    DenseTensor shape(k, r);
    std::vector<int> idx(k);
    for (std::size_t f = 0; f < shape.size(); ++f) {
      shape.unflatten(f, idx);
      if (std::is_sorted(idx.begin(), idx.end())) slots.push_back({k, idx});
    }
  }
  Rng rng = make_rng(seed, 0x73706563ULL);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> z(r);
  const double h = 1e-2;
  for (long long n = 0; n < mcSamples; ++n) {
    for (int j = 0; j < r; ++j) z[j] = nd(rng);
    for (auto& sl : slots) {
      const double v = detail::mixed_central_difference(task.link, z, sl.idx, h);
      sl.sum += v;
      sl.sumsq += v * v;
    }
  }
  const double n = static_cast<double>(mcSamples);
  for (int k = 0; k <= p; ++k) {
    s.C.emplace_back(k, r);
    s.C_se.emplace_back(k, r);
  }
  for (const auto& sl : slots) {
    const double mean = sl.sum / n;
    const double var = std::max(0.0, sl.sumsq / n - mean * mean);
    const double se = std::sqrt(var / (n - 1.0));
    std::vector<int> idx = sl.idx;
    do {
      s.C[sl.k].at(idx) = mean;
      s.C_se[sl.k].at(idx) = se;
    } while (std::next_permutation(idx.begin(), idx.end()));
  }
  finalize_spectra(s, task);
  return s;
}

// Monte-Carlo estimate of E[f*^2] with its standard error.
inline std::pair<double, double> target_mc_norm(const MultiIndexTask& task, Eigen::Index n, std::uint64_t seed) {
  LabeledSet D = sample_dataset(MultiIndexTask{task.d, task.r, task.B, task.link, 0.0}, n, seed);
  const Eigen::ArrayXd sq = D.y.array().square();
  const double mean = sq.mean();
  const double var = (sq - mean).square().sum() / (static_cast<double>(n) - 1.0);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

// Population preprocessing constants alpha = E[f*], gamma = E[f* x] = B C_1.
inline Preprocessing population_preprocessing(const MultiIndexTask& task) {
  Preprocessing p;
  p.alpha = detail::analytic_ck(task.link, 0).as_scalar();
  p.gamma = task.B * detail::analytic_ck(task.link, 1).as_vector();
  return p;
}

}  // namespace distilab
