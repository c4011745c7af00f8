#pragma once

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "distilab/distillation.hpp"
#include "distilab/network.hpp"
#include "distilab/task_model.hpp"

namespace distilab::io {

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return is;
}

// Rows of numbers after a header line; returns the header cells.
inline std::vector<std::string> read_table(std::istream& is, std::vector<std::vector<double>>& rows) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV");
  auto header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size()) throw std::runtime_error("CSV row width differs from header");
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(std::stod(c));
    rows.push_back(std::move(r));
  }
  return header;
}

}  // namespace detail

inline void write_points(std::ostream& os, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const int* phase) {
  for (Eigen::Index k = 0; k < X.cols(); ++k) os << "x_" << k << ',';
  os << 'y' << (phase ? ",phase" : "") << '\n';
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    for (Eigen::Index k = 0; k < X.cols(); ++k) os << X(n, k) << ',';
    os << y(n);
    if (phase) os << ',' << *phase;
    os << '\n';
  }
}

inline void write_labeled_set(const std::string& path, const LabeledSet& D) {
  auto os = detail::open_out(path);
  write_points(os, D.X, D.y, nullptr);
}

inline LabeledSet read_labeled_set(const std::string& path) {
  auto is = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  const auto header = detail::read_table(is, rows);
  if (header.size() < 2 || header.back() != "y") throw std::runtime_error(path + ": expected columns x_0..x_{d-1},y");
  const Eigen::Index d = static_cast<Eigen::Index>(header.size()) - 1;
  LabeledSet D;
  D.X.resize(static_cast<Eigen::Index>(rows.size()), d);
  D.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (Eigen::Index k = 0; k < d; ++k) D.X(static_cast<Eigen::Index>(n), k) = rows[n][k];
    D.y(static_cast<Eigen::Index>(n)) = rows[n][d];
  }
  return D;
}

inline void write_distilled_set(const std::string& path, const DistilledSet& S) {
  auto os = detail::open_out(path);
  write_points(os, S.X, S.y, &S.phase);
}

inline DistilledSet read_distilled_set(const std::string& path) {
  auto is = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  const auto header = detail::read_table(is, rows);
  if (header.size() < 3 || header.back() != "phase")
    throw std::runtime_error(path + ": expected columns x_0..x_{d-1},y,phase");
  const Eigen::Index d = static_cast<Eigen::Index>(header.size()) - 2;
  DistilledSet S;
  S.X.resize(static_cast<Eigen::Index>(rows.size()), d);
  S.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (Eigen::Index k = 0; k < d; ++k) S.X(static_cast<Eigen::Index>(n), k) = rows[n][k];
    S.y(static_cast<Eigen::Index>(n)) = rows[n][d];
    S.phase = static_cast<int>(rows[n][d + 1]);
  }
  return S;
}

// Checkpoint: header "L,d", the two sizes, then one value per line: a, W column-major, b.
inline void write_network(const std::string& path, const NetworkParams& p) {
  p.validate();
  auto os = detail::open_out(path);
  os << "L,d\n" << p.width() << ',' << p.dim() << '\n';
  for (Eigen::Index i = 0; i < p.a.size(); ++i) os << p.a(i) << '\n';
  for (Eigen::Index k = 0; k < p.W.size(); ++k) os << p.W.data()[k] << '\n';
  for (Eigen::Index i = 0; i < p.b.size(); ++i) os << p.b(i) << '\n';
}

inline NetworkParams read_network(const std::string& path) {
  auto is = detail::open_in(path);
  std::string line;
  std::getline(is, line);
  if (line != "L,d") throw std::runtime_error(path + ": not a network checkpoint");
  std::getline(is, line);
  const auto sizes = detail::split(line);
  if (sizes.size() != 2) throw std::runtime_error(path + ": bad size line");
  const Eigen::Index L = std::stol(sizes[0]), d = std::stol(sizes[1]);
  std::vector<double> v;
  while (std::getline(is, line))
    if (!line.empty()) v.push_back(std::stod(line));
  if (static_cast<Eigen::Index>(v.size()) != L * (d + 2)) throw std::runtime_error(path + ": wrong value count");
  NetworkParams p;
  p.a = Eigen::Map<Eigen::VectorXd>(v.data(), L);
  p.W = Eigen::Map<Eigen::MatrixXd>(v.data() + L, d, L);
  p.b = Eigen::Map<Eigen::VectorXd>(v.data() + L + d * L, L);
  return p;
}

}  // namespace distilab::io
