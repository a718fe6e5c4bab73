// Copyright 2026 The mchain Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mchain/errors.hpp"
#include "mchain/fock_basis.hpp"
#include "mchain/state_vector.hpp"

namespace mchain {

/// Entropy functional. alpha == 1 is Von Neumann, anything else a Renyi
/// entropy of that order. Natural logarithm everywhere.
struct EntropyKind {
  double alpha = 1.0;

  static EntropyKind von_neumann() { return {1.0}; }
  static EntropyKind renyi(double a) {
    detail::require(a > 0.0 && a != 1.0, "Renyi order must be positive and != 1 (use von_neumann)");
    return {a};
  }
  bool is_von_neumann() const { return alpha == 1.0; }
  std::string name() const { return is_von_neumann() ? "von_neumann" : "renyi"; }
  friend bool operator==(const EntropyKind&, const EntropyKind&) = default;
};

/// Index layout of the cut after `cut` sites from the left. Global number
/// conservation makes psi block-structured: every basis state belongs to the
/// block labelled by its left particle count, and inside that block to one
/// (left occupation, right occupation) cell. Build once per (basis, cut) and
/// share between threads.
class Bipartition {
 public:
  struct Block {
    int left_particles = 0;
    std::vector<std::vector<int>> left_states;  // row labels
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
  };

  Bipartition(const FockBasis& basis, int cut) : cut_(cut), sites_(basis.sites()) {
    detail::require(cut >= 1 && cut <= basis.sites() - 1,
                    "Bipartition: cut must lie in [1, L-1], got " + std::to_string(cut));
    std::map<int, std::size_t> block_of_count;
    std::vector<std::map<std::vector<int>, Eigen::Index>> left_index, right_index;
    for (std::size_t i = 0; i < basis.dim(); ++i) {
      const auto occ = basis.state(i);
      block_of_count.emplace(std::accumulate(occ.begin(), occ.begin() + cut, 0), 0);
    }
    std::size_t b = 0;
    for (auto& [count, id] : block_of_count) {
      id = b++;
      blocks_.push_back(Block{count, {}, 0, 0});
    }
    left_index.resize(blocks_.size());
    right_index.resize(blocks_.size());
    for (std::size_t i = 0; i < basis.dim(); ++i) {
      const auto occ = basis.state(i);
      std::vector<int> left(occ.begin(), occ.begin() + cut), right(occ.begin() + cut, occ.end());
      left_index[block_of_count[std::accumulate(left.begin(), left.end(), 0)]].emplace(left, 0);
      right_index[block_of_count[std::accumulate(left.begin(), left.end(), 0)]].emplace(right, 0);
    }
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      Eigen::Index r = 0, c = 0;
      for (auto& [occ, idx] : left_index[k]) {
        idx = r++;
        blocks_[k].left_states.push_back(occ);
      }
      for (auto& [occ, idx] : right_index[k]) idx = c++;
      blocks_[k].rows = r;
      blocks_[k].cols = c;
    }
    cells_.reserve(basis.dim());
    for (std::size_t i = 0; i < basis.dim(); ++i) {
      const auto occ = basis.state(i);
      std::vector<int> left(occ.begin(), occ.begin() + cut), right(occ.begin() + cut, occ.end());
      const std::size_t k = block_of_count[std::accumulate(left.begin(), left.end(), 0)];
      cells_.push_back(Cell{k, left_index[k].at(left), right_index[k].at(right)});
    }
  }

  int cut() const { return cut_; }
  int sites() const { return sites_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  /// Dense coefficient matrices psi[left, right], one per block.
  std::vector<Eigen::MatrixXcd> coefficient_blocks(const StateVector& psi) const {
    detail::require(psi.dim() == cells_.size(), "Bipartition: state dimension does not match layout");
    std::vector<Eigen::MatrixXcd> out;
    out.reserve(blocks_.size());
    for (const auto& blk : blocks_) out.emplace_back(Eigen::MatrixXcd::Zero(blk.rows, blk.cols));
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      const auto& cell = cells_[i];
      out[cell.block](cell.row, cell.col) = psi[i];
    }
    return out;
  }

  /// Dimension of the left factor restricted to the sector.
  Eigen::Index left_dim() const {
    Eigen::Index d = 0;
    for (const auto& blk : blocks_) d += blk.rows;
    return d;
  }
  Eigen::Index right_dim() const {
    Eigen::Index d = 0;
    for (const auto& blk : blocks_) d += blk.cols;
    return d;
  }

 private:
  struct Cell {
    std::size_t block;
    Eigen::Index row;
    Eigen::Index col;
  };

  int cut_;
  int sites_;
  std::vector<Block> blocks_;
  std::vector<Cell> cells_;
};

/// Reduced density matrix of the left `cut` sites, kept block-diagonal in
/// the left particle number.
struct ReducedDM {
  struct Block {
    int left_particles = 0;
    std::vector<std::vector<int>> left_states;
    Eigen::MatrixXcd rho;
  };

  int cut = 0;
  std::vector<Block> blocks;

  Eigen::Index dim() const {
    Eigen::Index d = 0;
    for (const auto& b : blocks) d += b.rho.rows();
    return d;
  }

  double trace() const {
    double t = 0.0;
    for (const auto& b : blocks) t += b.rho.trace().real();
    return t;
  }

  /// Full matrix over the left subsystem basis, ordered block by block.
  Eigen::MatrixXcd dense() const {
    const Eigen::Index n = dim();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
    Eigen::Index offset = 0;
    for (const auto& b : blocks) {
      out.block(offset, offset, b.rho.rows(), b.rho.cols()) = b.rho;
      offset += b.rho.rows();
    }
    return out;
  }

  /// Subsystem particle number on the same ordering as dense().
  Eigen::VectorXd left_number_diagonal() const {
    Eigen::VectorXd n(dim());
    Eigen::Index offset = 0;
    for (const auto& b : blocks) {
      n.segment(offset, b.rho.rows()).setConstant(b.left_particles);
      offset += b.rho.rows();
    }
    return n;
  }

  /// Eigenvalues, checked against -1e-10 and clamped into [0, 1].
  std::vector<double> spectrum() const;
};

namespace detail {

inline constexpr double kNegativeEigenvalueTolerance = 1e-10;

inline void append_checked_eigenvalues(const Eigen::MatrixXcd& hermitian, std::vector<double>& out) {
  if (hermitian.rows() == 0) return;
  if (hermitian.rows() == 1) {
    const double v = hermitian(0, 0).real();
    if (v < -kNegativeEigenvalueTolerance) throw NumericGuardError("reduced density matrix has a negative eigenvalue");
    out.push_back(std::clamp(v, 0.0, 1.0));
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(hermitian, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericGuardError("eigenvalue solver failed on reduced density matrix");
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const double v = solver.eigenvalues()[i];
    if (v < -kNegativeEigenvalueTolerance)
      throw NumericGuardError("reduced density matrix has eigenvalue " + std::to_string(v));
    out.push_back(std::clamp(v, 0.0, 1.0));
  }
}

}  // namespace detail

inline std::vector<double> ReducedDM::spectrum() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(dim()));
  for (const auto& b : blocks) detail::append_checked_eigenvalues(b.rho, out);
  return out;
}

/// Partial trace over sites cut..L-1 (zero-based), via the block layout.
inline ReducedDM reduce(const StateVector& psi, const Bipartition& layout) {
  ReducedDM out;
  out.cut = layout.cut();
  const auto coeffs = layout.coefficient_blocks(psi);
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    const auto& blk = layout.blocks()[k];
    out.blocks.push_back({blk.left_particles, blk.left_states, coeffs[k] * coeffs[k].adjoint()});
  }
  return out;
}

inline ReducedDM reduce(const StateVector& psi, int cut) { return reduce(psi, Bipartition(psi.basis(), cut)); }

/// Nonzero part of the entanglement spectrum (squared Schmidt coefficients),
/// computed from the smaller Gram matrix of each block. This is the hot path
/// for ensembles; it never materializes the reduced density matrix.
inline std::vector<double> schmidt_spectrum(const StateVector& psi, const Bipartition& layout) {
  std::vector<double> out;
  for (const auto& m : layout.coefficient_blocks(psi)) {
    if (m.size() == 0) continue;
    if (m.rows() <= m.cols()) {
      detail::append_checked_eigenvalues(m * m.adjoint(), out);
    } else {
      detail::append_checked_eigenvalues(m.adjoint() * m, out);
    }
  }
  return out;
}

inline double von_neumann_entropy(const std::vector<double>& spectrum) {
  double s = 0.0;
  for (double p : spectrum)
    if (p > 0.0) s -= p * std::log(p);
  return std::max(s, 0.0);
}

inline double renyi_entropy(const std::vector<double>& spectrum, double alpha) {
  detail::require(alpha > 0.0 && alpha != 1.0, "renyi: order must be positive and != 1");
  double sum = 0.0;
  for (double p : spectrum)
    if (p > 0.0) sum += std::pow(p, alpha);
  return std::max(std::log(sum) / (1.0 - alpha), 0.0);
}

inline double entropy(const std::vector<double>& spectrum, EntropyKind kind) {
  return kind.is_von_neumann() ? von_neumann_entropy(spectrum) : renyi_entropy(spectrum, kind.alpha);
}

inline double von_neumann(const ReducedDM& rho) { return von_neumann_entropy(rho.spectrum()); }

inline double renyi(const ReducedDM& rho, double alpha) {
  detail::require(alpha != 1.0, "renyi: alpha == 1 is the Von Neumann entropy");
  return renyi_entropy(rho.spectrum(), alpha);
}

/// Cut layouts for every l in [1, L-1], index l-1.
inline std::vector<Bipartition> all_cuts(const FockBasis& basis) {
  std::vector<Bipartition> cuts;
  for (int l = 1; l < basis.sites(); ++l) cuts.emplace_back(basis, l);
  return cuts;
}

/// S(l) for l = 1..L-1 of one state.
inline std::vector<double> entropy_profile_of(const StateVector& psi, const std::vector<Bipartition>& cuts,
                                              EntropyKind kind) {
  std::vector<double> out;
  out.reserve(cuts.size());
  for (const auto& cut : cuts) out.push_back(entropy(schmidt_spectrum(psi, cut), kind));
  return out;
}

/// Trajectory-averaged entropy profile at one time.
struct EntropyProfile {
  double gamma = 0.0;
  int sites = 0;
  double time = 0.0;
  EntropyKind kind;
  std::vector<double> mean;    // index l-1
  std::vector<double> stderr;  // sample std / sqrt(M)
  std::size_t samples = 0;

  double at(int l) const { return mean.at(static_cast<std::size_t>(l - 1)); }
  double stderr_at(int l) const { return stderr.at(static_cast<std::size_t>(l - 1)); }
};

/// Averages per-trajectory entropies (never density matrices). `samples[m]`
/// holds S(l), l = 1..L-1, of trajectory m.
inline EntropyProfile profile_from_samples(const std::vector<std::vector<double>>& samples, double gamma,
                                           int sites, double time, EntropyKind kind) {
  if (samples.empty()) throw ValidationError("average_profile: no trajectory samples");
  const std::size_t cuts = static_cast<std::size_t>(sites - 1);
  EntropyProfile p{gamma, sites, time, kind, std::vector<double>(cuts, 0.0), std::vector<double>(cuts, 0.0),
                   samples.size()};
  for (const auto& s : samples) {
    detail::require(s.size() == cuts, "average_profile: sample has wrong number of cuts");
    for (std::size_t l = 0; l < cuts; ++l) p.mean[l] += s[l];
  }
  const double m = static_cast<double>(samples.size());
  for (auto& v : p.mean) v /= m;
  if (samples.size() > 1) {
    for (std::size_t l = 0; l < cuts; ++l) {
      double ss = 0.0;
      for (const auto& s : samples) ss += (s[l] - p.mean[l]) * (s[l] - p.mean[l]);
      p.stderr[l] = std::sqrt(ss / (m - 1.0) / m);
    }
  }
  return p;
}

}  // namespace mchain
