#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "ecocontrol/grid.hpp"

namespace ecocontrol {

/// Sparse Cholesky factorization of diag(shift) + matrix, computed once and
/// reused for every right-hand side.
class ShiftedCholesky {
 public:
  ShiftedCholesky() = default;

  ShiftedCholesky(const SparseMatrix& matrix, std::span<const double> shift) : n_(matrix.rows()) {
    if (shift.size() != n_) throw std::invalid_argument("cholesky: diagonal shift size mismatch");
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(matrix.nonzeros() + n_);
    for (std::size_t i = 0; i < n_; ++i) {
      matrix.for_each_in_row(i, [&](std::size_t j, double v) {
        entries.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
      });
      entries.emplace_back(static_cast<int>(i), static_cast<int>(i), shift[i]);
    }
    Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    a.setFromTriplets(entries.begin(), entries.end());
    solver_ = std::make_shared<Solver>(a);
    if (solver_->info() != Eigen::Success) throw std::runtime_error("cholesky: matrix not positive definite");
  }

  [[nodiscard]] std::size_t size() const { return n_; }

  /// Solves in place: rhs <- (diag(shift) + matrix)^{-1} rhs.
  void solve(std::span<double> rhs) const {
    if (rhs.size() != n_ || !solver_) throw std::invalid_argument("cholesky: rhs size mismatch");
    Eigen::Map<Eigen::VectorXd> x(rhs.data(), static_cast<Eigen::Index>(n_));
    x = solver_->solve(x).eval();
  }

 private:
  using Solver = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>;
  std::size_t n_ = 0;
  std::shared_ptr<const Solver> solver_;
};

}  // namespace ecocontrol
