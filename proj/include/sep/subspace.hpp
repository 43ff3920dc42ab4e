// sep/subspace.hpp
//
// Thin SVD, energy-based rank selection and the orthogonal-interferer
// computation, plus the span projector used by the evaluation metrics.

#pragma once

#include <Eigen/Dense>

#include <vector>

namespace sep {

struct SvdResult {
  Eigen::MatrixXd U;      // rows x r, orthonormal columns
  Eigen::VectorXd sigma;  // length r, non-increasing, >= 0
  Eigen::MatrixXd V;      // cols x r, orthonormal columns
};

// Principal subspace of a mean-centered magnitude matrix.
struct SourceBasis {
  Eigen::MatrixXd S;         // bins x d, orthonormal columns
  int d = 0;                 // smallest rank holding energy_fraction of sigma^2
  double energy_fraction = 0.95;
  Eigen::VectorXd row_mean;  // per-bin mean removed before the SVD
};

// Thin SVD with r = min(rows, cols). Throws on non-finite input.
SvdResult thin_svd(const Eigen::MatrixXd& m);

// Smallest d with sum_{i<=d} sigma_i^2 >= fraction * sum sigma_i^2.
// sigma must be non-increasing; throws "zero-energy matrix" if all zero.
int energy_rank(const Eigen::VectorXd& sigma, double fraction);

// Center Ys rows, thin SVD, keep the first energy_rank left singular vectors.
SourceBasis source_basis(const Eigen::MatrixXd& ys, double fraction);

// Component of Yn outside the principal subspace of Ys:
// Yn - S * S^T * Yn with S from source_basis(Ys, fraction).
Eigen::MatrixXd find_orth(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
                          double fraction = 0.95);

// Orthogonal projection of target onto span(basis columns). Rank-deficient
// bases are handled by truncating singular values below
// max(rows, cols) * sigma_max * 1e-12.
Eigen::VectorXd project_onto_span(const Eigen::MatrixXd& basis,
                                  const Eigen::VectorXd& target);
Eigen::VectorXd project_onto_span(const std::vector<Eigen::VectorXd>& basis,
                                  const Eigen::VectorXd& target);

}  // namespace sep
