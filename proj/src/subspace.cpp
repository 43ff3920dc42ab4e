#include "sep/subspace.hpp"

#include <Eigen/SVD>

#include <stdexcept>

namespace sep {

SvdResult thin_svd(const Eigen::MatrixXd& m) {
  if (m.rows() == 0 || m.cols() == 0)
    throw std::invalid_argument("thin_svd: empty matrix");
  if (!m.allFinite())
    throw std::invalid_argument("thin_svd: non-finite entries");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdResult result;
  result.U = svd.matrixU();
  result.sigma = svd.singularValues();
  result.V = svd.matrixV();
  return result;
}

int energy_rank(const Eigen::VectorXd& sigma, double fraction) {
  if (sigma.size() == 0) throw std::invalid_argument("energy_rank: empty sigma");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("energy_rank: fraction must be in (0, 1]");
  const double total = sigma.squaredNorm();
  if (total <= 0.0) throw std::invalid_argument("energy_rank: zero-energy matrix");

  if (fraction == 1.0) {
    int d = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
      if (sigma[i] > 0.0) ++d;
    return d;
  }

  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    cumulative += sigma[i] * sigma[i];
    if (cumulative >= fraction * total) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(sigma.size());
}

SourceBasis source_basis(const Eigen::MatrixXd& ys, double fraction) {
  if (ys.cols() == 0 || ys.rows() == 0)
    throw std::invalid_argument("source_basis: empty matrix");
  SourceBasis basis;
  basis.energy_fraction = fraction;
  basis.row_mean = ys.rowwise().mean();
  const Eigen::MatrixXd centered = ys.colwise() - basis.row_mean;
  const SvdResult svd = thin_svd(centered);
  basis.d = energy_rank(svd.sigma, fraction);
  basis.S = svd.U.leftCols(basis.d);
  return basis;
}

Eigen::MatrixXd find_orth(const Eigen::MatrixXd& ys, const Eigen::MatrixXd& yn,
                          double fraction) {
  if (ys.rows() != yn.rows())
    throw std::invalid_argument("find_orth: bin count mismatch");
  const SourceBasis basis = source_basis(ys, fraction);
  // Yn itself is projected un-centered, exactly as the construction is stated.
  return yn - basis.S * (basis.S.transpose() * yn);
}

Eigen::VectorXd project_onto_span(const Eigen::MatrixXd& basis,
                                  const Eigen::VectorXd& target) {
  if (basis.rows() != target.size())
    throw std::invalid_argument("project_onto_span: length mismatch");
  if (basis.cols() == 0)
    throw std::invalid_argument("project_onto_span: empty basis");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(basis, Eigen::ComputeThinU);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const double max_dim = static_cast<double>(std::max(basis.rows(), basis.cols()));
  const double threshold = max_dim * sigma[0] * 1e-12;
  int rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (sigma[i] > threshold) ++rank;
  if (rank == 0)
    throw std::invalid_argument("project_onto_span: basis is all zero");

  const auto u = svd.matrixU().leftCols(rank);
  return u * (u.transpose() * target);
}

Eigen::VectorXd project_onto_span(const std::vector<Eigen::VectorXd>& basis,
                                  const Eigen::VectorXd& target) {
  if (basis.empty())
    throw std::invalid_argument("project_onto_span: empty basis");
  Eigen::MatrixXd m(basis.front().size(), basis.size());
  for (std::size_t i = 0; i < basis.size(); ++i) {
    if (basis[i].size() != m.rows())
      throw std::invalid_argument("project_onto_span: length mismatch");
    m.col(static_cast<Eigen::Index>(i)) = basis[i];
  }
  return project_onto_span(m, target);
}

}  // namespace sep
