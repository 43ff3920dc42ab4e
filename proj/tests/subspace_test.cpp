#include <doctest.h>

#include <random>

#include "sep/subspace.hpp"
#include "test_util.hpp"

using namespace sep;

namespace {

// Zero-mean rows, column space exactly span{e1, e2}.
Eigen::MatrixXd plane_matrix(int rows) {
  Eigen::MatrixXd ys = Eigen::MatrixXd::Zero(rows, 4);
  ys(0, 0) = 1.0;
  ys(0, 1) = -1.0;
  ys(1, 2) = 1.0;
  ys(1, 3) = -1.0;
  return ys;
}

}  // namespace

TEST_SUITE("subspace") {

TEST_CASE("thin_svd of the identity") {
  const SvdResult svd = thin_svd(Eigen::MatrixXd::Identity(3, 3));
  for (int i = 0; i < 3; ++i) CHECK(svd.sigma[i] == doctest::Approx(1.0));
}

TEST_CASE("thin_svd sorts singular values") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 1) = 3.0;  // columns swapped relative to diag(3, 4)
  m(1, 0) = 4.0;
  const SvdResult svd = thin_svd(m);
  CHECK(svd.sigma[0] == doctest::Approx(4.0));
  CHECK(svd.sigma[1] == doctest::Approx(3.0));
}

TEST_CASE("thin_svd reconstructs and matches the MM^T eigen-oracle") {
  std::mt19937_64 rng(13);
  const Eigen::MatrixXd m = testutil::random_matrix(20, 50, rng);
  const SvdResult svd = thin_svd(m);

  CHECK(svd.U.rows() == 20);
  CHECK(svd.U.cols() == 20);
  CHECK(svd.V.rows() == 50);
  CHECK(svd.V.cols() == 20);
  const Eigen::MatrixXd recon = svd.U * svd.sigma.asDiagonal() * svd.V.transpose();
  CHECK((recon - m).norm() / m.norm() < 1e-10);

  const Eigen::MatrixXd id20 = Eigen::MatrixXd::Identity(20, 20);
  CHECK((svd.U.transpose() * svd.U - id20).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((svd.V.transpose() * svd.V - id20).cwiseAbs().maxCoeff() < 1e-9);

  const Eigen::VectorXd evals = testutil::jacobi_eigenvalues(m * m.transpose());
  for (int i = 0; i < 20; ++i)
    CHECK(svd.sigma[i] * svd.sigma[i] == doctest::Approx(evals[i]).epsilon(1e-9));
}

TEST_CASE("thin_svd rejects non-finite input") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(thin_svd(m), std::invalid_argument);
}

TEST_CASE("energy_rank picks the smallest sufficient rank") {
  Eigen::VectorXd sigma(2);
  sigma << 4.0, 3.0;  // energies 16 + 9 = 25; 0.95*25 = 23.75 needs both
  CHECK(energy_rank(sigma, 0.95) == 2);

  Eigen::VectorXd spike(3);
  spike << 5.0, 0.0, 0.0;
  CHECK(energy_rank(spike, 0.95) == 1);
}

TEST_CASE("energy_rank at fraction 1 counts the positive values") {
  Eigen::VectorXd sigma(4);
  sigma << 9.0, 2.0, 1e-8, 0.0;
  CHECK(energy_rank(sigma, 1.0) == 3);
}

TEST_CASE("energy_rank rejects a zero-energy matrix") {
  CHECK_THROWS_WITH_AS(energy_rank(Eigen::VectorXd::Zero(3), 0.95),
                       doctest::Contains("zero-energy matrix"),
                       std::invalid_argument);
}

TEST_CASE("find_orth passes through an orthogonal interferer") {
  const Eigen::MatrixXd ys = plane_matrix(5);
  Eigen::MatrixXd yn = Eigen::MatrixXd::Zero(5, 1);
  yn(2, 0) = 1.0;  // e3, orthogonal to span{e1, e2}
  const Eigen::MatrixXd out = find_orth(ys, yn, 0.95);
  CHECK((out - yn).norm() < 1e-12);
}

TEST_CASE("find_orth annihilates an in-span interferer") {
  const Eigen::MatrixXd ys = plane_matrix(5);
  Eigen::MatrixXd yn = Eigen::MatrixXd::Zero(5, 1);
  yn(0, 0) = 1.0;  // e1, inside the source span
  CHECK(find_orth(ys, yn, 0.95).norm() < 1e-10);
}

TEST_CASE("find_orth matches the normal-equations oracle") {
  std::mt19937_64 rng(17);
  const Eigen::MatrixXd ys = testutil::random_matrix(8, 40, rng, 0.0, 1.0);
  const Eigen::MatrixXd yn = testutil::random_matrix(8, 40, rng, 0.0, 1.0);
  const Eigen::MatrixXd out = find_orth(ys, yn, 0.95);

  const SourceBasis basis = source_basis(ys, 0.95);
  Eigen::MatrixXd oracle(yn.rows(), yn.cols());
  for (int c = 0; c < yn.cols(); ++c)
    oracle.col(c) =
        yn.col(c) - testutil::project_by_normal_equations(basis.S, yn.col(c));
  CHECK((out - oracle).norm() < 1e-9);
  CHECK((basis.S.transpose() * out).norm() <= 1e-8 * yn.norm());
}

TEST_CASE("find_orth error cases") {
  const Eigen::MatrixXd ys = plane_matrix(5);
  CHECK_THROWS_AS(find_orth(ys, Eigen::MatrixXd::Zero(4, 2), 0.95),
                  std::invalid_argument);
  CHECK_THROWS_AS(find_orth(Eigen::MatrixXd::Zero(5, 4),
                            Eigen::MatrixXd::Zero(5, 2), 0.95),
                  std::invalid_argument);
}

TEST_CASE("project_onto_span basics") {
  std::mt19937_64 rng(19);
  const Eigen::MatrixXd basis = testutil::random_matrix(12, 3, rng);

  SUBCASE("a vector already in the span is unchanged") {
    const Eigen::VectorXd coeffs = testutil::random_vector(3, rng);
    const Eigen::VectorXd target = basis * coeffs;
    CHECK((project_onto_span(basis, target) - target).norm() < 1e-10);
  }

  SUBCASE("an orthogonal vector projects to zero") {
    // build something orthogonal to all columns by deflation
    Eigen::VectorXd v = testutil::random_vector(12, rng);
    const Eigen::VectorXd p = testutil::project_by_normal_equations(basis, v);
    const Eigen::VectorXd orth = v - p;
    CHECK(project_onto_span(basis, orth).norm() < 1e-9 * v.norm());
  }
}

TEST_CASE("project_onto_span hand case") {
  Eigen::MatrixXd basis(3, 2);
  basis << 1.0, 1.0, 0.0, 1.0, 0.0, 0.0;
  Eigen::VectorXd target(3);
  target << 0.5, 0.5, 1.0;
  const Eigen::VectorXd proj = project_onto_span(basis, target);
  CHECK(proj[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(proj[1] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(proj[2] == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("project_onto_span length mismatch") {
  std::vector<Eigen::VectorXd> basis = {Eigen::VectorXd::Ones(4),
                                        Eigen::VectorXd::Ones(5)};
  CHECK_THROWS_AS(project_onto_span(basis, Eigen::VectorXd::Ones(4)),
                  std::invalid_argument);
}

TEST_CASE("property: projection idempotence and Pythagoras") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 16 + static_cast<int>(testutil::uniform(rng, 0, 48));
    const int k = 1 + static_cast<int>(testutil::uniform(rng, 0, 4));
    const Eigen::MatrixXd basis = testutil::random_matrix(n, k, rng);
    const Eigen::VectorXd t = testutil::random_vector(n, rng);
    const Eigen::VectorXd p = project_onto_span(basis, t);
    CHECK((project_onto_span(basis, p) - p).norm() < 1e-9);
    const double total = t.squaredNorm();
    CHECK(std::abs(p.squaredNorm() + (t - p).squaredNorm() - total) / total <
          1e-9);
  }
}

TEST_CASE("property: find_orth ignores column permutations of Ys") {
  std::mt19937_64 rng(29);
  const Eigen::MatrixXd ys = testutil::random_matrix(6, 12, rng, 0.0, 1.0);
  const Eigen::MatrixXd yn = testutil::random_matrix(6, 9, rng, 0.0, 1.0);

  std::vector<int> perm(12);
  for (int i = 0; i < 12; ++i) perm[i] = i;
  for (int i = 11; i > 0; --i)
    std::swap(perm[i], perm[rng() % static_cast<uint64_t>(i + 1)]);
  Eigen::MatrixXd ys_perm(6, 12);
  for (int c = 0; c < 12; ++c) ys_perm.col(c) = ys.col(perm[c]);

  // Permuting frames permutes the per-row mean and the spanned subspace not
  // at all, so the outputs must agree.
  const Eigen::MatrixXd a = find_orth(ys, yn, 0.95);
  const Eigen::MatrixXd b = find_orth(ys_perm, yn, 0.95);
  CHECK((a - b).norm() < 1e-8 * std::max(1.0, yn.norm()));
}

TEST_CASE("property: fraction 1 with a full-rank basis annihilates everything") {
  std::mt19937_64 rng(31);
  const int bins = 6;
  // more columns than bins, rows centered afterwards stay full rank
  const Eigen::MatrixXd ys = testutil::random_matrix(bins, 24, rng, 0.0, 1.0);
  const Eigen::MatrixXd yn = testutil::random_matrix(bins, 10, rng, 0.0, 1.0);
  const Eigen::MatrixXd out = find_orth(ys, yn, 1.0);
  CHECK(out.norm() < 1e-8 * yn.norm());
}

}  // TEST_SUITE
