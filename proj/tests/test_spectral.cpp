#include <catch2/catch_amalgamated.hpp>
#include <Eigen/Dense>
#include <random>

#include "cemdg/spectral.hpp"

using namespace cemdg;

namespace {

struct BlockCtx {
  Mesh mesh;
  MaterialField material;
  VoigtTensor voigt;
  WeightField weights;
  BlockCtx(Mesh m, std::vector<double> E)
      : mesh(std::move(m)),
        material(material_from_modulus(std::move(E), mesh.cells_x(), mesh.cells_y(), 0.25)),
        voigt(voigt_tensor(material)),
        weights(weight_k1(mesh, material, partition_of_unity(mesh))) {}
};

// independent route to the same spectrum: explicit B^{-1/2} A B^{-1/2}
Eigen::VectorXd oracle_spectrum(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> bes(B);
  const Eigen::MatrixXd S = bes.operatorInverseSqrt();
  const Eigen::MatrixXd M = S * A * S;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace

TEST_CASE("uniform block spectrum: three rigid modes") {
  BlockCtx c(Mesh(1, 1, 6), std::vector<double>(36, 1.0));
  ElementSpectrum s = local_spectral(c.mesh, c.voigt, c.weights, 0, 8);
  REQUIRE(s.eigenvalues.size() == c.mesh.dofs_per_block());
  const double l4 = s.eigenvalues[3];
  REQUIRE(l4 > 0.0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s.eigenvalues[i]) <= 1e-10 * l4);
  CHECK(s.eigenvalues[4] >= l4);
}

TEST_CASE("eigenvectors are b-orthonormal with small residuals") {
  Mesh mesh(2, 2, 5);
  auto E = generate_medium(MediumKind::ChannelsPlusInclusions, mesh, 1e4, 2024);
  BlockCtx c(std::move(mesh), E);
  for (int j = 0; j < c.mesh.num_blocks(); ++j) {
    ElementSpectrum s = local_spectral(c.mesh, c.voigt, c.weights, j, 6);
    DofRegion blk = DofRegion::of(c.mesh, oversample(c.mesh, j, 0));
    const Eigen::MatrixXd A = Eigen::MatrixXd(assemble_volume(blk, c.voigt));
    const Eigen::MatrixXd B = Eigen::MatrixXd(assemble_b(blk, c.weights));
    const Eigen::MatrixXd G = s.eigenvectors.transpose() * B * s.eigenvectors;
    CHECK((G - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-10);
    const double a_scale = A.norm();
    for (int i = 0; i < 6; ++i) {
      const Eigen::VectorXd r =
          A * s.eigenvectors.col(i) - s.eigenvalues[i] * (B * s.eigenvectors.col(i));
      CHECK(r.norm() <= 1e-9 * a_scale * s.eigenvectors.col(i).norm());
    }
    CHECK((s.moments - B * s.eigenvectors).norm() == 0.0);
  }
}

TEST_CASE("spectrum matches an independent reduction") {
  Mesh mesh(1, 1, 6);
  std::vector<double> E(36, 1.0);
  for (int x = 0; x < 6; ++x) E[mesh.cell_index(x, 2)] = 1e4;
  BlockCtx c(std::move(mesh), E);
  ElementSpectrum s = local_spectral(c.mesh, c.voigt, c.weights, 0, 8);
  DofRegion blk = DofRegion::of(c.mesh, oversample(c.mesh, 0, 0));
  const Eigen::MatrixXd A = Eigen::MatrixXd(assemble_volume(blk, c.voigt));
  const Eigen::MatrixXd B = Eigen::MatrixXd(assemble_b(blk, c.weights));
  const Eigen::VectorXd ref = oracle_spectrum(A, B);
  const double scale = std::abs(ref[ref.size() - 1]);
  for (int i = 0; i < 12; ++i)
    CHECK(std::abs(s.eigenvalues[i] - ref[i]) <= 1e-8 * std::max(1.0, scale));
}

TEST_CASE("stiff channel pair creates contrast-small eigenvalues") {
  // two disjoint stiff channels crossing the block: their relative motions
  // cost only background energy but carry contrast-heavy mass, so extra
  // eigenvalues drop by orders of magnitude (the uniform block has exactly
  // the three rigid near-zeros)
  Mesh mesh(1, 1, 8);
  std::vector<double> uni(64, 1.0);
  std::vector<double> two = uni;
  for (int x = 0; x < 8; ++x) {
    two[mesh.cell_index(x, 2)] = 1e4;
    two[mesh.cell_index(x, 5)] = 1e4;
  }
  BlockCtx cu(Mesh(1, 1, 8), uni);
  BlockCtx cc(Mesh(1, 1, 8), two);
  DofRegion blk = DofRegion::of(cu.mesh, oversample(cu.mesh, 0, 0));
  const Eigen::VectorXd ref_u = oracle_spectrum(
      Eigen::MatrixXd(assemble_volume(blk, cu.voigt)), Eigen::MatrixXd(assemble_b(blk, cu.weights)));
  DofRegion blk2 = DofRegion::of(cc.mesh, oversample(cc.mesh, 0, 0));
  const Eigen::VectorXd ref_c = oracle_spectrum(
      Eigen::MatrixXd(assemble_volume(blk2, cc.voigt)),
      Eigen::MatrixXd(assemble_b(blk2, cc.weights)));
  const double small = ref_u[3] / 100.0;  // well below the first non-rigid uniform eigenvalue
  int count_u = 0, count_c = 0;
  for (int i = 0; i < ref_u.size(); ++i) count_u += ref_u[i] < small;
  for (int i = 0; i < ref_c.size(); ++i) count_c += ref_c[i] < small;
  CHECK(count_u == 3);
  CHECK(count_c >= 4);
  // the implementation path agrees on the small group
  ElementSpectrum s = local_spectral(cc.mesh, cc.voigt, cc.weights, 0, 8);
  int count_impl = 0;
  for (int i = 0; i < 8; ++i) count_impl += s.eigenvalues[i] < small;
  CHECK(count_impl == count_c);
}

TEST_CASE("projection operator") {
  Mesh mesh(2, 2, 3);
  auto E = generate_medium(MediumKind::Channels, mesh, 1e4, 5);
  BlockCtx c(std::move(mesh), E);
  AuxiliarySpace aux = build_auxiliary_space(c.mesh, c.voigt, c.weights, 3);
  ProjectionOperator pi(c.mesh, aux);
  const long n = c.mesh.num_dofs();

  SECTION("eigenfunctions project to unit coefficients") {
    for (int j = 0; j < c.mesh.num_blocks(); ++j)
      for (int i = 0; i < 3; ++i) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
        v.segment(static_cast<long>(j) * c.mesh.dofs_per_block(), c.mesh.dofs_per_block()) =
            aux.elements[j].eigenvectors.col(i);
        Eigen::VectorXd coeffs = pi.project(v);
        for (long k = 0; k < coeffs.size(); ++k)
          CHECK(std::abs(coeffs[k] - (k == aux.pair_index(j, i) ? 1.0 : 0.0)) <= 1e-12);
      }
  }
  SECTION("b-orthogonal complement projects to zero") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> dist;
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i) v[i] = dist(rng);
    Eigen::VectorXd w = v - pi.apply(v);
    CHECK(pi.project(w).cwiseAbs().maxCoeff() <= 1e-12 * v.norm());
  }
  SECTION("idempotence") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> dist;
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i) v[i] = dist(rng);
    Eigen::VectorXd once = pi.project(pi.apply(v));
    Eigen::VectorXd direct = pi.project(v);
    CHECK((once - direct).cwiseAbs().maxCoeff() <= 1e-12 * direct.cwiseAbs().maxCoeff());
  }
  SECTION("moment and eigenvector matrices realize the projection") {
    DofRegion all = DofRegion::all(c.mesh);
    SpMat C = pi.moment_matrix(all);
    SpMat Psi = pi.eigenvector_matrix(all);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> dist;
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i) v[i] = dist(rng);
    CHECK((Eigen::VectorXd(Psi * (C * v)) - pi.apply(v)).norm() <= 1e-13 * v.norm());
    // CPsi = identity by b-orthonormality
    Eigen::MatrixXd CP = Eigen::MatrixXd(SpMat(C * Psi));
    CHECK((CP - Eigen::MatrixXd::Identity(CP.rows(), CP.cols())).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("auxiliary space construction is schedule independent") {
  Mesh mesh(3, 2, 3);
  auto E = generate_medium(MediumKind::ChannelsPlusInclusions, mesh, 1e4, 8);
  BlockCtx c(std::move(mesh), E);
  AuxiliarySpace a = build_auxiliary_space(c.mesh, c.voigt, c.weights, 4, 1);
  AuxiliarySpace b = build_auxiliary_space(c.mesh, c.voigt, c.weights, 4, 3);
  for (int j = 0; j < c.mesh.num_blocks(); ++j) {
    CHECK((a.elements[j].eigenvalues - b.elements[j].eigenvalues).norm() == 0.0);
    CHECK((a.elements[j].eigenvectors - b.elements[j].eigenvectors).norm() == 0.0);
  }
}

TEST_CASE("spectral input validation") {
  BlockCtx c(Mesh(2, 1, 2), std::vector<double>(8, 1.0));
  CHECK_THROWS_AS(local_spectral(c.mesh, c.voigt, c.weights, 5, 2), std::invalid_argument);
  CHECK_THROWS_AS(local_spectral(c.mesh, c.voigt, c.weights, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(local_spectral(c.mesh, c.voigt, c.weights, 0, 100), std::invalid_argument);
}
