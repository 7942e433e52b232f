#include <catch2/catch_amalgamated.hpp>
#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <random>

#include "cemdg/assembly.hpp"

using namespace cemdg;

namespace {

MaterialField uniform_material(const Mesh& m, double E = 1.0, double nu = 0.25) {
  return material_from_modulus(std::vector<double>(m.num_cells(), E), m.cells_x(), m.cells_y(),
                               nu);
}

Eigen::VectorXd random_vector(long n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Eigen::VectorXd v(n);
  for (long i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("single-element stiffness kernel is the rigid motions") {
  Mesh m(1, 1, 1);
  VoigtTensor v = voigt_tensor(uniform_material(m));
  Eigen::MatrixXd A = Eigen::MatrixXd(assemble_volume(DofRegion::all(m), v));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const auto& ev = es.eigenvalues();
  CHECK(std::abs(ev[0]) <= 1e-12 * ev[7]);
  CHECK(std::abs(ev[2]) <= 1e-12 * ev[7]);
  CHECK(ev[3] > 1e-3 * ev[7]);

  // linearized rotation (-y, x) lies in the kernel
  Eigen::VectorXd rot(8);
  for (int node = 0; node < 4; ++node) {
    auto p = m.node_coords(0, node);
    rot[2 * node] = -p[1];
    rot[2 * node + 1] = p[0];
  }
  CHECK(std::abs(rot.dot(A * rot)) <= 1e-13);
}

TEST_CASE("uniaxial stretch energy") {
  Mesh m(1, 1, 1);
  VoigtTensor v = voigt_tensor(uniform_material(m));
  Eigen::MatrixXd A = Eigen::MatrixXd(assemble_volume(DofRegion::all(m), v));
  Eigen::VectorXd u(8);
  for (int node = 0; node < 4; ++node) {
    u[2 * node] = m.node_coords(0, node)[0];
    u[2 * node + 1] = 0.0;
  }
  CHECK(u.dot(A * u) == Catch::Approx(1.2).epsilon(1e-13));
}

TEST_CASE("volume matrix is linear in the modulus") {
  Mesh m(2, 2, 2);
  MaterialField m1 = uniform_material(m, 1.0);
  MaterialField m10 = uniform_material(m, 10.0);
  SpMat a1 = assemble_volume(DofRegion::all(m), voigt_tensor(m1));
  SpMat a10 = assemble_volume(DofRegion::all(m), voigt_tensor(m10));
  CHECK((Eigen::MatrixXd(a10) - 10.0 * Eigen::MatrixXd(a1)).norm() <=
        1e-14 * Eigen::MatrixXd(a10).norm());
}

TEST_CASE("edge terms vanish for continuous traces") {
  Mesh m(2, 1, 2, Rectangle{0, 0, 2, 1});
  VoigtTensor v = voigt_tensor(uniform_material(m));
  EdgeForms ef = assemble_edge_forms(DofRegion::all(m), v, {8.0, 1});
  // equal traces on both copies of the interior edge, zero on the domain
  // boundary: every jump vanishes, so both edge forms must be zero
  Eigen::VectorXd w = Eigen::VectorXd::Zero(m.num_dofs());
  auto on_boundary = [&](const std::array<double, 2>& p) {
    return p[0] == 0.0 || p[0] == 2.0 || p[1] == 0.0 || p[1] == 1.0;
  };
  for (int b = 0; b < m.num_blocks(); ++b)
    for (int n = 0; n < m.nodes_per_block(); ++n) {
      auto p = m.node_coords(b, n);
      if (on_boundary(p)) continue;
      w[m.dof_index(b, n, 0)] = 0.7 + 0.3 * p[0];
      w[m.dof_index(b, n, 1)] = 1.1 - 0.2 * p[0] * p[1];
    }
  const double scale = Eigen::MatrixXd(ef.penalty).norm() * w.squaredNorm();
  CHECK(std::abs(w.dot(ef.penalty * w)) <= 1e-14 * scale);
  CHECK(std::abs(w.dot(ef.consistency * w)) <= 1e-14 * scale);

  // perturbing one copy of a shared node reopens the jump penalty
  Eigen::VectorXd jumped = w;
  bool touched = false;
  for (const CoarseEdge& e : m.coarse_edges()) {
    if (e.boundary) continue;
    for (int n = 0; n < m.nodes_per_block(); ++n) {
      auto p = m.node_coords(e.block_plus, n);
      if (p[0] == e.ll_x && !on_boundary(p)) {
        jumped[m.dof_index(e.block_plus, n, 0)] += 1.0;
        touched = true;
      }
    }
  }
  REQUIRE(touched);
  CHECK(jumped.dot(ef.penalty * jumped) > 1e-3);
}

TEST_CASE("scheme symmetry structure") {
  Mesh m(2, 2, 2);
  auto E = generate_medium(MediumKind::Channels, m, 1e4, 3);
  VoigtTensor v = voigt_tensor(material_from_modulus(E, m.cells_x(), m.cells_y(), 0.25));
  DofRegion all = DofRegion::all(m);

  Forms sipg = assemble_forms(all, v, {8.0, 1});
  SpMat A = sipg.adg();
  SpMat D = SpMat(A - SpMat(A.transpose()));
  CHECK(Eigen::MatrixXd(D).cwiseAbs().maxCoeff() == 0.0);

  Forms nipg = assemble_forms(all, v, {8.0, -1});
  SpMat An = nipg.adg();
  SpMat asym_full = SpMat(An - SpMat(An.transpose()));
  SpMat asym_cons = SpMat(nipg.consistency - SpMat(nipg.consistency.transpose()));
  CHECK((Eigen::MatrixXd(asym_full) - Eigen::MatrixXd(asym_cons)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(Eigen::MatrixXd(asym_cons).cwiseAbs().maxCoeff() > 0.0);

  CHECK_THROWS_AS(assemble_edge_forms(all, v, {8.0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(assemble_edge_forms(all, v, {-1.0, 1}), std::invalid_argument);
}

TEST_CASE("constant field sees only the boundary penalty") {
  Mesh m(1, 1, 1);
  VoigtTensor v = voigt_tensor(uniform_material(m));
  Forms f = assemble_forms(DofRegion::all(m), v, {8.0, 1});
  Eigen::VectorXd c(8);
  for (int node = 0; node < 4; ++node) {
    c[2 * node] = 1.0;
    c[2 * node + 1] = 2.0;
  }
  CHECK(std::abs(c.dot(f.volume * c)) <= 1e-12);
  CHECK(std::abs(c.dot(f.consistency * c)) <= 1e-12);
  // per edge: gamma/h * (J C J + c D c) integrated over unit-length edges;
  // hand integration gives 8 * (cx^2 + cy^2) * gamma with gamma=8, h=1
  CHECK(c.dot(f.penalty * c) == Catch::Approx(320.0).epsilon(1e-12));
}

TEST_CASE("stability sandwich at the default penalty") {
  std::mt19937_64 rng(42);
  for (double contrast : {1.0, 1e6}) {
    Mesh m(2, 2, 4);
    auto E = contrast == 1.0 ? std::vector<double>(m.num_cells(), 1.0)
                             : generate_medium(MediumKind::ChannelsPlusInclusions, m, contrast, 2024);
    VoigtTensor v = voigt_tensor(material_from_modulus(E, m.cells_x(), m.cells_y(), 0.25));
    Forms f = assemble_forms(DofRegion::all(m), v, {8.0, 1});
    SpMat A = f.adg(), M = f.dg_norm_matrix();
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd x = random_vector(m.num_dofs(), rng);
      Eigen::VectorXd y = random_vector(m.num_dofs(), rng);
      const double ax = x.dot(A * x), mx = x.dot(M * x), my = y.dot(M * y);
      CHECK(ax >= 0.5 * mx);
      CHECK(ax <= 2.0 * mx);
      CHECK(std::abs(x.dot(A * y)) <= 2.0 * std::sqrt(mx) * std::sqrt(my));
    }
  }
}

TEST_CASE("coercivity probe") {
  Mesh m(4, 4, 4);
  MaterialField mat = uniform_material(m);
  CHECK(coercivity_probe(m, mat, {8.0, 1}).ok);
  CoercivityProbe bad = coercivity_probe(m, mat, {1e-8, 1});
  CHECK_FALSE(bad.ok);
  CHECK(bad.message.find("gamma") != std::string::npos);
}

TEST_CASE("weighted mass form") {
  Mesh m(2, 1, 2, Rectangle{0, 0, 2, 1});
  SECTION("constant weight reduces to the scaled bilinear mass matrix") {
    Mesh one(1, 1, 1);
    SpMat B = assemble_b(DofRegion::all(one), uniform_weight(one, 3.0));
    // unit square Q1 mass: 1/36 * (4 diag, 2 edge, 1 diagonal neighbors)
    auto mass = [](int a, int b) {
      const int ax = a % 2, ay = a / 2, bx = b % 2, by = b / 2;
      const int d = std::abs(ax - bx) + std::abs(ay - by);
      return (d == 0 ? 4.0 : d == 1 ? 2.0 : 1.0) / 36.0;
    };
    Eigen::MatrixXd Bd = Eigen::MatrixXd(B);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int comp = 0; comp < 2; ++comp) {
          CHECK(Bd(2 * a + comp, 2 * b + comp) == Catch::Approx(3.0 * mass(a, b)).epsilon(1e-13));
          CHECK(Bd(2 * a, 2 * b + 1) == 0.0);
        }
  }
  SECTION("positive definite and block diagonal") {
    PartitionOfUnity pou = partition_of_unity(m);
    MaterialField mat = uniform_material(m);
    SpMat B = assemble_b(DofRegion::all(m), weight_k1(m, mat, pou));
    Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(B)};
    CHECK(llt.info() == Eigen::Success);
    const int bd = m.dofs_per_block();
    for (int k = 0; k < B.outerSize(); ++k)
      for (SpMat::InnerIterator it(B, k); it; ++it)
        CHECK(it.row() / bd == it.col() / bd);
  }
}

TEST_CASE("source vector") {
  Mesh m(1, 1, 1);
  DofRegion all = DofRegion::all(m);
  Eigen::VectorXd zero = assemble_source(all, {0.0, 0.0});
  CHECK(zero.norm() == 0.0);
  Eigen::VectorXd fy = assemble_source(all, {0.0, 1.0});
  double sum_y = 0.0, sum_x = 0.0;
  for (int node = 0; node < 4; ++node) {
    sum_x += fy[m.dof_index(0, node, 0)];
    sum_y += fy[m.dof_index(0, node, 1)];
  }
  CHECK(sum_x == 0.0);
  CHECK(sum_y == Catch::Approx(1.0).epsilon(1e-14));
  Eigen::VectorXd f2 = assemble_source(all, {0.0, 2.0});
  CHECK((f2 - 2.0 * fy).norm() <= 1e-15);
}

TEST_CASE("regional assembly matches the full grid when saturated") {
  Mesh m(3, 3, 2);
  auto E = generate_medium(MediumKind::ChannelsPlusInclusions, m, 1e4, 9);
  VoigtTensor v = voigt_tensor(material_from_modulus(E, m.cells_x(), m.cells_y(), 0.25));
  SpMat full = assemble_adg(DofRegion::all(m), v, {8.0, 1});
  SpMat sat = assemble_adg(DofRegion::of(m, oversample(m, 4, 3)), v, {8.0, 1});
  CHECK((Eigen::MatrixXd(full) - Eigen::MatrixXd(sat)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("coordinate dump format") {
  Mesh m(1, 1, 1);
  SpMat B = assemble_b(DofRegion::all(m), uniform_weight(m, 2.0));
  const std::string path =
      (std::filesystem::temp_directory_path() / "cemdg_dump.txt").string();
  dump_matrix_coord(B, path);
  std::ifstream in(path);
  long pr = -1, pc = -1;
  long r, c;
  double val;
  int count = 0;
  while (in >> r >> c >> val) {
    CHECK((r > pr || (r == pr && c > pc)));
    CHECK(val == Eigen::MatrixXd(B)(r, c));
    pr = r;
    pc = c;
    ++count;
  }
  CHECK(count == B.nonZeros());
  std::filesystem::remove(path);
}
