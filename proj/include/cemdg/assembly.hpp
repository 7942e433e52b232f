#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cemdg/media.hpp"
#include "cemdg/mesh.hpp"

namespace cemdg {

using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

/// Interior-penalty configuration. eta selects the scheme: 1 (SIPG),
/// 0 (IIPG), -1 (NIPG).
struct AssemblyConfig {
  double gamma = 8.0;
  int eta = 1;

  void validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("AssemblyConfig: gamma must be positive");
    if (eta != -1 && eta != 0 && eta != 1)
      throw std::invalid_argument("AssemblyConfig: eta must be -1, 0 or 1");
  }
  const char* scheme_name() const {
    return eta == 1 ? "SIPG" : (eta == 0 ? "IIPG" : "NIPG");
  }
};

namespace detail {

// Q1 shapes on [0,1]^2, node order (0,0),(1,0),(0,1),(1,1) matching the
// block-local node numbering.
inline std::array<double, 4> q1_values(double xi, double eta) {
  return {(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta};
}
inline std::array<std::array<double, 2>, 4> q1_gradients(double xi, double eta, double hx,
                                                         double hy) {
  return {{{-(1 - eta) / hx, -(1 - xi) / hy},
           {(1 - eta) / hx, -xi / hy},
           {-eta / hx, (1 - xi) / hy},
           {eta / hx, xi / hy}}};
}

// engineering-strain operator (e11, e22, 2 e12) for one quadrature point
inline Eigen::Matrix<double, 3, 8> strain_matrix(double xi, double eta, double hx, double hy) {
  const auto g = q1_gradients(xi, eta, hx, hy);
  Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
  for (int a = 0; a < 4; ++a) {
    B(0, 2 * a) = g[a][0];
    B(1, 2 * a + 1) = g[a][1];
    B(2, 2 * a) = g[a][1];
    B(2, 2 * a + 1) = g[a][0];
  }
  return B;
}

inline Eigen::Matrix3d voigt_matrix(const VoigtTensor& v, long cell) {
  Eigen::Matrix3d C;
  C << v.c11[cell], v.c13[cell], 0.0, v.c13[cell], v.c11[cell], 0.0, 0.0, 0.0, v.c55[cell];
  return C;
}

// symmetrized matrix jump of v x n in strain-like Voigt encoding
// (tau11, tau22, 2 tau12)
inline Eigen::Matrix<double, 3, 8> jump_matrix(const std::array<double, 4>& N, double nx,
                                               double ny) {
  Eigen::Matrix<double, 3, 8> J = Eigen::Matrix<double, 3, 8>::Zero();
  for (int a = 0; a < 4; ++a) {
    J(0, 2 * a) = nx * N[a];
    J(1, 2 * a + 1) = ny * N[a];
    J(2, 2 * a) = ny * N[a];
    J(2, 2 * a + 1) = nx * N[a];
  }
  return J;
}

inline Eigen::Matrix<double, 2, 8> trace_matrix(const std::array<double, 4>& N, double sign) {
  Eigen::Matrix<double, 2, 8> V = Eigen::Matrix<double, 2, 8>::Zero();
  for (int a = 0; a < 4; ++a) {
    V(0, 2 * a) = sign * N[a];
    V(1, 2 * a + 1) = sign * N[a];
  }
  return V;
}

// scatter a local block (cell corner nodes x 2 comps) into triplets
inline void scatter_cell(const DofRegion& region, int block, int lx, int ly,
                         const Eigen::Matrix<double, 8, 8>& K, Triplets& out) {
  const Mesh& m = region.mesh();
  std::array<long, 8> dofs;
  int k = 0;
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const int node = m.node_index(lx + dx, ly + dy);
      dofs[k++] = region.dof(block, node, 0);
      dofs[k++] = region.dof(block, node, 1);
    }
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (K(i, j) != 0.0) out.emplace_back(dofs[i], dofs[j], K(i, j));
}

// one side of a coarse-edge fine segment
struct EdgeSide {
  int block;          // global block id
  long cell;          // global fine-cell raster index
  double xi, eta0;    // trace location: fixed coordinate and segment origin
  bool vertical;      // edge axis
  double nx, ny;      // normal used in the matrix jump
  double sign;        // +1 / -1 in the vector jump
  std::array<long, 8> dofs;
};

inline EdgeSide edge_side(const DofRegion& region, const CoarseEdge& e, int seg, int block,
                          bool is_plus, bool one_sided) {
  const Mesh& m = region.mesh();
  EdgeSide s{};
  s.block = block;
  s.vertical = e.axis == EdgeAxis::AlongY;
  s.sign = is_plus ? 1.0 : -1.0;
  if (one_sided) s.sign = 1.0;
  const double nsign = is_plus ? 1.0 : -1.0;
  s.nx = nsign * e.normal_plus[0];
  s.ny = nsign * e.normal_plus[1];
  const int cx = m.block_cx(block), cy = m.block_cy(block);
  int lx, ly;
  if (s.vertical) {
    // block sits left (trace at xi=1) or right (xi=0) of the edge line
    const bool left = s.nx > 0.0;
    lx = left ? m.nf() - 1 : 0;
    ly = seg;
    s.xi = left ? 1.0 : 0.0;
  } else {
    const bool below = s.ny > 0.0;
    lx = seg;
    ly = below ? m.nf() - 1 : 0;
    s.xi = below ? 1.0 : 0.0;
  }
  s.cell = m.cell_index(cx * m.nf() + lx, cy * m.nf() + ly);
  int k = 0;
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const int node = m.node_index(lx + dx, ly + dy);
      s.dofs[k++] = region.dof(block, node, 0);
      s.dofs[k++] = region.dof(block, node, 1);
    }
  return s;
}

}  // namespace detail

/// Volume stress-strain form: per-block Q1 stiffness with 2x2 Gauss,
/// exact for bilinear elements with cellwise-constant coefficients.
inline SpMat assemble_volume(const DofRegion& region, const VoigtTensor& voigt) {
  const Mesh& m = region.mesh();
  if (voigt.nx != m.cells_x() || voigt.ny != m.cells_y())
    throw std::invalid_argument("assemble_volume: coefficient raster does not match the mesh");
  Triplets trip;
  trip.reserve(region.blocks().size() * m.nf() * m.nf() * 64);
  const double jac = m.hx() * m.hy();
  for (int block : region.blocks()) {
    const int cx = m.block_cx(block), cy = m.block_cy(block);
    for (int ly = 0; ly < m.nf(); ++ly)
      for (int lx = 0; lx < m.nf(); ++lx) {
        const long cell = m.cell_index(cx * m.nf() + lx, cy * m.nf() + ly);
        const Eigen::Matrix3d C = detail::voigt_matrix(voigt, cell);
        Eigen::Matrix<double, 8, 8> K = Eigen::Matrix<double, 8, 8>::Zero();
        for (double qy : quad::points)
          for (double qx : quad::points) {
            const auto B = detail::strain_matrix(qx, qy, m.hx(), m.hy());
            K += (0.25 * jac) * B.transpose() * C * B;
          }
        K = 0.5 * (K + K.transpose()).eval();
        detail::scatter_cell(region, block, lx, ly, K, trip);
      }
  }
  SpMat A(region.num_dofs(), region.num_dofs());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

/// Coarse-edge terms, split into the average-flux consistency part and the
/// jump penalty part. Edges with exactly one adjacent block inside the
/// region are treated one-sided, which weakly imposes a zero Dirichlet
/// condition on the region boundary.
struct EdgeForms {
  SpMat consistency;
  SpMat penalty;
};

inline EdgeForms assemble_edge_forms(const DofRegion& region, const VoigtTensor& voigt,
                                     const AssemblyConfig& config) {
  config.validate();
  const Mesh& m = region.mesh();
  if (voigt.nx != m.cells_x() || voigt.ny != m.cells_y())
    throw std::invalid_argument("assemble_edge_forms: coefficient raster mismatch");
  Triplets tc, tp;
  for (const CoarseEdge& e : m.coarse_edges()) {
    const bool plus_in = region.contains(e.block_plus);
    const bool minus_in = !e.boundary && region.contains(e.block_minus);
    if (!plus_in && !minus_in) continue;
    const bool interior = plus_in && minus_in;
    const int nsides = interior ? 2 : 1;
    const double seglen = e.axis == EdgeAxis::AlongY ? m.hy() : m.hx();
    const double hperp = e.axis == EdgeAxis::AlongY ? m.hx() : m.hy();
    const double pen_scale = config.gamma / hperp;

    for (int seg = 0; seg < m.nf(); ++seg) {
      std::array<detail::EdgeSide, 2> sides;
      if (interior) {
        sides[0] = detail::edge_side(region, e, seg, e.block_plus, true, false);
        sides[1] = detail::edge_side(region, e, seg, e.block_minus, false, false);
      } else {
        const bool use_plus = plus_in;
        // one-sided: flip the stored normal when only the minus block is kept
        sides[0] = detail::edge_side(region, e, seg, use_plus ? e.block_plus : e.block_minus,
                                     use_plus, true);
      }
      const int ndof = 8 * nsides;
      Eigen::MatrixXd Kc = Eigen::MatrixXd::Zero(ndof, ndof);
      Eigen::MatrixXd Kp = Eigen::MatrixXd::Zero(ndof, ndof);

      for (int q = 0; q < 2; ++q) {
        const double t = quad::points[q];
        const double w = quad::weights[q] * seglen;
        Eigen::MatrixXd J(3, ndof), S(3, ndof), V(2, ndof);
        Eigen::Matrix3d Cavg = Eigen::Matrix3d::Zero();
        double davg = 0.0;
        for (int s = 0; s < nsides; ++s) {
          const auto& sd = sides[s];
          const double xi = sd.vertical ? sd.xi : t;
          const double eta = sd.vertical ? t : sd.xi;
          const auto N = detail::q1_values(xi, eta);
          const Eigen::Matrix3d C = detail::voigt_matrix(voigt, sd.cell);
          J.block<3, 8>(0, 8 * s) = detail::jump_matrix(N, sd.nx, sd.ny);
          S.block<3, 8>(0, 8 * s) =
              (1.0 / nsides) * C * detail::strain_matrix(xi, eta, m.hx(), m.hy());
          V.block<2, 8>(0, 8 * s) = detail::trace_matrix(N, sd.sign);
          Cavg += (1.0 / nsides) * C;
          davg += (1.0 / nsides) * voigt.d[sd.cell];
        }
        Kc -= w * (J.transpose() * S + config.eta * S.transpose() * J);
        Kp += (w * pen_scale) * (J.transpose() * Cavg * J + davg * V.transpose() * V);
      }
      Kp = 0.5 * (Kp + Kp.transpose()).eval();
      if (config.eta == 1) Kc = 0.5 * (Kc + Kc.transpose()).eval();

      std::array<long, 16> dofs;
      for (int s = 0; s < nsides; ++s)
        for (int i = 0; i < 8; ++i) dofs[8 * s + i] = sides[s].dofs[i];
      for (int i = 0; i < ndof; ++i)
        for (int j = 0; j < ndof; ++j) {
          if (Kc(i, j) != 0.0) tc.emplace_back(dofs[i], dofs[j], Kc(i, j));
          if (Kp(i, j) != 0.0) tp.emplace_back(dofs[i], dofs[j], Kp(i, j));
        }
    }
  }
  EdgeForms f;
  f.consistency.resize(region.num_dofs(), region.num_dofs());
  f.consistency.setFromTriplets(tc.begin(), tc.end());
  f.penalty.resize(region.num_dofs(), region.num_dofs());
  f.penalty.setFromTriplets(tp.begin(), tp.end());
  return f;
}

inline SpMat assemble_edge_terms(const DofRegion& region, const VoigtTensor& voigt,
                                 const AssemblyConfig& config) {
  EdgeForms f = assemble_edge_forms(region, voigt, config);
  return f.consistency + f.penalty;
}

/// The assembled interior-penalty operator together with the pieces needed
/// for the DG norm (volume + penalty, no consistency part).
struct Forms {
  SpMat volume;
  SpMat consistency;
  SpMat penalty;

  SpMat adg() const { return volume + consistency + penalty; }
  SpMat dg_norm_matrix() const { return volume + penalty; }
};

inline Forms assemble_forms(const DofRegion& region, const VoigtTensor& voigt,
                            const AssemblyConfig& config) {
  Forms f;
  f.volume = assemble_volume(region, voigt);
  EdgeForms e = assemble_edge_forms(region, voigt, config);
  f.consistency = std::move(e.consistency);
  f.penalty = std::move(e.penalty);
  return f;
}

inline SpMat assemble_adg(const DofRegion& region, const VoigtTensor& voigt,
                          const AssemblyConfig& config) {
  return assemble_forms(region, voigt, config).adg();
}

/// Weighted vector mass form b: block-diagonal over coarse elements,
/// integrand k1 (w . v) with k1 sampled at the cell Gauss points.
inline SpMat assemble_b(const DofRegion& region, const WeightField& weights) {
  const Mesh& m = region.mesh();
  if (weights.nx != m.cells_x() || weights.ny != m.cells_y())
    throw std::invalid_argument("assemble_b: weight raster does not match the mesh");
  Triplets trip;
  const double jac = m.hx() * m.hy();
  for (int block : region.blocks()) {
    const int cx = m.block_cx(block), cy = m.block_cy(block);
    for (int ly = 0; ly < m.nf(); ++ly)
      for (int lx = 0; lx < m.nf(); ++lx) {
        const long cell = m.cell_index(cx * m.nf() + lx, cy * m.nf() + ly);
        Eigen::Matrix4d Mq = Eigen::Matrix4d::Zero();
        int q = 0;
        for (double qy : quad::points)
          for (double qx : quad::points) {
            const auto N = detail::q1_values(qx, qy);
            const double w = 0.25 * jac * weights.k1[cell][q++];
            for (int a = 0; a < 4; ++a)
              for (int b = 0; b < 4; ++b) Mq(a, b) += w * N[a] * N[b];
          }
        Mq = 0.5 * (Mq + Mq.transpose()).eval();
        Eigen::Matrix<double, 8, 8> K = Eigen::Matrix<double, 8, 8>::Zero();
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 2; ++c) K(2 * a + c, 2 * b + c) = Mq(a, b);
        detail::scatter_cell(region, block, lx, ly, K, trip);
      }
  }
  SpMat B(region.num_dofs(), region.num_dofs());
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

/// Load vector for a constant force density.
inline Eigen::VectorXd assemble_source(const DofRegion& region, const std::array<double, 2>& f) {
  const Mesh& m = region.mesh();
  if (!std::isfinite(f[0]) || !std::isfinite(f[1]))
    throw std::invalid_argument("assemble_source: force must be finite");
  Eigen::VectorXd F = Eigen::VectorXd::Zero(region.num_dofs());
  const double jac = m.hx() * m.hy();
  for (int block : region.blocks()) {
    for (int ly = 0; ly < m.nf(); ++ly)
      for (int lx = 0; lx < m.nf(); ++lx) {
        for (double qy : quad::points)
          for (double qx : quad::points) {
            const auto N = detail::q1_values(qx, qy);
            const double w = 0.25 * jac;
            for (int a = 0; a < 4; ++a) {
              const int node = m.node_index(lx + (a % 2), ly + (a / 2));
              // careful: node order of q1_values is (0,0),(1,0),(0,1),(1,1)
              F[region.dof(block, node, 0)] += w * N[a] * f[0];
              F[region.dof(block, node, 1)] += w * N[a] * f[1];
            }
          }
      }
  }
  return F;
}

/// Coordinate-format dump: "row col value" per line, 0-based, sorted by
/// (row, col).
inline void dump_matrix_coord(const SpMat& A, const std::string& path) {
  struct Entry {
    long r, c;
    double v;
  };
  std::vector<Entry> entries;
  entries.reserve(A.nonZeros());
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      entries.push_back({it.row(), it.col(), it.value()});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.r != b.r ? a.r < b.r : a.c < b.c;
  });
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump_matrix_coord: cannot open " + path);
  char buf[64];
  for (const Entry& e : entries) {
    std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n", e.r, e.c, e.v);
    out << buf;
  }
}

/// Startup coercivity check on a coarsened surrogate grid: verifies the
/// smallest eigenvalue of A - 1/2 * M_dg is nonnegative, which is the
/// discrete form of the lower stability bound. On failure the caller should
/// retry with a doubled penalty.
struct CoercivityProbe {
  bool ok = true;
  double min_eigenvalue = 0.0;
  std::string message;
};

inline CoercivityProbe coercivity_probe(const Mesh& mesh, const MaterialField& material,
                                        const AssemblyConfig& config) {
  const int nc = std::min(2, std::min(mesh.nc_x(), mesh.nc_y()));
  const int nf = std::min(4, mesh.nf());
  Mesh sur(nc, nc, nf, mesh.extent());
  // subsample the modulus raster onto the surrogate
  std::vector<double> E(sur.num_cells());
  for (int y = 0; y < sur.cells_y(); ++y)
    for (int x = 0; x < sur.cells_x(); ++x) {
      const int sx = x * mesh.cells_x() / sur.cells_x();
      const int sy = y * mesh.cells_y() / sur.cells_y();
      E[sur.cell_index(x, y)] = material.E[mesh.cell_index(sx, sy)];
    }
  MaterialField sm = material_from_modulus(std::move(E), sur.cells_x(), sur.cells_y(), material.nu);
  VoigtTensor sv = voigt_tensor(sm);
  DofRegion all = DofRegion::all(sur);
  Forms f = assemble_forms(all, sv, config);
  Eigen::MatrixXd gap = Eigen::MatrixXd(f.adg()) - 0.5 * Eigen::MatrixXd(f.dg_norm_matrix());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (gap + gap.transpose()),
                                                    Eigen::EigenvaluesOnly);
  CoercivityProbe p;
  p.min_eigenvalue = es.eigenvalues().minCoeff();
  const double scale = Eigen::MatrixXd(f.dg_norm_matrix()).norm();
  p.ok = p.min_eigenvalue >= -1e-12 * scale;
  if (!p.ok)
    p.message = "coercivity probe failed (min eigenvalue " + std::to_string(p.min_eigenvalue) +
                "); consider doubling gamma";
  return p;
}

}  // namespace cemdg
