#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "cemdg/basis.hpp"

namespace cemdg {

struct FineSolve {
  Eigen::VectorXd u;
  double rel_residual = 0.0;
};

/// Fine-grid reference solve of the interior-penalty problem. Homogeneous
/// Dirichlet data enters weakly through the boundary-edge terms, so the
/// system is solved on all DOFs.
inline FineSolve solve_reference(const SpMat& A, const Eigen::VectorXd& F) {
  FineSolve out;
  if (F.norm() == 0.0) {
    out.u = Eigen::VectorXd::Zero(F.size());
    return out;
  }
  Eigen::SimplicialLDLT<SpMat> ldlt(A);
  bool ok = ldlt.info() == Eigen::Success;
  if (ok) {
    out.u = detail::refined_solve(ldlt, A, F, 1e-11, out.rel_residual);
    ok = out.rel_residual <= 1e-9 && out.u.allFinite();
  }
  if (!ok) {
    Eigen::SparseLU<SpMat> lu(A);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("solve_reference: factorization failed");
    out.u = detail::refined_solve(lu, A, F, 1e-11, out.rel_residual);
    if (!(out.rel_residual <= 1e-9))
      throw std::runtime_error("solve_reference: residual " +
                               detail::format_residual(out.rel_residual) + " exceeds 1e-9");
  }
  return out;
}

struct CoarseSolve {
  Eigen::VectorXd coefficients;  // one per basis column
  Eigen::VectorXd u;             // downscaled to fine DOFs
  double rel_residual = 0.0;
};

/// Galerkin solve on the span of the basis columns: A_c = R^T A R,
/// rhs = R^T F, u = R c.
inline CoarseSolve solve_multiscale(const SpMat& A, const SpMat& R, const Eigen::VectorXd& F) {
  if (R.rows() != A.rows()) throw std::invalid_argument("solve_multiscale: layout mismatch");
  const Eigen::MatrixXd Ac = Eigen::MatrixXd(SpMat(R.transpose() * SpMat(A * R)));
  const Eigen::VectorXd rhs = R.transpose() * F;
  CoarseSolve out;
  if (rhs.norm() == 0.0) {
    out.coefficients = Eigen::VectorXd::Zero(Ac.rows());
    out.u = Eigen::VectorXd::Zero(A.rows());
    return out;
  }
  const Eigen::MatrixXd Acs = 0.5 * (Ac + Ac.transpose());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Acs);
  const double a_norm = Acs.norm();
  auto berr = [&](const Eigen::VectorXd& c) {
    return (Acs * c - rhs).norm() / (a_norm * c.norm() + rhs.norm());
  };
  out.coefficients = ldlt.solve(rhs);
  out.rel_residual = berr(out.coefficients);
  for (int it = 0; it < 4 && !(out.rel_residual <= 1e-12); ++it) {
    out.coefficients += ldlt.solve(rhs - Acs * out.coefficients);
    const double next = berr(out.coefficients);
    if (!(next < out.rel_residual)) break;
    out.rel_residual = next;
  }
  if (!(out.rel_residual <= 1e-10))
    throw std::runtime_error(
        "solve_multiscale: coarse system is near-singular (residual " +
        detail::format_residual(out.rel_residual) +
        "); basis columns may be linearly dependent - try a larger gamma or smaller Nbf");
  out.u = R * out.coefficients;
  return out;
}

inline double dg_norm(const SpMat& dg_norm_matrix, const Eigen::VectorXd& v) {
  return std::sqrt(std::max(0.0, v.dot(dg_norm_matrix * v)));
}

struct ErrorReport {
  double e_l2 = 0.0;
  double e_h1 = 0.0;
  double e_h1_vol = 0.0;  // volume-only energy variant, reported alongside
  bool zero_reference = false;
};

/// L2 norm of (lambda + 2 mu) * v with the per-cell weight and 2x2 Gauss.
inline double weighted_l2_norm(const Mesh& mesh, const MaterialField& material,
                               const Eigen::VectorXd& v) {
  double acc = 0.0;
  const double jac = mesh.hx() * mesh.hy();
  for (int block = 0; block < mesh.num_blocks(); ++block) {
    const int cx = mesh.block_cx(block), cy = mesh.block_cy(block);
    for (int ly = 0; ly < mesh.nf(); ++ly)
      for (int lx = 0; lx < mesh.nf(); ++lx) {
        const long cell = mesh.cell_index(cx * mesh.nf() + lx, cy * mesh.nf() + ly);
        const double w2 = material.k2[cell] * material.k2[cell];
        std::array<long, 8> dofs;
        int k = 0;
        for (int dy = 0; dy <= 1; ++dy)
          for (int dx = 0; dx <= 1; ++dx) {
            const int node = mesh.node_index(lx + dx, ly + dy);
            dofs[k++] = mesh.dof_index(block, node, 0);
            dofs[k++] = mesh.dof_index(block, node, 1);
          }
        for (double qy : quad::points)
          for (double qx : quad::points) {
            const auto N = detail::q1_values(qx, qy);
            double ux = 0.0, uy = 0.0;
            for (int a = 0; a < 4; ++a) {
              ux += N[a] * v[dofs[2 * a]];
              uy += N[a] * v[dofs[2 * a + 1]];
            }
            acc += 0.25 * jac * w2 * (ux * ux + uy * uy);
          }
      }
  }
  return std::sqrt(acc);
}

/// Relative errors of the multiscale solution against the fine reference:
/// the (lambda+2mu)-weighted L2 quotient and the energy quotient in the
/// a_DG form.
inline ErrorReport compute_errors(const Mesh& mesh, const MaterialField& material,
                                  const Forms& forms, const Eigen::VectorXd& u_ms,
                                  const Eigen::VectorXd& u_h) {
  if (u_ms.size() != u_h.size()) throw std::invalid_argument("compute_errors: layout mismatch");
  ErrorReport r;
  const Eigen::VectorXd d = u_ms - u_h;
  const SpMat A = forms.adg();
  const double den_energy = u_h.dot(A * u_h);
  const double den_vol = u_h.dot(forms.volume * u_h);
  const double den_l2 = weighted_l2_norm(mesh, material, u_h);
  if (den_energy <= 0.0 || den_l2 == 0.0) {
    r.zero_reference = true;
    r.e_l2 = r.e_h1 = r.e_h1_vol = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.e_l2 = weighted_l2_norm(mesh, material, d) / den_l2;
  r.e_h1 = std::sqrt(std::max(0.0, d.dot(A * d)) / den_energy);
  r.e_h1_vol = den_vol > 0.0 ? std::sqrt(std::max(0.0, d.dot(forms.volume * d)) / den_vol)
                             : std::numeric_limits<double>::quiet_NaN();
  return r;
}

/// Field dump: "elastic-field v1 <n>" header then one value per line, in
/// the grid module's DOF order.
inline void save_field(const Eigen::VectorXd& v, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_field: cannot open " + path);
  out << "elastic-field v1 " << v.size() << "\n";
  char buf[40];
  for (long i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v[i]);
    out << buf;
  }
}

inline Eigen::VectorXd load_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_field: cannot open " + path);
  std::string tag, version;
  long n = 0;
  in >> tag >> version >> n;
  if (!in || tag != "elastic-field" || version != "v1" || n < 0)
    throw std::runtime_error("load_field: malformed header in " + path);
  Eigen::VectorXd v(n);
  for (long i = 0; i < n; ++i)
    if (!(in >> v[i])) throw std::runtime_error("load_field: truncated value list in " + path);
  return v;
}

}  // namespace cemdg
