#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cemdg/spectral.hpp"

namespace cemdg {

enum class BasisMode { Constrained, Relaxed };

inline const char* to_string(BasisMode m) {
  return m == BasisMode::Constrained ? "constrained" : "relaxed";
}

inline BasisMode basis_mode_from_string(const std::string& s) {
  if (s == "constrained") return BasisMode::Constrained;
  if (s == "relaxed") return BasisMode::Relaxed;
  throw std::invalid_argument("unknown basis mode: " + s);
}

/// One multiscale column on the full fine grid plus, for the constrained
/// mode, the Lagrange multiplier coefficients over the region's auxiliary
/// pairs.
struct BasisColumn {
  Eigen::SparseVector<double> phi;
  Eigen::VectorXd multipliers;
  double solve_residual = 0.0;
};

namespace detail {

inline Eigen::SparseVector<double> scatter_column(const Mesh& mesh, const DofRegion& region,
                                                  const Eigen::VectorXd& local) {
  Eigen::SparseVector<double> out(mesh.num_dofs());
  out.reserve(local.size());
  const int bd = mesh.dofs_per_block();
  for (size_t k = 0; k < region.blocks().size(); ++k) {
    const long goff = static_cast<long>(region.blocks()[k]) * bd;
    const long loff = static_cast<long>(k) * bd;
    for (int r = 0; r < bd; ++r)
      if (local[loff + r] != 0.0) out.insert(goff + r) = local[loff + r];
  }
  return out;
}

inline std::string format_residual(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", r);
  return buf;
}

// normwise backward error ||Ax-b|| / (||A|| ||x|| + ||b||)
inline double backward_error(const SpMat& A, double a_norm, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& rhs) {
  const double denom = a_norm * x.norm() + rhs.norm();
  if (denom == 0.0) return 0.0;
  return (A * x - rhs).norm() / denom;
}

/// A few steps of iterative refinement against a prefactored solver; direct
/// factorizations of high-contrast systems need this to reach the residual
/// contracts.
template <typename Solver>
Eigen::VectorXd refined_solve(const Solver& solver, const SpMat& A, const Eigen::VectorXd& rhs,
                              double target, double& rel_residual) {
  Eigen::VectorXd x = solver.solve(rhs);
  if (rhs.norm() == 0.0) {
    rel_residual = 0.0;
    return Eigen::VectorXd::Zero(rhs.size());
  }
  const double a_norm = A.norm();
  rel_residual = backward_error(A, a_norm, x, rhs);
  for (int it = 0; it < 4 && !(rel_residual <= target) && x.allFinite(); ++it) {
    const Eigen::VectorXd r = rhs - A * x;
    x += solver.solve(r);
    const double next = backward_error(A, a_norm, x, rhs);
    if (!(next < rel_residual)) break;
    rel_residual = next;
  }
  return x;
}

/// Shared per-element factorization: the system matrix depends only on the
/// region, so all basis indices i reuse one factorization.
struct ConstrainedLocalSolver {
  DofRegion region;
  SpMat saddle;
  Eigen::SparseLU<SpMat> lu;
  long n = 0, m = 0;
  int target_block_local = -1;

  ConstrainedLocalSolver(const Mesh& mesh, const VoigtTensor& voigt,
                         const AssemblyConfig& config, const ProjectionOperator& pi, int j, int p)
      : region(DofRegion::of(mesh, oversample(mesh, j, p))) {
    const SpMat A = assemble_adg(region, voigt, config);
    const SpMat C = pi.moment_matrix(region);
    n = A.rows();
    m = C.rows();
    Triplets trip;
    trip.reserve(A.nonZeros() + 2 * C.nonZeros());
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < C.outerSize(); ++k)
      for (SpMat::InnerIterator it(C, k); it; ++it) {
        trip.emplace_back(n + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), n + it.row(), it.value());
      }
    saddle.resize(n + m, n + m);
    saddle.setFromTriplets(trip.begin(), trip.end());
    lu.compute(saddle);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error(
          "constrained basis: singular saddle system (rank-deficient constraints) on block " +
          std::to_string(j));
    target_block_local = region.local_block(j);
  }

  BasisColumn solve(const Mesh& mesh, const ProjectionOperator& pi, int i) const {
    const int G = pi.aux().G;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
    rhs[n + static_cast<long>(target_block_local) * G + i] = 1.0;
    BasisColumn col;
    const Eigen::VectorXd x = refined_solve(lu, saddle, rhs, 1e-12, col.solve_residual);
    if (!(col.solve_residual <= 1e-10))
      throw std::runtime_error("constrained basis: solve residual " +
                               format_residual(col.solve_residual) + " exceeds 1e-10 on block " +
                               std::to_string(region.blocks()[target_block_local]));
    col.phi = scatter_column(mesh, region, x.head(n));
    col.multipliers = x.tail(m);
    return col;
  }
};

struct RelaxedLocalSolver {
  DofRegion region;
  SpMat system;
  SpMat C;
  Eigen::SimplicialLDLT<SpMat> ldlt;
  int target_block_local = -1;

  RelaxedLocalSolver(const Mesh& mesh, const VoigtTensor& voigt, const AssemblyConfig& config,
                     const ProjectionOperator& pi, int j, int p)
      : region(DofRegion::of(mesh, oversample(mesh, j, p))) {
    const SpMat A = assemble_adg(region, voigt, config);
    C = pi.moment_matrix(region);
    system = A + SpMat(C.transpose() * C);
    ldlt.compute(system);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("relaxed basis: factorization failed on block " + std::to_string(j));
    target_block_local = region.local_block(j);
  }

  BasisColumn solve(const Mesh& mesh, const ProjectionOperator& pi, int i) const {
    const int G = pi.aux().G;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(C.rows());
    e[static_cast<long>(target_block_local) * G + i] = 1.0;
    const Eigen::VectorXd rhs = C.transpose() * e;
    BasisColumn col;
    const Eigen::VectorXd x = refined_solve(ldlt, system, rhs, 1e-12, col.solve_residual);
    if (!(col.solve_residual <= 1e-10))
      throw std::runtime_error("relaxed basis: solve residual " +
                               format_residual(col.solve_residual) + " exceeds 1e-10 on block " +
                               std::to_string(region.blocks()[target_block_local]));
    col.phi = scatter_column(mesh, region, x);
    return col;
  }
};

}  // namespace detail

/// Localized constrained column for pair (j, i) on K_{j,p}: minimizes the
/// DG energy subject to prescribed b-moments against every auxiliary
/// function of the region, via the Lagrange saddle system.
inline BasisColumn build_constrained_basis(const Mesh& mesh, const VoigtTensor& voigt,
                                           const AssemblyConfig& config,
                                           const ProjectionOperator& pi, int j, int i, int p) {
  if (i < 0 || i >= pi.aux().G) throw std::invalid_argument("build_constrained_basis: bad index");
  detail::ConstrainedLocalSolver solver(mesh, voigt, config, pi, j, p);
  return solver.solve(mesh, pi, i);
}

/// Global constrained column (support on the whole grid); diagnostics and
/// oracle use only.
inline BasisColumn build_constrained_global(const Mesh& mesh, const VoigtTensor& voigt,
                                            const AssemblyConfig& config,
                                            const ProjectionOperator& pi, int j, int i) {
  const int p = std::max(mesh.nc_x(), mesh.nc_y());
  return build_constrained_basis(mesh, voigt, config, pi, j, i, p);
}

/// Localized relaxed column: unconstrained minimizer of the DG energy plus
/// the b-penalty on the moment mismatch; SPD system A + C^T C.
inline BasisColumn build_relaxed_basis(const Mesh& mesh, const VoigtTensor& voigt,
                                       const AssemblyConfig& config, const ProjectionOperator& pi,
                                       int j, int i, int p) {
  if (i < 0 || i >= pi.aux().G) throw std::invalid_argument("build_relaxed_basis: bad index");
  detail::RelaxedLocalSolver solver(mesh, voigt, config, pi, j, p);
  return solver.solve(mesh, pi, i);
}

inline BasisColumn build_relaxed_global(const Mesh& mesh, const VoigtTensor& voigt,
                                        const AssemblyConfig& config, const ProjectionOperator& pi,
                                        int j, int i) {
  const int p = std::max(mesh.nc_x(), mesh.nc_y());
  return build_relaxed_basis(mesh, voigt, config, pi, j, i, p);
}

/// The full multiscale trial space: one column per auxiliary pair, stored
/// column-major as a sparse fine-by-coarse matrix. Column order is the pair
/// order (j, i) regardless of construction schedule.
struct MultiscaleBasis {
  BasisMode mode = BasisMode::Relaxed;
  int p = 0;
  int G = 0;
  SpMat R;  // fine dofs x (N * G)
  std::vector<Eigen::VectorXd> multipliers;  // constrained mode only, per column
  double max_solve_residual = 0.0;
};

inline MultiscaleBasis build_multiscale_basis(const Mesh& mesh, const VoigtTensor& voigt,
                                              const AssemblyConfig& config,
                                              const ProjectionOperator& pi, BasisMode mode, int p,
                                              int threads = 1) {
  const int G = pi.aux().G;
  const int N = mesh.num_blocks();
  MultiscaleBasis basis;
  basis.mode = mode;
  basis.p = p;
  basis.G = G;
  if (mode == BasisMode::Constrained) basis.multipliers.resize(static_cast<size_t>(N) * G);
  std::vector<Eigen::SparseVector<double>> cols(static_cast<size_t>(N) * G);
  std::vector<double> residuals(N, 0.0);
  std::vector<std::string> errors(N);

  detail::parallel_for(N, threads, [&](int j) {
    try {
      if (mode == BasisMode::Constrained) {
        detail::ConstrainedLocalSolver solver(mesh, voigt, config, pi, j, p);
        for (int i = 0; i < G; ++i) {
          BasisColumn c = solver.solve(mesh, pi, i);
          residuals[j] = std::max(residuals[j], c.solve_residual);
          basis.multipliers[pi.aux().pair_index(j, i)] = std::move(c.multipliers);
          cols[pi.aux().pair_index(j, i)] = std::move(c.phi);
        }
      } else {
        detail::RelaxedLocalSolver solver(mesh, voigt, config, pi, j, p);
        for (int i = 0; i < G; ++i) {
          BasisColumn c = solver.solve(mesh, pi, i);
          residuals[j] = std::max(residuals[j], c.solve_residual);
          cols[pi.aux().pair_index(j, i)] = std::move(c.phi);
        }
      }
    } catch (const std::exception& e) {
      errors[j] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error(e);

  Triplets trip;
  for (long c = 0; c < static_cast<long>(cols.size()); ++c)
    for (Eigen::SparseVector<double>::InnerIterator it(cols[c]); it; ++it)
      trip.emplace_back(it.index(), c, it.value());
  basis.R.resize(mesh.num_dofs(), static_cast<long>(N) * G);
  basis.R.setFromTriplets(trip.begin(), trip.end());
  for (double r : residuals) basis.max_solve_residual = std::max(basis.max_solve_residual, r);
  return basis;
}

/// Localization gap profile: DG-norm distances between the global column
/// and its localized versions for p = 0..pmax, plus the log-linear slope of
/// the decaying part.
struct DecayProfile {
  std::vector<double> gaps;  // indexed by p
  double slope = 0.0;        // least-squares slope of log(gap) vs p, p >= 1
};

inline DecayProfile decay_profile(const Mesh& mesh, const VoigtTensor& voigt,
                                  const AssemblyConfig& config, const ProjectionOperator& pi,
                                  const SpMat& dg_norm_matrix, BasisMode mode, int j, int i,
                                  int pmax) {
  const BasisColumn glo = mode == BasisMode::Constrained
                              ? build_constrained_global(mesh, voigt, config, pi, j, i)
                              : build_relaxed_global(mesh, voigt, config, pi, j, i);
  const Eigen::VectorXd g = Eigen::VectorXd(glo.phi);
  DecayProfile prof;
  prof.gaps.reserve(pmax + 1);
  for (int p = 0; p <= pmax; ++p) {
    const BasisColumn ms = mode == BasisMode::Constrained
                               ? build_constrained_basis(mesh, voigt, config, pi, j, i, p)
                               : build_relaxed_basis(mesh, voigt, config, pi, j, i, p);
    const Eigen::VectorXd d = g - Eigen::VectorXd(ms.phi);
    prof.gaps.push_back(std::sqrt(std::max(0.0, d.dot(dg_norm_matrix * d))));
  }
  // fit over the decaying range, skipping p=0 and saturated (tiny) gaps
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int p = 1; p <= pmax; ++p) {
    if (!(prof.gaps[p] > 1e-13)) break;
    const double y = std::log(prof.gaps[p]);
    sx += p;
    sy += y;
    sxx += static_cast<double>(p) * p;
    sxy += p * y;
    ++n;
  }
  prof.slope = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
  return prof;
}

}  // namespace cemdg
