#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <atomic>
#include <stdexcept>
#include <thread>
#include <vector>

#include "cemdg/assembly.hpp"

namespace cemdg {

/// Eigenpairs of the block spectral problem a_j(psi, v) = lambda b_j(psi, v)
/// on one coarse element, no boundary conditions. Eigenvectors are
/// b-orthonormal; all eigenvalues are kept for diagnostics, eigenvectors
/// only for the retained count.
struct ElementSpectrum {
  Eigen::VectorXd eigenvalues;   // full spectrum, ascending
  Eigen::MatrixXd eigenvectors;  // block dofs x retained
  Eigen::MatrixXd moments;       // B_j * eigenvectors
};

inline ElementSpectrum local_spectral(const Mesh& mesh, const VoigtTensor& voigt,
                                      const WeightField& weights, int j, int retain) {
  if (!mesh.valid_block(j)) throw std::invalid_argument("local_spectral: invalid block index");
  if (retain < 1 || retain > mesh.dofs_per_block())
    throw std::invalid_argument("local_spectral: retained count out of range");
  DofRegion blockonly = DofRegion::of(mesh, oversample(mesh, j, 0));
  const Eigen::MatrixXd A = Eigen::MatrixXd(assemble_volume(blockonly, voigt));
  const Eigen::MatrixXd B = Eigen::MatrixXd(assemble_b(blockonly, weights));

  Eigen::LLT<Eigen::MatrixXd> bchol(B);
  if (bchol.info() != Eigen::Success)
    throw std::runtime_error("local_spectral: b-mass matrix is not positive definite on block " +
                             std::to_string(j));
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, B);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("local_spectral: eigensolver failed on block " + std::to_string(j));

  ElementSpectrum spec;
  spec.eigenvalues = es.eigenvalues();
  spec.eigenvectors = es.eigenvectors().leftCols(retain);
  // reproducible sign: largest-magnitude entry positive
  for (int i = 0; i < retain; ++i) {
    int idx = 0;
    spec.eigenvectors.col(i).cwiseAbs().maxCoeff(&idx);
    if (spec.eigenvectors(idx, i) < 0.0) spec.eigenvectors.col(i) *= -1.0;
  }
  spec.moments = B * spec.eigenvectors;
  return spec;
}

/// The auxiliary spectral space: the retained eigenpairs of every coarse
/// element. Pair (j, i) maps to flat index j*G + i.
struct AuxiliarySpace {
  int G = 0;
  std::vector<ElementSpectrum> elements;

  int num_elements() const { return static_cast<int>(elements.size()); }
  long total_count() const { return static_cast<long>(num_elements()) * G; }
  long pair_index(int j, int i) const { return static_cast<long>(j) * G + i; }
};

namespace detail {
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int nw = std::min(threads, n);
  pool.reserve(nw);
  for (int t = 0; t < nw; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}
}  // namespace detail

inline AuxiliarySpace build_auxiliary_space(const Mesh& mesh, const VoigtTensor& voigt,
                                            const WeightField& weights, int G, int threads = 1) {
  AuxiliarySpace aux;
  aux.G = G;
  aux.elements.resize(mesh.num_blocks());
  std::vector<std::string> errors(mesh.num_blocks());
  detail::parallel_for(mesh.num_blocks(), threads, [&](int j) {
    try {
      aux.elements[j] = local_spectral(mesh, voigt, weights, j, G);
    } catch (const std::exception& e) {
      errors[j] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error(e);
  return aux;
}

/// The b-orthogonal projection onto the auxiliary space, realized through
/// the per-block moment vectors B_j psi_i. Coefficients of pi(v) in the
/// eigenvector basis are exactly the b-moments b(v, psi_i^j).
class ProjectionOperator {
public:
  ProjectionOperator(const Mesh& mesh, const AuxiliarySpace& aux) : mesh_(&mesh), aux_(&aux) {}

  const AuxiliarySpace& aux() const { return *aux_; }

  /// Sparse moment matrix over a region: row (local block k, i) holds
  /// B_j psi_i^j at the block's dof range; C v = b-moments of v.
  SpMat moment_matrix(const DofRegion& region) const {
    const int G = aux_->G;
    const int bd = mesh_->dofs_per_block();
    Triplets trip;
    trip.reserve(static_cast<size_t>(region.blocks().size()) * G * bd);
    for (size_t k = 0; k < region.blocks().size(); ++k) {
      const int j = region.blocks()[k];
      const Eigen::MatrixXd& Mj = aux_->elements[j].moments;
      for (int i = 0; i < G; ++i)
        for (int r = 0; r < bd; ++r)
          if (Mj(r, i) != 0.0)
            trip.emplace_back(static_cast<long>(k) * G + i, static_cast<long>(k) * bd + r,
                              Mj(r, i));
    }
    SpMat C(static_cast<long>(region.blocks().size()) * G, region.num_dofs());
    C.setFromTriplets(trip.begin(), trip.end());
    return C;
  }

  /// Sparse eigenvector matrix over a region: column (local block k, i)
  /// holds psi_i^j; pi(v) = Psi * (C v).
  SpMat eigenvector_matrix(const DofRegion& region) const {
    const int G = aux_->G;
    const int bd = mesh_->dofs_per_block();
    Triplets trip;
    for (size_t k = 0; k < region.blocks().size(); ++k) {
      const int j = region.blocks()[k];
      const Eigen::MatrixXd& Psi = aux_->elements[j].eigenvectors;
      for (int i = 0; i < G; ++i)
        for (int r = 0; r < bd; ++r)
          if (Psi(r, i) != 0.0)
            trip.emplace_back(static_cast<long>(k) * bd + r, static_cast<long>(k) * G + i,
                              Psi(r, i));
    }
    SpMat P(region.num_dofs(), static_cast<long>(region.blocks().size()) * G);
    P.setFromTriplets(trip.begin(), trip.end());
    return P;
  }

  /// b-moment coefficients of v on the full grid.
  Eigen::VectorXd project(const Eigen::VectorXd& v) const {
    const int G = aux_->G;
    const int bd = mesh_->dofs_per_block();
    Eigen::VectorXd coeffs(aux_->total_count());
    for (int j = 0; j < mesh_->num_blocks(); ++j)
      coeffs.segment(static_cast<long>(j) * G, G) =
          aux_->elements[j].moments.transpose() * v.segment(static_cast<long>(j) * bd, bd);
    return coeffs;
  }

  /// pi(v) as a fine-grid vector.
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    const int G = aux_->G;
    const int bd = mesh_->dofs_per_block();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
    const Eigen::VectorXd coeffs = project(v);
    for (int j = 0; j < mesh_->num_blocks(); ++j)
      out.segment(static_cast<long>(j) * bd, bd) =
          aux_->elements[j].eigenvectors * coeffs.segment(static_cast<long>(j) * G, G);
    return out;
  }

private:
  const Mesh* mesh_;
  const AuxiliarySpace* aux_;
};

}  // namespace cemdg
