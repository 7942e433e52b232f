#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cemdg {

/// Axis-aligned rectangular domain [x0,x1] x [y0,y1].
struct Rectangle {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

enum class EdgeAxis : std::uint8_t {
  AlongX,  // horizontal edge, normal along y
  AlongY   // vertical edge, normal along x
};

/// A coarse-grid edge. Interior edges carry two adjacent blocks; the plus
/// side is the left (vertical edge) or bottom (horizontal edge) block and
/// n_minus = -n_plus. Boundary edges carry a single block with the outward
/// normal stored in n_plus.
struct CoarseEdge {
  EdgeAxis axis;
  bool boundary = false;
  int block_plus = -1;
  int block_minus = -1;
  std::array<double, 2> normal_plus{0.0, 0.0};
  double ll_x = 0.0, ll_y = 0.0;  // lower-left endpoint
};

/// Nested coarse/fine tensor grid with per-coarse-block discontinuous
/// bilinear DOFs. Fine nodes on coarse edges are duplicated: each adjacent
/// block owns its own copy, so the total count is 2*N*(nf+1)^2.
///
/// Orderings are fixed for reproducibility:
///   blocks:  j = cy*nc_x + cx
///   nodes:   n = iy*(nf+1) + ix within a block
///   dofs:    2*(j*(nf+1)^2 + n) + comp, x component before y
///   edges:   sorted by (ll_x, ll_y), horizontal before vertical on ties.
class Mesh {
public:
  Mesh(int nc_x, int nc_y, int nf, Rectangle extent = {})
      : nc_x_(nc_x), nc_y_(nc_y), nf_(nf), extent_(extent) {
    if (nc_x < 1 || nc_y < 1 || nf < 1)
      throw std::invalid_argument("Mesh: cell counts must be positive");
    if (!(extent.width() > 0.0) || !(extent.height() > 0.0))
      throw std::invalid_argument("Mesh: degenerate extent");
    Hx_ = extent.width() / nc_x;
    Hy_ = extent.height() / nc_y;
    hx_ = Hx_ / nf;
    hy_ = Hy_ / nf;
    build_edges();
  }

  int nc_x() const { return nc_x_; }
  int nc_y() const { return nc_y_; }
  int nf() const { return nf_; }
  const Rectangle& extent() const { return extent_; }
  double Hx() const { return Hx_; }
  double Hy() const { return Hy_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }

  int num_blocks() const { return nc_x_ * nc_y_; }
  int nodes_per_axis() const { return nf_ + 1; }
  int nodes_per_block() const { return (nf_ + 1) * (nf_ + 1); }
  int dofs_per_block() const { return 2 * nodes_per_block(); }
  long num_dofs() const { return static_cast<long>(num_blocks()) * dofs_per_block(); }

  // fine-cell raster, shared with material fields (row-major, y outer)
  int cells_x() const { return nc_x_ * nf_; }
  int cells_y() const { return nc_y_ * nf_; }
  long num_cells() const { return static_cast<long>(cells_x()) * cells_y(); }
  long cell_index(int fx, int fy) const { return static_cast<long>(fy) * cells_x() + fx; }

  int block_index(int cx, int cy) const { return cy * nc_x_ + cx; }
  int block_cx(int j) const { return j % nc_x_; }
  int block_cy(int j) const { return j / nc_x_; }
  bool valid_block(int j) const { return j >= 0 && j < num_blocks(); }

  int node_index(int ix, int iy) const { return iy * (nf_ + 1) + ix; }
  long dof_index(int block, int node, int comp) const {
    return 2 * (static_cast<long>(block) * nodes_per_block() + node) + comp;
  }

  std::array<double, 2> node_coords(int block, int node) const {
    const int cx = block_cx(block), cy = block_cy(block);
    const int ix = node % (nf_ + 1), iy = node / (nf_ + 1);
    return {extent_.x0 + cx * Hx_ + ix * hx_, extent_.y0 + cy * Hy_ + iy * hy_};
  }

  const std::vector<CoarseEdge>& coarse_edges() const { return edges_; }
  int num_interior_edges() const { return n_interior_edges_; }

  // coarse nodes (partition-of-unity index set)
  int coarse_nodes_x() const { return nc_x_ + 1; }
  int coarse_nodes_y() const { return nc_y_ + 1; }
  int num_coarse_nodes() const { return coarse_nodes_x() * coarse_nodes_y(); }
  std::array<double, 2> coarse_node_coords(int i) const {
    const int vx = i % coarse_nodes_x(), vy = i / coarse_nodes_x();
    return {extent_.x0 + vx * Hx_, extent_.y0 + vy * Hy_};
  }

private:
  void build_edges() {
    edges_.clear();
    // vertical edges (normal along x)
    for (int cy = 0; cy < nc_y_; ++cy) {
      for (int cx = 0; cx <= nc_x_; ++cx) {
        CoarseEdge e;
        e.axis = EdgeAxis::AlongY;
        e.ll_x = extent_.x0 + cx * Hx_;
        e.ll_y = extent_.y0 + cy * Hy_;
        if (cx == 0) {
          e.boundary = true;
          e.block_plus = block_index(0, cy);
          e.normal_plus = {-1.0, 0.0};
        } else if (cx == nc_x_) {
          e.boundary = true;
          e.block_plus = block_index(nc_x_ - 1, cy);
          e.normal_plus = {1.0, 0.0};
        } else {
          e.block_plus = block_index(cx - 1, cy);
          e.block_minus = block_index(cx, cy);
          e.normal_plus = {1.0, 0.0};
        }
        edges_.push_back(e);
      }
    }
    // horizontal edges (normal along y)
    for (int cy = 0; cy <= nc_y_; ++cy) {
      for (int cx = 0; cx < nc_x_; ++cx) {
        CoarseEdge e;
        e.axis = EdgeAxis::AlongX;
        e.ll_x = extent_.x0 + cx * Hx_;
        e.ll_y = extent_.y0 + cy * Hy_;
        if (cy == 0) {
          e.boundary = true;
          e.block_plus = block_index(cx, 0);
          e.normal_plus = {0.0, -1.0};
        } else if (cy == nc_y_) {
          e.boundary = true;
          e.block_plus = block_index(cx, nc_y_ - 1);
          e.normal_plus = {0.0, 1.0};
        } else {
          e.block_plus = block_index(cx, cy - 1);
          e.block_minus = block_index(cx, cy);
          e.normal_plus = {0.0, 1.0};
        }
        edges_.push_back(e);
      }
    }
    std::sort(edges_.begin(), edges_.end(), [](const CoarseEdge& a, const CoarseEdge& b) {
      if (a.ll_x != b.ll_x) return a.ll_x < b.ll_x;
      if (a.ll_y != b.ll_y) return a.ll_y < b.ll_y;
      return static_cast<int>(a.axis) < static_cast<int>(b.axis);  // AlongX first
    });
    n_interior_edges_ = static_cast<int>(
        std::count_if(edges_.begin(), edges_.end(), [](const CoarseEdge& e) { return !e.boundary; }));
  }

  int nc_x_, nc_y_, nf_;
  Rectangle extent_;
  double Hx_, Hy_, hx_, hy_;
  std::vector<CoarseEdge> edges_;
  int n_interior_edges_ = 0;
};

/// Oversampling region K_{j,p}: the l-infinity ball of radius p coarse
/// layers around block j, clipped to the grid. Blocks are kept in ascending
/// global order; region-local DOFs concatenate member blocks in that order.
struct OversampleRegion {
  int center = -1;
  int layers = 0;
  std::vector<int> blocks;              // ascending global ids
  std::vector<int> block_to_local;      // size N, -1 when absent
  std::vector<int> boundary_edge_ids;   // edges on the region boundary interior to the domain

  bool contains(int block) const { return block_to_local[block] >= 0; }
  int num_blocks() const { return static_cast<int>(blocks.size()); }
};

inline OversampleRegion oversample(const Mesh& mesh, int j, int p) {
  if (!mesh.valid_block(j)) throw std::invalid_argument("oversample: invalid block index");
  if (p < 0) throw std::invalid_argument("oversample: negative layer count");
  OversampleRegion r;
  r.center = j;
  r.layers = p;
  r.block_to_local.assign(mesh.num_blocks(), -1);
  const int cx = mesh.block_cx(j), cy = mesh.block_cy(j);
  const int x0 = std::max(0, cx - p), x1 = std::min(mesh.nc_x() - 1, cx + p);
  const int y0 = std::max(0, cy - p), y1 = std::min(mesh.nc_y() - 1, cy + p);
  for (int by = y0; by <= y1; ++by)
    for (int bx = x0; bx <= x1; ++bx) r.blocks.push_back(mesh.block_index(bx, by));
  std::sort(r.blocks.begin(), r.blocks.end());
  for (int k = 0; k < static_cast<int>(r.blocks.size()); ++k) r.block_to_local[r.blocks[k]] = k;
  for (int eid = 0; eid < static_cast<int>(mesh.coarse_edges().size()); ++eid) {
    const CoarseEdge& e = mesh.coarse_edges()[eid];
    if (e.boundary) continue;
    const bool pin = r.contains(e.block_plus), min = r.contains(e.block_minus);
    if (pin != min) r.boundary_edge_ids.push_back(eid);
  }
  return r;
}

/// Assembly scope: either the whole grid or an oversampling region. Region
/// DOFs index the member blocks contiguously in ascending block order.
class DofRegion {
public:
  static DofRegion all(const Mesh& mesh) {
    DofRegion r(mesh);
    r.blocks_.resize(mesh.num_blocks());
    for (int j = 0; j < mesh.num_blocks(); ++j) r.blocks_[j] = j;
    r.block_to_local_.assign(mesh.num_blocks(), 0);
    for (int j = 0; j < mesh.num_blocks(); ++j) r.block_to_local_[j] = j;
    return r;
  }
  static DofRegion of(const Mesh& mesh, const OversampleRegion& region) {
    DofRegion r(mesh);
    r.blocks_ = region.blocks;
    r.block_to_local_ = region.block_to_local;
    return r;
  }

  const Mesh& mesh() const { return *mesh_; }
  const std::vector<int>& blocks() const { return blocks_; }
  bool contains(int block) const { return block_to_local_[block] >= 0; }
  int local_block(int block) const { return block_to_local_[block]; }
  long num_dofs() const { return static_cast<long>(blocks_.size()) * mesh_->dofs_per_block(); }
  bool is_full() const { return static_cast<int>(blocks_.size()) == mesh_->num_blocks(); }

  long dof(int block, int node, int comp) const {
    return 2 * (static_cast<long>(block_to_local_[block]) * mesh_->nodes_per_block() + node) + comp;
  }

private:
  explicit DofRegion(const Mesh& mesh) : mesh_(&mesh) {}
  const Mesh* mesh_;
  std::vector<int> blocks_;
  std::vector<int> block_to_local_;
};

namespace quad {
// 2-point Gauss on [0,1]
inline constexpr double g1 = 0.21132486540518711774542560974902;
inline constexpr double g2 = 0.78867513459481288225457439025098;
inline constexpr std::array<double, 2> points{g1, g2};
inline constexpr std::array<double, 2> weights{0.5, 0.5};
}  // namespace quad

/// Bilinear hat value of coarse node (vx,vy) at a point; zero outside its
/// two-cell neighborhood.
inline double hat_value(const Mesh& m, int vx, int vy, double x, double y) {
  const double sx = 1.0 - std::abs((x - (m.extent().x0 + vx * m.Hx())) / m.Hx());
  const double sy = 1.0 - std::abs((y - (m.extent().y0 + vy * m.Hy())) / m.Hy());
  if (sx <= 0.0 || sy <= 0.0) return 0.0;
  return sx * sy;
}

/// One-sided hat gradient, taken from inside coarse cell (cx,cy).
inline std::array<double, 2> hat_gradient(const Mesh& m, int vx, int vy, int cx, int cy,
                                          double x, double y) {
  if (vx < cx || vx > cx + 1 || vy < cy || vy > cy + 1) return {0.0, 0.0};
  const double xi = (x - (m.extent().x0 + cx * m.Hx())) / m.Hx();
  const double eta = (y - (m.extent().y0 + cy * m.Hy())) / m.Hy();
  const double sx = (vx == cx) ? 1.0 - xi : xi;
  const double dsx = (vx == cx) ? -1.0 / m.Hx() : 1.0 / m.Hx();
  const double sy = (vy == cy) ? 1.0 - eta : eta;
  const double dsy = (vy == cy) ? -1.0 / m.Hy() : 1.0 / m.Hy();
  return {dsx * sy, sx * dsy};
}

/// Bilinear partition of unity sampled at the fine-cell 2x2 Gauss points
/// (these drive the k1 weight) and at the coarse-edge Gauss points
/// (one-sided per adjacent coarse cell). For each cell sample only the four
/// hats of the host coarse cell are nonzero.
struct PartitionOfUnity {
  struct CellSample {
    std::array<int, 4> nodes;                   // global coarse-node ids
    std::array<double, 4> values;               // hat values, sum to 1
    std::array<std::array<double, 2>, 4> grads; // hat gradients
    double grad2_sum;                           // sum_i |grad chi_i|^2
  };
  struct EdgeSample {
    int edge_id;
    std::array<int, 4> nodes;
    std::array<double, 4> values;
    std::array<std::array<double, 2>, 4> grads; // one-sided from the host cell
  };

  // cell samples indexed [cell][q], q = qy*2+qx
  std::vector<std::array<CellSample, 4>> cells;
  std::vector<EdgeSample> edge_samples;

  const CellSample& at(long cell, int q) const { return cells[cell][q]; }
};

inline PartitionOfUnity partition_of_unity(const Mesh& m) {
  PartitionOfUnity pou;
  pou.cells.resize(m.num_cells());
  const int ncnx = m.coarse_nodes_x();
  auto sample_at = [&](int cx, int cy, double x, double y) {
    PartitionOfUnity::CellSample s{};
    int k = 0;
    s.grad2_sum = 0.0;
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx, ++k) {
        const int vx = cx + dx, vy = cy + dy;
        s.nodes[k] = vy * ncnx + vx;
        s.values[k] = hat_value(m, vx, vy, x, y);
        s.grads[k] = hat_gradient(m, vx, vy, cx, cy, x, y);
        s.grad2_sum += s.grads[k][0] * s.grads[k][0] + s.grads[k][1] * s.grads[k][1];
      }
    return s;
  };
  for (int fy = 0; fy < m.cells_y(); ++fy) {
    for (int fx = 0; fx < m.cells_x(); ++fx) {
      const int cx = fx / m.nf(), cy = fy / m.nf();
      const double x0 = m.extent().x0 + fx * m.hx();
      const double y0 = m.extent().y0 + fy * m.hy();
      auto& qs = pou.cells[m.cell_index(fx, fy)];
      for (int qy = 0; qy < 2; ++qy)
        for (int qx = 0; qx < 2; ++qx)
          qs[qy * 2 + qx] =
              sample_at(cx, cy, x0 + quad::points[qx] * m.hx(), y0 + quad::points[qy] * m.hy());
    }
  }
  // coarse-edge samples, one record per adjacent side
  for (int eid = 0; eid < static_cast<int>(m.coarse_edges().size()); ++eid) {
    const CoarseEdge& e = m.coarse_edges()[eid];
    for (int side = 0; side < (e.boundary ? 1 : 2); ++side) {
      const int blk = side == 0 ? e.block_plus : e.block_minus;
      const int cx = m.block_cx(blk), cy = m.block_cy(blk);
      for (int seg = 0; seg < m.nf(); ++seg) {
        for (double t : quad::points) {
          double x, y;
          if (e.axis == EdgeAxis::AlongX) {
            x = e.ll_x + (seg + t) * m.hx();
            y = e.ll_y;
          } else {
            x = e.ll_x;
            y = e.ll_y + (seg + t) * m.hy();
          }
          PartitionOfUnity::EdgeSample s{};
          s.edge_id = eid;
          int k = 0;
          for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx, ++k) {
              const int vx = cx + dx, vy = cy + dy;
              s.nodes[k] = vy * ncnx + vx;
              s.values[k] = hat_value(m, vx, vy, x, y);
              s.grads[k] = hat_gradient(m, vx, vy, cx, cy, x, y);
            }
          pou.edge_samples.push_back(s);
        }
      }
    }
  }
  return pou;
}

}  // namespace cemdg
