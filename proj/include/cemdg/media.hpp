#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cemdg/mesh.hpp"

namespace cemdg {

/// Heterogeneous isotropic material: per-fine-cell Young's modulus with a
/// single global Poisson ratio, converted to Lame fields.
struct MaterialField {
  int nx = 0, ny = 0;
  double nu = 0.25;
  std::vector<double> E;        // per cell, row-major (y outer)
  std::vector<double> lambda;
  std::vector<double> mu;
  std::vector<double> k2;       // lambda + 2 mu
  double contrast = 1.0;

  long num_cells() const { return static_cast<long>(nx) * ny; }
};

inline MaterialField material_from_modulus(std::vector<double> E_raster, int nx, int ny,
                                           double nu) {
  if (static_cast<long>(E_raster.size()) != static_cast<long>(nx) * ny)
    throw std::invalid_argument("material_from_modulus: raster size mismatch");
  if (!(nu > -1.0 && nu < 0.5))
    throw std::invalid_argument("material_from_modulus: nu must lie in (-1, 0.5)");
  MaterialField m;
  m.nx = nx;
  m.ny = ny;
  m.nu = nu;
  m.E = std::move(E_raster);
  const long n = m.num_cells();
  m.lambda.resize(n);
  m.mu.resize(n);
  m.k2.resize(n);
  const double cl = nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double cm = 1.0 / (2.0 * (1.0 + nu));
  double emin = std::numeric_limits<double>::infinity(), emax = 0.0;
  for (long c = 0; c < n; ++c) {
    const double e = m.E[c];
    if (!(e > 0.0) || !std::isfinite(e))
      throw std::invalid_argument("material_from_modulus: modulus values must be positive");
    m.lambda[c] = cl * e;
    m.mu[c] = cm * e;
    m.k2[c] = m.lambda[c] + 2.0 * m.mu[c];
    emin = std::min(emin, e);
    emax = std::max(emax, e);
  }
  m.contrast = emax / emin;
  return m;
}

/// Per-cell Voigt elasticity matrix entries (plane strain, isotropic) and
/// the 2x2 diagonal jump-penalty weight d = diag(lambda+2mu, lambda+2mu).
struct VoigtTensor {
  int nx = 0, ny = 0;
  std::vector<double> c11;  // = c33
  std::vector<double> c13;
  std::vector<double> c55;
  std::vector<double> d;    // both diagonal entries

  long num_cells() const { return static_cast<long>(nx) * ny; }
};

inline VoigtTensor voigt_tensor(const MaterialField& m) {
  VoigtTensor v;
  v.nx = m.nx;
  v.ny = m.ny;
  const long n = m.num_cells();
  v.c11.resize(n);
  v.c13.resize(n);
  v.c55.resize(n);
  v.d.resize(n);
  for (long c = 0; c < n; ++c) {
    v.c11[c] = m.lambda[c] + 2.0 * m.mu[c];
    v.c13[c] = m.lambda[c];
    v.c55[c] = m.mu[c];
    v.d[c] = v.c11[c];
  }
  return v;
}

/// The spectral-mass weight k1 = sum_i k2 |grad chi_i|^2 at every fine-cell
/// Gauss point. Values are stored as [cell][q].
struct WeightField {
  int nx = 0, ny = 0;
  std::vector<std::array<double, 4>> k1;

  long num_cells() const { return static_cast<long>(nx) * ny; }
};

inline WeightField weight_k1(const Mesh& mesh, const MaterialField& m,
                             const PartitionOfUnity& pou) {
  if (m.nx != mesh.cells_x() || m.ny != mesh.cells_y())
    throw std::invalid_argument("weight_k1: material raster does not match the mesh");
  WeightField w;
  w.nx = m.nx;
  w.ny = m.ny;
  w.k1.resize(m.num_cells());
  for (long c = 0; c < m.num_cells(); ++c)
    for (int q = 0; q < 4; ++q) w.k1[c][q] = m.k2[c] * pou.cells[c][q].grad2_sum;
  return w;
}

/// Constant-k1 field, used by tests that need a plain weighted mass matrix.
inline WeightField uniform_weight(const Mesh& mesh, double k1) {
  WeightField w;
  w.nx = mesh.cells_x();
  w.ny = mesh.cells_y();
  w.k1.assign(w.num_cells(), {k1, k1, k1, k1});
  return w;
}

enum class MediumKind { Uniform, Channels, Inclusions, ChannelsPlusInclusions };

inline MediumKind medium_kind_from_string(const std::string& s) {
  if (s == "uniform") return MediumKind::Uniform;
  if (s == "channels") return MediumKind::Channels;
  if (s == "inclusions") return MediumKind::Inclusions;
  if (s == "channels_plus_inclusions") return MediumKind::ChannelsPlusInclusions;
  throw std::invalid_argument("unknown medium kind: " + s);
}

inline const char* to_string(MediumKind k) {
  switch (k) {
    case MediumKind::Uniform: return "uniform";
    case MediumKind::Channels: return "channels";
    case MediumKind::Inclusions: return "inclusions";
    case MediumKind::ChannelsPlusInclusions: return "channels_plus_inclusions";
  }
  return "?";
}

namespace detail {
// splitmix64; keeps generated rasters identical across standard libraries
// (std::uniform_int_distribution is implementation-defined).
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
  bool chance(int percent) { return below(100) < percent; }
};
}  // namespace detail

/// Synthetic binary media on the fine raster: background 1, features set to
/// the contrast value. Channels are straight segments spanning several
/// coarse blocks (one horizontal per coarse row band, occasional verticals);
/// a share of them runs along a coarse grid line. Inclusions are small blobs
/// scattered over a fraction of the blocks.
inline std::vector<double> generate_medium(MediumKind kind, const Mesh& mesh, double contrast,
                                           std::uint64_t seed) {
  if (!(contrast >= 1.0)) throw std::invalid_argument("generate_medium: contrast must be >= 1");
  const int nx = mesh.cells_x(), ny = mesh.cells_y();
  const int nf = mesh.nf();
  std::vector<double> E(static_cast<long>(nx) * ny, 1.0);
  if (kind == MediumKind::Uniform || contrast == 1.0) return E;

  detail::Rng rng(seed);
  auto paint_hseg = [&](int fy, int x0, int x1) {
    for (int x = x0; x < x1; ++x) E[static_cast<long>(fy) * nx + x] = contrast;
  };
  auto paint_vseg = [&](int fx, int y0, int y1) {
    for (int y = y0; y < y1; ++y) E[static_cast<long>(y) * nx + fx] = contrast;
  };

  const bool channels =
      kind == MediumKind::Channels || kind == MediumKind::ChannelsPlusInclusions;
  const bool inclusions =
      kind == MediumKind::Inclusions || kind == MediumKind::ChannelsPlusInclusions;

  if (channels) {
    for (int cy = 0; cy < mesh.nc_y(); ++cy) {
      // one segment per row band, 3-5 blocks long, clipped to the grid
      const int len = std::min(mesh.nc_x(), 3 + rng.below(3));
      const int start = rng.below(std::max(1, mesh.nc_x() - len + 1));
      // every third segment hugs the coarse line below its band
      const int row = (cy % 3 == 2) ? cy * nf : cy * nf + 1 + rng.below(std::max(1, nf - 1));
      paint_hseg(row, start * nf, (start + len) * nf);
    }
    for (int cx = 0; cx < mesh.nc_x(); ++cx) {
      if (!rng.chance(40)) continue;
      const int len = std::min(mesh.nc_y(), 2 + rng.below(2));
      const int start = rng.below(std::max(1, mesh.nc_y() - len + 1));
      const int col = (cx % 3 == 2) ? cx * nf : cx * nf + 1 + rng.below(std::max(1, nf - 1));
      paint_vseg(col, start * nf, (start + len) * nf);
    }
  }
  if (inclusions) {
    for (int cy = 0; cy < mesh.nc_y(); ++cy)
      for (int cx = 0; cx < mesh.nc_x(); ++cx) {
        if (!rng.chance(20)) continue;
        const int smax = std::max(1, std::min(2, nf - 2));
        const int sx = 1 + rng.below(smax), sy = 1 + rng.below(smax);
        const int ox = cx * nf + rng.below(std::max(1, nf - sx));
        const int oy = cy * nf + rng.below(std::max(1, nf - sy));
        for (int y = oy; y < std::min(ny, oy + sy); ++y)
          for (int x = ox; x < std::min(nx, ox + sx); ++x)
            E[static_cast<long>(y) * nx + x] = contrast;
      }
  }
  return E;
}

// ---- medium file format: "elastic-medium v1 <nx> <ny>" + row-major values

inline void save_medium(const std::vector<double>& E, int nx, int ny, const std::string& path) {
  if (static_cast<long>(E.size()) != static_cast<long>(nx) * ny)
    throw std::invalid_argument("save_medium: raster size mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_medium: cannot open " + path);
  out << "elastic-medium v1 " << nx << " " << ny << "\n";
  char buf[40];
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      std::snprintf(buf, sizeof buf, "%.17g", E[static_cast<long>(y) * nx + x]);
      out << buf << (x + 1 == nx ? "\n" : " ");
    }
  }
  if (!out) throw std::runtime_error("save_medium: write failed for " + path);
}

struct MediumFile {
  int nx = 0, ny = 0;
  std::vector<double> E;
};

inline MediumFile load_medium(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_medium: cannot open " + path);
  std::string tag, version;
  MediumFile f;
  in >> tag >> version >> f.nx >> f.ny;
  if (!in || tag != "elastic-medium" || version != "v1")
    throw std::runtime_error("load_medium: malformed header in " + path);
  if (f.nx < 1 || f.ny < 1) throw std::runtime_error("load_medium: bad dimensions in " + path);
  const long n = static_cast<long>(f.nx) * f.ny;
  f.E.resize(n);
  for (long i = 0; i < n; ++i) {
    if (!(in >> f.E[i])) throw std::runtime_error("load_medium: truncated value list in " + path);
    if (!(f.E[i] > 0.0))
      throw std::runtime_error("load_medium: non-positive modulus value in " + path);
  }
  double extra;
  if (in >> extra) throw std::runtime_error("load_medium: trailing values in " + path);
  return f;
}

}  // namespace cemdg
