#pragma once

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cemdg/plot.hpp"
#include "cemdg/solver.hpp"

namespace cemdg {

/// Full description of one benchmark run plus optional sweep lists.
struct RunConfig {
  int nc_x = 8, nc_y = 8, nf = 8;
  Rectangle extent{0.0, 0.0, 1.0, 1.0};
  std::string medium = "channels_plus_inclusions";  // kind, or overridden by medium_file
  std::string medium_file;
  double contrast = 1e4;
  std::uint64_t seed = 2024;
  double nu = 0.25;
  double fx = 0.0, fy = 1.0;
  double gamma = 8.0;
  int eta = 1;
  std::string mode = "relaxed";  // relaxed | constrained | both
  int nbf = 4;
  int noc = 4;
  bool noc_auto = false;
  std::string out_dir = ".";
  int threads = 2;

  std::vector<int> nbf_list, noc_list, nc_list;
  std::vector<double> contrast_list;
  bool pair_nc_noc = false;

  double coarse_size() const { return extent.width() / nc_x; }

  void validate() const {
    if (nc_x < 1 || nc_y < 1 || nf < 1) throw std::invalid_argument("config: bad mesh counts");
    if (nbf < 1) throw std::invalid_argument("config: Nbf must be >= 1");
    if (!noc_auto && noc < 1) throw std::invalid_argument("config: Noc must be >= 1");
    if (mode != "relaxed" && mode != "constrained" && mode != "both")
      throw std::invalid_argument("config: mode must be relaxed, constrained or both");
    for (int v : nbf_list)
      if (v < 1) throw std::invalid_argument("config: nbf_list entries must be >= 1");
    for (int v : noc_list)
      if (v < 1) throw std::invalid_argument("config: noc_list entries must be >= 1");
    if (pair_nc_noc && nc_list.size() != noc_list.size())
      throw std::invalid_argument("config: pair_nc_noc needs nc_list and noc_list of equal size");
    medium_kind_from_string(medium);
  }
};

/// The published layer rule, clamped to at least one layer.
inline int auto_layers(double H) {
  return std::max(1, static_cast<int>(std::floor(4.0 * std::log(H) / std::log(1.0 / 7.5))));
}

struct StageTimes {
  double mesh = 0, medium = 0, assembly = 0, spectral = 0, basis = 0, coarse = 0, reference = 0,
         errors = 0;
  double total() const {
    return mesh + medium + assembly + spectral + basis + coarse + reference + errors;
  }
};

struct ResultRow {
  std::string mode;
  int nc_x = 0, nc_y = 0, nf = 0;
  double H = 0;
  int nbf = 0, noc = 0;
  double contrast = 0;
  std::string medium;
  std::uint64_t seed = 0;
  double gamma = 0;
  int eta = 1;
  double nu = 0;
  double fx = 0, fy = 0;
  long dofs_fine = 0, dofs_coarse = 0;
  double e_l2 = std::numeric_limits<double>::quiet_NaN();
  double e_h1 = std::numeric_limits<double>::quiet_NaN();
  double e_h1_vol = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
  StageTimes times;
  std::string warning;

  bool failed() const { return status.rfind("error", 0) == 0; }
};

/// Heavy artifacts of a run, kept only on request (solution dumps etc).
struct RunOutputs {
  Eigen::VectorXd u_fine;
  Eigen::VectorXd u_ms;
  SpMat adg;
  SpMat basis_columns;
};

namespace detail {
inline double seconds_since(std::chrono::steady_clock::time_point& t0) {
  const auto t1 = std::chrono::steady_clock::now();
  const double s = std::chrono::duration<double>(t1 - t0).count();
  t0 = t1;
  return s;
}
inline std::string sanitize_csv(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}
}  // namespace detail

/// One full pipeline execution: mesh -> medium -> assembly -> spectral ->
/// basis -> coarse solve -> reference solve -> errors. Deterministic for a
/// fixed config; failures are reported with the stage name in `status`.
inline ResultRow run_single(const RunConfig& config,
                            const std::vector<double>* shared_raster = nullptr,
                            RunOutputs* keep = nullptr) {
  ResultRow row;
  row.mode = config.mode;
  row.nc_x = config.nc_x;
  row.nc_y = config.nc_y;
  row.nf = config.nf;
  row.H = config.coarse_size();
  row.nbf = config.nbf;
  row.noc = config.noc_auto ? auto_layers(row.H) : config.noc;
  row.contrast = config.contrast;
  row.medium = config.medium_file.empty() ? config.medium : "file:" + config.medium_file;
  row.seed = config.seed;
  row.gamma = config.gamma;
  row.eta = config.eta;
  row.nu = config.nu;
  row.fx = config.fx;
  row.fy = config.fy;

  std::string stage = "config";
  auto t = std::chrono::steady_clock::now();
  try {
    config.validate();
    if (config.mode == "both") throw std::invalid_argument("run_single: mode must be resolved");
    const BasisMode mode = basis_mode_from_string(config.mode);

    stage = "mesh";
    Mesh mesh(config.nc_x, config.nc_y, config.nf, config.extent);
    row.dofs_fine = mesh.num_dofs();
    row.dofs_coarse = static_cast<long>(mesh.num_blocks()) * config.nbf;
    row.times.mesh = detail::seconds_since(t);

    stage = "medium";
    std::vector<double> raster;
    if (shared_raster != nullptr)
      raster = *shared_raster;
    else if (!config.medium_file.empty()) {
      MediumFile f = load_medium(config.medium_file);
      if (f.nx != mesh.cells_x() || f.ny != mesh.cells_y())
        throw std::runtime_error("medium file dimensions " + std::to_string(f.nx) + "x" +
                                 std::to_string(f.ny) + " do not match the mesh");
      raster = std::move(f.E);
    } else {
      raster =
          generate_medium(medium_kind_from_string(config.medium), mesh, config.contrast, config.seed);
    }
    MaterialField material =
        material_from_modulus(std::move(raster), mesh.cells_x(), mesh.cells_y(), config.nu);
    VoigtTensor voigt = voigt_tensor(material);
    PartitionOfUnity pou = partition_of_unity(mesh);
    WeightField weights = weight_k1(mesh, material, pou);
    row.times.medium = detail::seconds_since(t);

    stage = "assembly";
    const AssemblyConfig acfg{config.gamma, config.eta};
    const DofRegion all = DofRegion::all(mesh);
    Forms forms = assemble_forms(all, voigt, acfg);
    const SpMat A = forms.adg();
    const Eigen::VectorXd F = assemble_source(all, {config.fx, config.fy});
    CoercivityProbe probe = coercivity_probe(mesh, material, acfg);
    if (!probe.ok) row.warning = probe.message;
    row.times.assembly = detail::seconds_since(t);

    stage = "spectral";
    AuxiliarySpace aux = build_auxiliary_space(mesh, voigt, weights, config.nbf, config.threads);
    ProjectionOperator pi(mesh, aux);
    row.times.spectral = detail::seconds_since(t);

    stage = "basis";
    MultiscaleBasis basis =
        build_multiscale_basis(mesh, voigt, acfg, pi, mode, row.noc, config.threads);
    row.times.basis = detail::seconds_since(t);

    stage = "coarse_solve";
    CoarseSolve coarse = solve_multiscale(A, basis.R, F);
    row.times.coarse = detail::seconds_since(t);

    stage = "reference_solve";
    FineSolve ref = solve_reference(A, F);
    row.times.reference = detail::seconds_since(t);

    stage = "errors";
    ErrorReport err = compute_errors(mesh, material, forms, coarse.u, ref.u);
    row.e_l2 = err.e_l2;
    row.e_h1 = err.e_h1;
    row.e_h1_vol = err.e_h1_vol;
    if (err.zero_reference) row.status = "zero_reference";
    row.times.errors = detail::seconds_since(t);

    if (keep != nullptr) {
      keep->u_fine = std::move(ref.u);
      keep->u_ms = std::move(coarse.u);
      keep->adg = A;
      keep->basis_columns = std::move(basis.R);
    }
  } catch (const std::exception& e) {
    row.status = detail::sanitize_csv("error:" + stage + ": " + e.what());
  }
  return row;
}

inline const char* results_csv_header() {
  return "mode,nc_x,nc_y,nf,H,nbf,noc,contrast,medium,seed,gamma,eta,nu,fx,fy,dofs_fine,"
         "dofs_coarse,e_l2,e_h1,e_h1_vol,status";
}

inline std::string format_result_row(const ResultRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s,%d,%d,%d,%.10g,%d,%d,%.10g,%s,%llu,%.10g,%d,%.10g,%.10g,%.10g,%ld,%ld,%.9e,"
                "%.9e,%.9e,%s",
                r.mode.c_str(), r.nc_x, r.nc_y, r.nf, r.H, r.nbf, r.noc, r.contrast,
                r.medium.c_str(), static_cast<unsigned long long>(r.seed), r.gamma, r.eta, r.nu,
                r.fx, r.fy, r.dofs_fine, r.dofs_coarse, r.e_l2, r.e_h1, r.e_h1_vol,
                r.status.c_str());
  return buf;
}

/// Deterministic results table: no wall-clock columns, so identical configs
/// reproduce identical bytes.
inline void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_results_csv: cannot open " + path);
  out << results_csv_header() << "\n";
  for (const ResultRow& r : rows) out << format_result_row(r) << "\n";
}

/// Wall-clock sidecar, excluded from the determinism contract.
inline void write_timings_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_timings_csv: cannot open " + path);
  out << "row,t_mesh,t_medium,t_assembly,t_spectral,t_basis,t_coarse_solve,t_reference,t_errors,"
         "t_total\n";
  char buf[256];
  for (size_t i = 0; i < rows.size(); ++i) {
    const StageTimes& t = rows[i].times;
    std::snprintf(buf, sizeof buf, "%zu,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n", i, t.mesh,
                  t.medium, t.assembly, t.spectral, t.basis, t.coarse, t.reference, t.errors,
                  t.total());
    out << buf;
  }
}

struct SweepResult {
  std::vector<ResultRow> rows;
  std::string parameter;  // primary swept parameter for plotting
  bool all_ok = true;
};

namespace detail {

struct SweepPoint {
  RunConfig config;
  double param_value = 0.0;
};

inline std::vector<SweepPoint> expand_sweep(const RunConfig& base, std::string& parameter) {
  std::vector<RunConfig> pts{base};
  auto expand = [&pts](auto&& apply, const auto& list) {
    std::vector<RunConfig> next;
    next.reserve(pts.size() * list.size());
    for (const RunConfig& c : pts)
      for (const auto& v : list) {
        RunConfig cc = c;
        apply(cc, v);
        next.push_back(std::move(cc));
      }
    pts = std::move(next);
  };

  int active = 0;
  if (!base.nbf_list.empty()) {
    parameter = "nbf";
    ++active;
    expand([](RunConfig& c, int v) { c.nbf = v; }, base.nbf_list);
  }
  if (base.pair_nc_noc) {
    parameter = "H";
    ++active;
    std::vector<RunConfig> next;
    for (const RunConfig& c : pts)
      for (size_t k = 0; k < base.nc_list.size(); ++k) {
        RunConfig cc = c;
        cc.noc = base.noc_list[k];
        cc.noc_auto = false;
        cc.nc_x = base.nc_list[k];
        next.push_back(std::move(cc));
      }
    pts = std::move(next);
  } else {
    if (!base.noc_list.empty()) {
      parameter = "noc";
      ++active;
      expand([](RunConfig& c, int v) { c.noc = v; c.noc_auto = false; }, base.noc_list);
    }
    if (!base.nc_list.empty()) {
      parameter = "H";
      ++active;
      expand([](RunConfig& c, int v) { c.nc_x = v; }, base.nc_list);
    }
  }
  if (!base.contrast_list.empty()) {
    parameter = "contrast";
    ++active;
    expand([](RunConfig& c, double v) { c.contrast = v; }, base.contrast_list);
  }
  if (base.mode == "both") {
    std::vector<RunConfig> next;
    for (const RunConfig& c : pts)
      for (const char* m : {"relaxed", "constrained"}) {
        RunConfig cc = c;
        cc.mode = m;
        next.push_back(std::move(cc));
      }
    pts = std::move(next);
  }
  if (active > 1) parameter = "mixed";
  if (active == 0) parameter = "none";

  // resolve derived quantities per point: nf for H sweeps (fixed fine
  // raster), auto layer rule
  const int raster_x = base.nc_x * base.nf;
  std::vector<SweepPoint> out;
  out.reserve(pts.size());
  for (RunConfig& c : pts) {
    if (c.nc_x != base.nc_x) {
      if (raster_x % c.nc_x != 0)
        throw std::invalid_argument("sweep: nc_list entry " + std::to_string(c.nc_x) +
                                    " does not divide the fine raster " +
                                    std::to_string(raster_x));
      c.nc_y = c.nc_x * base.nc_y / base.nc_x;
      c.nf = raster_x / c.nc_x;
    }
    if (c.noc_auto) {
      c.noc = auto_layers(c.coarse_size());
      c.noc_auto = false;
    }
    SweepPoint p;
    p.config = c;
    if (parameter == "nbf") p.param_value = c.nbf;
    else if (parameter == "noc") p.param_value = c.noc;
    else if (parameter == "H") p.param_value = c.coarse_size();
    else if (parameter == "contrast") p.param_value = c.contrast;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace detail

/// Expands the configured sweep (Cartesian, or nc/noc-paired), executes the
/// rows in configuration order, and writes results.csv, timings.csv and one
/// plot per sweep into out_dir. Failed rows are recorded, not fatal.
inline SweepResult run_sweep(const RunConfig& base) {
  SweepResult result;
  std::vector<detail::SweepPoint> points = detail::expand_sweep(base, result.parameter);

  // one medium raster for the whole sweep: sweeps vary the coarse grid over
  // a fixed fine raster, so the physical medium is identical in every row
  std::vector<double> raster;
  {
    Mesh base_mesh(base.nc_x, base.nc_y, base.nf, base.extent);
    if (!base.medium_file.empty()) {
      MediumFile f = load_medium(base.medium_file);
      if (f.nx != base_mesh.cells_x() || f.ny != base_mesh.cells_y())
        throw std::runtime_error("run_sweep: medium file does not match the base mesh");
      raster = std::move(f.E);
    } else {
      raster = generate_medium(medium_kind_from_string(base.medium), base_mesh, base.contrast,
                               base.seed);
    }
  }

  const bool contrast_varies = !base.contrast_list.empty();
  for (const detail::SweepPoint& p : points) {
    // contrast sweeps regenerate the features at the new value
    if (contrast_varies && p.config.medium_file.empty()) {
      Mesh mrow(p.config.nc_x, p.config.nc_y, p.config.nf, p.config.extent);
      std::vector<double> r = generate_medium(medium_kind_from_string(p.config.medium), mrow,
                                              p.config.contrast, p.config.seed);
      result.rows.push_back(run_single(p.config, &r));
    } else {
      result.rows.push_back(run_single(p.config, &raster));
    }
    if (result.rows.back().failed()) result.all_ok = false;
  }

  std::filesystem::create_directories(base.out_dir);
  write_results_csv(result.rows, base.out_dir + "/results.csv");
  write_timings_csv(result.rows, base.out_dir + "/timings.csv");

  if (result.parameter != "none" && result.parameter != "mixed") {
    std::map<std::string, PlotSeries> curves;
    for (size_t i = 0; i < result.rows.size(); ++i) {
      const ResultRow& r = result.rows[i];
      if (r.failed() || !(r.e_h1 > 0.0)) continue;
      PlotSeries& s = curves[r.mode];
      s.label = r.mode;
      s.x.push_back(points[i].param_value);
      s.y.push_back(r.e_h1);
    }
    std::vector<PlotSeries> series;
    for (auto& [name, s] : curves)
      if (s.x.size() >= 2) series.push_back(std::move(s));
    if (!series.empty()) {
      const bool logx = result.parameter == "H" || result.parameter == "contrast";
      svg_line_plot(base.out_dir + "/plot_" + result.parameter + ".svg",
                    "energy error vs " + result.parameter, result.parameter,
                    "relative H1 error", series, logx, true);
    }
  }
  return result;
}

/// Basis-decay diagnostic for one auxiliary pair: writes gap-vs-layers data
/// and a semilog plot, returns the profiles keyed by mode name.
inline std::map<std::string, DecayProfile> run_decay(const RunConfig& config, int j, int i,
                                                     int pmax) {
  config.validate();
  Mesh mesh(config.nc_x, config.nc_y, config.nf, config.extent);
  if (j < 0) j = mesh.block_index(mesh.nc_x() / 2, mesh.nc_y() / 2);
  if (!mesh.valid_block(j)) throw std::invalid_argument("run_decay: invalid block index");
  if (i < 0 || i >= config.nbf) throw std::invalid_argument("run_decay: invalid basis index");

  std::vector<double> raster;
  if (!config.medium_file.empty()) {
    MediumFile f = load_medium(config.medium_file);
    if (f.nx != mesh.cells_x() || f.ny != mesh.cells_y())
      throw std::runtime_error("run_decay: medium file does not match the mesh");
    raster = std::move(f.E);
  } else {
    raster = generate_medium(medium_kind_from_string(config.medium), mesh, config.contrast,
                             config.seed);
  }
  MaterialField material =
      material_from_modulus(std::move(raster), mesh.cells_x(), mesh.cells_y(), config.nu);
  VoigtTensor voigt = voigt_tensor(material);
  WeightField weights = weight_k1(mesh, material, partition_of_unity(mesh));
  const AssemblyConfig acfg{config.gamma, config.eta};
  Forms forms = assemble_forms(DofRegion::all(mesh), voigt, acfg);
  const SpMat Mdg = forms.dg_norm_matrix();
  AuxiliarySpace aux = build_auxiliary_space(mesh, voigt, weights, config.nbf, config.threads);
  ProjectionOperator pi(mesh, aux);

  std::map<std::string, DecayProfile> profiles;
  std::vector<std::string> modes =
      config.mode == "both" ? std::vector<std::string>{"relaxed", "constrained"}
                            : std::vector<std::string>{config.mode};
  for (const std::string& name : modes)
    profiles[name] =
        decay_profile(mesh, voigt, acfg, pi, Mdg, basis_mode_from_string(name), j, i, pmax);

  std::filesystem::create_directories(config.out_dir);
  {
    std::ofstream out(config.out_dir + "/decay.csv", std::ios::binary);
    out << "mode,block,index,p,gap\n";
    char buf[160];
    for (const auto& [name, prof] : profiles)
      for (size_t p = 0; p < prof.gaps.size(); ++p) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%zu,%.9e\n", name.c_str(), j, i, p,
                      prof.gaps[p]);
        out << buf;
      }
  }
  std::vector<PlotSeries> series;
  for (const auto& [name, prof] : profiles) {
    PlotSeries s;
    s.label = name;
    for (size_t p = 0; p < prof.gaps.size(); ++p)
      if (prof.gaps[p] > 0.0) {
        s.x.push_back(static_cast<double>(p));
        s.y.push_back(prof.gaps[p]);
      }
    if (s.x.size() >= 2) series.push_back(std::move(s));
  }
  if (!series.empty())
    svg_line_plot(config.out_dir + "/decay.svg", "localization gap vs layers", "layers p",
                  "DG-norm gap", series, false, true);
  return profiles;
}

// ---- flat key=value config files, '#' starts a comment

namespace detail {
inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}
}  // namespace detail

inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  auto ints = [&value] {
    std::vector<int> v;
    for (const std::string& s : detail::split_list(value)) v.push_back(std::stoi(s));
    return v;
  };
  auto doubles = [&value] {
    std::vector<double> v;
    for (const std::string& s : detail::split_list(value)) v.push_back(std::stod(s));
    return v;
  };
  if (key == "nc") c.nc_x = c.nc_y = std::stoi(value);
  else if (key == "nc_x") c.nc_x = std::stoi(value);
  else if (key == "nc_y") c.nc_y = std::stoi(value);
  else if (key == "nf") c.nf = std::stoi(value);
  else if (key == "lx") c.extent.x1 = c.extent.x0 + std::stod(value);
  else if (key == "ly") c.extent.y1 = c.extent.y0 + std::stod(value);
  else if (key == "medium") c.medium = value;
  else if (key == "medium_file") c.medium_file = value;
  else if (key == "contrast") c.contrast = std::stod(value);
  else if (key == "seed") c.seed = std::stoull(value);
  else if (key == "nu") c.nu = std::stod(value);
  else if (key == "fx") c.fx = std::stod(value);
  else if (key == "fy") c.fy = std::stod(value);
  else if (key == "gamma") c.gamma = std::stod(value);
  else if (key == "eta") c.eta = std::stoi(value);
  else if (key == "mode") c.mode = value;
  else if (key == "nbf") c.nbf = std::stoi(value);
  else if (key == "noc") {
    if (value == "auto") c.noc_auto = true;
    else c.noc = std::stoi(value);
  } else if (key == "out_dir") c.out_dir = value;
  else if (key == "threads") c.threads = std::stoi(value);
  else if (key == "nbf_list") c.nbf_list = ints();
  else if (key == "noc_list") c.noc_list = ints();
  else if (key == "nc_list") c.nc_list = ints();
  else if (key == "contrast_list") c.contrast_list = doubles();
  else if (key == "pair_nc_noc") c.pair_nc_noc = (value == "true" || value == "1");
  else throw std::invalid_argument("unknown config key: " + key);
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config_file: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    apply_config_entry(base, key, value);
  }
  return base;
}

}  // namespace cemdg
