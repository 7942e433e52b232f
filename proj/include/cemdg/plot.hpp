#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cemdg {

/// One labeled curve of a line plot.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}
inline std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}
}  // namespace detail

/// Minimal deterministic SVG line plot: fixed canvas, fixed float
/// formatting, so identical inputs produce identical bytes.
inline void svg_line_plot(const std::string& path, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel,
                          const std::vector<PlotSeries>& series, bool logx, bool logy) {
  if (series.empty()) throw std::invalid_argument("svg_line_plot: no series");
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.size() < 2)
      throw std::invalid_argument("svg_line_plot: series '" + s.label + "' needs >= 2 points");
  }
  const double W = 640, Hc = 480, ml = 70, mr = 20, mt = 40, mb = 55;
  auto tx = [&](double v) { return logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return logy ? std::log10(v) : v; };
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (logx && !(s.x[i] > 0)) throw std::invalid_argument("svg_line_plot: log x needs > 0");
      if (logy && !(s.y[i] > 0)) throw std::invalid_argument("svg_line_plot: log y needs > 0");
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double v) { return Hc - mb - (ty(v) - ymin) / (ymax - ymin) * (Hc - mt - mb); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("svg_line_plot: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n";
  out << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  out << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" << title << "</text>\n";
  // axes
  out << "<line x1=\"" << detail::fmt(ml) << "\" y1=\"" << detail::fmt(Hc - mb) << "\" x2=\""
      << detail::fmt(W - mr) << "\" y2=\"" << detail::fmt(Hc - mb)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << detail::fmt(ml) << "\" y1=\"" << detail::fmt(mt) << "\" x2=\""
      << detail::fmt(ml) << "\" y2=\"" << detail::fmt(Hc - mb)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  // ticks
  const int nticks = 5;
  for (int t = 0; t <= nticks; ++t) {
    const double fx = xmin + (xmax - xmin) * t / nticks;
    const double fy = ymin + (ymax - ymin) * t / nticks;
    const double vx = logx ? std::pow(10.0, fx) : fx;
    const double vy = logy ? std::pow(10.0, fy) : fy;
    const double sx = ml + (W - ml - mr) * t / nticks;
    const double sy = Hc - mb - (Hc - mt - mb) * t / nticks;
    out << "<line x1=\"" << detail::fmt(sx) << "\" y1=\"" << detail::fmt(Hc - mb) << "\" x2=\""
        << detail::fmt(sx) << "\" y2=\"" << detail::fmt(Hc - mb + 5)
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << detail::fmt(sx) << "\" y=\"" << detail::fmt(Hc - mb + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << detail::fmt_tick(vx) << "</text>\n";
    out << "<line x1=\"" << detail::fmt(ml - 5) << "\" y1=\"" << detail::fmt(sy) << "\" x2=\""
        << detail::fmt(ml) << "\" y2=\"" << detail::fmt(sy) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << detail::fmt(ml - 8) << "\" y=\"" << detail::fmt(sy + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << detail::fmt_tick(vy) << "</text>\n";
  }
  out << "<text x=\"" << detail::fmt((ml + W - mr) / 2) << "\" y=\"" << detail::fmt(Hc - 12)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xlabel
      << "</text>\n";
  out << "<text x=\"18\" y=\"" << detail::fmt((mt + Hc - mb) / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 "
      << detail::fmt((mt + Hc - mb) / 2) << ")\">" << ylabel << "</text>\n";
  // curves + legend
  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < series[s].x.size(); ++i) {
      if (i) out << " ";
      out << detail::fmt(px(series[s].x[i])) << "," << detail::fmt(py(series[s].y[i]));
    }
    out << "\"/>\n";
    for (size_t i = 0; i < series[s].x.size(); ++i)
      out << "<circle cx=\"" << detail::fmt(px(series[s].x[i])) << "\" cy=\""
          << detail::fmt(py(series[s].y[i])) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    const double ly = mt + 16 + 16 * static_cast<double>(s);
    out << "<line x1=\"" << detail::fmt(W - mr - 130) << "\" y1=\"" << detail::fmt(ly)
        << "\" x2=\"" << detail::fmt(W - mr - 110) << "\" y2=\"" << detail::fmt(ly)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << detail::fmt(W - mr - 104) << "\" y=\"" << detail::fmt(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace cemdg
