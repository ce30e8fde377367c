#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "kdiag/scenario.hpp"

namespace kdiag {

namespace {

struct Series {
  std::vector<std::pair<double, double>> measured;
  std::vector<std::pair<double, double>> bound;
};

std::string f2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string f3(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

const char* kPalette[] = {"#1f6fb2", "#c23b22", "#2a9d58", "#8e5fa8",
                          "#c98a1b", "#3aa6a6", "#7a5230", "#546e7a"};

}  // namespace

void plot_csv(const std::string& csv_path, const std::string& kind,
              const std::string& svg_path) {
  if (kind != "convergence")
    throw ValidationError("plot: unknown kind '" + kind + "'");
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw ValidationError("plot: cannot open " + csv_path);
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header !=
      "scenario,d,n,index,space,metric,measured,bound,slack,wall_ms")
    throw ValidationError("plot: CSV schema mismatch");

  std::map<std::string, Series> groups;  // key "metric @ space"
  double lo = 1e300, hi = 0.0, xlo = 1e300, xhi = -1e300;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw ValidationError("plot: malformed CSV row");
    double index = std::strtod(cells[3].c_str(), nullptr);
    double measured = std::strtod(cells[6].c_str(), nullptr);
    double bound = std::strtod(cells[7].c_str(), nullptr);
    Series& s = groups[cells[5] + " @ " + cells[4]];
    s.measured.emplace_back(index, measured);
    s.bound.emplace_back(index, bound);
    for (double v : {measured, bound})
      if (v > 0.0 && std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    xlo = std::min(xlo, index);
    xhi = std::max(xhi, index);
  }

  const double W = 840, H = 560, ML = 70, MR = 240, MT = 30, MB = 50;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(W) +
         "\" height=\"" + f2(H) + "\" viewBox=\"0 0 " + f2(W) + " " + f2(H) +
         "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<rect x=\"" + f2(ML) + "\" y=\"" + f2(MT) + "\" width=\"" +
         f2(W - ML - MR) + "\" height=\"" + f2(H - MT - MB) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";

  if (!groups.empty() && hi > 0.0) {
    if (lo == hi) lo = hi / 10.0;
    double log_lo = std::floor(std::log10(lo)) - 0.2;
    double log_hi = std::ceil(std::log10(hi)) + 0.2;
    if (xhi == xlo) xhi = xlo + 1.0;
    auto X = [&](double x) {
      return ML + (x - xlo) / (xhi - xlo) * (W - ML - MR);
    };
    auto Y = [&](double v) {
      double clamped = std::isfinite(v) && v > 0.0
                           ? std::log10(v)
                           : log_lo;  // nonpositive points pin to the floor
      clamped = std::min(std::max(clamped, log_lo), log_hi);
      return MT + (log_hi - clamped) / (log_hi - log_lo) * (H - MT - MB);
    };
    int color = 0;
    double legend_y = MT + 14;
    for (auto& [name, series] : groups) {
      const char* col = kPalette[color % 8];
      ++color;
      std::sort(series.measured.begin(), series.measured.end());
      std::sort(series.bound.begin(), series.bound.end());
      auto polyline = [&](const std::vector<std::pair<double, double>>& pts,
                          bool dashed) {
        std::string p = "<polyline fill=\"none\" stroke=\"" +
                        std::string(col) + "\"";
        if (dashed) p += " stroke-dasharray=\"6,4\"";
        p += " points=\"";
        for (const auto& [x, v] : pts)
          p += f2(X(x)) + "," + f2(Y(v)) + " ";
        p += "\"/>\n";
        return p;
      };
      svg += polyline(series.measured, false);
      svg += polyline(series.bound, true);
      svg += "<text x=\"" + f2(W - MR + 12) + "\" y=\"" + f2(legend_y) +
             "\" font-size=\"11\" fill=\"" + col + "\">" + name + "</text>\n";
      legend_y += 16;
    }
    // axis labels: extremes only
    svg += "<text x=\"" + f2(ML) + "\" y=\"" + f2(H - MB + 18) +
           "\" font-size=\"11\" fill=\"#222\">" + f3(xlo) + "</text>\n";
    svg += "<text x=\"" + f2(W - MR - 20) + "\" y=\"" + f2(H - MB + 18) +
           "\" font-size=\"11\" fill=\"#222\">" + f3(xhi) + "</text>\n";
    svg += "<text x=\"6\" y=\"" + f2(MT + 10) +
           "\" font-size=\"11\" fill=\"#222\">1e" +
           std::to_string(static_cast<int>(std::lround(log_hi))) +
           "</text>\n";
    svg += "<text x=\"6\" y=\"" + f2(H - MB) +
           "\" font-size=\"11\" fill=\"#222\">1e" +
           std::to_string(static_cast<int>(std::lround(log_lo))) +
           "</text>\n";
    svg +=
        "<text x=\"" + f2(ML) + "\" y=\"" + f2(H - 14) +
        "\" font-size=\"12\" fill=\"#222\">index (solid: measured, dashed: "
        "bound)</text>\n";
  }
  svg += "</svg>\n";

  std::ofstream out(svg_path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("plot: cannot write " + svg_path);
  out << svg;
}

}  // namespace kdiag
