#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "gridfreq/csv.hpp"
#include "gridfreq/types.hpp"

namespace gridfreq {

/// Static SVG line plot: axes, tick labels, one polyline per series, legend.
/// Kept dependency-free so batch outputs render anywhere.
class LinePlot {
 public:
  LinePlot(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

  void add_series(std::string name, std::vector<double> x, std::vector<double> y) {
    require(x.size() == y.size() && !x.empty(), "plot: series size mismatch");
    series_.push_back({std::move(name), std::move(x), std::move(y)});
  }

  void write(const std::string& path) const {
    require(!series_.empty(), "plot: nothing to draw");
    double x0 = std::numeric_limits<double>::max(), x1 = -x0;
    double y0 = x0, y1 = -x0;
    for (const auto& s : series_)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        x0 = std::min(x0, s.x[i]);
        x1 = std::max(x1, s.x[i]);
        y0 = std::min(y0, s.y[i]);
        y1 = std::max(y1, s.y[i]);
      }
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) {
      y0 -= 0.5;
      y1 += 0.5;
    } else {
      const double pad = 0.05 * (y1 - y0);
      y0 -= pad;
      y1 += pad;
    }

    const double w = 720, h = 420, ml = 80, mr = 170, mt = 40, mb = 55;
    const double pw = w - ml - mr, ph = h - mt - mb;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return mt + ph - (y - y0) / (y1 - y0) * ph; };

    std::ofstream f(path, std::ios::binary);
    if (!f) throw validation_error("plot: cannot open " + path);
    f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
         "font-family=\"sans-serif\">"
      << title_ << "</text>\n";

    // Axes box and ticks.
    f << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : ticks(x0, x1)) {
      const double x = px(t);
      f << "<line x1=\"" << x << "\" y1=\"" << mt + ph << "\" x2=\"" << x << "\" y2=\""
        << mt + ph + 5 << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << x << "\" y=\"" << mt + ph + 20
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt9(t)
        << "</text>\n"
        << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\"" << mt + ph
        << "\" stroke=\"#dddddd\"/>\n";
    }
    for (double t : ticks(y0, y1)) {
      const double y = py(t);
      f << "<line x1=\"" << ml - 5 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt9(t)
        << "</text>\n"
        << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + pw << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\"/>\n";
    }
    f << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << xlabel_
      << "</text>\n";
    f << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\""
      << "rotate(-90 18 " << mt + ph / 2 << ")\">" << ylabel_ << "</text>\n";

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    for (std::size_t si = 0; si < series_.size(); ++si) {
      const auto& s = series_[si];
      const char* color = palette[si % 10];
      f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        f << px(s.x[i]) << ',' << py(s.y[i]) << (i + 1 < s.x.size() ? " " : "");
      f << "\"/>\n";
      const double ly = mt + 16 + 18.0 * si;
      f << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 34
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly + 4
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << s.name << "</text>\n";
    }
    f << "</svg>\n";
  }

 private:
  struct Series {
    std::string name;
    std::vector<double> x, y;
  };

  static std::vector<double> ticks(double lo, double hi) {
    const double span = hi - lo;
    const double raw = span / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (raw <= m * mag) {
        step = m * mag;
        break;
      }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-12 * span; t += step)
      out.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
    return out;
  }

  std::string title_, xlabel_, ylabel_;
  std::vector<Series> series_;
};

}  // namespace gridfreq
