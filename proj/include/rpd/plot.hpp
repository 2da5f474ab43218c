#pragma once

// Static SVG learning curves from aggregate.csv: one <path> per config, a
// +-1 std <polygon> band behind it, and a dashed <line> per baseline.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rpd/errors.hpp"
#include "rpd/metrics.hpp"

namespace rpd {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> std;
};

struct Baseline {
  std::string name;
  double value = 0.0;
};

struct PlotOptions {
  std::string metric = "eval_success";
  std::string title;
  double width = 720;
  double height = 440;
};

// Rows with an empty mean for `metric` are skipped; configs keep their order
// of first appearance.
inline std::vector<Series> series_from_aggregate(const CsvTable& t, const std::string& metric) {
  const std::size_t c_name = t.column("config");
  const std::size_t c_step = t.column("global_step");
  const std::size_t c_mean = t.column(metric + "_mean");
  const std::size_t c_std = t.column(metric + "_std");
  std::vector<Series> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto step = t.number(r, c_step);
    const auto mean = t.number(r, c_mean);
    if (!step || !mean) continue;
    const std::string& name = t.rows[r][c_name];
    auto it = std::find_if(out.begin(), out.end(), [&](const Series& s) { return s.name == name; });
    if (it == out.end()) {
      out.push_back(Series{name, {}, {}, {}});
      it = out.end() - 1;
    }
    it->x.push_back(*step);
    it->mean.push_back(*mean);
    it->std.push_back(t.number(r, c_std).value_or(0.0));
  }
  return out;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    switch (ch) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      case '\'': o += "&apos;"; break;
      default: o += ch;
    }
  }
  return o;
}

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

inline std::string num(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

inline std::string tick_label(double v) {
  std::ostringstream s;
  const double a = std::abs(v);
  if (a >= 1e6)
    s << std::setprecision(3) << v / 1e6 << "M";
  else if (a >= 1e3)
    s << std::setprecision(3) << v / 1e3 << "k";
  else
    s << std::setprecision(3) << v;
  return s.str();
}

}  // namespace detail

inline std::string render_svg(const std::vector<Series>& series, const std::vector<Baseline>& baselines,
                              const PlotOptions& opt = {}) {
  if (series.empty()) throw UsageError("plot: no data for metric '" + opt.metric + "'");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.mean[i] - s.std[i]);
      y1 = std::max(y1, s.mean[i] + s.std[i]);
    }
  for (const auto& b : baselines) {
    y0 = std::min(y0, b.value);
    y1 = std::max(y1, b.value);
  }
  if (opt.metric == "eval_success") {
    y0 = std::min(y0, 0.0);
    y1 = std::max(y1, 1.0);
  }
  if (x1 - x0 <= 0.0) {
    x0 -= 1.0;
    x1 += 1.0;
  }
  if (y1 - y0 <= 0.0) {
    y0 -= 0.5;
    y1 += 0.5;
  }

  const double left = 70, right = 180, top = 40, bottom = 50;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  using detail::num;

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(opt.width) << "\" height=\"" << num(opt.height)
    << "\" viewBox=\"0 0 " << num(opt.width) << " " << num(opt.height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << num(opt.width) << "\" height=\"" << num(opt.height) << "\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(opt.title) << "</text>\n";

  o << "<g class=\"axes\" stroke=\"#333\" fill=\"none\">\n";
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\"/>\n</g>\n";
  o << "<g class=\"ticks\" fill=\"#333\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5.0, yv = y0 + (y1 - y0) * k / 5.0;
    o << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">"
      << detail::tick_label(xv) << "</text>\n";
    o << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">"
      << detail::tick_label(yv) << "</text>\n";
  }
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(opt.height - 10)
    << "\" text-anchor=\"middle\">environment steps</text>\n";
  o << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num(top + ph / 2) << ")\">" << xml_escape(opt.metric) << "</text>\n</g>\n";

  o << "<g class=\"bands\">\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    o << "<polygon fill=\"" << detail::palette(k) << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << num(px(s.x[i])) << "," << num(py(s.mean[i] + s.std[i])) << " ";
    for (std::size_t i = s.x.size(); i-- > 0;) o << num(px(s.x[i])) << "," << num(py(s.mean[i] - s.std[i])) << " ";
    o << "\"/>\n";
  }
  o << "</g>\n<g class=\"series\">\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    o << "<path fill=\"none\" stroke=\"" << detail::palette(k) << "\" stroke-width=\"2\" d=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " L" : "M") << num(px(s.x[i])) << "," << num(py(s.mean[i]));
    o << "\"><title>" << xml_escape(s.name) << "</title></path>\n";
  }
  o << "</g>\n<g class=\"baselines\">\n";
  for (const auto& b : baselines)
    o << "<line x1=\"" << num(left) << "\" x2=\"" << num(left + pw) << "\" y1=\"" << num(py(b.value)) << "\" y2=\""
      << num(py(b.value)) << "\" stroke=\"#444\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"><title>"
      << xml_escape(b.name) << "</title></line>\n";
  o << "</g>\n<g class=\"legend\">\n";
  double ly = top + 10;
  for (std::size_t k = 0; k < series.size(); ++k, ly += 20) {
    o << "<rect x=\"" << num(left + pw + 16) << "\" y=\"" << num(ly - 9) << "\" width=\"14\" height=\"10\" fill=\""
      << detail::palette(k) << "\"/>";
    o << "<text x=\"" << num(left + pw + 36) << "\" y=\"" << num(ly) << "\">" << xml_escape(series[k].name)
      << "</text>\n";
  }
  for (const auto& b : baselines) {
    o << "<rect x=\"" << num(left + pw + 16) << "\" y=\"" << num(ly - 5) << "\" width=\"14\" height=\"2\" fill=\"#444\"/>";
    o << "<text x=\"" << num(left + pw + 36) << "\" y=\"" << num(ly) << "\">" << xml_escape(b.name) << " ("
      << detail::tick_label(b.value) << ")</text>\n";
    ly += 20;
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

inline std::string plot_aggregate(const std::string& aggregate_text, const std::vector<Baseline>& baselines,
                                  const PlotOptions& opt = {}) {
  return render_svg(series_from_aggregate(parse_csv(aggregate_text), opt.metric), baselines, opt);
}

}  // namespace rpd
