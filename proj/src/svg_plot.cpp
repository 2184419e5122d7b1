#include <algorithm>
#include <cmath>
#include <sstream>

#include "lfsr/eval.hpp"

namespace lfsr::eval {

namespace {

constexpr double kW = 480, kH = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else if (c == '"') o += "&quot;";
    else o += c;
  }
  return o;
}

struct Axes {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
  double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double c = lo, w = std::max(1.0, std::abs(c) * 0.1);
    lo = c - w;
    hi = c + w;
    return;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

void frame(std::ostringstream& o, const Axes& a, const std::string& title, const std::string& xl,
           const std::string& yl) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"13\">" << esc(title) << "</text>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kW - kLeft - kRight << "\" height=\""
    << kH - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = a.x0 + (a.x1 - a.x0) * t / 4, yv = a.y0 + (a.y1 - a.y0) * t / 4;
    o << "<text x=\"" << a.px(xv) << "\" y=\"" << kH - kBottom + 15 << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
    o << "<text x=\"" << kLeft - 5 << "\" y=\"" << a.py(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
  }
  o << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">" << esc(xl) << "</text>\n";
  o << "<text transform=\"translate(14," << kH / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << esc(yl) << "</text>\n";
}

void hline(std::ostringstream& o, const Axes& a, double y, const char* dash, const std::string& label) {
  o << "<line x1=\"" << a.px(a.x0) << "\" x2=\"" << a.px(a.x1) << "\" y1=\"" << a.py(y) << "\" y2=\"" << a.py(y)
    << "\" stroke=\"gray\"" << (dash ? std::string(" stroke-dasharray=\"") + dash + "\"" : "") << "/>\n";
  o << "<text x=\"" << a.px(a.x1) - 4 << "\" y=\"" << a.py(y) - 3 << "\" text-anchor=\"end\" fill=\"gray\">" << esc(label) << "</text>\n";
}

}  // namespace

std::string scatter_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<Series>& series, bool identity_line) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    for (double v : s.x) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : s.y) lo = std::min(lo, v), hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  pad_range(lo, hi);
  const Axes a{lo, hi, lo, hi};
  std::ostringstream o;
  frame(o, a, title, x_label, y_label);
  if (identity_line)
    o << "<line x1=\"" << a.px(lo) << "\" y1=\"" << a.py(lo) << "\" x2=\"" << a.px(hi) << "\" y2=\"" << a.py(hi)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = kColors[k % 6];
    for (std::size_t i = 0; i < std::min(series[k].x.size(), series[k].y.size()); ++i)
      o << "<circle cx=\"" << a.px(series[k].x[i]) << "\" cy=\"" << a.py(series[k].y[i]) << "\" r=\"3.5\" fill=\"" << c
        << "\" fill-opacity=\"0.8\"/>\n";
    o << "<text x=\"" << kLeft + 8 << "\" y=\"" << kTop + 16 + 14 * k << "\" fill=\"" << c << "\">" << esc(series[k].label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string bland_altman_svg(const std::string& title, const std::vector<double>& gold,
                             const std::vector<double>& method, const stats::BlandAltmanResult& ba) {
  std::vector<double> mx, dy;
  for (std::size_t i = 0; i < std::min(gold.size(), method.size()); ++i) {
    mx.push_back(0.5 * (gold[i] + method[i]));
    dy.push_back(method[i] - gold[i]);
  }
  double x0 = INFINITY, x1 = -INFINITY, y0 = std::min(ba.lower, ba.bias), y1 = std::max(ba.upper, ba.bias);
  for (double v : mx) x0 = std::min(x0, v), x1 = std::max(x1, v);
  for (double v : dy) y0 = std::min(y0, v), y1 = std::max(y1, v);
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  pad_range(x0, x1);
  pad_range(y0, y1);
  const Axes a{x0, x1, y0, y1};
  std::ostringstream o;
  frame(o, a, title, "mean of gold and method (mm^3)", "method - gold (mm^3)");
  hline(o, a, ba.bias, nullptr, "bias " + fmt(ba.bias));
  hline(o, a, ba.upper, "4 3", "+RPC");
  hline(o, a, ba.lower, "4 3", "-RPC");
  for (std::size_t i = 0; i < mx.size(); ++i)
    o << "<circle cx=\"" << a.px(mx[i]) << "\" cy=\"" << a.py(dy[i]) << "\" r=\"3.5\" fill=\"" << kColors[0] << "\"/>\n";
  o << "<text x=\"" << kLeft + 8 << "\" y=\"" << kTop + 16 << "\">RPC " << fmt(ba.rpc) << ", KS p " << fmt(ba.ks_p)
    << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace lfsr::eval
