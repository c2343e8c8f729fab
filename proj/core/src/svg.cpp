#include "gcsim/svg.hpp"

#include "gcsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace gcsim {

namespace {
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}
} // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<LineSeries>& series) {
  const double W = 720, H = 440, L = 70, R = 150, T = 44, B = 52;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!std::isfinite(xmin)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + (ymin == 0 ? 1 : std::abs(ymin) * 0.1);
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
     << "' viewBox='0 0 " << W << ' ' << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='15' "
     << "font-family='sans-serif'>" << title << "</text>\n";
  // axes
  os << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << H - B
     << "' stroke='black'/>\n";
  os << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='" << H - B
     << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    double fx = xmin + (xmax - xmin) * i / 5.0;
    double fy = ymin + (ymax - ymin) * i / 5.0;
    os << "<text x='" << px(fx) << "' y='" << H - B + 18
       << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << fmt(fx)
       << "</text>\n";
    os << "<line x1='" << px(fx) << "' y1='" << H - B << "' x2='" << px(fx) << "' y2='"
       << H - B + 4 << "' stroke='black'/>\n";
    os << "<text x='" << L - 8 << "' y='" << py(fy) + 4
       << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << fmt(fy)
       << "</text>\n";
    os << "<line x1='" << L - 4 << "' y1='" << py(fy) << "' x2='" << L << "' y2='" << py(fy)
       << "' stroke='black'/>\n";
  }
  os << "<text x='" << (L + W - R) / 2 << "' y='" << H - 12
     << "' text-anchor='middle' font-size='12' font-family='sans-serif'>" << x_label
     << "</text>\n";
  os << "<text x='16' y='" << (T + H - B) / 2
     << "' text-anchor='middle' font-size='12' font-family='sans-serif' transform='rotate(-90 16 "
     << (T + H - B) / 2 << ")'>" << y_label << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.8' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    os << "'/>\n";
    double ly = T + 16 + 18 * static_cast<double>(si);
    os << "<line x1='" << W - R + 10 << "' y1='" << ly << "' x2='" << W - R + 34 << "' y2='" << ly
       << "' stroke='" << color << "' stroke-width='1.8'/>\n";
    os << "<text x='" << W - R + 40 << "' y='" << ly + 4
       << "' font-size='11' font-family='sans-serif'>" << s.label << "</text>\n";
  }
  os << "</svg>\n";
}

} // namespace gcsim
