#pragma once

#include <string>
#include <vector>

namespace gcsim {

struct LineSeries {
  std::string label;
  std::vector<double> x, y;
};

/// Static SVG line chart with axes, tick labels, and a legend.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<LineSeries>& series);

} // namespace gcsim
