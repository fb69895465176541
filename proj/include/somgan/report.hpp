#pragma once

#include <string>
#include <vector>

namespace somgan::report {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> lo;  // band drawn when lo/hi are non-empty
  std::vector<double> hi;
};

/// Standalone SVG line chart on [0,1] x [0,1] with shaded bands.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, double x_max = 1.0);

}  // namespace somgan::report
