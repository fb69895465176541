#include "somgan/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace somgan::report {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 480;
constexpr double kLeft = 70;
constexpr double kRight = 170;
constexpr double kTop = 40;
constexpr double kBottom = 60;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, double x_max) {
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + pw * std::clamp(x / x_max, 0.0, 1.0); };
  auto py = [&](double y) { return kTop + ph * (1.0 - std::clamp(y, 0.0, 1.0)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double f = i / 5.0;
    os << "<line x1=\"" << num(px(f * x_max)) << "\" y1=\"" << num(py(0)) << "\" x2=\"" << num(px(f * x_max))
       << "\" y2=\"" << num(py(1)) << "\" stroke=\"#eee\"/>\n";
    os << "<line x1=\"" << num(px(0)) << "\" y1=\"" << num(py(f)) << "\" x2=\"" << num(px(x_max)) << "\" y2=\""
       << num(py(f)) << "\" stroke=\"#eee\"/>\n";
    os << "<text x=\"" << num(px(f * x_max)) << "\" y=\"" << num(py(0) + 16) << "\" text-anchor=\"middle\">"
       << num(f * x_max) << "</text>\n";
    os << "<text x=\"" << num(px(0) - 6) << "\" y=\"" << num(py(f) + 4) << "\" text-anchor=\"end\">" << num(f)
       << "</text>\n";
  }
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 18 << "\" text-anchor=\"middle\">" << escape(x_label)
     << "</text>\n";
  os << "<text transform=\"translate(20," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    const char* color = kColors[s % (sizeof kColors / sizeof *kColors)];
    const std::size_t n = std::min(ser.x.size(), ser.mean.size());
    if (ser.lo.size() >= n && ser.hi.size() >= n && n > 0) {
      os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < n; ++i) os << num(px(ser.x[i])) << ',' << num(py(ser.hi[i])) << ' ';
      for (std::size_t i = n; i-- > 0;) os << num(px(ser.x[i])) << ',' << num(py(ser.lo[i])) << ' ';
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i) os << num(px(ser.x[i])) << ',' << num(py(ser.mean[i])) << ' ';
    os << "\"/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(s);
    os << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - kRight + 30 << "\" y2=\""
       << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kWidth - kRight + 36 << "\" y=\"" << ly + 4 << "\">" << escape(ser.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace somgan::report
