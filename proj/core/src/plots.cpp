#include "mapattack/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mapattack/errors.hpp"

namespace mapattack::plots {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

const char* kPalette[6] = {"#3b6fb4", "#d1603d", "#4e9a51", "#8e6bb0", "#c2a030", "#5aa7b0"};

void open_svg(std::ofstream& out, const std::filesystem::path& path, int w, int h,
              const std::string& title) {
  out.open(path);
  if (!out) throw IoError("cannot write plot: " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" "
      << "font-family=\"sans-serif\">" << title << "</text>\n";
}

}  // namespace

void svg_bar_chart(const std::filesystem::path& path, const std::string& title,
                   const std::vector<std::string>& categories, const std::vector<Series>& series) {
  const int w = 640, h = 400, margin = 56;
  double vmax = 0.0;
  for (const Series& s : series)
    for (double v : s.values) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;

  std::ofstream out;
  open_svg(out, path, w, h, title);
  const double plot_w = w - 2.0 * margin;
  const double plot_h = h - 2.0 * margin;
  out << "<line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\"" << w - margin
      << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << h - margin << "\" stroke=\"black\"/>\n";

  const std::size_t n_cat = categories.size();
  const std::size_t n_ser = std::max<std::size_t>(series.size(), 1);
  const double group_w = plot_w / std::max<std::size_t>(n_cat, 1);
  const double bar_w = group_w * 0.8 / n_ser;
  for (std::size_t c = 0; c < n_cat; ++c) {
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].values.size()) continue;
      const double v = series[s].values[c];
      const double bh = plot_h * (v / vmax);
      const double x = margin + c * group_w + group_w * 0.1 + s * bar_w;
      const double y = h - margin - bh;
      out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(bar_w * 0.92)
          << "\" height=\"" << fmt(bh) << "\" fill=\"" << kPalette[s % 6] << "\"/>\n";
      out << "<text x=\"" << fmt(x + bar_w * 0.46) << "\" y=\"" << fmt(y - 3)
          << "\" text-anchor=\"middle\" font-size=\"9\" font-family=\"sans-serif\">" << fmt(v)
          << "</text>\n";
    }
    out << "<text x=\"" << fmt(margin + c * group_w + group_w / 2) << "\" y=\"" << h - margin + 16
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << categories[c]
        << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = margin + 14.0 * s;
    out << "<rect x=\"" << w - margin - 110 << "\" y=\"" << fmt(y - 9) << "\" width=\"10\" "
        << "height=\"10\" fill=\"" << kPalette[s % 6] << "\"/>\n";
    out << "<text x=\"" << w - margin - 96 << "\" y=\"" << fmt(y) << "\" font-size=\"11\" "
        << "font-family=\"sans-serif\">" << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
}

void svg_line_chart(const std::filesystem::path& path, const std::string& title,
                    const std::vector<double>& x, const std::vector<Series>& series,
                    const std::string& x_label, const std::string& y_label) {
  const int w = 640, h = 400, margin = 56;
  double vmin = 0.0, vmax = 1.0, xmin = 0.0, xmax = 1.0;
  bool first = true;
  for (const Series& s : series) {
    for (double v : s.values) {
      if (first) {
        vmin = vmax = v;
        first = false;
      }
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  if (!x.empty()) {
    xmin = *std::min_element(x.begin(), x.end());
    xmax = *std::max_element(x.begin(), x.end());
  }
  if (vmax - vmin < 1e-12) vmax = vmin + 1.0;
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;

  std::ofstream out;
  open_svg(out, path, w, h, title);
  const double plot_w = w - 2.0 * margin;
  const double plot_h = h - 2.0 * margin;
  auto px = [&](double vx) { return margin + plot_w * (vx - xmin) / (xmax - xmin); };
  auto py = [&](double vy) { return h - margin - plot_h * (vy - vmin) / (vmax - vmin); };
  out << "<line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\"" << w - margin
      << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << h - margin << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" "
      << "font-size=\"11\" font-family=\"sans-serif\">" << x_label << "</text>\n";
  out << "<text x=\"16\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-size=\"11\" "
      << "font-family=\"sans-serif\" transform=\"rotate(-90 16 " << h / 2 << ")\">" << y_label
      << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    out << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].values.size() && i < x.size(); ++i)
      out << fmt(px(x[i])) << "," << fmt(py(series[s].values[i])) << " ";
    out << "\"/>\n";
    const double y = margin + 14.0 * s;
    out << "<rect x=\"" << w - margin - 110 << "\" y=\"" << fmt(y - 9)
        << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[s % 6] << "\"/>\n";
    out << "<text x=\"" << w - margin - 96 << "\" y=\"" << fmt(y) << "\" font-size=\"11\" "
        << "font-family=\"sans-serif\">" << series[s].name << "</text>\n";
  }
  out << "<text x=\"" << margin - 4 << "\" y=\"" << fmt(py(vmin)) << "\" text-anchor=\"end\" "
      << "font-size=\"9\" font-family=\"sans-serif\">" << fmt(vmin) << "</text>\n";
  out << "<text x=\"" << margin - 4 << "\" y=\"" << fmt(py(vmax)) << "\" text-anchor=\"end\" "
      << "font-size=\"9\" font-family=\"sans-serif\">" << fmt(vmax) << "</text>\n";
  out << "</svg>\n";
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write csv: " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << fmt(row[i]) << (i + 1 < row.size() ? "," : "\n");
  }
}

}  // namespace mapattack::plots
