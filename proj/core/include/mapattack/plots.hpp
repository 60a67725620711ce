#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mapattack::plots {

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Grouped bar chart; one bar group per category. Deterministic output.
void svg_bar_chart(const std::filesystem::path& path, const std::string& title,
                   const std::vector<std::string>& categories, const std::vector<Series>& series);

/// Line chart over a shared x axis.
void svg_line_chart(const std::filesystem::path& path, const std::string& title,
                    const std::vector<double>& x, const std::vector<Series>& series,
                    const std::string& x_label, const std::string& y_label);

/// Data-behind-plot CSV (one x column plus one column per series).
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace mapattack::plots
