#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace juggle {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  bool markers = false;
};

/// Self-contained SVG line chart with axes, ticks and a legend. Non-finite
/// points are skipped.
std::string renderSvg(const PlotSpec& spec);
void writeSvg(const PlotSpec& spec, const std::filesystem::path& path);

/// Writes `text` to `path`, creating parent directories.
void writeTextFile(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal form; empty for NaN.
std::string formatNumber(double v);

}  // namespace juggle
