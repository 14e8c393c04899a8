#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <string>

#include "cgate/error.hpp"
#include "cgate/metrics.hpp"

namespace cgate {
namespace {

constexpr double kWidth = 800, kHeight = 500;
constexpr double kLeft = 70, kRight = 180, kTop = 50, kBottom = 70;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

const char* kDashes[] = {"", "6,3", "2,3", "8,3,2,3"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Series {
  std::size_t n_total;
  CurveMetric metric;
  const char* color;
  const char* label;
  std::vector<const CurvePoint*> points;
};

}  // namespace

std::string curves_to_svg(std::span<const CurvePoint> points, bool sure_family, const SvgOptions& options) {
  if (points.empty()) throw ValidationError("curves_to_svg: no points");

  std::map<std::size_t, std::vector<const CurvePoint*>> by_total;
  std::size_t max_n = 0;
  std::set<std::size_t> ticks;
  for (const auto& p : points) {
    by_total[p.cell.n_total].push_back(&p);
    max_n = std::max(max_n, p.cell.n_poison);
    ticks.insert(p.cell.n_poison);
  }
  for (auto& [t, v] : by_total) {
    std::sort(v.begin(), v.end(),
              [](const CurvePoint* a, const CurvePoint* b) { return a->cell.n_poison < b->cell.n_poison; });
  }
  const double x_max = max_n == 0 ? 1.0 : static_cast<double>(max_n) * 1.05;
  auto sx = [&](double n) { return kLeft + n / x_max * kPlotW; };
  auto sy = [&](double v) { return kTop + (1.0 - v) * kPlotH; };

  const CurveMetric wt = sure_family ? CurveMetric::kSureWt : CurveMetric::kAsrWt;
  const CurveMetric wo = sure_family ? CurveMetric::kSureWo : CurveMetric::kAsrWo;

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"0 0 800 500\" width=\"800\" height=\"500\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
  if (!options.title.empty()) {
    s += "<text x=\"" + num(kLeft + kPlotW / 2) + "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" + escape(options.title) + "</text>\n";
  }

  // axes and grid
  s += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(sy(v)) + "\" x2=\"" + num(kLeft + kPlotW) + "\" y2=\"" +
         num(sy(v)) + "\" stroke=\"#e0e0e0\"/>\n";
    s += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(sy(v) + 4) + "\" text-anchor=\"end\">" + num(v) + "</text>\n";
  }
  for (std::size_t t : ticks) {
    s += "<line x1=\"" + num(sx(static_cast<double>(t))) + "\" y1=\"" + num(kTop + kPlotH) + "\" x2=\"" +
         num(sx(static_cast<double>(t))) + "\" y2=\"" + num(kTop + kPlotH + 5) + "\" stroke=\"#333\"/>\n";
    s += "<text x=\"" + num(sx(static_cast<double>(t))) + "\" y=\"" + num(kTop + kPlotH + 18) +
         "\" text-anchor=\"middle\">" + std::to_string(t) + "</text>\n";
  }
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
       num(kTop + kPlotH) + "\" stroke=\"#333\"/>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + kPlotH) + "\" x2=\"" + num(kLeft + kPlotW) + "\" y2=\"" +
       num(kTop + kPlotH) + "\" stroke=\"#333\"/>\n";
  s += "<text x=\"" + num(kLeft + kPlotW / 2) + "\" y=\"" + num(kTop + kPlotH + 36) +
       "\" text-anchor=\"middle\" font-size=\"13\">poison count (n_poison)</text>\n";
  s += "<text x=\"18\" y=\"" + num(kTop + kPlotH / 2) + "\" text-anchor=\"middle\" font-size=\"13\" "
       "transform=\"rotate(-90 18 " + num(kTop + kPlotH / 2) + ")\">" + (sure_family ? "sure rate" : "ASR") +
       "</text>\n";
  s += "</g>\n";

  std::vector<Series> series;
  for (const auto& [total, pts] : by_total) {
    series.push_back({total, wt, "#d62728", "with trigger", pts});
    series.push_back({total, wo, "#1f77b4", "without trigger", pts});
  }

  std::size_t dash_index = 0;
  std::map<std::size_t, const char*> dash_of;
  for (const auto& [total, pts] : by_total) dash_of[total] = kDashes[dash_index++ % 4];

  for (const auto& ser : series) {
    // envelope band: hi along the curve, lo back
    std::string band;
    for (const auto* p : ser.points) {
      band += num(sx(static_cast<double>(p->cell.n_poison))) + "," + num(sy(p->get(ser.metric).hi)) + " ";
    }
    for (auto it = ser.points.rbegin(); it != ser.points.rend(); ++it) {
      band += num(sx(static_cast<double>((*it)->cell.n_poison))) + "," + num(sy((*it)->get(ser.metric).lo)) + " ";
    }
    band.pop_back();
    s += "<polygon points=\"" + band + "\" fill=\"" + ser.color + "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";

    std::string line;
    for (const auto* p : ser.points) {
      line += num(sx(static_cast<double>(p->cell.n_poison))) + "," + num(sy(p->get(ser.metric).median)) + " ";
    }
    line.pop_back();
    s += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"2\"";
    if (*dash_of[ser.n_total] != '\0') s += std::string(" stroke-dasharray=\"") + dash_of[ser.n_total] + "\"";
    s += "/>\n";
    for (const auto* p : ser.points) {
      s += "<circle cx=\"" + num(sx(static_cast<double>(p->cell.n_poison))) + "\" cy=\"" +
           num(sy(p->get(ser.metric).median)) + "\" r=\"3\" fill=\"" + ser.color + "\"/>\n";
    }
  }

  // threshold marker per n_total series
  for (const auto& [total, pts] : by_total) {
    std::vector<CurvePoint> curve;
    for (const auto* p : pts) curve.push_back(*p);
    const auto th = estimate_threshold(curve, CurveMetric::kSureWt, options.threshold_level);
    if (!th.n_poison) continue;
    const double x = sx(static_cast<double>(*th.n_poison));
    s += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(x) + "\" y2=\"" + num(kTop + kPlotH) +
         "\" stroke=\"#555\" stroke-width=\"1\" stroke-dasharray=\"4,4\"/>\n";
    s += "<text x=\"" + num(x + 4) + "\" y=\"" + num(kTop + 12) +
         "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#555\">n*=" + std::to_string(*th.n_poison) +
         " (n_total=" + std::to_string(total) + ")</text>\n";
  }

  // legend
  double ly = kTop + 10;
  s += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (const auto& ser : series) {
    const double lx = kLeft + kPlotW + 15;
    s += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 24) + "\" y2=\"" + num(ly) +
         "\" stroke=\"" + ser.color + "\" stroke-width=\"2\"";
    if (*dash_of[ser.n_total] != '\0') s += std::string(" stroke-dasharray=\"") + dash_of[ser.n_total] + "\"";
    s += "/>\n";
    s += "<text x=\"" + num(lx + 30) + "\" y=\"" + num(ly + 4) + "\">" + ser.label +
         ", n_total=" + std::to_string(ser.n_total) + "</text>\n";
    ly += 18;
  }
  s += "</g>\n";

  double ny = kHeight - 12;
  for (auto it = options.notes.rbegin(); it != options.notes.rend(); ++it) {
    s += "<text x=\"" + num(kLeft) + "\" y=\"" + num(ny) + "\" font-family=\"sans-serif\" font-size=\"10\" "
         "fill=\"#a00\">" + escape(*it) + "</text>\n";
    ny -= 13;
  }
  s += "</svg>\n";
  return s;
}

}  // namespace cgate
