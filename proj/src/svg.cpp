#include "bmgc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace bmgc {

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Panel {
  double x0, y0, w, h;  // plot area in svg coordinates
  double vmin, vmax;    // value range
  size_t n;             // number of epochs

  double px(size_t i) const {
    return n <= 1 ? x0 + w / 2 : x0 + w * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  double py(double v) const {
    const double range = vmax - vmin;
    const double f = range > 0 ? (v - vmin) / range : 0.5;
    return y0 + h - f * h;
  }
};

void polyline(std::string& out, const Panel& p, const std::vector<double>& values,
              const char* color) {
  out += "<polyline fill=\"none\" stroke=\"";
  out += color;
  out += "\" stroke-width=\"1.5\" points=\"";
  for (size_t i = 0; i < values.size(); ++i) {
    out += fmt(p.px(i)) + "," + fmt(p.py(values[i])) + " ";
  }
  out += "\"/>\n";
}

void panel_frame(std::string& out, const Panel& p, const std::string& title) {
  out += "<rect x=\"" + fmt(p.x0) + "\" y=\"" + fmt(p.y0) + "\" width=\"" + fmt(p.w) +
         "\" height=\"" + fmt(p.h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  out += "<text x=\"" + fmt(p.x0 + p.w / 2) + "\" y=\"" + fmt(p.y0 - 8) +
         "\" text-anchor=\"middle\" font-size=\"13\">" + title + "</text>\n";
  out += "<text x=\"" + fmt(p.x0) + "\" y=\"" + fmt(p.y0 + p.h + 14) +
         "\" font-size=\"10\">epoch 1</text>\n";
  out += "<text x=\"" + fmt(p.x0 + p.w) + "\" y=\"" + fmt(p.y0 + p.h + 14) +
         "\" text-anchor=\"end\" font-size=\"10\">" + std::to_string(p.n) + "</text>\n";
  out += "<text x=\"" + fmt(p.x0 - 4) + "\" y=\"" + fmt(p.py(p.vmax) + 4) +
         "\" text-anchor=\"end\" font-size=\"10\">" + fmt(p.vmax) + "</text>\n";
  out += "<text x=\"" + fmt(p.x0 - 4) + "\" y=\"" + fmt(p.py(p.vmin) + 4) +
         "\" text-anchor=\"end\" font-size=\"10\">" + fmt(p.vmin) + "</text>\n";
}

}  // namespace

std::string curves_svg(const std::vector<EpochRecord>& history) {
  std::vector<double> tr_acc, va_acc, tr_loss, va_loss;
  for (const EpochRecord& r : history) {
    tr_acc.push_back(r.train_acc);
    va_acc.push_back(r.val_acc);
    tr_loss.push_back(r.train_loss);
    va_loss.push_back(r.val_loss);
  }
  auto range = [](const std::vector<double>& a, const std::vector<double>& b) {
    double lo = 0.0, hi = 1.0;
    if (!a.empty()) {
      lo = std::min(*std::min_element(a.begin(), a.end()),
                    *std::min_element(b.begin(), b.end()));
      hi = std::max(*std::max_element(a.begin(), a.end()),
                    *std::max_element(b.begin(), b.end()));
      if (hi <= lo) hi = lo + 1.0;
    }
    return std::pair<double, double>(lo, hi);
  };
  auto [amin, amax] = range(tr_acc, va_acc);
  auto [lmin, lmax] = range(tr_loss, va_loss);

  const size_t n = history.size();
  Panel acc{60, 40, 320, 220, std::min(0.0, amin), std::max(1.0, amax), n};
  Panel loss{460, 40, 320, 220, std::min(0.0, lmin), lmax, n};

  std::string out =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"820\" height=\"310\" "
      "font-family=\"sans-serif\">\n";
  panel_frame(out, acc, "accuracy per epoch");
  panel_frame(out, loss, "loss per epoch");
  if (n > 0) {
    polyline(out, acc, tr_acc, "#1f77b4");
    polyline(out, acc, va_acc, "#d62728");
    polyline(out, loss, tr_loss, "#1f77b4");
    polyline(out, loss, va_loss, "#d62728");
  }
  out += "<text x=\"60\" y=\"295\" font-size=\"11\" fill=\"#1f77b4\">train</text>\n";
  out += "<text x=\"110\" y=\"295\" font-size=\"11\" fill=\"#d62728\">validation</text>\n";
  out += "</svg>\n";
  return out;
}

std::string heatmap_svg(const EvalReport& rep) {
  const size_t g = rep.genres.size();
  const double cell = 34.0;
  const double left = 150.0, top = 120.0;
  const double wpx = left + cell * static_cast<double>(g) + 20.0;
  const double hpx = top + cell * static_cast<double>(g) + 20.0;

  double max_count = 1.0;
  for (double v : rep.confusion.data) max_count = std::max(max_count, v);

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(wpx) +
                    "\" height=\"" + fmt(hpx) + "\" font-family=\"sans-serif\">\n";
  out += "<text x=\"" + fmt(left) + "\" y=\"20\" font-size=\"13\">confusion matrix (rows = true, "
         "cols = predicted)</text>\n";
  for (size_t r = 0; r < g; ++r) {
    out += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(top + cell * (r + 0.6)) +
           "\" text-anchor=\"end\" font-size=\"10\">" + rep.genres[r] + "</text>\n";
    out += "<text x=\"" + fmt(left + cell * (r + 0.5)) + "\" y=\"" + fmt(top - 6) +
           "\" font-size=\"10\" text-anchor=\"start\" transform=\"rotate(-45 " +
           fmt(left + cell * (r + 0.5)) + " " + fmt(top - 6) + ")\">" + rep.genres[r] +
           "</text>\n";
    for (size_t c = 0; c < g; ++c) {
      const double v = rep.confusion(r, c);
      const int shade = static_cast<int>(255.0 - 215.0 * (v / max_count));
      char color[16];
      std::snprintf(color, sizeof(color), "#%02x%02xff", shade, shade);
      out += "<rect x=\"" + fmt(left + cell * c) + "\" y=\"" + fmt(top + cell * r) +
             "\" width=\"" + fmt(cell) + "\" height=\"" + fmt(cell) + "\" fill=\"" + color +
             "\" stroke=\"#888\"/>\n";
      out += "<text x=\"" + fmt(left + cell * (c + 0.5)) + "\" y=\"" +
             fmt(top + cell * (r + 0.62)) + "\" text-anchor=\"middle\" font-size=\"10\">" +
             std::to_string(static_cast<long long>(std::llround(v))) + "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace bmgc
