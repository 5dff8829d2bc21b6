#include "drums/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace drums {

namespace {

void check_pair(const RArray &a, const RArray &b, const MaskArray *roi, const char *what) {
  if (a.rank() != 2)
    throw DataError(std::string(what) + ": expected 2-D images");
  require_shape(a.shape(), b.shape(), what);
  if (roi)
    require_shape(roi->shape(), a.shape(), std::string(what) + " ROI");
}

bool in_roi(const MaskArray *roi, std::size_t i) { return !roi || (*roi)[i] != 0; }

struct Sums {
  double err2 = 0.0, ref2 = 0.0, ref_max = -std::numeric_limits<double>::infinity();
  std::size_t n = 0;
};

Sums sums(const RArray &t, const RArray &r, const MaskArray *roi) {
  Sums s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!in_roi(roi, i))
      continue;
    const double d = t[i] - r[i];
    s.err2 += d * d;
    s.ref2 += r[i] * r[i];
    s.ref_max = std::max(s.ref_max, r[i]);
    ++s.n;
  }
  if (s.n == 0)
    throw DataError("metric: empty ROI");
  return s;
}

} // namespace

double nrmse(const RArray &test, const RArray &ref, const MaskArray *roi) {
  check_pair(test, ref, roi, "nrmse");
  const auto s = sums(test, ref, roi);
  if (!(s.ref2 > 0.0))
    throw DataError("nrmse: reference has zero norm over ROI");
  return std::sqrt(s.err2) / std::sqrt(s.ref2);
}

double nmse(const RArray &test, const RArray &ref, const MaskArray *roi) {
  check_pair(test, ref, roi, "nmse");
  const auto s = sums(test, ref, roi);
  if (!(s.ref2 > 0.0))
    throw DataError("nmse: reference has zero norm over ROI");
  return s.err2 / s.ref2;
}

double psnr(const RArray &test, const RArray &ref, const MaskArray *roi) {
  check_pair(test, ref, roi, "psnr");
  const auto s = sums(test, ref, roi);
  const double mse = s.err2 / static_cast<double>(s.n);
  if (mse == 0.0)
    return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(s.ref_max * s.ref_max / mse);
}

double ssim(const RArray &test, const RArray &ref, const MaskArray *roi, std::size_t window) {
  check_pair(test, ref, roi, "ssim");
  const std::size_t H = test.dim(0), W = test.dim(1);
  if (window == 0 || H < window || W < window)
    throw DataError("ssim: image smaller than the window");

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (in_roi(roi, i)) {
      lo = std::min({lo, test[i], ref[i]});
      hi = std::max({hi, test[i], ref[i]});
    }
  if (!(hi >= lo))
    throw DataError("ssim: empty ROI");
  const double D = hi - lo;
  const double c1 = (0.01 * D) * (0.01 * D), c2 = (0.03 * D) * (0.03 * D);

  // Summed-area tables; ROI table counts masked pixels per window.
  const std::size_t SW = W + 1;
  std::vector<double> sa((H + 1) * SW), sb(sa.size()), saa(sa.size()), sbb(sa.size()),
      sab(sa.size()), sm(sa.size());
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = y * W + x, o = (y + 1) * SW + (x + 1);
      const double a = test[i], b = ref[i];
      auto acc = [&](std::vector<double> &t, double v) {
        t[o] = v + t[o - 1] + t[o - SW] - t[o - SW - 1];
      };
      acc(sa, a);
      acc(sb, b);
      acc(saa, a * a);
      acc(sbb, b * b);
      acc(sab, a * b);
      acc(sm, in_roi(roi, i) ? 1.0 : 0.0);
    }
  auto box = [&](const std::vector<double> &t, std::size_t y, std::size_t x) {
    const std::size_t y1 = y + window, x1 = x + window;
    return t[y1 * SW + x1] - t[y * SW + x1] - t[y1 * SW + x] + t[y * SW + x];
  };

  const double n = static_cast<double>(window * window);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + window <= H; ++y)
    for (std::size_t x = 0; x + window <= W; ++x) {
      if (roi && box(sm, y, x) < n - 0.5)
        continue;
      const double ma = box(sa, y, x) / n, mb = box(sb, y, x) / n;
      const double va = box(saa, y, x) / n - ma * ma;
      const double vb = box(sbb, y, x) / n - mb * mb;
      const double cab = box(sab, y, x) / n - ma * mb;
      const double num = (2 * ma * mb + c1) * (2 * cab + c2);
      const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
      total += den > 0.0 ? num / den : 1.0;
      ++count;
    }
  if (count == 0)
    throw DataError("ssim: no window fits inside the ROI");
  return total / static_cast<double>(count);
}

std::vector<MetricRow> all_metrics(const RArray &test, const RArray &ref, const MaskArray *roi,
                                   const MetricRow &proto) {
  std::vector<MetricRow> rows;
  auto add = [&](const char *name, double v) {
    MetricRow r = proto;
    r.metric = name;
    r.value = v;
    r.roi = roi ? "mask" : "full";
    rows.push_back(std::move(r));
  };
  add("NRMSE", nrmse(test, ref, roi));
  add("NMSE", nmse(test, ref, roi));
  add("PSNR", psnr(test, ref, roi));
  add("SSIM", ssim(test, ref, roi));
  return rows;
}

namespace {

std::string format_value(double v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_value(const std::string &s) {
  if (s == "inf")
    return std::numeric_limits<double>::infinity();
  if (s == "-inf")
    return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size())
    throw DataError("metrics CSV: bad value '" + s + "'");
  return v;
}

constexpr const char *kHeader = "subject,slice,target,metric,R,method,roi,value";

} // namespace

void write_metrics_csv(const std::vector<MetricRow> &rows, const std::filesystem::path &path) {
  std::ofstream os(path);
  if (!os)
    throw DataError("cannot write '" + path.string() + "'");
  os << kHeader << '\n';
  for (const auto &r : rows)
    os << r.subject << ',' << r.slice << ',' << r.target << ',' << r.metric << ','
       << r.acceleration << ',' << r.method << ',' << r.roi << ',' << format_value(r.value) << '\n';
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is)
    throw DataError("cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(is, line) || line != kHeader)
    throw DataError("metrics CSV '" + path.string() + "' has an unexpected header");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty())
      continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      f.push_back(cell);
    if (f.size() != 8)
      throw DataError("metrics CSV: expected 8 fields in '" + line + "'");
    rows.push_back({f[0], f[1], f[2], f[3], f[4], f[5], f[6], parse_value(f[7])});
  }
  return rows;
}

} // namespace drums
