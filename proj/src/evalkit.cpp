#include "genprobe/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include <Eigen/Dense>

namespace genprobe::evalkit {

MetricPoint make_metric(std::size_t hits, std::size_t n) {
  if (n == 0) throw EmptyInput("metric over zero samples");
  if (hits > n) throw std::invalid_argument("metric: hits exceed samples");
  MetricPoint m;
  m.n = n;
  m.hits = hits;
  m.value = static_cast<double>(hits) / static_cast<double>(n);
  m.stderr_ = std::sqrt(m.value * (1.0 - m.value) / static_cast<double>(n));
  return m;
}

MetricPoint success_rate(const std::vector<revision::Transcript>& transcripts, EnvKind kind) {
  if (transcripts.empty()) throw EmptyInput("success_rate: no transcripts");
  std::size_t hits = 0;
  for (const auto& t : transcripts) {
    const bool ok = kind == EnvKind::GeneralPoints ? t.any_correct() : t.status == EpisodeStatus::Success;
    if (ok) ++hits;
  }
  return make_metric(hits, transcripts.size());
}

MetricPoint per_step_accuracy(const std::vector<revision::Transcript>& transcripts) {
  std::size_t hits = 0;
  std::size_t n = 0;
  for (const auto& t : transcripts) {
    for (const auto& turn : t.turns) {
      ++n;
      if (turn.correct) ++hits;
    }
  }
  if (n == 0) throw EmptyInput("per_step_accuracy: no decisions");
  return make_metric(hits, n);
}

void FlopsConfig::validate() const {
  if (n_params < 0 || d_init < 0 || d_sft < 0 || d_rl < 0 || lambda < 0) {
    throw std::invalid_argument("flops: all fields must be non-negative");
  }
}

BigRational lambda_from_components(const BigInt& calls, const BigRational& mean_in, const BigRational& mean_out,
                                   const BigInt& d_rl) {
  if (d_rl <= 0) throw std::invalid_argument("lambda: D_RL must be positive");
  return BigRational(calls) * mean_in * mean_out / BigRational(d_rl);
}

BigRational parse_decimal(const std::string& text) {
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    return BigRational(BigInt(text.substr(0, slash)), BigInt(text.substr(slash + 1)));
  }
  const auto dot = text.find('.');
  if (dot == std::string::npos) return BigRational(BigInt(text));
  const std::string whole = text.substr(0, dot);
  const std::string frac = text.substr(dot + 1);
  if (frac.find_first_not_of("0123456789") != std::string::npos || frac.empty()) {
    throw std::invalid_argument("not a decimal: " + text);
  }
  BigInt scale = 1;
  for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
  const bool negative = !whole.empty() && whole[0] == '-';
  const BigInt w = whole.empty() || whole == "-" ? BigInt(0) : BigInt(whole);
  BigInt f(frac);
  if (negative) f = -f;
  return BigRational(w * scale + f, scale);
}

std::string format_rational(const BigRational& value) {
  const BigInt num = boost::multiprecision::numerator(value);
  const BigInt den = boost::multiprecision::denominator(value);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

BigRational flops_sft(const FlopsConfig& c) {
  c.validate();
  return BigRational(6 * c.n_params * (c.d_init + c.d_sft));
}

BigRational flops_rl(const FlopsConfig& c) {
  c.validate();
  const BigRational buffer = c.lambda * BigRational(c.d_rl);
  return BigRational(6 * c.n_params * (c.d_init + c.d_rl)) + 2 * BigRational(c.n_params) * buffer;
}

namespace {

// Least-squares fit over a window, in coordinates centered on the window:
// row j gives the weights producing the fitted value at offset at[j].
Eigen::MatrixXd fit_weights(int window, int order, const std::vector<int>& at) {
  const int half = window / 2;
  Eigen::MatrixXd A(window, order + 1);
  for (int i = 0; i < window; ++i) {
    double p = 1.0;
    for (int k = 0; k <= order; ++k) {
      A(i, k) = p;
      p *= i - half;
    }
  }
  const Eigen::MatrixXd pinv = A.completeOrthogonalDecomposition().pseudoInverse();
  Eigen::MatrixXd E(static_cast<Eigen::Index>(at.size()), order + 1);
  for (std::size_t j = 0; j < at.size(); ++j) {
    double p = 1.0;
    for (int k = 0; k <= order; ++k) {
      E(static_cast<Eigen::Index>(j), k) = p;
      p *= at[j];
    }
  }
  return E * pinv;
}

void check_window(std::size_t length, int window, int order) {
  if (order < 0) throw std::invalid_argument("smooth: order must be >= 0");
  if (window % 2 == 0 || window < 1) throw WindowNotOdd("smooth: window " + std::to_string(window) + " is not odd");
  if (window <= order) throw std::invalid_argument("smooth: window must exceed the polynomial order");
  if (static_cast<std::size_t>(window) > length) {
    throw WindowTooLarge("smooth: window " + std::to_string(window) + " exceeds series length " +
                         std::to_string(length));
  }
}

}  // namespace

std::vector<double> savgol_coefficients(int window, int order) {
  check_window(static_cast<std::size_t>(window), window, order);
  const Eigen::MatrixXd w = fit_weights(window, order, {0});
  return std::vector<double>(w.data(), w.data() + w.size());
}

std::vector<double> smooth(const std::vector<double>& series, int window, int order, EdgeMode edges) {
  check_window(series.size(), window, order);
  const int n = static_cast<int>(series.size());
  const int half = window / 2;
  const auto coeffs = savgol_coefficients(window, order);
  std::vector<double> out(series.size());
  auto at = [&](int i) {
    if (edges == EdgeMode::Mirror) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * (n - 1) - i;
    }
    return series[static_cast<std::size_t>(i)];
  };
  const int from = edges == EdgeMode::Interp ? half : 0;
  const int to = edges == EdgeMode::Interp ? n - half : n;
  for (int i = from; i < to; ++i) {
    double acc = 0.0;
    for (int k = -half; k <= half; ++k) acc += coeffs[static_cast<std::size_t>(k + half)] * at(i + k);
    out[static_cast<std::size_t>(i)] = acc;
  }
  if (edges == EdgeMode::Interp) {
    std::vector<int> head;
    std::vector<int> tail;
    for (int i = 0; i < half; ++i) {
      head.push_back(i - half);
      tail.push_back(i + 1);
    }
    const Eigen::MatrixXd hw = fit_weights(window, order, head);
    const Eigen::MatrixXd tw = fit_weights(window, order, tail);
    for (int j = 0; j < half; ++j) {
      double a = 0.0;
      double b = 0.0;
      for (int k = 0; k < window; ++k) {
        a += hw(j, k) * series[static_cast<std::size_t>(k)];
        b += tw(j, k) * series[static_cast<std::size_t>(n - window + k)];
      }
      out[static_cast<std::size_t>(j)] = a;
      out[static_cast<std::size_t>(n - half + j)] = b;
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

const char* kCurveHeader = "env,method,split,viter,gflops,metric,hits,n";

std::string condition(const CurvePoint& p) { return p.method + "-" + p.split; }

using SeriesKey = std::tuple<std::string, int, std::string, std::string>;  // env, viter, condition, metric

std::map<SeriesKey, std::vector<CurvePoint>> group(const std::vector<CurvePoint>& points) {
  std::map<SeriesKey, std::vector<CurvePoint>> series;
  for (const auto& p : points) series[{p.env, p.viter, condition(p), p.metric}].push_back(p);
  for (auto& [_, s] : series) {
    std::stable_sort(s.begin(), s.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.gflops < b.gflops; });
  }
  return series;
}

}  // namespace

void write_curve(std::ostream& out, const std::vector<CurvePoint>& points) {
  out << kCurveHeader << "\n";
  out << std::setprecision(17);
  for (const auto& p : points) {
    out << p.env << "," << p.method << "," << p.split << "," << p.viter << "," << p.gflops << "," << p.metric << ","
        << p.hits << "," << p.n << "\n";
  }
}

std::vector<CurvePoint> read_curve(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) throw std::runtime_error("curve: missing header");
  std::vector<CurvePoint> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 8) throw std::runtime_error("curve line " + std::to_string(lineno) + ": expected 8 columns");
    try {
      CurvePoint p;
      p.env = cells[0];
      p.method = cells[1];
      p.split = cells[2];
      p.viter = std::stoi(cells[3]);
      p.gflops = std::stod(cells[4]);
      p.metric = cells[5];
      p.hits = std::stoull(cells[6]);
      p.n = std::stoull(cells[7]);
      if (p.hits > p.n || p.n == 0) throw std::runtime_error("inconsistent counts");
      out.push_back(p);
    } catch (const std::exception& e) {
      throw std::runtime_error("curve line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_report(std::ostream& out, const std::vector<CurvePoint>& points, int window) {
  out << "env,viter,condition,compute_gflops,metric,value,stderr,n,hits,smoothed\n";
  out << std::setprecision(10);
  for (const auto& [key, s] : group(points)) {
    std::vector<double> values;
    for (const auto& p : s) values.push_back(make_metric(p.hits, p.n).value);
    // Short series are smoothed with the largest odd window that fits.
    int w = std::min<int>(window, static_cast<int>(values.size()));
    if (w % 2 == 0) --w;
    const std::vector<double> smoothed = w > 3 ? smooth(values, w, 3) : values;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto m = make_metric(s[i].hits, s[i].n);
      out << std::get<0>(key) << "," << std::get<1>(key) << "," << std::get<2>(key) << "," << s[i].gflops << ","
          << std::get<3>(key) << "," << m.value << "," << m.stderr_ << "," << m.n << "," << m.hits << ","
          << smoothed[i] << "\n";
    }
  }
}

std::string summarize(const std::vector<CurvePoint>& points) {
  const auto series = group(points);
  std::map<std::tuple<std::string, int, std::string>, std::map<std::string, std::pair<double, double>>> by_run;
  for (const auto& [key, s] : series) {
    const double first = make_metric(s.front().hits, s.front().n).value;
    const double last = make_metric(s.back().hits, s.back().n).value;
    by_run[{std::get<0>(key), std::get<1>(key), std::get<3>(key)}][std::get<2>(key)] = {first, last};
  }
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (const auto& [run, conds] : by_run) {
    os << std::get<0>(run) << " viter=" << std::get<1>(run) << " " << std::get<2>(run) << ":";
    for (const auto& [cond, fl] : conds) os << " " << cond << " " << fl.first << "->" << fl.second;
    const auto rl = conds.find("RL-OOD");
    const auto sft = conds.find("SFT-OOD");
    if (rl != conds.end() && sft != conds.end()) {
      const double drl = rl->second.second - rl->second.first;
      const double dsft = sft->second.second - sft->second.first;
      os << " | observed OOD change RL " << (drl >= 0 ? "+" : "") << drl << " vs SFT " << (dsft >= 0 ? "+" : "")
         << dsft << (drl > dsft ? " (RL generalizes better)" : " (RL does not generalize better)");
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace genprobe::evalkit
