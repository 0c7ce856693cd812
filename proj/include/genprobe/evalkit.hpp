#pragma once

// Metrics with binomial standard errors, training compute accounting,
// Savitzky-Golay smoothing and the four-condition csv report.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "genprobe/revision.hpp"

namespace genprobe::evalkit {

struct EmptyInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct WindowTooLarge : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct WindowNotOdd : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MetricPoint {
  double value = 0.0;
  std::size_t n = 0;
  std::size_t hits = 0;
  double stderr_ = 0.0;
};

// value = hits / n, stderr = sqrt(value (1 - value) / n).
MetricPoint make_metric(std::size_t hits, std::size_t n);

// Cards: at least one verified-correct turn. Navigation: the episode ended
// with the expert's stop accepted.
MetricPoint success_rate(const std::vector<revision::Transcript>& transcripts, EnvKind kind);
// Correct decisions over all decisions, every retry counted.
MetricPoint per_step_accuracy(const std::vector<revision::Transcript>& transcripts);

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;

inline const BigRational kGpLambda{6};
inline const BigRational kNavLambda{BigInt(51), BigInt(10)};

struct FlopsConfig {
  BigInt n_params = 0;
  BigInt d_init = 0;
  BigInt d_sft = 0;
  BigInt d_rl = 0;
  BigRational lambda = kGpLambda;

  void validate() const;
};

// lambda = E * d_in * d_out / D_RL.
BigRational lambda_from_components(const BigInt& calls, const BigRational& mean_in, const BigRational& mean_out,
                                   const BigInt& d_rl);
// "5.1" -> 51/10; also accepts "p/q" and integers.
BigRational parse_decimal(const std::string& text);
std::string format_rational(const BigRational& value);  // integer or "p/q"

BigRational flops_sft(const FlopsConfig& config);  // 6 N (D_init + D_SFT)
BigRational flops_rl(const FlopsConfig& config);   // 6 N (D_init + D_RL) + 2 N lambda D_RL

enum class EdgeMode { Interp, Mirror };

inline constexpr int kDefaultWindow = 9;

// Local least-squares polynomial smoothing. Interp fits one polynomial to the
// first and last windows for the edge points; Mirror reflects the series
// about its end points.
std::vector<double> smooth(const std::vector<double>& series, int window = kDefaultWindow, int order = 3,
                           EdgeMode edges = EdgeMode::Interp);

// Convolution weights of the centered filter.
std::vector<double> savgol_coefficients(int window, int order);

// One point of a training curve.
struct CurvePoint {
  std::string env;      // "gp" or "nav"
  std::string method;   // "SFT" or "RL"
  std::string split;    // "ID" or "OOD"
  int viter = 5;        // verification iterations
  double gflops = 0.0;  // training compute at this point
  std::string metric;   // "success_rate" or "per_step_accuracy"
  std::size_t hits = 0;
  std::size_t n = 0;
};

void write_curve(std::ostream& out, const std::vector<CurvePoint>& points);
std::vector<CurvePoint> read_curve(std::istream& in);

// csv: env,viter,condition,compute_gflops,metric,value,stderr,n,hits,smoothed
void write_report(std::ostream& out, const std::vector<CurvePoint>& points, int window = kDefaultWindow);

// Per env/viter/metric: start and end values of each condition and whether
// the RL and SFT OOD changes point the same way as the headline claim.
std::string summarize(const std::vector<CurvePoint>& points);

}  // namespace genprobe::evalkit
