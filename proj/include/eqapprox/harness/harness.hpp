#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "eqapprox/common/rng.hpp"
#include "eqapprox/sets/target.hpp"

namespace eqapprox {

using CloudFn = std::function<double(const PointCloud&)>;
using CloudSampler = std::function<PointCloud(Rng&)>;
// Returns g X for a randomly drawn group element g.
using GroupSampler = std::function<PointCloud(Rng&, const PointCloud&)>;

struct SupError {
  double sup = 0.0;
  double mean = 0.0;
  std::size_t argmax = 0;
  PointCloud argmax_point;
};

SupError measure_sup_error(const CloudFn& evaluator, const CloudFn& oracle, const std::vector<PointCloud>& samples);
SupError measure_sup_error(const CloudFn& evaluator, const CloudFn& oracle, const CloudSampler& sampler,
                           std::size_t count, std::uint64_t seed);

// max over (X, g) of |evaluator(X) - evaluator(g X)|; one g per sample.
double invariance_deviation(const CloudFn& evaluator, const GroupSampler& group, const CloudSampler& sampler,
                            std::size_t count, std::uint64_t seed);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool clamped = false;  // some error was <= 0 and was replaced by machine epsilon
};
// Least-squares slope of log(error) against log(abscissa).
RateFit fit_rate_slope(const std::vector<std::pair<double, double>>& rows);

using Metric = std::function<double(const Vector&, const Vector&)>;

// Greedy r-net size, visiting points in order.
int estimate_covering(const std::vector<Vector>& points, const Metric& metric, double r);
// Slope of log(net size) against log(1/r).
double covering_slope(const std::vector<Vector>& points, const Metric& metric, const std::vector<double>& radii);

// min over sigma in S_n of |sigma X - Y|_F for flattened d x n clouds.
Metric permutation_quotient_metric(int d, int n);

// Line protocol: one CSV row (point-major flattening) in, one decimal out.
class SubprocessOracle {
 public:
  explicit SubprocessOracle(const std::string& command);
  ~SubprocessOracle();
  SubprocessOracle(const SubprocessOracle&) = delete;
  SubprocessOracle& operator=(const SubprocessOracle&) = delete;

  double operator()(const PointCloud& X);

 private:
  int pid_ = -1;
  std::FILE* to_ = nullptr;
  std::FILE* from_ = nullptr;
};

// Registry ids: max_coord, mean, frobenius_cent, dg_anchor, point_plus_mean
// (equivariant), subprocess (params.command, params.alpha, params.holder_const).
TargetFunction make_target(const std::string& id, int d, int n, const nlohmann::json& params = nlohmann::json::object());
std::vector<std::string> target_ids();

struct ExperimentConfig {
  std::string name = "experiment";
  std::string builder = "deepsets";  // deepsets | nonequivariant | equivariant | transformer
  std::string target = "max_coord";
  nlohmann::json target_params = nlohmann::json::object();
  int d = 1;
  int n = 1;
  std::vector<int> m_sweep;
  std::vector<std::vector<int>> partition;  // empty: one block
  std::size_t samples = 2000;
  std::size_t invariance_trials = 1000;
  std::uint64_t seed = 1;
  double slack = 0.0;
  double bound_abs = 1e-9;
  std::optional<std::pair<double, double>> slope_range;
  std::string output_csv;
  std::string output_json;
};

// Throws ParseError / DomainError on invalid configs.
ExperimentConfig parse_config(const nlohmann::json& doc);

struct ReportRow {
  int m = 0;
  std::int64_t param_count = 0;
  double sup_error = 0.0;
  double mean_error = 0.0;
  double bound = 0.0;  // 2 omega(f, 1/2m)
  double invariance_deviation = 0.0;
  bool pass = false;
};

struct Report {
  std::string name;
  std::vector<ReportRow> rows;
  std::optional<double> slope;
  bool slope_pass = true;
  bool pass = false;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
};

Report run_experiment(const ExperimentConfig& config);
// `with_metadata` adds seed and wall time; without it the document depends
// only on the config.
nlohmann::json report_to_json(const Report& r, bool with_metadata = true);
std::string report_to_csv(const Report& r);
// Writes the configured outputs, if any.
void write_report(const ExperimentConfig& config, const Report& r);

}  // namespace eqapprox
