#include "eqapprox/harness/harness.hpp"

#include <fcntl.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "eqapprox/common/error.hpp"
#include "eqapprox/equivariant/equivariant_builder.hpp"
#include "eqapprox/frames/frames_bilip.hpp"
#include "eqapprox/net/json_io.hpp"
#include "eqapprox/sets/set_builder.hpp"

namespace eqapprox {

SupError measure_sup_error(const CloudFn& evaluator, const CloudFn& oracle, const std::vector<PointCloud>& samples) {
  if (samples.empty()) throw DomainError("no samples to measure on");
  SupError s;
  s.sup = -1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double e = std::fabs(evaluator(samples[i]) - oracle(samples[i]));
    if (std::isnan(e)) throw DomainError("evaluator or oracle returned NaN");
    total += e;
    if (e > s.sup) {
      s.sup = e;
      s.argmax = i;
    }
  }
  s.mean = total / static_cast<double>(samples.size());
  s.argmax_point = samples[s.argmax];
  return s;
}

SupError measure_sup_error(const CloudFn& evaluator, const CloudFn& oracle, const CloudSampler& sampler,
                           std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PointCloud> samples;
  for (std::size_t i = 0; i < count; ++i) samples.push_back(sampler(rng));
  return measure_sup_error(evaluator, oracle, samples);
}

double invariance_deviation(const CloudFn& evaluator, const GroupSampler& group, const CloudSampler& sampler,
                            std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  double dev = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const PointCloud X = sampler(rng);
    const PointCloud gX = group(rng, X);
    dev = std::max(dev, std::fabs(evaluator(X) - evaluator(gX)));
  }
  return dev;
}

RateFit fit_rate_slope(const std::vector<std::pair<double, double>>& rows) {
  if (rows.size() < 3) throw DomainError("slope fit needs at least three rows");
  RateFit fit;
  std::vector<double> xs, ys;
  for (const auto& [a, e] : rows) {
    if (!(a > 0.0)) throw DomainError("abscissa must be positive");
    double err = e;
    if (!(err > 0.0)) {
      err = std::numeric_limits<double>::epsilon();
      fit.clamped = true;
    }
    xs.push_back(std::log(a));
    ys.push_back(std::log(err));
  }
  const double k = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / k;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / k;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (!(sxx > 0.0)) throw DomainError("abscissae must not all be equal");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

int estimate_covering(const std::vector<Vector>& points, const Metric& metric, double r) {
  if (!(r > 0.0)) throw DomainError("radius must be positive");
  std::vector<const Vector*> centers;
  for (const Vector& p : points) {
    bool covered = false;
    for (const Vector* c : centers)
      if (metric(p, *c) <= r) {
        covered = true;
        break;
      }
    if (!covered) centers.push_back(&p);
  }
  return static_cast<int>(centers.size());
}

double covering_slope(const std::vector<Vector>& points, const Metric& metric, const std::vector<double>& radii) {
  std::vector<std::pair<double, double>> rows;
  for (double r : radii) rows.emplace_back(1.0 / r, static_cast<double>(estimate_covering(points, metric, r)));
  return fit_rate_slope(rows).slope;
}

Metric permutation_quotient_metric(int d, int n) {
  if (d < 1 || n < 1 || n > 8) throw DomainError("permutation metric supports d >= 1, 1 <= n <= 8");
  std::vector<std::vector<int>> perms;
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  do perms.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return [d, n, perms](const Vector& x, const Vector& y) {
    if (x.size() != d * n || y.size() != d * n) throw DimensionError("cloud length differs from d*n");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : perms) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int r = 0; r < d; ++r) {
          const double t = x[s[static_cast<std::size_t>(i)] * d + r] - y[i * d + r];
          acc += t * t;
        }
      best = std::min(best, acc);
    }
    return std::sqrt(best);
  };
}

SubprocessOracle::SubprocessOracle(const std::string& command) {
  int in_pipe[2], out_pipe[2];
  // Close-on-exec so later oracles do not inherit these ends and hold them open.
  if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0)
    throw Error("cannot create pipes for the oracle");
  pid_ = fork();
  if (pid_ < 0) throw Error("cannot fork the oracle process");
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_ = fdopen(in_pipe[1], "w");
  from_ = fdopen(out_pipe[0], "r");
  if (!to_ || !from_) throw Error("cannot open oracle pipes");
}

SubprocessOracle::~SubprocessOracle() {
  if (to_) std::fclose(to_);
  if (from_) std::fclose(from_);
  if (pid_ > 0) waitpid(pid_, nullptr, 0);
}

double SubprocessOracle::operator()(const PointCloud& X) {
  const Vector v = flatten(X);
  std::ostringstream row;
  row.precision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) row << (i ? "," : "") << v[i];
  row << "\n";
  const std::string s = row.str();
  if (std::fwrite(s.data(), 1, s.size(), to_) != s.size() || std::fflush(to_) != 0)
    throw Error("oracle process closed its input");
  char buf[256];
  if (!std::fgets(buf, sizeof buf, from_)) throw Error("oracle process returned no value");
  char* end = nullptr;
  const double y = std::strtod(buf, &end);
  if (end == buf) throw ParseError(std::string("oracle returned a non-number: ") + buf);
  return y;
}

std::vector<std::string> target_ids() {
  return {"max_coord", "mean", "frobenius_cent", "dg_anchor", "point_plus_mean", "subprocess"};
}

TargetFunction make_target(const std::string& id, int d, int n, const nlohmann::json& params) {
  if (d < 1 || n < 1) throw DomainError("target needs d, n >= 1");
  TargetFunction f;
  f.name = id;
  if (id == "max_coord") {
    f.eval = [](const PointCloud& X) { return X.maxCoeff(); };
    f.symmetry = Symmetry::sp_invariant;
  } else if (id == "mean") {
    f.eval = [](const PointCloud& X) { return X.mean(); };
    f.symmetry = Symmetry::sp_invariant;
  } else if (id == "frobenius_cent") {
    f.eval = [](const PointCloud& X) { return centralize(X).norm(); };
    f.norm = Norm::l2;
    f.symmetry = Symmetry::e_invariant;
  } else if (id == "dg_anchor") {
    // Quotient distance to an anchor cloud under {I, -I} on R^{dn}.
    PointCloud A = PointCloud::Constant(d, n, 0.25);
    if (params.contains("anchor")) A = unflatten(vector_from_json(params.at("anchor")), d);
    if (A.rows() != d || A.cols() != n) throw DimensionError("anchor must have d*n entries");
    f.eval = [A](const PointCloud& X) { return std::min((X - A).norm(), (X + A).norm()); };
    f.norm = Norm::l2;
    f.symmetry = Symmetry::none;
  } else if (id == "point_plus_mean") {
    f.eval_vector = [](const PointCloud& X) {
      const double mean = X.row(0).mean();
      Vector out(X.cols());
      for (Eigen::Index i = 0; i < X.cols(); ++i) out[i] = X(0, i) + mean;
      return out;
    };
    f.eval = [g = f.eval_vector](const PointCloud& X) { return g(X)[0]; };
    f.holder_const = 2.0;
    f.symmetry = Symmetry::equivariant;
  } else if (id == "subprocess") {
    if (!params.contains("command")) throw ParseError("subprocess target needs params.command");
    auto oracle = std::make_shared<SubprocessOracle>(params.at("command").get<std::string>());
    f.eval = [oracle](const PointCloud& X) { return (*oracle)(X); };
    f.alpha = params.value("alpha", 1.0);
    f.holder_const = params.value("holder_const", 1.0);
    f.norm = params.value("norm", std::string("linf")) == "l2" ? Norm::l2 : Norm::linf;
    f.symmetry = parse_symmetry(params.value("symmetry", std::string("sp_invariant")));
  } else {
    throw ParseError("unknown target '" + id + "'");
  }
  return f;
}

ExperimentConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("config must be a JSON object");
  ExperimentConfig c;
  try {
    c.name = doc.value("name", c.name);
    c.builder = doc.value("builder", c.builder);
    c.target = doc.value("target", c.target);
    if (doc.contains("target_params")) c.target_params = doc.at("target_params");
    c.d = doc.at("d").get<int>();
    c.n = doc.at("n").get<int>();
    c.m_sweep = doc.at("m_sweep").get<std::vector<int>>();
    if (doc.contains("partition")) c.partition = doc.at("partition").get<std::vector<std::vector<int>>>();
    c.samples = doc.value("samples", c.samples);
    c.invariance_trials = doc.value("invariance_trials", c.invariance_trials);
    c.seed = doc.value("seed", c.seed);
    c.slack = doc.value("slack", c.slack);
    c.bound_abs = doc.value("bound_abs", c.bound_abs);
    if (doc.contains("slope_range")) {
      const auto r = doc.at("slope_range").get<std::vector<double>>();
      if (r.size() != 2 || !(r[0] <= r[1])) throw ParseError("slope_range must be [lo, hi]");
      c.slope_range = std::make_pair(r[0], r[1]);
    }
    if (doc.contains("output")) {
      c.output_csv = doc.at("output").value("csv", std::string());
      c.output_json = doc.at("output").value("json", std::string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid config: ") + e.what());
  }
  const std::vector<std::string> builders = {"deepsets", "nonequivariant", "equivariant", "transformer"};
  if (std::find(builders.begin(), builders.end(), c.builder) == builders.end())
    throw ParseError("unknown builder '" + c.builder + "'");
  if (c.d < 1 || c.n < 1) throw DomainError("d and n must be positive");
  if (c.m_sweep.empty()) throw DomainError("m sweep is empty");
  for (std::size_t i = 0; i < c.m_sweep.size(); ++i) {
    if (c.m_sweep[i] < 1) throw DomainError("m values must be >= 1");
    if (i > 0 && c.m_sweep[i] <= c.m_sweep[i - 1]) throw DomainError("m values must be strictly increasing");
  }
  if (c.samples < 100) throw DomainError("sample count must be >= 100");
  if (!(c.slack >= 0.0)) throw DomainError("slack must be non-negative");
  return c;
}

namespace {

Partition config_partition(const ExperimentConfig& c) {
  if (c.builder == "nonequivariant") return Partition::singletons(c.n);
  if (c.partition.empty()) return Partition::full(c.n);
  return Partition(c.n, c.partition);
}

}  // namespace

Report run_experiment(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const TargetFunction f = make_target(config.target, config.d, config.n, config.target_params);
  const bool vector_out = config.builder == "equivariant" || config.builder == "transformer";
  if (vector_out && !f.eval_vector) throw DomainError("equivariant builders need a vector-valued target");
  const int d = config.d, n = config.n;
  Rng rng(config.seed);
  std::vector<PointCloud> samples;
  for (std::size_t i = 0; i < config.samples; ++i) samples.push_back(rng.uniform_cloud(d, n));
  const Partition P = config_partition(config);

  Report report;
  report.name = config.name;
  report.seed = config.seed;
  for (int m : config.m_sweep) {
    ReportRow row;
    row.m = m;
    row.bound = 2.0 * f.omega_linf(1.0 / (2.0 * m), n * d);
    Rng grng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    if (!vector_out) {
      const BuiltDeepSets b = build_deepsets(f, d, n, m, P, samples);
      row.param_count = param_count(b.phi) + param_count(b.rho);
      const SupError e = measure_sup_error([&](const PointCloud& X) { return deepsets_eval(b, X); }, f.eval, samples);
      row.sup_error = e.sup;
      row.mean_error = e.mean;
      double dev = 0.0;
      for (std::size_t t = 0; t < config.invariance_trials; ++t) {
        const PointCloud& X = samples[t % samples.size()];
        const PointCloud Y = permute_points(X, P.random_element(grng));
        dev = std::max(dev, std::fabs(deepsets_eval(b, X) - deepsets_eval(b, Y)));
      }
      row.invariance_deviation = dev;
    } else {
      const EquivariantBuild b = build_equivariant(f, d, n, m, samples);
      std::function<Vector(const PointCloud&)> eval;
      std::optional<TransformerNetwork> T;
      if (config.builder == "transformer") {
        T = build_transformer(b);
        eval = [&T](const PointCloud& X) { return transformer_apply(*T, X); };
        row.param_count = param_count(b.phi()) + param_count(b.rho());
      } else {
        eval = [&b](const PointCloud& X) { return equivariant_eval(b, X); };
        row.param_count = param_count(b.phi()) + param_count(b.rho());
      }
      double sup = 0.0, total = 0.0;
      for (const PointCloud& X : samples) {
        const double e = (eval(X) - f.eval_vector(X)).cwiseAbs().maxCoeff();
        sup = std::max(sup, e);
        total += e;
      }
      row.sup_error = sup;
      row.mean_error = total / static_cast<double>(samples.size());
      double dev = 0.0;
      for (std::size_t t = 0; t < config.invariance_trials; ++t) {
        const PointCloud& X = samples[t % samples.size()];
        const std::vector<int> sigma = grng.permutation(n);
        const Vector a = eval(X);
        const Vector c = eval(permute_points(X, sigma));
        for (int i = 0; i < n; ++i)
          dev = std::max(dev, std::fabs(c[i] - a[sigma[static_cast<std::size_t>(i)]]));
      }
      row.invariance_deviation = dev;
    }
    row.pass = row.sup_error <= row.bound * (1.0 + config.slack) + config.bound_abs;
    report.rows.push_back(row);
  }
  if (report.rows.size() >= 3) {
    std::vector<std::pair<double, double>> pts;
    for (const ReportRow& r : report.rows) pts.emplace_back(r.m, r.sup_error);
    report.slope = fit_rate_slope(pts).slope;
    if (config.slope_range)
      report.slope_pass = *report.slope >= config.slope_range->first && *report.slope <= config.slope_range->second;
  } else if (config.slope_range) {
    report.slope_pass = false;
  }
  report.pass = report.slope_pass;
  for (const ReportRow& r : report.rows) report.pass = report.pass && r.pass;
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

nlohmann::json report_to_json(const Report& r, bool with_metadata) {
  nlohmann::json doc;
  doc["name"] = r.name;
  doc["rows"] = nlohmann::json::array();
  for (const ReportRow& row : r.rows)
    doc["rows"].push_back({{"m", row.m},
                           {"param_count", row.param_count},
                           {"measured_sup_error", row.sup_error},
                           {"mean_error", row.mean_error},
                           {"theoretical_bound", row.bound},
                           {"invariance_deviation", row.invariance_deviation},
                           {"pass", row.pass}});
  doc["slope"] = r.slope ? nlohmann::json(*r.slope) : nlohmann::json(nullptr);
  doc["slope_pass"] = r.slope_pass;
  doc["pass"] = r.pass;
  if (with_metadata) doc["metadata"] = {{"seed", r.seed}, {"wall_time_s", r.wall_time}};
  return doc;
}

std::string report_to_csv(const Report& r) {
  std::ostringstream out;
  out.precision(17);
  out << "m,param_count,measured_sup_error,mean_error,theoretical_bound,invariance_deviation,pass\n";
  for (const ReportRow& row : r.rows)
    out << row.m << ',' << row.param_count << ',' << row.sup_error << ',' << row.mean_error << ',' << row.bound << ','
        << row.invariance_deviation << ',' << (row.pass ? 1 : 0) << '\n';
  return out.str();
}

void write_report(const ExperimentConfig& config, const Report& r) {
  if (!config.output_csv.empty()) write_text_file(config.output_csv, report_to_csv(r));
  if (!config.output_json.empty()) write_text_file(config.output_json, report_to_json(r).dump(2) + "\n");
}

}  // namespace eqapprox
