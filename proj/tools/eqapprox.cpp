// Command-line front end: builders, evaluation, gadget tests, frames,
// embeddings, measurements and experiment configs.
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "eqapprox/common/error.hpp"
#include "eqapprox/equivariant/equivariant_builder.hpp"
#include "eqapprox/frames/frames_bilip.hpp"
#include "eqapprox/gadgets/gadgets.hpp"
#include "eqapprox/harness/harness.hpp"
#include "eqapprox/net/json_io.hpp"
#include "eqapprox/rigid/rigid_builder.hpp"
#include "eqapprox/sets/set_builder.hpp"

using namespace eqapprox;
using nlohmann::json;

namespace {

std::vector<std::vector<double>> read_csv_rows(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty()) continue;  // header line
      throw ParseError("non-numeric CSV row in " + path + ": " + line);
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("ragged CSV rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no rows in " + path);
  return rows;
}

// One point per row.
PointCloud read_cloud(const std::string& path) {
  const auto rows = read_csv_rows(path);
  PointCloud X(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t r = 0; r < rows[i].size(); ++r) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = rows[i][r];
  return X;
}

std::vector<Vector> read_vectors(const std::string& path) {
  std::vector<Vector> out;
  for (const auto& row : read_csv_rows(path)) out.push_back(Eigen::Map<const Vector>(row.data(), static_cast<Eigen::Index>(row.size())));
  return out;
}

void print_vector(const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) std::printf("%s%.17g", i ? "," : "", v[i]);
  std::printf("\n");
}

// Evaluates any stored build on a cloud; vector outputs for equivariant kinds.
struct LoadedModel {
  json doc;
  std::function<Vector(const PointCloud&)> eval;
};

LoadedModel load_model(const std::string& path) {
  LoadedModel m;
  m.doc = json::parse(read_text_file(path));
  const std::string kind = m.doc.value("kind", std::string("network"));
  if (kind == "deepsets") {
    auto b = std::make_shared<BuiltDeepSets>(deepsets_from_json(m.doc));
    m.eval = [b](const PointCloud& X) { return Vector::Constant(1, deepsets_eval(*b, X)); };
  } else if (kind == "equivariant") {
    auto b = std::make_shared<EquivariantBuild>(equivariant_from_json(m.doc));
    m.eval = [b](const PointCloud& X) { return equivariant_eval(*b, X); };
  } else if (kind == "transformer") {
    auto T = std::make_shared<TransformerNetwork>(transformer_from_json(m.doc));
    m.eval = [T](const PointCloud& X) { return transformer_apply(*T, X); };
  } else if (kind == "rigid") {
    auto b = std::make_shared<RigidBuild>(rigid_from_json(m.doc));
    m.eval = [b](const PointCloud& X) { return Vector::Constant(1, b->eval(X)); };
  } else {
    auto net = std::make_shared<ReluNetwork>(network_from_json(m.doc));
    m.eval = [net](const PointCloud& X) { return net->evaluate(flatten(X)); };
  }
  return m;
}

std::vector<std::vector<int>> parse_partition(const std::string& s, int n) {
  if (s.empty()) return {};
  std::vector<std::vector<int>> blocks;
  std::stringstream bs(s);
  std::string block;
  while (std::getline(bs, block, '|')) {
    std::vector<int> b;
    std::stringstream is(block);
    std::string idx;
    while (std::getline(is, idx, ',')) b.push_back(std::stoi(idx));
    blocks.push_back(b);
  }
  Partition(n, blocks);  // validates
  return blocks;
}

std::vector<PointCloud> uniform_samples(int d, int n, std::size_t count, std::uint64_t seed, bool ball = false,
                                        double radius = 1.0) {
  Rng rng(seed);
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(ball ? rng.ball_cloud(d, n, radius) : rng.uniform_cloud(d, n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explicit ReLU constructions for symmetric point-cloud functions"};
  app.require_subcommand(1);

  // build
  auto* build = app.add_subcommand("build", "Construct a network and write it as JSON");
  build->require_subcommand(1);
  std::string target = "max_coord", out_path, partition_spec, target_params = "{}";
  int d = 1, n = 3, m = 4;
  std::size_t samples = 2000;
  std::uint64_t seed = 1;
  bool exhaustive = false;
  for (const char* name : {"deepsets", "equivariant", "transformer"}) {
    auto* sc = build->add_subcommand(name, std::string("Build a ") + name + " network");
    sc->add_option("--target", target, "Target id")->capture_default_str();
    sc->add_option("--target-params", target_params, "Target parameters as JSON");
    sc->add_option("--d", d)->capture_default_str();
    sc->add_option("--n", n)->capture_default_str();
    sc->add_option("--m", m)->capture_default_str();
    sc->add_option("--samples", samples)->capture_default_str();
    sc->add_option("--seed", seed)->capture_default_str();
    sc->add_option("--partition", partition_spec, "Blocks like 0,1|2,3 (deepsets only)");
    sc->add_flag("--exhaustive", exhaustive, "Enumerate all signatures instead of sampling");
    sc->add_option("--out", out_path)->required();
  }
  std::string group = "o";
  double eps = 0.25;
  auto* rigid = build->add_subcommand("rigid", "Build an O(d)- or E(d)-invariant network");
  rigid->add_option("--group", group, "o or e")->check(CLI::IsMember({"o", "e"}))->capture_default_str();
  rigid->add_option("--target", target)->capture_default_str();
  rigid->add_option("--target-params", target_params);
  rigid->add_option("--d", d)->capture_default_str();
  rigid->add_option("--n", n)->capture_default_str();
  rigid->add_option("--eps", eps)->capture_default_str();
  rigid->add_option("--samples", samples)->capture_default_str();
  rigid->add_option("--seed", seed)->capture_default_str();
  rigid->add_option("--out", out_path)->required();

  // net eval
  auto* net = app.add_subcommand("net", "Network utilities");
  net->require_subcommand(1);
  auto* net_eval = net->add_subcommand("eval", "Evaluate a stored build on a cloud (one point per CSV row)");
  std::string net_path, input_path;
  net_eval->add_option("--net", net_path)->required();
  net_eval->add_option("--input", input_path)->required();

  // gadget test
  auto* gadget = app.add_subcommand("gadget", "Gadget utilities");
  gadget->require_subcommand(1);
  auto* gadget_test = gadget->add_subcommand("test", "Build a gadget and measure it against the exact function");
  std::string gadget_kind = "product";
  std::vector<std::string> gadget_params;
  int grid = 101;
  gadget_test->add_option("--kind", gadget_kind)->capture_default_str();
  gadget_test->add_option("--param", gadget_params, "name=value, repeatable");
  gadget_test->add_option("--grid", grid)->capture_default_str();

  // frame avg
  auto* frame = app.add_subcommand("frame", "Frame averaging");
  frame->require_subcommand(1);
  auto* frame_avg = frame->add_subcommand("avg", "Frame-average a stored invariant-inner network");
  std::string frame_kind = "svd";
  double gap_tol = 1e-6, tau_w = 0.05, inner_shift = 0.5, inner_scale = 0.5;
  frame_avg->add_option("--frame", frame_kind)->check(CLI::IsMember({"svd", "angle2d"}))->capture_default_str();
  frame_avg->add_option("--inner", net_path)->required();
  frame_avg->add_option("--input", input_path)->required();
  frame_avg->add_option("--gap", gap_tol)->capture_default_str();
  frame_avg->add_option("--tau", tau_w)->capture_default_str();
  frame_avg->add_option("--inner-scale", inner_scale, "Inner sees clamp(scale*Y + shift, 0, 1)")->capture_default_str();
  frame_avg->add_option("--inner-shift", inner_shift)->capture_default_str();

  // bilip embed
  auto* bilip = app.add_subcommand("bilip", "Max-filter embeddings");
  bilip->require_subcommand(1);
  auto* bilip_embed = bilip->add_subcommand("embed", "Max-filter each input row");
  std::string group_path, templates_path;
  bilip_embed->add_option("--group", group_path)->required();
  bilip_embed->add_option("--templates", templates_path)->required();
  bilip_embed->add_option("--input", input_path)->required();

  // measure
  auto* measure = app.add_subcommand("measure", "Sup error of a stored build against a target");
  measure->add_option("--net", net_path)->required();
  measure->add_option("--target", target)->capture_default_str();
  measure->add_option("--target-params", target_params);
  measure->add_option("--d", d)->capture_default_str();
  measure->add_option("--n", n)->capture_default_str();
  measure->add_option("--samples", samples)->capture_default_str();
  measure->add_option("--seed", seed)->capture_default_str();
  std::string domain = "cube";
  measure->add_option("--domain", domain, "cube, ball or half-ball")
      ->check(CLI::IsMember({"cube", "ball", "half-ball"}))
      ->capture_default_str();

  // rates
  auto* rates = app.add_subcommand("rates", "Fit the log-log slope of (m, error) rows");
  rates->add_option("--input", input_path, "CSV with columns m,error")->required();

  // cover
  auto* cover = app.add_subcommand("cover", "Greedy covering numbers");
  std::vector<double> radii = {0.2, 0.1, 0.05, 0.025};
  std::string metric = "euclidean";
  cover->add_option("--input", input_path, "One point per CSV row")->required();
  cover->add_option("--radii", radii)->delimiter(',')->capture_default_str();
  cover->add_option("--metric", metric, "euclidean or perm")->check(CLI::IsMember({"euclidean", "perm"}));
  cover->add_option("--d", d, "Point dimension for the perm metric")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string config_path;
  run->add_option("config", config_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      const json tparams = json::parse(target_params);
      const TargetFunction f = make_target(target, d, n, tparams);
      json doc;
      if (rigid->parsed()) {
        const bool e = group == "e";
        const auto S = uniform_samples(d, n, samples, seed, true, e ? 0.5 : 1.0);
        const RigidBuild b = e ? build_e_invariant(f, d, n, eps, S) : build_o_invariant(f, d, n, eps, S);
        doc = rigid_to_json(b);
        std::fprintf(stderr, "rigid build: delta=%.6g units=%zu depth=%d\n", b.delta, unit_count(b.net), b.net.depth());
      } else {
        const auto S = uniform_samples(d, n, samples, seed);
        DeepSetsOptions o;
        o.exhaustive = exhaustive;
        if (build->got_subcommand("deepsets")) {
          const auto blocks = parse_partition(partition_spec, n);
          const Partition P = blocks.empty() ? Partition::full(n) : Partition(n, blocks);
          doc = deepsets_to_json(build_deepsets(f, d, n, m, P, S, o));
        } else {
          const EquivariantBuild b = build_equivariant(f, d, n, m, S, o);
          doc = build->got_subcommand("transformer") ? transformer_to_json(build_transformer(b)) : equivariant_to_json(b);
        }
      }
      write_text_file(out_path, doc.dump() + "\n");
      return 0;
    }
    if (net_eval->parsed()) {
      const LoadedModel model = load_model(net_path);
      print_vector(model.eval(read_cloud(input_path)));
      return 0;
    }
    if (gadget_test->parsed()) {
      GadgetSpec spec;
      spec.kind = parse_gadget_kind(gadget_kind);
      for (const std::string& p : gadget_params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) throw ParseError("gadget parameter must be name=value: " + p);
        spec.params[p.substr(0, eq)] = std::stod(p.substr(eq + 1));
      }
      const GadgetReport r = test_gadget(spec, grid);
      const json out = {{"kind", r.kind},   {"sup_error", r.sup_error}, {"bound", r.bound}, {"constant", r.constant},
                        {"points", r.points}, {"params", r.params},     {"depth", r.depth}};
      std::printf("%s\n", out.dump(2).c_str());
      return r.sup_error <= r.bound ? 0 : 1;
    }
    if (frame_avg->parsed()) {
      const LoadedModel model = load_model(net_path);
      const PointCloud X = read_cloud(input_path);
      const auto fr = frame_kind == "svd" ? svd_frame(X, gap_tol) : angle_frame_2d(X, tau_w);
      const auto inner = [&](const PointCloud& Y) {
        const PointCloud Z = (inner_scale * Y.array() + inner_shift).cwiseMax(0.0).cwiseMin(1.0).matrix();
        return model.eval(Z)[0];
      };
      std::printf("%.17g\n", frame_average(fr, inner, X));
      return 0;
    }
    if (bilip_embed->parsed()) {
      const FiniteGroupAction G = group_from_json(json::parse(read_text_file(group_path)));
      const TemplateSet Z = templates_from_json(json::parse(read_text_file(templates_path)));
      for (const Vector& x : read_vectors(input_path)) print_vector(max_filter(x, Z, G));
      return 0;
    }
    if (measure->parsed()) {
      const LoadedModel model = load_model(net_path);
      const TargetFunction f = make_target(target, d, n, json::parse(target_params));
      const bool ball = domain != "cube";
      const auto S = uniform_samples(d, n, samples, seed, ball, domain == "half-ball" ? 0.5 : 1.0);
      const SupError e = measure_sup_error([&](const PointCloud& X) { return model.eval(X)[0]; }, f.eval, S);
      std::printf("%s\n", json({{"sup", e.sup}, {"mean", e.mean}, {"argmax", e.argmax}}).dump(2).c_str());
      return 0;
    }
    if (rates->parsed()) {
      std::vector<std::pair<double, double>> rows;
      for (const auto& r : read_csv_rows(input_path)) {
        if (r.size() < 2) throw ParseError("rates input needs two columns");
        rows.emplace_back(r[0], r[1]);
      }
      const RateFit fit = fit_rate_slope(rows);
      std::printf("%s\n", json({{"slope", fit.slope}, {"intercept", fit.intercept}, {"clamped", fit.clamped}}).dump(2).c_str());
      return 0;
    }
    if (cover->parsed()) {
      const std::vector<Vector> pts = read_vectors(input_path);
      Metric mt = [](const Vector& a, const Vector& b) { return (a - b).norm(); };
      if (metric == "perm") {
        const int dim = static_cast<int>(pts.front().size());
        if (dim % d != 0) throw DimensionError("row length is not a multiple of d");
        mt = permutation_quotient_metric(d, dim / d);
      }
      json out = {{"counts", json::array()}};
      for (double r : radii) out["counts"].push_back({{"r", r}, {"count", estimate_covering(pts, mt, r)}});
      if (radii.size() >= 3) out["slope"] = covering_slope(pts, mt, radii);
      std::printf("%s\n", out.dump(2).c_str());
      return 0;
    }
    if (run->parsed()) {
      const ExperimentConfig c = parse_config(json::parse(read_text_file(config_path)));
      const Report r = run_experiment(c);
      write_report(c, r);
      std::printf("%s", report_to_csv(r).c_str());
      if (r.slope) std::printf("slope,%.17g\n", *r.slope);
      std::printf("%s\n", r.pass ? "PASS" : "FAIL");
      return r.pass ? 0 : 1;
    }
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: invalid JSON: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
