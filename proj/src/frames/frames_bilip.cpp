#include "eqapprox/frames/frames_bilip.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eqapprox/common/error.hpp"
#include "eqapprox/net/json_io.hpp"

namespace eqapprox {

PointCloud centralize(const PointCloud& X) {
  if (X.cols() == 0) return X;
  const Vector c = X.rowwise().mean();
  return X.colwise() - c;
}

namespace {

Vector padded_singular_values(const PointCloud& Y) {
  Eigen::JacobiSVD<Matrix> svd(Y);
  Vector s = Vector::Zero(Y.rows());
  const Vector& sv = svd.singularValues();
  s.head(sv.size()) = sv;
  return s;
}

}  // namespace

double singular_gap(const PointCloud& X) {
  const Vector s = padded_singular_values(centralize(X));
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < s.size(); ++i)
    for (Eigen::Index j = i + 1; j < s.size(); ++j) gap = std::min(gap, std::fabs(s[i] - s[j]));
  return gap;
}

std::vector<FrameElement> svd_frame(const PointCloud& X, double gap_tol) {
  const int d = static_cast<int>(X.rows());
  if (d < 1 || d > 20) throw DomainError("svd_frame supports 1 <= d <= 20");
  const PointCloud Y = centralize(X);
  if (singular_gap(X) < gap_tol)
    throw DomainError("singular values of cent(X) are not separated by the gap tolerance");
  Eigen::JacobiSVD<Matrix> svd(Y, Eigen::ComputeFullU);
  Matrix U = svd.matrixU();
  for (int j = 0; j < d; ++j) {
    Eigen::Index arg = 0;
    U.col(j).cwiseAbs().maxCoeff(&arg);
    if (U(arg, j) < 0.0) U.col(j) = -U.col(j);
  }
  std::vector<FrameElement> frame;
  const int count = 1 << d;
  for (int mask = 0; mask < count; ++mask) {
    Matrix R = U;
    for (int j = 0; j < d; ++j)
      if (mask & (1 << j)) R.col(j) = -R.col(j);
    frame.push_back({R, 1.0 / count});
  }
  return frame;
}

std::vector<FrameElement> angle_frame_2d(const PointCloud& X, double tau_w) {
  if (X.rows() != 2) throw DimensionError("angle frame needs d = 2");
  if (!(tau_w > 0.0)) throw DomainError("weight floor must be positive");
  const PointCloud Y = centralize(X);
  std::vector<FrameElement> frame;
  double total = 0.0;
  for (Eigen::Index i = 0; i < Y.cols(); ++i) {
    const double r = Y.col(i).norm();
    const double w = std::clamp(r / tau_w - 1.0, 0.0, 1.0);
    Matrix R = Matrix::Identity(2, 2);
    if (r > 0.0) {
      const double c = Y(0, i) / r, s = Y(1, i) / r;
      R << c, -s, s, c;
    }
    frame.push_back({R, w});
    total += w;
  }
  if (!(total > 0.0)) throw DomainError("every centralized point is below the weight floor");
  for (FrameElement& e : frame) e.weight /= total;
  return frame;
}

double frame_average(const std::vector<FrameElement>& frame, const CloudEvaluator& inner, const PointCloud& X) {
  if (frame.empty()) throw DomainError("empty frame");
  const PointCloud Y = centralize(X);
  double acc = 0.0;
  for (const FrameElement& e : frame) {
    if (e.rotation.rows() != Y.rows()) throw DimensionError("frame element size differs from d");
    if (e.weight == 0.0) continue;
    acc += e.weight * inner(e.rotation.transpose() * Y);
  }
  return acc;
}

namespace {

bool contains(const std::vector<Matrix>& set, const Matrix& g, double tol) {
  for (const Matrix& h : set)
    if ((h - g).norm() <= tol) return true;
  return false;
}

}  // namespace

FiniteGroupAction::FiniteGroupAction(std::vector<Matrix> elements, double tol) : elements_(std::move(elements)) {
  if (elements_.empty()) throw DomainError("group has no elements");
  const Eigen::Index N = elements_.front().rows();
  for (const Matrix& g : elements_) {
    if (g.rows() != N || g.cols() != N) throw DimensionError("group elements must be square of equal size");
    if ((g.transpose() * g - Matrix::Identity(N, N)).norm() > tol) throw DomainError("group element is not orthogonal");
  }
  if (!contains(elements_, Matrix::Identity(N, N), tol)) throw DomainError("group does not contain the identity");
  for (const Matrix& g : elements_) {
    if (!contains(elements_, g.transpose(), tol)) throw DomainError("group is not closed under inverses");
    for (const Matrix& h : elements_)
      if (!contains(elements_, g * h, tol)) throw DomainError("group is not closed under composition");
  }
}

FiniteGroupAction FiniteGroupAction::sign_group(int N) {
  if (N < 1) throw DomainError("dimension must be positive");
  return FiniteGroupAction({Matrix::Identity(N, N), -Matrix::Identity(N, N)});
}

FiniteGroupAction FiniteGroupAction::permutation_group(int N) {
  if (N < 1 || N > 7) throw DomainError("permutation group supports 1 <= N <= 7");
  std::vector<int> p(static_cast<std::size_t>(N));
  std::iota(p.begin(), p.end(), 0);
  std::vector<Matrix> els;
  do {
    Matrix P = Matrix::Zero(N, N);
    for (int i = 0; i < N; ++i) P(p[static_cast<std::size_t>(i)], i) = 1.0;
    els.push_back(P);
  } while (std::next_permutation(p.begin(), p.end()));
  return FiniteGroupAction(std::move(els));
}

FiniteGroupAction group_from_json(const nlohmann::json& doc) {
  const nlohmann::json& list = doc.is_object() ? doc.at("elements") : doc;
  if (!list.is_array()) throw ParseError("group file must hold a list of matrices");
  std::vector<Matrix> els;
  for (const auto& m : list) els.push_back(matrix_from_json(m));
  return FiniteGroupAction(std::move(els));
}

nlohmann::json group_to_json(const FiniteGroupAction& G) {
  nlohmann::json out = nlohmann::json::array();
  for (const Matrix& g : G.elements()) out.push_back(matrix_to_json(g));
  return out;
}

TemplateSet gaussian_templates(int N, Rng& rng, int count) {
  if (N < 1) throw DomainError("dimension must be positive");
  if (count <= 0) count = 2 * N;
  TemplateSet Z;
  for (int j = 0; j < count; ++j) Z.templates.push_back(rng.normal_vector(N));
  return Z;
}

TemplateSet templates_from_json(const nlohmann::json& doc) {
  const nlohmann::json& list = doc.is_object() ? doc.at("templates") : doc;
  if (!list.is_array()) throw ParseError("template file must hold a list of vectors");
  TemplateSet Z;
  for (const auto& v : list) Z.templates.push_back(vector_from_json(v));
  return Z;
}

nlohmann::json templates_to_json(const TemplateSet& Z) {
  nlohmann::json out = nlohmann::json::array();
  for (const Vector& z : Z.templates) out.push_back(vector_to_json(z));
  return out;
}

Vector max_filter(const Vector& x, const TemplateSet& Z, const FiniteGroupAction& G) {
  if (Z.templates.empty()) throw DomainError("no templates");
  if (x.size() != G.dim()) throw DimensionError("vector length differs from the group dimension");
  std::vector<Vector> orbit;
  for (const Matrix& g : G.elements()) orbit.push_back(g * x);
  Vector out(static_cast<Eigen::Index>(Z.templates.size()));
  for (std::size_t j = 0; j < Z.templates.size(); ++j) {
    const Vector& z = Z.templates[j];
    if (z.size() != x.size()) throw DimensionError("template length differs from the group dimension");
    double best = -std::numeric_limits<double>::infinity();
    for (const Vector& gx : orbit) best = std::max(best, gx.dot(z));
    out[static_cast<Eigen::Index>(j)] = best;
  }
  return out;
}

double quotient_distance(const Vector& x, const Vector& y, const FiniteGroupAction& G) {
  if (x.size() != G.dim() || y.size() != G.dim()) throw DimensionError("vector length differs from the group dimension");
  double best = std::numeric_limits<double>::infinity();
  for (const Matrix& g : G.elements()) best = std::min(best, (g * x - y).norm());
  return best;
}

BilipEstimate estimate_bilip(const Embedding& E, const FiniteGroupAction& G, const std::vector<Vector>& samples,
                             double floor) {
  if (samples.size() < 2) throw DomainError("bi-Lipschitz estimate needs at least two samples");
  std::vector<Vector> emb;
  for (const Vector& x : samples) emb.push_back(E(x));
  BilipEstimate out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double dg = quotient_distance(samples[i], samples[j], G);
      if (!(dg > floor)) continue;
      const double de = (emb[i] - emb[j]).cwiseAbs().maxCoeff();
      if (!(de > 0.0)) throw DomainError("embedding maps distinct orbits to the same point");
      out.L1_hat = std::max(out.L1_hat, de / dg);
      out.L2_hat = std::max(out.L2_hat, dg / de);
      ++out.pairs;
    }
  if (out.pairs == 0) throw DomainError("no sample pair is farther apart than the floor");
  return out;
}

InjectivityReport check_injectivity(const Embedding& E, const FiniteGroupAction& G,
                                    const std::vector<std::pair<Vector, Vector>>& pairs, double floor) {
  InjectivityReport r;
  for (const auto& [x, y] : pairs) {
    if (!(quotient_distance(x, y, G) > floor)) continue;
    ++r.pairs;
    if (!((E(x) - E(y)).cwiseAbs().maxCoeff() > 0.0)) ++r.violations;
  }
  return r;
}

HolderRatios holder_ratios(const std::function<double(const Vector&)>& f, const FiniteGroupAction& G,
                           const std::vector<std::pair<Vector, Vector>>& pairs, double alpha, double floor) {
  HolderRatios h;
  for (const auto& [x, y] : pairs) {
    const double df = std::fabs(f(x) - f(y));
    const double dg = quotient_distance(x, y, G);
    const double de = (x - y).norm();
    if (dg > floor) h.quotient = std::max(h.quotient, df / std::pow(dg, alpha));
    if (de > floor) h.euclidean = std::max(h.euclidean, df / std::pow(de, alpha));
  }
  return h;
}

PointCloud BilipApproximant::embed_coords(const Vector& e) const {
  if (e.size() != lo.size()) throw DimensionError("embedding length differs from the build");
  PointCloud C(1, e.size());
  for (Eigen::Index j = 0; j < e.size(); ++j) C(0, j) = std::clamp((e[j] - lo[j]) / (hi[j] - lo[j]), 0.0, 1.0);
  return C;
}

double BilipApproximant::eval_embedded(const Vector& e) const { return deepsets_eval(psi, embed_coords(e)); }

BilipApproximant build_bilip_approximant(const std::function<double(const Vector&)>& f, const Embedding& E,
                                         const FiniteGroupAction& G, const std::vector<Vector>& samples, double eps,
                                         const BilipOptions& options) {
  if (!(eps > 0.0)) throw DomainError("eps must be positive");
  if (samples.size() < 2) throw DomainError("bi-Lipschitz build needs at least two samples");
  BilipApproximant out;
  out.bilip = estimate_bilip(E, G, samples, options.floor);
  std::vector<Vector> emb;
  for (const Vector& x : samples) emb.push_back(E(x));
  const Eigen::Index D = emb.front().size();
  out.lo = emb.front();
  out.hi = emb.front();
  for (const Vector& e : emb) {
    out.lo = out.lo.cwiseMin(e);
    out.hi = out.hi.cwiseMax(e);
  }
  // Padding keeps the extreme samples off the box edges, which sit on hat
  // ramp endpoints.
  double span = 0.0;
  for (Eigen::Index j = 0; j < D; ++j) {
    if (out.hi[j] <= out.lo[j]) out.hi[j] = out.lo[j] + 1.0;
    const double pad = 0.0137 * (out.hi[j] - out.lo[j]);
    out.lo[j] -= pad;
    out.hi[j] += pad;
    span = std::max(span, out.hi[j] - out.lo[j]);
  }
  // f o E^{-1} on the rescaled coordinates: omega(t) = C (L2 span t)^alpha.
  const double a = options.alpha;
  const double L2 = options.margin * out.bilip.L2_hat;
  const double scale = options.holder_const * std::pow(L2 * span, a);
  const double need = std::pow(scale * (1.0 + std::pow(2.0, -a)) / eps, 1.0 / a);
  if (!(need <= options.max_m)) throw BuildError("required resolution m exceeds max_m");
  out.m = std::max(1, static_cast<int>(std::ceil(need)));
  std::vector<PointCloud> coords;
  for (const Vector& e : emb) coords.push_back(out.embed_coords(e));
  TargetFunction inner;
  inner.name = "f o E^-1";
  inner.alpha = a;
  inner.holder_const = scale;
  inner.norm = Norm::linf;
  inner.symmetry = Symmetry::none;
  inner.eval = [](const PointCloud&) -> double { throw DomainError("f o E^-1 is only known at samples"); };
  DeepSetsOptions o;
  o.f_mid = f(samples.front());
  o.eps = scale * std::pow(0.5 / out.m, a);
  o.value = [&](const CellSignature&, const PointCloud&, int idx) { return f(samples[static_cast<std::size_t>(idx)]); };
  out.psi = build_nonequivariant(inner, 1, static_cast<int>(D), out.m, coords, o);
  return out;
}

}  // namespace eqapprox
