#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <vector>

#include "eqapprox/common/rng.hpp"
#include "eqapprox/common/types.hpp"
#include "eqapprox/sets/set_builder.hpp"

namespace eqapprox {

struct FrameElement {
  Matrix rotation;
  double weight = 0.0;
};

// X minus its column mean.
PointCloud centralize(const PointCloud& X);

// Smallest gap between distinct-index singular values of cent(X).
double singular_gap(const PointCloud& X);

// {U S : S = diag(+-1)} for cent(X) = U Sigma V^T, uniform weights. The base
// U has the largest-magnitude entry of every column positive. Throws
// DomainError when two singular values are closer than gap_tol.
std::vector<FrameElement> svd_frame(const PointCloud& X, double gap_tol);

// One element per point: R_i^{-1} turns cent(X)_i onto the positive first
// axis; weight clamp(|cent(X)_i|/tau_w - 1, 0, 1), normalized.
std::vector<FrameElement> angle_frame_2d(const PointCloud& X, double tau_w = 0.05);

using CloudEvaluator = std::function<double(const PointCloud&)>;

// sum_j w_j inner(U_j^{-1} cent(X)).
double frame_average(const std::vector<FrameElement>& frame, const CloudEvaluator& inner, const PointCloud& X);

// Finite group of orthogonal N x N matrices.
class FiniteGroupAction {
 public:
  // Checks orthogonality, identity, inverses and closure (tolerance `tol`).
  explicit FiniteGroupAction(std::vector<Matrix> elements, double tol = 1e-9);

  static FiniteGroupAction sign_group(int N);         // {I, -I}
  static FiniteGroupAction permutation_group(int N);  // S_N as permutation matrices

  int dim() const { return static_cast<int>(elements_.front().rows()); }
  std::size_t size() const { return elements_.size(); }
  const std::vector<Matrix>& elements() const { return elements_; }

 private:
  std::vector<Matrix> elements_;
};

FiniteGroupAction group_from_json(const nlohmann::json& doc);
nlohmann::json group_to_json(const FiniteGroupAction& G);

struct TemplateSet {
  std::vector<Vector> templates;
};

// i.i.d. standard normal templates; count defaults to 2N.
TemplateSet gaussian_templates(int N, Rng& rng, int count = 0);
TemplateSet templates_from_json(const nlohmann::json& doc);
nlohmann::json templates_to_json(const TemplateSet& Z);

// Component j: max_g <g x, z_j>.
Vector max_filter(const Vector& x, const TemplateSet& Z, const FiniteGroupAction& G);

// min_g |g x - y|_2.
double quotient_distance(const Vector& x, const Vector& y, const FiniteGroupAction& G);

using Embedding = std::function<Vector(const Vector&)>;

struct BilipEstimate {
  double L1_hat = 0.0;
  double L2_hat = 0.0;
  std::size_t pairs = 0;  // pairs above the floor
};

// Ratios over all sample pairs with d_G above `floor`. Throws DomainError when
// no pair qualifies or a qualifying pair has equal embeddings.
BilipEstimate estimate_bilip(const Embedding& E, const FiniteGroupAction& G, const std::vector<Vector>& samples,
                             double floor = 1e-3);

struct InjectivityReport {
  std::size_t pairs = 0;       // pairs with d_G > floor
  std::size_t violations = 0;  // of those, pairs with equal embeddings
};
InjectivityReport check_injectivity(const Embedding& E, const FiniteGroupAction& G,
                                    const std::vector<std::pair<Vector, Vector>>& pairs, double floor);

struct HolderRatios {
  double quotient = 0.0;   // sup |f(x)-f(y)| / d_G(x,y)^alpha
  double euclidean = 0.0;  // sup |f(x)-f(y)| / |x-y|^alpha
};
HolderRatios holder_ratios(const std::function<double(const Vector&)>& f, const FiniteGroupAction& G,
                           const std::vector<std::pair<Vector, Vector>>& pairs, double alpha, double floor = 1e-9);

// psi o E with psi a DeepSets build on the rescaled embedding coordinates
// (d = 1, one singleton block per coordinate).
struct BilipApproximant {
  BuiltDeepSets psi;
  Vector lo;  // embedding coordinate e maps to (e - lo) / (hi - lo)
  Vector hi;
  int m = 1;
  BilipEstimate bilip;

  PointCloud embed_coords(const Vector& e) const;
  double eval_embedded(const Vector& e) const;
};

struct BilipOptions {
  double alpha = 1.0;
  double holder_const = 1.0;  // of f with respect to d_G
  double floor = 1e-3;
  double margin = 1.1;        // applied to L2_hat
  int max_m = 4096;
};

BilipApproximant build_bilip_approximant(const std::function<double(const Vector&)>& f, const Embedding& E,
                                         const FiniteGroupAction& G, const std::vector<Vector>& samples, double eps,
                                         const BilipOptions& options = {});

}  // namespace eqapprox
