#include "nmn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nmn/layers.hpp"
#include "nmn/optim.hpp"

namespace nmn {

std::string ProbeReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["probe"] = probe;
  j["status"] = passed ? "pass" : "fail";
  j["measured"] = measured;
  j["bound"] = bound;
  j["tolerance"] = tolerance;
  j["seed"] = seed;
  j["samples"] = samples;
  j["detail"] = detail;
  return j.dump();
}

namespace {

VectorXd gaussian_vector(Rng& rng, Index d, double sigma = 1.0) {
  VectorXd v(d);
  for (Index i = 0; i < d; ++i) v(i) = rng.normal(0.0, sigma);
  return v;
}

VectorXd unit_vector(Rng& rng, Index d) {
  VectorXd v = gaussian_vector(rng, d);
  return v / v.norm();
}

/// Uniform in the unit ball: uniform direction, radius U^(1/d).
VectorXd ball_point(Rng& rng, Index d) { return unit_vector(rng, d) * std::pow(rng.uniform(), 1.0 / double(d)); }

VectorXd clamp_to_ball(VectorXd v) {
  const double n = v.norm();
  return n > 1.0 ? VectorXd(v / n) : v;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ProbeReport psd_probe(Index n_points, Index d, double eps, int seeds, std::uint64_t seed, double tol_scale) {
  ProbeReport r;
  r.probe = "psd(eps=" + fmt(eps) + ")";
  r.seed = seed;
  r.tolerance = 1e-8 * tol_scale;
  r.bound = 0.0;
  r.measured = INFINITY;
  const KernelConfig cfg{eps};
  double worst_asym = 0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(seed + std::uint64_t(s));
    MatrixXd pts(n_points, d);
    for (Index i = 0; i < n_points; ++i) pts.row(i) = ball_point(rng, d).transpose();
    const MatrixXd g = yat_batch<double>(pts, pts, std::nullopt, cfg).value;
    const double scale = g.cwiseAbs().maxCoeff();
    worst_asym = std::max(worst_asym, (g - g.transpose()).cwiseAbs().maxCoeff() / scale);
    // Symmetrize the fp residue so the eigen-solver sees an exactly symmetric input.
    const MatrixXd sym = 0.5 * (g + g.transpose());
    r.measured = std::min(r.measured, sym_eig_min(sym) / sym.diagonal().maxCoeff());
    r.samples += 1;
  }
  r.passed = r.measured >= -r.tolerance && worst_asym < 1e-12 * tol_scale;
  r.detail = "min eigenvalue / max diagonal over " + std::to_string(seeds) + " Gram matrices (n=" +
             std::to_string(n_points) + ", d=" + std::to_string(d) + "); max asymmetry " + fmt(worst_asym);
  return r;
}

SelfRegulationCase self_regulation_case(const VectorXd& w, const VectorXd& u, const std::vector<double>& k_grid,
                                        double eps) {
  SelfRegulationCase c;
  const VectorXd unit = u / u.norm();
  c.alignment = w.dot(unit);
  c.limit = c.alignment * c.alignment;  // ‖w‖²cos²θ
  const KernelConfig cfg{eps};
  for (double k : k_grid) c.errors.push_back(std::abs(yat(w, VectorXd(k * unit), cfg) - c.limit));
  // The error is c²|2kc − a| / (k² − 2kc + a) with c = ⟨w,u⟩, a = ‖w‖² + ε. Its
  // derivative in k is negative for every k when c ≤ 0 and for k > a/c when
  // c > 0; below that it rises through a zero crossing. Monotonicity is checked
  // on the grid points inside the decreasing region.
  const double a = w.squaredNorm() + eps;
  const double k_start = c.alignment > 0 ? a / c.alignment : 0.0;
  c.monotone = true;
  double prev = INFINITY;
  for (std::size_t i = 0; i < k_grid.size(); ++i) {
    if (k_grid[i] < k_start) continue;
    if (c.errors[i] > prev * (1 + 1e-12) + 1e-300) c.monotone = false;
    prev = c.errors[i];
  }
  return c;
}

ProbeReport self_regulation_probe(const ProbeConfig& cfg) {
  ProbeReport r;
  r.probe = "self_regulation";
  r.seed = cfg.seed;
  r.tolerance = 1e-3 * cfg.tolerance_scale;
  r.bound = 0.0;
  Rng rng(cfg.seed + 101);
  int non_monotone = 0, restricted = 0;
  for (int i = 0; i < cfg.selfreg_cases; ++i) {
    const VectorXd w = ball_point(rng, cfg.selfreg_dim);
    const VectorXd u = unit_vector(rng, cfg.selfreg_dim);
    const auto c = self_regulation_case(w, u, cfg.k_grid, cfg.selfreg_eps);
    r.measured = std::max(r.measured, c.errors.back());
    if (!c.monotone) ++non_monotone;
    if (c.alignment > 0 && (w.squaredNorm() + cfg.selfreg_eps) / c.alignment > cfg.k_grid.front()) ++restricted;
    ++r.samples;
  }
  r.passed = r.measured < r.tolerance && non_monotone == 0;
  r.detail = "max |yat(w,ku) - |w|^2 cos^2| at k=" + fmt(cfg.k_grid.back()) + "; non-monotone cases " +
             std::to_string(non_monotone) + "; cases whose check starts past k=" + fmt(cfg.k_grid.front()) + ": " +
             std::to_string(restricted);
  return r;
}

ProbeReport lipschitz_probe(double eps, long pairs, Index d, std::uint64_t seed, double tol_scale) {
  ProbeReport r;
  r.probe = "lipschitz(eps=" + fmt(eps) + ")";
  r.seed = seed;
  r.bound = 2.0 / eps + 4.0 / (eps * eps);
  r.tolerance = 1e-12 * r.bound * tol_scale;
  const KernelConfig cfg{eps};
  Rng rng(seed + 202);
  for (long p = 0; p < pairs; ++p) {
    const VectorXd w = ball_point(rng, d);
    VectorXd x, x2;
    switch (p % 3) {
      case 0:  // independent points
        x = ball_point(rng, d);
        x2 = ball_point(rng, d);
        break;
      case 1:  // nearby points anywhere in the ball
        x = ball_point(rng, d);
        x2 = clamp_to_ball(x + 1e-3 * unit_vector(rng, d));
        break;
      default:  // nearby points close to the prototype, where the slope peaks
        x = clamp_to_ball(w + 0.1 * std::sqrt(eps) * gaussian_vector(rng, d));
        x2 = clamp_to_ball(x + 1e-3 * unit_vector(rng, d));
    }
    const double dx = (x - x2).norm();
    if (dx == 0) continue;
    r.measured = std::max(r.measured, std::abs(yat(w, x, cfg) - yat(w, x2, cfg)) / dx);
    ++r.samples;
  }
  r.passed = r.measured <= r.bound + r.tolerance;
  r.detail = "max |dyat|/|dx| over unit-ball pairs vs L = 2/eps + 4/eps^2";
  return r;
}

DecayCurve gradient_decay_curve(const VectorXd& w, const VectorXd& direction, const std::vector<double>& radii,
                                double eps) {
  DecayCurve c;
  c.radii = radii;
  const VectorXd u = direction / direction.norm();
  const KernelConfig cfg{eps};
  for (double k : radii) c.norms.push_back(yat_grads(w, VectorXd(k * u), cfg).grad_x.norm());
  // Least-squares slope of log‖∇‖ against log r.
  double mx = 0, my = 0;
  const double n = double(radii.size());
  for (std::size_t i = 0; i < radii.size(); ++i) {
    mx += std::log(radii[i]) / n;
    my += std::log(c.norms[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    sxy += (std::log(radii[i]) - mx) * (std::log(c.norms[i]) - my);
    sxx += (std::log(radii[i]) - mx) * (std::log(radii[i]) - mx);
  }
  c.slope = sxy / sxx;
  return c;
}

ProbeReport gradient_decay_probe(const ProbeConfig& cfg) {
  std::vector<double> radii = cfg.radii;
  if (radii.empty()) {
    for (int i = 0; i <= 12; ++i) radii.push_back(std::pow(10.0, 1.0 + 0.25 * i));
  }
  ProbeReport r;
  r.probe = "gradient_decay";
  r.seed = cfg.seed;
  r.bound = -1.0;
  r.tolerance = 0.2 * cfg.tolerance_scale;
  Rng rng(cfg.seed + 303);
  const Index d = 8;

  // Unit-ball prototypes probed along directions at a fixed angle: θ = π/4 first,
  // then random directions with cos θ drawn from [0.2, 0.9].
  double worst_dev = 0, worst_final = 0;
  bool decreasing = true;
  std::vector<double> slopes;
  for (int i = 0; i <= cfg.decay_random_dirs; ++i) {
    const VectorXd w = ball_point(rng, d);
    const VectorXd unit = w / w.norm();
    VectorXd perp = gaussian_vector(rng, d);
    perp -= perp.dot(unit) * unit;
    perp /= perp.norm();
    const double cos_t = i == 0 ? std::sqrt(0.5) : rng.uniform(0.2, 0.9);
    const VectorXd dir = cos_t * unit + std::sqrt(1 - cos_t * cos_t) * perp;
    const auto c = gradient_decay_curve(w, dir, radii, cfg.decay_eps);
    slopes.push_back(c.slope);
    worst_dev = std::max(worst_dev, std::abs(c.slope - r.bound));
    worst_final = std::max(worst_final, c.norms.back());
    for (std::size_t k = 1; k < radii.size(); ++k) {
      if (radii[k - 1] > 10 * w.norm() && c.norms[k] >= c.norms[k - 1]) decreasing = false;
    }
    ++r.samples;
  }
  r.measured = slopes.front();
  r.passed = worst_dev <= r.tolerance && decreasing && worst_final < 1e-4 * cfg.tolerance_scale;
  r.detail = "log-log slope at theta=pi/4 (bound -1); worst |slope+1| over " + std::to_string(r.samples) +
             " directions " + fmt(worst_dev) + "; largest final norm " + fmt(worst_final) +
             (decreasing ? "; decreasing" : "; NOT decreasing");
  return r;
}

std::vector<DimScalingPoint> dim_scaling_means(const std::vector<Index>& dims, long samples, double sigma,
                                               double eps, std::uint64_t seed) {
  std::vector<DimScalingPoint> out;
  for (Index d : dims) {
    Rng rng(seed + 404 + std::uint64_t(d));
    DimScalingPoint p;
    p.d = d;
    for (long s = 0; s < samples; ++s) {
      const VectorXd w = gaussian_vector(rng, d, sigma), x = gaussian_vector(rng, d, sigma);
      const double dot = w.dot(x);
      const double den = (w - x).squaredNorm() + eps;
      p.mean += dot * dot / den;
      p.numerator_mean += dot * dot;
      p.denominator_mean += den;
    }
    p.mean /= double(samples);
    p.numerator_mean /= double(samples);
    p.denominator_mean /= double(samples);
    out.push_back(p);
  }
  return out;
}

ProbeReport dim_scaling_probe(const ProbeConfig& cfg) {
  ProbeReport r;
  r.probe = "dim_scaling";
  r.seed = cfg.seed;
  r.bound = 3.0 * cfg.tolerance_scale;
  r.tolerance = 0;
  const auto pts = dim_scaling_means(cfg.dims, cfg.dim_samples, cfg.dim_sigma, cfg.dim_eps, cfg.seed);
  double lo = INFINITY, hi = 0;
  std::ostringstream detail;
  detail << "max/min mean over d;";
  const double s2 = cfg.dim_sigma * cfg.dim_sigma;
  for (const auto& p : pts) {
    lo = std::min(lo, p.mean);
    hi = std::max(hi, p.mean);
    detail << " d=" << p.d << " mean=" << fmt(p.mean) << " num/(d s^4)=" << fmt(p.numerator_mean / (p.d * s2 * s2))
           << " den/(2d s^2)=" << fmt(p.denominator_mean / (2 * p.d * s2)) << ";";
    r.samples += cfg.dim_samples;
  }
  r.measured = hi / lo;
  r.passed = r.measured <= r.bound;
  r.detail = detail.str();
  return r;
}

double ntk_ratio(Index units, Index d, std::uint64_t seed, double angle) {
  Rng rng(seed);
  const MatrixXd w = gaussian_fill(rng, units, d, 1.0 / std::sqrt(double(d)));
  VectorXd a(units);
  for (Index i = 0; i < units; ++i) a(i) = rng.normal();
  const VectorXd x = unit_vector(rng, d);
  VectorXd perp = gaussian_vector(rng, d);
  perp -= perp.dot(x) * x;
  perp /= perp.norm();
  const VectorXd x2 = std::cos(angle) * x + std::sin(angle) * perp;

  // θ = {a_i, w_i}: ∂f/∂a_i = ⵟ(w_i, x), ∂f/∂w_i = a_i ∇_w ⵟ(w_i, x).
  const KernelConfig cfg{};
  auto kernel = [&](const VectorXd& p, const VectorXd& q) {
    double k = 0;
    for (Index i = 0; i < units; ++i) {
      const VectorXd wi = w.row(i).transpose();
      k += yat(wi, p, cfg) * yat(wi, q, cfg);
      k += a(i) * a(i) * yat_grads(wi, p, cfg).grad_w.dot(yat_grads(wi, q, cfg).grad_w);
    }
    return k;
  };
  return std::abs(kernel(x, x2)) / std::sqrt(kernel(x, x) * kernel(x2, x2));
}

ProbeReport ntk_orthogonality_probe(const ProbeConfig& cfg) {
  ProbeReport r;
  r.probe = "ntk_orthogonality";
  r.seed = cfg.seed;
  r.bound = 0.2 * cfg.tolerance_scale;
  std::vector<double> ratios;
  for (int s = 0; s < cfg.ntk_seeds; ++s) {
    ratios.push_back(ntk_ratio(cfg.ntk_units, cfg.ntk_dim, cfg.seed + 505 + std::uint64_t(s), std::numbers::pi / 2));
  }
  r.samples = cfg.ntk_seeds;
  r.measured = median(ratios);
  r.passed = r.measured < r.bound;
  r.detail = "median |K(x,x')|/sqrt(K(x,x)K(x',x')) for orthogonal unit pairs, m=" + std::to_string(cfg.ntk_units) +
             ", d=" + std::to_string(cfg.ntk_dim) + "; max " + fmt(*std::max_element(ratios.begin(), ratios.end()));
  return r;
}

int xor_train_steps(double eps, int max_steps, std::uint64_t seed) {
  const KernelConfig cfg{eps};
  MatrixXd xs(4, 2);
  xs << 0, 0, 0, 1, 1, 0, 1, 1;
  const double ys[4] = {0, 1, 1, 0};
  Rng rng(seed);
  Param<double> w("w", gaussian_fill(rng, 1, 2, 1.0 / std::sqrt(2.0)));
  AdamState<double> adam;
  adam.lr = 0.2;
  constexpr double margin = 0.1;
  double resp[4];
  std::vector<VectorXd> grads(4);
  for (int step = 0; step <= max_steps; ++step) {
    double lo1 = INFINITY, hi0 = -INFINITY;
    for (Index i = 0; i < 4; ++i) {
      const VectorXd wi = w.value.row(0).transpose(), xi = xs.row(i).transpose();
      resp[i] = yat(wi, xi, cfg);
      grads[i] = yat_grads(wi, xi, cfg).grad_w;
      if (ys[i] > 0.5) {
        lo1 = std::min(lo1, resp[i]);
      } else {
        hi0 = std::max(hi0, resp[i]);
      }
    }
    // τ = midpoint of the gap
    const double tau = 0.5 * (lo1 + hi0);
    if (lo1 > tau && hi0 < tau) return step;
    // Pairwise hinge: each class-1 response should exceed each class-0 response by the margin.
    w.zero_grad();
    for (int i : {1, 2}) {
      for (int j : {0, 3}) {
        if (resp[i] - resp[j] < margin) w.grad.row(0) -= (grads[i] - grads[j]).transpose();
      }
    }
    adam_step<double>(adam, {&w});
  }
  return -1;
}

ProbeReport xor_certificate(const ProbeConfig& cfg) {
  ProbeReport r;
  r.probe = "xor_certificate";
  r.seed = cfg.seed;
  const double eps = cfg.xor_eps;
  const KernelConfig kc{eps};
  VectorXd w(2);
  w << 1, -1;
  const double pts[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const double expect[4] = {0.0, 1.0 / (5.0 + eps), 1.0 / (1.0 + eps), 0.0};
  double dev = 0;
  std::ostringstream detail;
  detail << "w=[1,-1]:";
  for (int i = 0; i < 4; ++i) {
    VectorXd x(2);
    x << pts[i][0], pts[i][1];
    const double v = yat(w, x, kc);
    dev = std::max(dev, std::abs(v - expect[i]));
    detail << " (" << pts[i][0] << "," << pts[i][1] << ")=" << fmt(v);
  }
  // τ = 0 separates the table: class 0 is exactly zero, class 1 strictly positive.
  const bool tau_zero = expect[1] > 0 && expect[2] > 0;
  const int steps = xor_train_steps(eps, cfg.xor_max_steps, cfg.seed + 606);
  detail << "; trained unit separated after " << steps << " steps";
  r.measured = dev;
  r.bound = 0;
  r.tolerance = 0;
  r.samples = 4;
  r.passed = dev == 0.0 && tau_zero && steps >= 0;
  r.detail = detail.str();
  return r;
}

std::vector<ProbeReport> run_all(const ProbeConfig& cfg) {
  std::vector<ProbeReport> out;
  out.push_back(xor_certificate(cfg));
  for (double eps : cfg.psd_eps) {
    out.push_back(psd_probe(cfg.psd_points, cfg.psd_dim, eps, cfg.psd_seeds, cfg.seed, cfg.tolerance_scale));
  }
  out.push_back(self_regulation_probe(cfg));
  for (double eps : cfg.lipschitz_eps) {
    out.push_back(lipschitz_probe(eps, cfg.lipschitz_pairs, cfg.lipschitz_dim, cfg.seed, cfg.tolerance_scale));
  }
  out.push_back(gradient_decay_probe(cfg));
  out.push_back(dim_scaling_probe(cfg));
  out.push_back(ntk_orthogonality_probe(cfg));
  return out;
}

}  // namespace nmn
