#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmn/kernel.hpp"

namespace nmn {

struct ProbeReport {
  std::string probe;
  bool passed = false;
  double measured = 0;
  double bound = 0;
  double tolerance = 0;
  std::uint64_t seed = 0;
  long samples = 0;
  std::string detail;

  /// One JSON object: probe, status, measured, bound, tolerance, seed, samples, detail.
  std::string to_json_line() const;
};

struct ProbeConfig {
  std::uint64_t seed = 0;
  // Scales every pass threshold; a negative value forces failures.
  double tolerance_scale = 1.0;

  Index psd_points = 64;
  Index psd_dim = 8;
  std::vector<double> psd_eps{0.1, 1.0};
  int psd_seeds = 100;

  int selfreg_cases = 100;
  Index selfreg_dim = 8;
  std::vector<double> k_grid{1e1, 1e2, 1e3, 1e4, 1e5, 1e6};
  double selfreg_eps = 1e-6;

  std::vector<double> lipschitz_eps{0.5, 1.0};
  long lipschitz_pairs = 10000;
  Index lipschitz_dim = 8;

  std::vector<double> radii;  // empty: 13 log-spaced points over [10, 10⁴]
  double decay_eps = 1e-6;
  int decay_random_dirs = 20;

  std::vector<Index> dims{64, 256, 1024};
  long dim_samples = 10000;
  double dim_sigma = 1.0;
  double dim_eps = 1e-6;

  Index ntk_units = 512;
  Index ntk_dim = 32;
  int ntk_seeds = 20;

  double xor_eps = 0.01;
  int xor_max_steps = 500;
};

ProbeReport psd_probe(Index n_points, Index d, double eps, int seeds, std::uint64_t seed, double tol_scale = 1);

/// One (w, u) pair: error |ⵟ(w, k·u) − ‖w‖²cos²θ| at each k.
struct SelfRegulationCase {
  std::vector<double> errors;
  double limit = 0;
  double alignment = 0;  // ⟨w, u⟩ with u normalized
  bool monotone = false;
};
SelfRegulationCase self_regulation_case(const VectorXd& w, const VectorXd& u, const std::vector<double>& k_grid,
                                        double eps);
ProbeReport self_regulation_probe(const ProbeConfig& cfg);

ProbeReport lipschitz_probe(double eps, long pairs, Index d, std::uint64_t seed, double tol_scale = 1);

/// Gradient norms at x = r·direction for each radius, and the fitted log-log slope.
struct DecayCurve {
  std::vector<double> radii, norms;
  double slope = 0;
};
DecayCurve gradient_decay_curve(const VectorXd& w, const VectorXd& direction, const std::vector<double>& radii,
                                double eps);
ProbeReport gradient_decay_probe(const ProbeConfig& cfg);

/// Mean of ⵟ(w, x) for w, x ~ N(0, σ²I_d), with the numerator and denominator means.
struct DimScalingPoint {
  Index d = 0;
  double mean = 0, numerator_mean = 0, denominator_mean = 0;
};
std::vector<DimScalingPoint> dim_scaling_means(const std::vector<Index>& dims, long samples, double sigma,
                                               double eps, std::uint64_t seed);
ProbeReport dim_scaling_probe(const ProbeConfig& cfg);

/// |K(x,x′)| / √(K(x,x)·K(x′,x′)) for one random network f(x) = Σ a_i ⵟ(w_i, x).
double ntk_ratio(Index units, Index d, std::uint64_t seed, double angle);
ProbeReport ntk_orthogonality_probe(const ProbeConfig& cfg);

/// Steps a single ⵟ unit trained from random init needed to separate XOR, or -1.
int xor_train_steps(double eps, int max_steps, std::uint64_t seed);
ProbeReport xor_certificate(const ProbeConfig& cfg);

std::vector<ProbeReport> run_all(const ProbeConfig& cfg);

}  // namespace nmn
