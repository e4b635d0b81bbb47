#pragma once

#include "lfr/baseline.hpp"
#include "lfr/dataset.hpp"
#include "lfr/types.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lfr::msd {

// Chain wall - m1 - m2 - m3. Spring/damper i connects body i to its left
// neighbour; the hardening term a1 p1^3 sits on spring 1.
struct MsdParams {
  std::array<double, 3> m{0.5, 0.4, 0.1};
  std::array<double, 3> k{100.0, 100.0, 100.0};
  std::array<double, 3> c{0.5, 0.5, 0.5};
  double a1 = 100.0;

  void validate() const;
};

enum class Variant { A, B, C };

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

using State6 = std::array<double, 6>;  // (p1, v1, p2, v2, p3, v3)

double saturate(double u);  // 30 tanh(u / 30)

// Variant B saturates the force before it enters the dynamics; A and C use it as is.
State6 msd_derivatives(const State6& s, double force, const MsdParams& p, Variant v);

// Classical RK4 with the input held over the step.
Vec rk4_step(const std::function<Vec(const Vec&, double)>& f, const Vec& x, double u, double Ts);
State6 rk4_step(const State6& s, double force, const MsdParams& p, Variant v, double Ts);

struct MultisineSpec {
  Index period = 10000;
  std::vector<Index> bins;  // DFT bin indices within one period
  double rms = 10.0;
  double fs = 50.0;
  std::uint64_t seed = 0;

  // Every third bin up to the Nyquist limit: 3, 6, ..., 4998.
  static MultisineSpec standard(std::uint64_t seed);
  void validate() const;
};

// `length` samples of the periodic signal (length may exceed one period).
Vec generate_multisine(const MultisineSpec& spec, Index length);

struct BenchmarkConfig {
  Variant variant = Variant::A;
  MsdParams params;
  Index period = 10000;
  double rms = 10.0;
  double Ts = 0.02;
  double lpf_cutoff_hz = 5.0;
  double snr_db = 30.0;
  Index est_periods = 2;
  Index val_periods = 1;
  Index test_periods = 1;
  std::uint64_t seed = 1;
};

struct BenchmarkData {
  Dataset est, val, test;
};

// Clean and noisy outputs of the true system for the given force sequence,
// starting at rest.
Vec simulate_system(const BenchmarkConfig& cfg, const Vec& u);
BenchmarkData generate_dataset(const BenchmarkConfig& cfg);

double measured_snr_db(const Dataset& d);

// Linear wall - m1 - m2 chain, RK4-discretized at Ts, output p2.
// theta = (m1, m2, k1, k2, c1, c2); state (p1, v1, p2, v2).
class Msd2Baseline final : public LinearBaseline {
 public:
  Msd2Baseline(const std::array<double, 6>& theta0, double Ts);

  enum class ParamSet { Ideal, Approx };
  static std::array<double, 6> param_set(ParamSet s);

  std::string id() const override { return "msd2"; }
  Index n_x() const override { return 4; }
  Index n_u() const override { return 1; }
  Index n_y() const override { return 1; }
  std::vector<std::string> theta_names() const override;
  Vec nominal_theta() const override;
  BoolMat jacobian_pattern() const override;
  nlohmann::json describe() const override;
  Mat system_matrix(const Vec& theta) const override;
  std::vector<Mat> system_matrix_grad(const Vec& theta) const override;

  double Ts() const { return Ts_; }
  // Continuous-time (A_c, B_c) and their theta derivatives.
  static void continuous(const Vec& theta, Mat& Ac, Mat& Bc);

 private:
  std::array<double, 6> theta0_;
  double Ts_;
};

}  // namespace lfr::msd
