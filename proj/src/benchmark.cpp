#include "lfr/benchmark.hpp"

#include "lfr/json_util.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace lfr::msd {

void MsdParams::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(m[i] > 0 && k[i] > 0 && c[i] > 0)) throw ConfigError("MSD parameters must be positive");
  }
  if (!(a1 > 0)) throw ConfigError("MSD hardening a1 must be positive");
}

Variant parse_variant(const std::string& s) {
  if (s == "a" || s == "A") return Variant::A;
  if (s == "b" || s == "B") return Variant::B;
  if (s == "c" || s == "C") return Variant::C;
  throw ConfigError("unknown benchmark variant '" + s + "' (expected a, b or c)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::A: return "a";
    case Variant::B: return "b";
    case Variant::C: return "c";
  }
  return "?";
}

double saturate(double u) { return 30.0 * std::tanh(u / 30.0); }

State6 msd_derivatives(const State6& s, double force, const MsdParams& p, Variant v) {
  const double u = v == Variant::B ? saturate(force) : force;
  const double p1 = s[0], v1 = s[1], p2 = s[2], v2 = s[3], p3 = s[4], v3 = s[5];
  const double f1 = p.k[0] * p1 + p.a1 * p1 * p1 * p1 + p.c[0] * v1;
  const double f2 = p.k[1] * (p2 - p1) + p.c[1] * (v2 - v1);
  const double f3 = p.k[2] * (p3 - p2) + p.c[2] * (v3 - v2);
  return {v1, (u - f1 + f2) / p.m[0], v2, (f3 - f2) / p.m[1], v3, -f3 / p.m[2]};
}

Vec rk4_step(const std::function<Vec(const Vec&, double)>& f, const Vec& x, double u, double Ts) {
  const Vec k1 = f(x, u);
  const Vec k2 = f(x + 0.5 * Ts * k1, u);
  const Vec k3 = f(x + 0.5 * Ts * k2, u);
  const Vec k4 = f(x + Ts * k3, u);
  return x + (Ts / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

State6 rk4_step(const State6& s, double force, const MsdParams& p, Variant v, double Ts) {
  auto axpy = [](const State6& a, double h, const State6& b) {
    State6 r;
    for (int i = 0; i < 6; ++i) r[i] = a[i] + h * b[i];
    return r;
  };
  const State6 k1 = msd_derivatives(s, force, p, v);
  const State6 k2 = msd_derivatives(axpy(s, 0.5 * Ts, k1), force, p, v);
  const State6 k3 = msd_derivatives(axpy(s, 0.5 * Ts, k2), force, p, v);
  const State6 k4 = msd_derivatives(axpy(s, Ts, k3), force, p, v);
  State6 r;
  for (int i = 0; i < 6; ++i) r[i] = s[i] + (Ts / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return r;
}

MultisineSpec MultisineSpec::standard(std::uint64_t seed) {
  MultisineSpec s;
  s.seed = seed;
  for (Index b = 3; 2 * b < s.period; b += 3) s.bins.push_back(b);
  return s;
}

void MultisineSpec::validate() const {
  if (period < 2) throw ConfigError("multisine: period must be >= 2");
  if (bins.empty()) throw ConfigError("multisine: empty bin set");
  for (Index b : bins) {
    if (b <= 0 || 2 * b >= period) throw ConfigError("multisine: bin outside (0, fs/2)");
  }
  if (!(rms > 0)) throw ConfigError("multisine: target RMS must be positive");
}

Vec generate_multisine(const MultisineSpec& spec, Index length) {
  spec.validate();
  const Index N = spec.period;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> cphi(spec.bins.size()), sphi(spec.bins.size());
  for (std::size_t j = 0; j < spec.bins.size(); ++j) {
    const double ph = phase(rng);
    cphi[j] = std::cos(ph);
    sphi[j] = std::sin(ph);
  }
  // cos(2 pi b k / N + phi) via an exact-index lookup table.
  std::vector<double> ct(static_cast<std::size_t>(N)), st(static_cast<std::size_t>(N));
  for (Index m = 0; m < N; ++m) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(N);
    ct[static_cast<std::size_t>(m)] = std::cos(a);
    st[static_cast<std::size_t>(m)] = std::sin(a);
  }
  Vec period(N);
  for (Index k = 0; k < N; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < spec.bins.size(); ++j) {
      const auto idx = static_cast<std::size_t>((spec.bins[j] * k) % N);
      s += ct[idx] * cphi[j] - st[idx] * sphi[j];
    }
    period(k) = s;
  }
  const double rms = std::sqrt(period.squaredNorm() / static_cast<double>(N));
  period *= spec.rms / rms;
  Vec out(length);
  for (Index k = 0; k < length; ++k) out(k) = period(k % N);
  return out;
}

Vec simulate_system(const BenchmarkConfig& cfg, const Vec& u) {
  cfg.params.validate();
  const double alpha = std::exp(-2.0 * std::numbers::pi * cfg.lpf_cutoff_hz * cfg.Ts);
  State6 s{};
  double yf = 0.0;
  Vec y(u.size());
  for (Index k = 0; k < u.size(); ++k) {
    double out = s[2];
    if (cfg.variant == Variant::C) {
      yf = alpha * yf + (1.0 - alpha) * out;
      out = yf;
    }
    y(k) = out;
    s = rk4_step(s, u(k), cfg.params, cfg.variant, cfg.Ts);
    for (double v : s) {
      if (!std::isfinite(v) || std::abs(v) > 1e12) {
        throw DivergenceError("MSD simulation diverged at step " + std::to_string(k),
                              static_cast<std::size_t>(k));
      }
    }
  }
  return y;
}

namespace {

Dataset make_split(const BenchmarkConfig& cfg, const std::string& tag, Index periods,
                   std::uint64_t stream) {
  if (periods < 1) throw ConfigError("benchmark: each split needs at least one period");
  MultisineSpec ms;
  ms.seed = derive_seed(cfg.seed, stream);
  ms.period = cfg.period;
  for (Index b = 3; 2 * b < ms.period; b += 3) ms.bins.push_back(b);
  ms.rms = cfg.rms;
  ms.fs = 1.0 / cfg.Ts;
  const Index n = periods * cfg.period;
  const Vec u = generate_multisine(ms, n);
  const Vec yc = simulate_system(cfg, u);

  const double rms_clean = std::sqrt(yc.squaredNorm() / static_cast<double>(n));
  const double sigma_e = rms_clean / std::pow(10.0, cfg.snr_db / 20.0);
  std::mt19937_64 rng(derive_seed(cfg.seed, stream + 100));
  std::normal_distribution<double> noise(0.0, sigma_e);
  Vec y(n);
  for (Index k = 0; k < n; ++k) y(k) = yc(k) + noise(rng);

  Dataset d;
  d.u = u;
  d.y = y;
  d.y_clean = yc;
  d.Ts = cfg.Ts;
  d.split = tag;
  d.meta = {{"variant", to_string(cfg.variant)},
            {"seed", cfg.seed},
            {"phase_seed", ms.seed},
            {"multisine", {{"period", ms.period}, {"bins", ms.bins.size()}, {"rms", ms.rms}, {"fs", ms.fs}}},
            {"snr_db_target", cfg.snr_db},
            {"sigma_e", sigma_e},
            {"hardening", "a1*p1^3 on spring 1"}};
  if (cfg.variant == Variant::B) d.meta["saturation"] = "30tanh(u/30)";
  if (cfg.variant == Variant::C) d.meta["lpf_cutoff_hz"] = cfg.lpf_cutoff_hz;
  d.meta["snr_db_measured"] = measured_snr_db(d);
  return d;
}

}  // namespace

BenchmarkData generate_dataset(const BenchmarkConfig& cfg) {
  if (!(cfg.Ts > 0)) throw ConfigError("benchmark: Ts must be positive");
  BenchmarkData b;
  b.est = make_split(cfg, "est", cfg.est_periods, 1);
  b.val = make_split(cfg, "val", cfg.val_periods, 2);
  b.test = make_split(cfg, "test", cfg.test_periods, 3);
  return b;
}

double measured_snr_db(const Dataset& d) {
  if (d.y_clean.size() == 0) throw DataError("SNR needs the clean signal");
  const double ps = d.y_clean.squaredNorm();
  const double pn = (d.y - d.y_clean).squaredNorm();
  return 10.0 * std::log10(ps / pn);
}

Msd2Baseline::Msd2Baseline(const std::array<double, 6>& theta0, double Ts)
    : theta0_(theta0), Ts_(Ts) {
  for (double t : theta0_)
    if (!(t > 0)) throw ConfigError("msd2: parameters must be positive");
  if (!(Ts > 0)) throw ConfigError("msd2: Ts must be positive");
}

std::array<double, 6> Msd2Baseline::param_set(ParamSet s) {
  if (s == ParamSet::Ideal) return {0.5, 0.4, 100.0, 100.0, 0.5, 0.5};
  return {0.5, 0.4, 95.0, 95.0, 0.45, 0.45};
}

std::vector<std::string> Msd2Baseline::theta_names() const {
  return {"m1", "m2", "k1", "k2", "c1", "c2"};
}

Vec Msd2Baseline::nominal_theta() const {
  Vec t(6);
  for (int i = 0; i < 6; ++i) t(i) = theta0_[static_cast<std::size_t>(i)];
  return t;
}

BoolMat Msd2Baseline::jacobian_pattern() const {
  BoolMat p = BoolMat::Constant(5, 5, false);
  p.topRows(4).setConstant(true);
  p(4, 2) = true;
  return p;
}

nlohmann::json Msd2Baseline::describe() const {
  return {{"id", id()}, {"Ts", Ts_}, {"theta0", std::vector<double>(theta0_.begin(), theta0_.end())}};
}

void Msd2Baseline::continuous(const Vec& th, Mat& Ac, Mat& Bc) {
  if (th.size() != 6) throw DimensionError("msd2: theta must have 6 entries");
  const double m1 = th(0), m2 = th(1), k1 = th(2), k2 = th(3), c1 = th(4), c2 = th(5);
  Ac = Mat::Zero(4, 4);
  Ac(0, 1) = 1.0;
  Ac(1, 0) = -(k1 + k2) / m1;
  Ac(1, 1) = -(c1 + c2) / m1;
  Ac(1, 2) = k2 / m1;
  Ac(1, 3) = c2 / m1;
  Ac(2, 3) = 1.0;
  Ac(3, 0) = k2 / m2;
  Ac(3, 1) = c2 / m2;
  Ac(3, 2) = -k2 / m2;
  Ac(3, 3) = -c2 / m2;
  Bc = Mat::Zero(4, 1);
  Bc(1, 0) = 1.0 / m1;
}

namespace {

// RK4 on a linear system equals the 4th-order truncated exponential series:
// Ad = sum_{j=0..4} (hA)^j / j!, Bd = sum_{j=1..4} h^j A^{j-1} B / j!.
void discretize(const Mat& A, const Mat& B, double h, Mat& Ad, Mat& Bd) {
  Ad = Mat::Identity(4, 4);
  Bd = Mat::Zero(4, 1);
  Mat P = Mat::Identity(4, 4);  // A^{j-1}
  double coef = 1.0;
  for (int j = 1; j <= 4; ++j) {
    coef *= h / j;
    Bd += coef * P * B;
    P = A * P;
    Ad += coef * P;
  }
}

}  // namespace

Mat Msd2Baseline::system_matrix(const Vec& theta) const {
  Mat Ac, Bc, Ad, Bd;
  continuous(theta, Ac, Bc);
  discretize(Ac, Bc, Ts_, Ad, Bd);
  Mat M = Mat::Zero(5, 5);
  M.topLeftCorner(4, 4) = Ad;
  M.topRightCorner(4, 1) = Bd;
  M(4, 2) = 1.0;
  return M;
}

std::vector<Mat> Msd2Baseline::system_matrix_grad(const Vec& th) const {
  Mat A, B;
  continuous(th, A, B);
  const double m1 = th(0), m2 = th(1);
  std::vector<Mat> dA(6, Mat::Zero(4, 4));
  std::vector<Mat> dB(6, Mat::Zero(4, 1));
  dA[0].row(1) = -A.row(1) / m1;
  dB[0](1, 0) = -1.0 / (m1 * m1);
  dA[1].row(3) = -A.row(3) / m2;
  dA[2](1, 0) = -1.0 / m1;
  dA[3](1, 0) = -1.0 / m1;
  dA[3](1, 2) = 1.0 / m1;
  dA[3](3, 0) = 1.0 / m2;
  dA[3](3, 2) = -1.0 / m2;
  dA[4](1, 1) = -1.0 / m1;
  dA[5](1, 1) = -1.0 / m1;
  dA[5](1, 3) = 1.0 / m1;
  dA[5](3, 1) = 1.0 / m2;
  dA[5](3, 3) = -1.0 / m2;

  std::vector<Mat> out;
  out.reserve(6);
  const double h = Ts_;
  for (int t = 0; t < 6; ++t) {
    Mat dAd = Mat::Zero(4, 4);
    Mat dBd = Mat::Zero(4, 1);
    Mat P = Mat::Identity(4, 4);
    Mat dP = Mat::Zero(4, 4);
    double coef = 1.0;
    for (int j = 1; j <= 4; ++j) {
      coef *= h / j;
      dBd += coef * (dP * B + P * dB[static_cast<std::size_t>(t)]);
      dP = dA[static_cast<std::size_t>(t)] * P + A * dP;
      P = A * P;
      dAd += coef * dP;
    }
    Mat D = Mat::Zero(5, 5);
    D.topLeftCorner(4, 4) = dAd;
    D.topRightCorner(4, 1) = dBd;
    out.push_back(std::move(D));
  }
  return out;
}

}  // namespace lfr::msd
