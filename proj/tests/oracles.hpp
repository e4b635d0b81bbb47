#pragma once

// Reference computations used by the unit tests and the acceptance binary.
// Everything here avoids the library code path it is checking: cycle
// detection by enumeration, model outputs straight from the structure
// formulas, losses from plain forward simulation.

#include "lfr/graph.hpp"
#include "lfr/model_core.hpp"
#include "lfr/structures.hpp"

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

namespace lfr::oracle {

// ---- graphs ----------------------------------------------------------------

// Depth-first enumeration of simple cycles, each rooted at its smallest node.
// adj rows are destinations. Returns the number of cycles found, stopping at
// `limit`.
inline long count_simple_cycles(const BoolMat& adj, long limit = 1) {
  const Index n = adj.rows();
  long found = 0;
  std::vector<char> on_path(static_cast<std::size_t>(n), 0);
  std::function<void(Index, Index)> walk = [&](Index root, Index v) {
    for (Index w = root; w < n && found < limit; ++w) {
      if (!adj(w, v)) continue;  // edge v -> w
      if (w == root) {
        ++found;
      } else if (!on_path[static_cast<std::size_t>(w)]) {
        on_path[static_cast<std::size_t>(w)] = 1;
        walk(root, w);
        on_path[static_cast<std::size_t>(w)] = 0;
      }
    }
  };
  for (Index r = 0; r < n && found < limit; ++r) {
    on_path[static_cast<std::size_t>(r)] = 1;
    walk(r, r);
    on_path[static_cast<std::size_t>(r)] = 0;
  }
  return found;
}

inline bool has_cycle(const BoolMat& adj) { return count_simple_cycles(adj, 1) > 0; }

inline bool is_topological(const BoolMat& adj, const std::vector<Index>& order) {
  const Index n = adj.rows();
  if (static_cast<Index>(order.size()) != n) return false;
  std::vector<Index> pos(static_cast<std::size_t>(n), -1);
  for (Index i = 0; i < n; ++i) {
    const Index v = order[static_cast<std::size_t>(i)];
    if (v < 0 || v >= n || pos[static_cast<std::size_t>(v)] >= 0) return false;
    pos[static_cast<std::size_t>(v)] = i;
  }
  for (Index d = 0; d < n; ++d)
    for (Index s = 0; s < n; ++s)
      if (adj(d, s) && pos[static_cast<std::size_t>(s)] >= pos[static_cast<std::size_t>(d)]) return false;
  return true;
}

// Every consecutive pair (and the wrap-around) is an edge.
inline bool is_cycle(const BoolMat& adj, const std::vector<Index>& cyc) {
  if (cyc.empty()) return false;
  for (std::size_t i = 0; i < cyc.size(); ++i) {
    const Index a = cyc[i], b = cyc[(i + 1) % cyc.size()];
    if (!adj(b, a)) return false;
  }
  return true;
}

// Signal graph of a pattern, built group by group. Order X U Zb Za Wb Wa Xn Y.
inline BoolMat signal_graph(const PatternSpec& p) {
  const Dimensions& d = p.dims;
  const Index sz[8] = {d.n_x(), d.n_u, d.n_z_b(), d.n_z_a, d.n_w_b(), d.n_w_a, d.n_x(), d.n_y};
  Index off[8];
  Index n = 0;
  for (int g = 0; g < 8; ++g) {
    off[g] = n;
    n += sz[g];
  }
  BoolMat G = BoolMat::Constant(n, n, false);
  // destination group of each block row, source group of each block column
  const int dst[4] = {6, 7, 2, 3};
  const int src[4] = {0, 1, 4, 5};
  for (int b = 0; b < kNumBlocks; ++b) {
    const BoolMat& B = p.blocks[static_cast<std::size_t>(b)];
    for (Index i = 0; i < B.rows(); ++i)
      for (Index j = 0; j < B.cols(); ++j)
        if (B(i, j)) G(off[dst[b / 4]] + i, off[src[b % 4]] + j) = true;
  }
  for (Index i = 0; i < p.p_b.rows(); ++i)
    for (Index j = 0; j < p.p_b.cols(); ++j)
      if (p.p_b(i, j)) G(off[4] + i, off[2] + j) = true;
  for (Index i = 0; i < p.p_a.rows(); ++i)
    for (Index j = 0; j < p.p_a.cols(); ++j)
      if (p.p_a(i, j)) G(off[5] + i, off[3] + j) = true;
  return G;
}

// ---- structures ------------------------------------------------------------

inline void randomize(ResNet& net, std::mt19937_64& rng, double scale = 0.7) {
  std::uniform_real_distribution<double> U(-scale, scale);
  for (auto& w : net.weights) w = w.unaryExpr([&](double) { return U(rng); });
  for (auto& b : net.biases) b = b.unaryExpr([&](double) { return U(rng); });
  net.bypass = net.bypass.unaryExpr([&](double) { return U(rng); });
}

inline Vec cat(std::initializer_list<Vec> parts) {
  Index n = 0;
  for (const Vec& v : parts) n += v.size();
  Vec out(n);
  Index k = 0;
  for (const Vec& v : parts) {
    out.segment(k, v.size()) = v;
    k += v.size();
  }
  return out;
}

inline const ResNet& net_of(const AugmentedModel& m, const std::string& name) {
  const AugBlock* b = m.aug.find(name);
  if (!b) throw Error("oracle: model has no block " + name);
  return b->net;
}

// One step written directly from the structure definitions:
//   state  P : x_b+ = f_base(x_b, u) + f_aug(x_b, x_a, u)
//          SO: x_b+ = f_aug(x_b, x_a, u, f_base(x_b, u))
//          SI: x_b+ = f_base(f_aug(x_b, x_a, u))
//   output P : y = h_base(x_b, u) + h_aug(x_b, x_a, u)
//          SO: y = h_aug(x_b, x_a, u, h_base(x_b, u))
//          SI: y = h_base(h_aug(x_b, x_a, u), u)
//   input     : u seen by the baseline is g_aug(u)
//   x_a+ = g_aug(x_b, x_a, u) for every dynamic part.
// A single baseline evaluation serves f_base and h_base, so a shaped z_b
// reaches both.
inline StepResult structure_step(const AugmentedModel& m, const StructureSpec& s, const Vec& x,
                                 const Vec& u) {
  const Index nxb = m.dims.n_x_b, nu = m.dims.n_u, ny = m.dims.n_y;
  const Index nxs = s.n_xa_state, nxo = s.n_xa_output;
  const Vec xb = x.head(nxb);
  const Vec xs = x.segment(nxb, nxs);
  const Vec xo = x.segment(nxb + nxs, nxo);

  Vec zb_x = xb, zb_u = u;
  Vec state_out, output_out;
  if (s.state == AugKind::SeriesInput) {
    state_out = net_of(m, "state").eval(cat({xb, xs, u}));
    zb_x = state_out.head(nxb);
    zb_u = state_out.segment(nxb, nu);
  }
  if (s.output == AugKind::SeriesInput) {
    output_out = net_of(m, "output").eval(cat({xb, xo, u}));
    zb_x = output_out.head(nxb);
  }
  if (s.input_series) zb_u = net_of(m, "input").eval(u);

  const Vec wb = m.base->eval(m.theta_base, cat({zb_x, zb_u}));
  const Vec fb = wb.head(nxb), hb = wb.tail(ny);

  Vec f = fb, y = hb, gs, go;
  switch (s.state) {
    case AugKind::Parallel:
      state_out = net_of(m, "state").eval(cat({xb, xs, u}));
      f = fb + state_out.head(nxb);
      gs = state_out.tail(nxs);
      break;
    case AugKind::SeriesOutput:
      state_out = net_of(m, "state").eval(cat({xb, xs, u, fb}));
      f = state_out.head(nxb);
      gs = state_out.tail(nxs);
      break;
    case AugKind::SeriesInput:
      gs = state_out.tail(nxs);
      break;
    case AugKind::None:
      break;
  }
  switch (s.output) {
    case AugKind::Parallel:
      output_out = net_of(m, "output").eval(cat({xb, xo, u}));
      y = hb + output_out.head(ny);
      go = output_out.tail(nxo);
      break;
    case AugKind::SeriesOutput:
      output_out = net_of(m, "output").eval(cat({xb, xo, u, hb}));
      y = output_out.head(ny);
      go = output_out.tail(nxo);
      break;
    case AugKind::SeriesInput:
      go = output_out.tail(nxo);
      break;
    case AugKind::None:
      break;
  }
  StepResult r;
  r.x_next = cat({f, gs, go});
  r.y = y;
  return r;
}

inline double rel_err(const Vec& a, const Vec& b) {
  const double scale = std::max({a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>(), 1e-12});
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

// ---- losses ----------------------------------------------------------------

// Truncated simulation loss from per-sample steps and encoder estimates:
//   (1 / (S T)) sum_s sum_t ||y_hat - y||^2 + sum_i (lambda (theta_i - theta0_i) / theta0_i)^2
inline double plain_loss(const AugmentedModel& m, const Mat& u, const Mat& y,
                         const std::vector<Index>& starts, Index T, double lambda) {
  const EncoderNet& e = m.encoder;
  double sse = 0.0;
  for (Index k : starts) {
    Vec x = encoder_estimate(e, y.middleRows(k - e.n_a, e.n_a), u.middleRows(k - e.n_b, e.n_b));
    for (Index t = 0; t < T; ++t) {
      const StepResult r = step(m, x, u.row(k + t).transpose());
      sse += (r.y - y.row(k + t).transpose()).squaredNorm();
      x = r.x_next;
    }
  }
  double reg = 0.0;
  for (Index i = 0; i < m.theta_base.size(); ++i) {
    const double d = lambda * (m.theta_base(i) - m.theta_base0(i)) / m.theta_base0(i);
    reg += d * d;
  }
  return sse / (static_cast<double>(starts.size()) * static_cast<double>(T)) + reg;
}

// ---- signals ---------------------------------------------------------------

// Magnitudes of the one-sided DFT of x, evaluated bin by bin with a
// recurrence-free direct sum.
inline std::vector<double> dft_magnitudes(const Vec& x) {
  const Index N = x.size();
  std::vector<double> mag(static_cast<std::size_t>(N / 2 + 1));
  std::vector<std::complex<double>> tw(static_cast<std::size_t>(N));
  for (Index k = 0; k < N; ++k) tw[static_cast<std::size_t>(k)] = std::polar(1.0, -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(N));
  for (Index b = 0; b <= N / 2; ++b) {
    std::complex<double> acc = 0.0;
    Index idx = 0;
    for (Index k = 0; k < N; ++k) {
      acc += x(k) * tw[static_cast<std::size_t>(idx)];
      idx += b;
      if (idx >= N) idx -= N;
    }
    mag[static_cast<std::size_t>(b)] = std::abs(acc);
  }
  return mag;
}

inline double rms(const Vec& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

}  // namespace lfr::oracle
