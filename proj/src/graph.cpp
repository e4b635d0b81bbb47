#include "lfr/graph.hpp"

#include "lfr/structures.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <set>

namespace lfr {

namespace {

// Block -> (destination group, source group).
constexpr Group kRowGroup[4] = {Group::Xn, Group::Y, Group::Zb, Group::Za};
constexpr Group kColGroup[4] = {Group::X, Group::U, Group::Wb, Group::Wa};

Group row_group(Blk b) { return kRowGroup[static_cast<int>(b) / 4]; }
Group col_group(Blk b) { return kColGroup[static_cast<int>(b) % 4]; }

BoolMat bool_from_json(const nlohmann::json& j, Index rows, Index cols, const std::string& what) {
  if (j.is_boolean()) return BoolMat::Constant(rows, cols, j.get<bool>());
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) {
    throw DimensionError(what + ": expected " + std::to_string(rows) + " rows");
  }
  BoolMat m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw DimensionError(what + ": expected " + std::to_string(cols) + " columns");
    }
    for (Index k = 0; k < cols; ++k) {
      const auto& e = row[static_cast<std::size_t>(k)];
      m(i, k) = e.is_boolean() ? e.get<bool>() : e.get<double>() != 0.0;
    }
  }
  return m;
}

nlohmann::json bool_to_json(const BoolMat& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k) ? 1 : 0);
    j.push_back(row);
  }
  return j;
}

BoolMat bool_product(const BoolMat& a, const BoolMat& b) {
  BoolMat c = BoolMat::Constant(a.rows(), b.cols(), false);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k)
      if (a(i, k))
        for (Index j = 0; j < b.cols(); ++j) c(i, j) = c(i, j) || b(k, j);
  return c;
}

BoolMat blockdiag(const BoolMat& a, const BoolMat& b) {
  BoolMat m = BoolMat::Constant(a.rows() + b.rows(), a.cols() + b.cols(), false);
  m.topLeftCorner(a.rows(), a.cols()) = a;
  m.bottomRightCorner(b.rows(), b.cols()) = b;
  return m;
}

// det of a matrix whose nonzero pattern admits the given topological order
// (edges j -> i for entry (i, j), i != j). Elimination without pivoting in
// that order; with a strictly triangular off-diagonal part it returns the
// diagonal product.
double ordered_det(const Mat& a, const std::vector<Index>& order) {
  const Index n = a.rows();
  Mat p(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) p(i, j) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  double det = 1.0;
  for (Index k = 0; k < n; ++k) {
    const double piv = p(k, k);
    det *= piv;
    if (piv == 0.0) return 0.0;
    for (Index i = k + 1; i < n; ++i) {
      if (p(i, k) == 0.0) continue;
      const double f = p(i, k) / piv;
      p.row(i).tail(n - k) -= f * p.row(k).tail(n - k);
    }
  }
  return det;
}

}  // namespace

const char* group_name(Group g) {
  static const char* names[] = {"x", "u", "z_b", "z_a", "w_b", "w_a", "x+", "y"};
  return names[static_cast<int>(g)];
}

PatternSpec PatternSpec::empty(const Dimensions& d) {
  d.validate();
  PatternSpec p;
  p.dims = d;
  for (int i = 0; i < kNumBlocks; ++i) {
    const Blk b = static_cast<Blk>(i);
    p.blocks[i] = BoolMat::Constant(block_rows(d, b), block_cols(d, b), false);
  }
  p.p_b = BoolMat::Constant(d.n_w_b(), d.n_z_b(), true);
  p.p_a = BoolMat::Constant(d.n_w_a, d.n_z_a, true);
  return p;
}

void PatternSpec::validate() const {
  dims.validate();
  for (int i = 0; i < kNumBlocks; ++i) {
    const Blk b = static_cast<Blk>(i);
    if (blocks[i].rows() != block_rows(dims, b) || blocks[i].cols() != block_cols(dims, b)) {
      throw DimensionError(std::string("pattern block ") + block_name(b) + " has wrong shape");
    }
  }
  if (p_b.rows() != dims.n_w_b() || p_b.cols() != dims.n_z_b()) {
    throw DimensionError("baseline pattern has wrong shape");
  }
  if (p_a.rows() != dims.n_w_a || p_a.cols() != dims.n_z_a) {
    throw DimensionError("learning component pattern has wrong shape");
  }
}

PatternSpec PatternSpec::from_json(const nlohmann::json& j) {
  const auto& jd = j.at("dims");
  Dimensions d;
  d.n_x_b = jd.value("n_x_b", Index{1});
  d.n_x_a = jd.value("n_x_a", Index{0});
  d.n_u = jd.value("n_u", Index{1});
  d.n_y = jd.value("n_y", Index{1});
  d.n_z_a = jd.value("n_z_a", Index{0});
  d.n_w_a = jd.value("n_w_a", Index{0});
  PatternSpec p = empty(d);
  if (j.contains("blocks")) {
    const auto& jb = j.at("blocks");
    if (jb.is_array()) {
      for (const auto& name : jb) {
        const Blk b = parse_block(name.get<std::string>());
        p[b].setConstant(true);
      }
    } else {
      for (auto it = jb.begin(); it != jb.end(); ++it) {
        const Blk b = parse_block(it.key());
        p[b] = bool_from_json(it.value(), block_rows(d, b), block_cols(d, b), it.key());
      }
    }
  }
  if (j.contains("baseline_pattern")) {
    p.p_b = bool_from_json(j.at("baseline_pattern"), d.n_w_b(), d.n_z_b(), "baseline_pattern");
  }
  p.c2_declared = j.value("c2", true);
  p.validate();
  return p;
}

nlohmann::json PatternSpec::to_json() const {
  nlohmann::json j;
  j["dims"] = {{"n_x_b", dims.n_x_b}, {"n_x_a", dims.n_x_a}, {"n_u", dims.n_u},
               {"n_y", dims.n_y},     {"n_z_a", dims.n_z_a}, {"n_w_a", dims.n_w_a}};
  nlohmann::json jb = nlohmann::json::object();
  for (int i = 0; i < kNumBlocks; ++i) {
    if (blocks[i].size() > 0 && blocks[i].any()) jb[block_name(static_cast<Blk>(i))] = bool_to_json(blocks[i]);
  }
  j["blocks"] = jb;
  j["baseline_pattern"] = bool_to_json(p_b);
  j["c2"] = c2_declared;
  return j;
}

PatternSpec matrix_pattern(const Dimensions& d, const LfrMatrix& W, const TrainableMask& trainable) {
  PatternSpec p = PatternSpec::empty(d);
  W.validate(d);
  for (int i = 0; i < kNumBlocks; ++i) {
    if (trainable[i]) {
      p.blocks[i].setConstant(true);
    } else {
      p.blocks[i] = W.blocks[i].array() != 0.0;
    }
  }
  return p;
}

PatternSpec model_pattern(const AugmentedModel& m) {
  PatternSpec p = matrix_pattern(m.dims, m.W, m.trainable);
  if (m.base) {
    p.p_b = m.base->jacobian_pattern();
    p.c2_declared = m.base->c2_declared();
  } else {
    p.c2_declared = false;
  }
  if (!m.aug.blocks.empty()) p.p_a = m.aug.pattern();
  p.validate();
  return p;
}

std::string BlockAdjacency::node_name(Index n) const {
  for (int g = kNumGroups - 1; g >= 0; --g) {
    if (size[g] > 0 && n >= offset[g]) {
      return std::string(group_name(static_cast<Group>(g))) + "[" + std::to_string(n - offset[g]) + "]";
    }
  }
  return "?";
}

BlockAdjacency build_adjacency(const PatternSpec& pattern) {
  pattern.validate();
  const Dimensions& d = pattern.dims;
  BlockAdjacency a;
  a.size = {d.n_x(), d.n_u, d.n_z_b(), d.n_z_a, d.n_w_b(), d.n_w_a, d.n_x(), d.n_y};
  Index off = 0;
  for (int g = 0; g < kNumGroups; ++g) {
    a.offset[g] = off;
    off += a.size[g];
  }
  a.P = BoolMat::Constant(off, off, false);
  auto put = [&](Group r, Group c, const BoolMat& m) {
    a.P.block(a.offset[static_cast<int>(r)], a.offset[static_cast<int>(c)], m.rows(), m.cols()) = m;
  };
  for (int i = 0; i < kNumBlocks; ++i) {
    const Blk b = static_cast<Blk>(i);
    put(row_group(b), col_group(b), pattern.blocks[i]);
  }
  put(Group::Wb, Group::Zb, pattern.p_b);
  put(Group::Wa, Group::Za, pattern.p_a);
  return a;
}

BlockAdjacency build_adjacency(const AugmentedModel& m) { return build_adjacency(model_pattern(m)); }

AcyclicResult is_acyclic(const BoolMat& adj) {
  const Index n = adj.rows();
  if (adj.cols() != n) throw DimensionError("adjacency must be square");
  AcyclicResult r;
  std::vector<Index> indeg(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (adj(i, j)) ++indeg[static_cast<std::size_t>(i)];
  std::deque<Index> ready;
  for (Index i = 0; i < n; ++i)
    if (indeg[static_cast<std::size_t>(i)] == 0) ready.push_back(i);
  while (!ready.empty()) {
    const Index j = ready.front();
    ready.pop_front();
    r.order.push_back(j);
    for (Index i = 0; i < n; ++i)
      if (adj(i, j) && --indeg[static_cast<std::size_t>(i)] == 0) ready.push_back(i);
  }
  if (static_cast<Index>(r.order.size()) == n) return r;

  // Every node left over has a predecessor that is also left over; walking
  // predecessors must revisit a node.
  r.acyclic = false;
  r.order.clear();
  Index cur = 0;
  while (indeg[static_cast<std::size_t>(cur)] == 0) ++cur;
  std::vector<Index> seen_at(static_cast<std::size_t>(n), -1);
  std::vector<Index> walk;
  while (seen_at[static_cast<std::size_t>(cur)] < 0) {
    seen_at[static_cast<std::size_t>(cur)] = static_cast<Index>(walk.size());
    walk.push_back(cur);
    Index pred = 0;
    while (!(adj(cur, pred) && indeg[static_cast<std::size_t>(pred)] > 0)) ++pred;
    cur = pred;
  }
  // walk follows edges backwards; reverse the loop part.
  std::vector<Index> loop(walk.begin() + seen_at[static_cast<std::size_t>(cur)], walk.end());
  std::reverse(loop.begin(), loop.end());
  r.cycle = loop;
  return r;
}

AcyclicResult is_acyclic(const BlockAdjacency& adj) { return is_acyclic(adj.P); }

NilpotencyResult check_nilpotent(const BoolMat& dzw, const BoolMat& p_b, const BoolMat& p_a) {
  const BoolMat phi = blockdiag(p_b, p_a);
  if (dzw.cols() != phi.rows()) throw DimensionError("check_nilpotent: D_zw columns must match n_w");
  const BoolMat M = bool_product(dzw, phi);
  if (M.rows() != M.cols()) throw DimensionError("check_nilpotent: M must be square");
  NilpotencyResult r;
  BoolMat pw = M;
  const Index limit = std::max<Index>(M.rows(), 1);
  for (Index m = 1; m <= limit; ++m) {
    if (!pw.any()) {
      r.nilpotent = true;
      r.index = m;
      return r;
    }
    pw = bool_product(pw, M);
  }
  return r;
}

BoolMat dzw_pattern(const PatternSpec& p) {
  const Dimensions& d = p.dims;
  const Index nzb = d.n_z_b(), nwb = d.n_w_b();
  BoolMat m = BoolMat::Constant(nzb + d.n_z_a, nwb + d.n_w_a, false);
  m.block(0, 0, nzb, nwb) = p[Blk::D_zw_bb];
  m.block(0, nwb, nzb, d.n_w_a) = p[Blk::D_zw_ba];
  m.block(nzb, 0, d.n_z_a, nwb) = p[Blk::D_zw_ab];
  m.block(nzb, nwb, d.n_z_a, d.n_w_a) = p[Blk::D_zw_aa];
  return m;
}

std::vector<std::string> detect_structure(const BlockAdjacency& adj, const Dimensions& dims) {
  std::set<std::string> found;
  for (const StructureSpec& spec : structure_catalog(dims.n_x_a)) {
    const StructureLayout L = assemble_structure(spec, dims.n_x_b, dims.n_u, dims.n_y, {});
    if (!(L.dims == dims)) continue;
    TrainableMask none{};
    const BlockAdjacency cand = build_adjacency(matrix_pattern(L.dims, L.W, none));
    bool covered = true;
    for (int i = 0; i < kNumBlocks && covered; ++i) {
      const Blk b = static_cast<Blk>(i);
      const BoolMat have = adj.block(row_group(b), col_group(b));
      const BoolMat allow = cand.block(row_group(b), col_group(b));
      covered = !(have.array() && !allow.array()).any();
    }
    if (covered)
      for (const auto& l : spec.labels()) found.insert(l);
  }
  return {found.begin(), found.end()};
}

nlohmann::json WellPosednessReport::to_json() const {
  nlohmann::json j;
  j["acyclic"] = acyclic;
  j["topological_order"] = topological_order;
  j["cycle"] = cycle;
  j["nilpotency_index"] = nilpotency_index ? nlohmann::json(*nilpotency_index) : nlohmann::json();
  j["c2_declared"] = c2_declared;
  j["samples"] = samples;
  if (sampled_jacobian_ok) {
    j["sampled_jacobian_ok"] = *sampled_jacobian_ok;
    j["min_abs_det"] = min_abs_det;
    j["max_abs_det"] = max_abs_det;
  }
  if (sampled_pattern_ok) j["sampled_pattern_ok"] = *sampled_pattern_ok;
  j["verdict"] = verdict;
  return j;
}

namespace {

void structural_part(const PatternSpec& p, WellPosednessReport& r) {
  const BlockAdjacency adj = build_adjacency(p);
  const AcyclicResult ac = is_acyclic(adj);
  r.acyclic = ac.acyclic;
  r.topological_order = ac.order;
  for (Index n : ac.cycle) r.cycle.push_back(adj.node_name(n));
  const NilpotencyResult nil = check_nilpotent(dzw_pattern(p), p.p_b, p.p_a);
  if (nil.nilpotent) r.nilpotency_index = nil.index;
  r.c2_declared = p.c2_declared;
  r.verdict = r.acyclic && r.c2_declared;
}

}  // namespace

WellPosednessReport check_well_posed(const PatternSpec& p) {
  WellPosednessReport r;
  try {
    structural_part(p, r);
  } catch (const std::exception&) {
    r.verdict = false;
  }
  return r;
}

WellPosednessReport check_well_posed(const AugmentedModel& m, Index sample_count, std::uint64_t seed) {
  WellPosednessReport r;
  PatternSpec p;
  try {
    p = model_pattern(m);
    structural_part(p, r);
  } catch (const std::exception&) {
    r.verdict = false;
    return r;
  }
  if (sample_count <= 0 || !m.base) return r;

  try {
    const Dimensions& d = m.dims;
    const Index nzb = d.n_z_b(), nwb = d.n_w_b();
    const Index nz = nzb + d.n_z_a, nw = nwb + d.n_w_a;
    Mat dzw = Mat::Zero(nz, nw);
    dzw.block(0, 0, nzb, nwb) = m.W[Blk::D_zw_bb];
    dzw.block(0, nwb, nzb, d.n_w_a) = m.W[Blk::D_zw_ba];
    dzw.block(nzb, 0, d.n_z_a, nwb) = m.W[Blk::D_zw_ab];
    dzw.block(nzb, nwb, d.n_z_a, d.n_w_a) = m.W[Blk::D_zw_aa];

    const BoolMat M = bool_product(dzw_pattern(p), blockdiag(p.p_b, p.p_a));
    const AcyclicResult order = is_acyclic(M);
    const BoolMat pb = m.base->jacobian_pattern();

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    bool det_ok = true, pattern_ok = true;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (Index s = 0; s < sample_count; ++s) {
      Vec z(nz);
      for (Index i = 0; i < nz; ++i) z(i) = U(rng);
      const Mat jb = m.base->jacobian_z(m.theta_base, z.head(nzb));
      for (Index i = 0; i < jb.rows(); ++i)
        for (Index k = 0; k < jb.cols(); ++k)
          if (jb(i, k) != 0.0 && !pb(i, k)) pattern_ok = false;
      Mat dphi = Mat::Zero(nw, nz);
      dphi.topLeftCorner(nwb, nzb) = jb;
      if (d.n_z_a > 0 && d.n_w_a > 0) dphi.bottomRightCorner(d.n_w_a, d.n_z_a) = m.aug.jacobian(z.tail(d.n_z_a));
      const Mat a = Mat::Identity(nz, nz) - dzw * dphi;
      const double det = order.acyclic ? ordered_det(a, order.order) : a.partialPivLu().determinant();
      lo = std::min(lo, std::abs(det));
      hi = std::max(hi, std::abs(det));
      if (!(std::abs(det) > 1e-9)) det_ok = false;
    }
    r.samples = sample_count;
    r.sampled_jacobian_ok = det_ok;
    r.sampled_pattern_ok = pattern_ok;
    r.min_abs_det = lo;
    r.max_abs_det = hi;
  } catch (const std::exception&) {
    r.sampled_jacobian_ok = false;
  }
  return r;
}

}  // namespace lfr
