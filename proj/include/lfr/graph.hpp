#pragma once

#include "lfr/model_core.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace lfr {

enum class Group : int { X, U, Zb, Za, Wb, Wa, Xn, Y };
constexpr int kNumGroups = 8;
const char* group_name(Group g);

// Boolean sparsity of W plus the component patterns. A block entry is true
// when the W entry is nonzero or the block is trainable.
struct PatternSpec {
  Dimensions dims;
  std::array<BoolMat, kNumBlocks> blocks;
  BoolMat p_b;  // (n_w_b x n_z_b)
  BoolMat p_a;  // (n_w_a x n_z_a)
  bool c2_declared = true;

  BoolMat& operator[](Blk b) { return blocks[static_cast<int>(b)]; }
  const BoolMat& operator[](Blk b) const { return blocks[static_cast<int>(b)]; }

  static PatternSpec empty(const Dimensions& d);
  void validate() const;
  // {"dims": {...}, "blocks": {"C_z_b": true, "D_zw_ab": [[0, 1], ...]},
  //  "baseline_pattern": [[...]] (default all-true), "c2": true}
  static PatternSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

PatternSpec model_pattern(const AugmentedModel& m);
PatternSpec matrix_pattern(const Dimensions& d, const LfrMatrix& W, const TrainableMask& trainable);

// Signal-level adjacency over all scalar signals. Rows are destinations:
// P(i, j) is true when signal j feeds signal i.
struct BlockAdjacency {
  std::array<Index, kNumGroups> size{};
  std::array<Index, kNumGroups> offset{};
  BoolMat P;

  Index n_nodes() const { return P.rows(); }
  Index node(Group g, Index i) const { return offset[static_cast<int>(g)] + i; }
  auto block(Group r, Group c) const {
    return P.block(offset[static_cast<int>(r)], offset[static_cast<int>(c)],
                   size[static_cast<int>(r)], size[static_cast<int>(c)]);
  }
  std::string node_name(Index n) const;
};

BlockAdjacency build_adjacency(const PatternSpec& pattern);
BlockAdjacency build_adjacency(const AugmentedModel& m);

struct AcyclicResult {
  bool acyclic = true;
  std::vector<Index> order;  // topological, when acyclic
  std::vector<Index> cycle;  // one cycle in edge direction, when not
};

// Kahn's algorithm; the generic overload takes any square adjacency with
// rows as destinations.
AcyclicResult is_acyclic(const BoolMat& adj);
AcyclicResult is_acyclic(const BlockAdjacency& adj);

struct NilpotencyResult {
  bool nilpotent = false;
  Index index = 0;  // smallest m with M^m = 0 (0 when not nilpotent)
};

// M = dzw * blockdiag(p_b, p_a) in boolean arithmetic.
NilpotencyResult check_nilpotent(const BoolMat& dzw, const BoolMat& p_b, const BoolMat& p_a);

// Full (n_z x n_w) D_zw pattern assembled from the four blocks.
BoolMat dzw_pattern(const PatternSpec& p);

// Catalog labels whose generated W pattern covers every W-derived edge of
// adj, sorted and without repeats. Empty means the pattern fits no catalog
// structure.
std::vector<std::string> detect_structure(const BlockAdjacency& adj, const Dimensions& dims);

struct WellPosednessReport {
  bool acyclic = false;
  std::vector<Index> topological_order;
  std::vector<std::string> cycle;
  std::optional<Index> nilpotency_index;
  bool c2_declared = false;
  Index samples = 0;
  std::optional<bool> sampled_jacobian_ok;  // all |det(I - D_zw Dphi)| > 1e-9
  std::optional<bool> sampled_pattern_ok;   // baseline pattern covers the Jacobian
  double min_abs_det = 0.0;
  double max_abs_det = 0.0;
  bool verdict = false;

  nlohmann::json to_json() const;
};

// Diagnostics never throw; sampling uses a fixed seed.
WellPosednessReport check_well_posed(const AugmentedModel& m, Index sample_count,
                                     std::uint64_t seed = 0);
WellPosednessReport check_well_posed(const PatternSpec& p);

}  // namespace lfr
