#pragma once

#include "lfr/model_core.hpp"

#include <string>
#include <vector>

namespace lfr {

enum class AugKind { None, Parallel, SeriesOutput, SeriesInput };

// A structured augmentation: an optional state-level part, an optional
// output-level part and an optional series-input shaping of u.
//
// Signal layout (fixed, so checkpoints are reproducible):
//   x   = [x_b; x_a_state; x_a_output]
//   z_a = [state block | output block | input block]
//   state block  P : (x_b, x_a_state, u)            -> (f, g)
//                SO: (x_b, x_a_state, u, f_base)    -> (f, g)
//                SI: (x_b, x_a_state, u)            -> (shape of z_b, g)
//   output block P : (x_b, x_a_output, u)           -> (h, g)
//                SO: (x_b, x_a_output, u, h_base)   -> (h, g)
//                SI: (x_b, x_a_output, u)           -> (shape of x_b, g)
//   input block     : (u)                            -> (shape of u)
// phi_base is evaluated once per step, so any shaping of z_b feeds both
// f_base and h_base.
struct StructureSpec {
  AugKind state = AugKind::None;
  Index n_xa_state = 0;
  AugKind output = AugKind::None;
  Index n_xa_output = 0;
  bool input_series = false;

  Index n_x_a() const { return n_xa_state + n_xa_output; }
  // Component labels, e.g. {"S-DP"} or {"S-SP", "O-DSO"} or {"S-SP-I"}.
  std::vector<std::string> labels() const;
  std::string label() const;  // labels joined by '+'
  void validate() const;
  DzwMode mode() const;
};

// Accepts the catalog labels ("S-SP", ..., "O-DSI", "S-SP-I", "S-DP-I", with
// "O-SSP" as an alias of "O-SSO") joined by '+'. n_x_a_dynamic is the
// augmented state count given to each dynamic part.
StructureSpec parse_structure(const std::string& label, Index n_x_a_dynamic);
bool is_catalog_label(const std::string& label);

struct StructureLayout {
  Dimensions dims;
  LfrMatrix W;
  DzwMode mode = DzwMode::Zero;
  LearningComponent aug;  // networks allocated, all parameters zero
};

StructureLayout assemble_structure(const StructureSpec& spec, Index n_x_b, Index n_u, Index n_y,
                                   const std::vector<Index>& hidden);

// W blocks are fixed (non-trainable); theta_base is trainable.
AugmentedModel make_structured_model(const StructureSpec& spec, BaselinePtr base,
                                     const std::vector<Index>& hidden = {8, 8});

AugmentedModel make_state_structure(AugKind kind, bool dynamic, BaselinePtr base, Index n_x_a,
                                    const std::vector<Index>& hidden = {8, 8});
AugmentedModel make_output_structure(AugKind kind, bool dynamic, BaselinePtr base, Index n_x_a,
                                     const std::vector<Index>& hidden = {8, 8});

enum class Extra { InputSeries, OutputSeriesDynamic };

// Adds an input-series or a dynamic series-output part to a state-level
// model. Existing networks and parameters carry over.
AugmentedModel compose_structures(const AugmentedModel& state_model, Extra extra,
                                  Index n_x_a_extra = 1,
                                  const std::vector<Index>& hidden = {8, 8});

// Fully parameterized W with a single dense ResNet; every block allowed by
// mode is trainable. fix_zb pins z_b = (x_b, u).
AugmentedModel make_flexible_model(BaselinePtr base, Index n_x_a, Index n_z_a, Index n_w_a,
                                   DzwMode mode, const std::vector<Index>& hidden = {8, 8},
                                   bool fix_zb = false);

// Every structure over the given base dimensions whose augmented state count
// is exactly n_x_a, including compositions and all state/output splits.
std::vector<StructureSpec> structure_catalog(Index n_x_a);

}  // namespace lfr
