#include "lfr/structures.hpp"

#include "lfr/graph.hpp"

#include <regex>
#include <sstream>

namespace lfr {

namespace {

const char* kind_code(AugKind k) {
  switch (k) {
    case AugKind::Parallel: return "P";
    case AugKind::SeriesOutput: return "SO";
    case AugKind::SeriesInput: return "SI";
    case AugKind::None: break;
  }
  return "";
}

AugKind kind_from_code(const std::string& c) {
  if (c == "P") return AugKind::Parallel;
  if (c == "SO") return AugKind::SeriesOutput;
  if (c == "SI") return AugKind::SeriesInput;
  throw ConfigError("unknown augmentation kind '" + c + "'");
}

}  // namespace

std::vector<std::string> StructureSpec::labels() const {
  std::vector<std::string> out;
  if (state != AugKind::None) {
    std::string l = std::string("S-") + (n_xa_state > 0 ? "D" : "S") + kind_code(state);
    if (input_series) l += "-I";
    out.push_back(l);
  }
  if (output != AugKind::None) {
    out.push_back(std::string("O-") + (n_xa_output > 0 ? "D" : "S") + kind_code(output));
  }
  return out;
}

std::string StructureSpec::label() const {
  std::string s;
  for (const auto& l : labels()) s += (s.empty() ? "" : "+") + l;
  return s;
}

void StructureSpec::validate() const {
  if (state == AugKind::None && output == AugKind::None) {
    throw ConfigError("structure needs a state-level or output-level part");
  }
  if (n_xa_state < 0 || n_xa_output < 0) throw ConfigError("augmented state counts must be >= 0");
  if (state == AugKind::None && n_xa_state > 0) throw ConfigError("augmented states without a state part");
  if (output == AugKind::None && n_xa_output > 0) throw ConfigError("augmented states without an output part");
  if (input_series && state == AugKind::None) throw ConfigError("input series needs a state-level part");
  if (input_series && state == AugKind::SeriesInput) {
    throw ConfigError("state series-input already shapes u; input series cannot be added");
  }
  if (state == AugKind::SeriesInput && output == AugKind::SeriesInput) {
    throw ConfigError("state and output series-input would both shape x_b");
  }
  (void)mode();
}

DzwMode StructureSpec::mode() const {
  const bool ab = state == AugKind::SeriesOutput || output == AugKind::SeriesOutput;
  const bool ba = state == AugKind::SeriesInput || output == AugKind::SeriesInput || input_series;
  if (ab && ba) {
    throw ModeError("structure " + label() + " needs both D_zw_ab and D_zw_ba; only one is supported");
  }
  if (ab) return DzwMode::AbOnly;
  if (ba) return DzwMode::BaOnly;
  return DzwMode::Zero;
}

StructureSpec parse_structure(const std::string& label, Index n_x_a_dynamic) {
  static const std::regex re(R"(^([SO])-([SD])(P|SO|SI|SP)(-I)?$)");
  StructureSpec spec;
  bool have_state = false, have_output = false;
  std::stringstream ss(label);
  std::string part;
  while (std::getline(ss, part, '+')) {
    std::smatch m;
    if (!std::regex_match(part, m, re)) throw ConfigError("unknown structure label '" + part + "'");
    const bool is_state = m[1] == "S";
    const bool dynamic = m[2] == "D";
    std::string code = m[3];
    if (code == "SP") {
      // O-SSP is an older spelling of the static series-output label.
      if (is_state || dynamic) throw ConfigError("unknown structure label '" + part + "'");
      code = "SO";
    }
    const bool input = m[4].matched;
    if (input && !is_state) throw ConfigError("input series applies to state-level labels only");
    if (dynamic && n_x_a_dynamic < 1) {
      throw ConfigError("dynamic structure '" + part + "' needs n_x_a >= 1");
    }
    const Index nxa = dynamic ? n_x_a_dynamic : 0;
    if (is_state) {
      if (have_state) throw ConfigError("more than one state-level part in '" + label + "'");
      have_state = true;
      spec.state = kind_from_code(code);
      spec.n_xa_state = nxa;
      spec.input_series = input;
    } else {
      if (have_output) throw ConfigError("more than one output-level part in '" + label + "'");
      have_output = true;
      spec.output = kind_from_code(code);
      spec.n_xa_output = nxa;
    }
  }
  if (!have_state && !have_output) throw ConfigError("empty structure label");
  spec.validate();
  return spec;
}

bool is_catalog_label(const std::string& label) {
  static const char* labels[] = {"S-SP", "S-SSO", "S-SSI", "S-DP", "S-DSO", "S-DSI", "O-SP",
                                 "O-SSO", "O-SSP", "O-SSI", "O-DP", "O-DSO", "O-DSI", "S-SP-I",
                                 "S-DP-I"};
  for (const char* l : labels)
    if (label == l) return true;
  return false;
}

StructureLayout assemble_structure(const StructureSpec& spec, Index nxb, Index nu, Index ny,
                                   const std::vector<Index>& hidden) {
  spec.validate();
  const Index nxs = spec.n_xa_state;
  const Index nxo = spec.n_xa_output;

  StructureLayout L;
  L.mode = spec.mode();
  L.dims = Dimensions{nxb, nxs + nxo, nu, ny, 0, 0};

  Index zs = -1, ws = -1, zo = -1, wo = -1, zi = -1, wi = -1;
  auto add_block = [&](const std::string& name, Index z_size, std::vector<Head> heads) {
    AugBlock b;
    b.name = name;
    b.z_offset = L.dims.n_z_a;
    b.w_offset = L.dims.n_w_a;
    b.z_size = z_size;
    Index off = 0;
    for (auto& h : heads) {
      h.offset = off;
      off += h.size;
    }
    b.w_size = off;
    b.heads = std::move(heads);
    b.net = ResNet(z_size, hidden, b.w_size);
    L.dims.n_z_a += z_size;
    L.dims.n_w_a += b.w_size;
    L.aug.blocks.push_back(std::move(b));
    return L.aug.blocks.back();
  };

  if (spec.state != AugKind::None) {
    const bool so = spec.state == AugKind::SeriesOutput;
    const bool si = spec.state == AugKind::SeriesInput;
    std::vector<Head> heads{{si ? "shape_z" : "f", 0, si ? nxb + nu : nxb}};
    if (nxs > 0) heads.push_back({"g", 0, nxs});
    const auto& b = add_block("state", nxb + nxs + nu + (so ? nxb : 0), heads);
    zs = b.z_offset;
    ws = b.w_offset;
  }
  if (spec.output != AugKind::None) {
    const bool so = spec.output == AugKind::SeriesOutput;
    const bool si = spec.output == AugKind::SeriesInput;
    std::vector<Head> heads{{si ? "shape_x" : "h", 0, si ? nxb : ny}};
    if (nxo > 0) heads.push_back({"g", 0, nxo});
    const auto& b = add_block("output", nxb + nxo + nu + (so ? ny : 0), heads);
    zo = b.z_offset;
    wo = b.w_offset;
  }
  if (spec.input_series) {
    const auto& b = add_block("input", nu, {{"shape_u", 0, nu}});
    zi = b.z_offset;
    wi = b.w_offset;
  }

  LfrMatrix& W = L.W;
  W = LfrMatrix::zeros(L.dims);

  // Baseline wiring: z_b = (x_b, u), x_b+ = f_base, y = h_base, unless a
  // series part takes over the corresponding rows.
  const bool shape_zb_x = spec.state == AugKind::SeriesInput || spec.output == AugKind::SeriesInput;
  const bool shape_zb_u = spec.state == AugKind::SeriesInput || spec.input_series;
  for (Index i = 0; i < nxb; ++i) {
    if (!shape_zb_x) W[Blk::C_z_b](i, i) = 1.0;
    if (spec.state != AugKind::SeriesOutput) W[Blk::B_w_b](i, i) = 1.0;
  }
  for (Index i = 0; i < nu; ++i)
    if (!shape_zb_u) W[Blk::D_zu_b](nxb + i, i) = 1.0;
  for (Index i = 0; i < ny; ++i)
    if (spec.output != AugKind::SeriesOutput) W[Blk::D_yw_b](i, nxb + i) = 1.0;

  if (zs >= 0) {
    for (Index i = 0; i < nxb; ++i) W[Blk::C_z_a](zs + i, i) = 1.0;
    for (Index i = 0; i < nxs; ++i) W[Blk::C_z_a](zs + nxb + i, nxb + i) = 1.0;
    for (Index i = 0; i < nu; ++i) W[Blk::D_zu_a](zs + nxb + nxs + i, i) = 1.0;
    Index head1 = nxb;
    switch (spec.state) {
      case AugKind::Parallel:
        for (Index i = 0; i < nxb; ++i) W[Blk::B_w_a](i, ws + i) = 1.0;
        break;
      case AugKind::SeriesOutput:
        for (Index i = 0; i < nxb; ++i) {
          W[Blk::D_zw_ab](zs + nxb + nxs + nu + i, i) = 1.0;
          W[Blk::B_w_a](i, ws + i) = 1.0;
        }
        break;
      case AugKind::SeriesInput:
        head1 = nxb + nu;
        for (Index i = 0; i < nxb + nu; ++i) W[Blk::D_zw_ba](i, ws + i) = 1.0;
        break;
      case AugKind::None:
        break;
    }
    for (Index i = 0; i < nxs; ++i) W[Blk::B_w_a](nxb + i, ws + head1 + i) = 1.0;
  }

  if (zo >= 0) {
    for (Index i = 0; i < nxb; ++i) W[Blk::C_z_a](zo + i, i) = 1.0;
    for (Index i = 0; i < nxo; ++i) W[Blk::C_z_a](zo + nxb + i, nxb + nxs + i) = 1.0;
    for (Index i = 0; i < nu; ++i) W[Blk::D_zu_a](zo + nxb + nxo + i, i) = 1.0;
    Index head1 = ny;
    switch (spec.output) {
      case AugKind::Parallel:
        for (Index i = 0; i < ny; ++i) W[Blk::D_yw_a](i, wo + i) = 1.0;
        break;
      case AugKind::SeriesOutput:
        for (Index i = 0; i < ny; ++i) {
          W[Blk::D_zw_ab](zo + nxb + nxo + nu + i, nxb + i) = 1.0;
          W[Blk::D_yw_a](i, wo + i) = 1.0;
        }
        break;
      case AugKind::SeriesInput:
        head1 = nxb;
        for (Index i = 0; i < nxb; ++i) W[Blk::D_zw_ba](i, wo + i) = 1.0;
        break;
      case AugKind::None:
        break;
    }
    for (Index i = 0; i < nxo; ++i) W[Blk::B_w_a](nxb + nxs + i, wo + head1 + i) = 1.0;
  }

  if (zi >= 0) {
    for (Index i = 0; i < nu; ++i) {
      W[Blk::D_zu_a](zi + i, i) = 1.0;
      W[Blk::D_zw_ba](nxb + i, wi + i) = 1.0;
    }
  }
  return L;
}

AugmentedModel make_structured_model(const StructureSpec& spec, BaselinePtr base,
                                     const std::vector<Index>& hidden) {
  if (!base) throw ConfigError("structure factory: null baseline");
  StructureLayout L = assemble_structure(spec, base->n_x(), base->n_u(), base->n_y(), hidden);
  AugmentedModel m;
  m.dims = L.dims;
  m.W = std::move(L.W);
  m.mode = L.mode;
  m.trainable.fill(false);
  m.theta_base = base->nominal_theta();
  m.theta_base0 = m.theta_base;
  m.base = std::move(base);
  m.aug = std::move(L.aug);
  m.norm = NormalizationTransforms::identity(m.dims.n_u, m.dims.n_y, m.dims.n_x_b);
  m.structure = spec.label();
  m.validate();
  return m;
}

AugmentedModel make_state_structure(AugKind kind, bool dynamic, BaselinePtr base, Index n_x_a,
                                    const std::vector<Index>& hidden) {
  if (kind == AugKind::None) throw ConfigError("state structure kind must be P, SO or SI");
  if (!dynamic && n_x_a != 0) throw ConfigError("static structures have n_x_a = 0");
  if (dynamic && n_x_a < 1) throw ConfigError("dynamic structures need n_x_a >= 1");
  StructureSpec s;
  s.state = kind;
  s.n_xa_state = n_x_a;
  return make_structured_model(s, std::move(base), hidden);
}

AugmentedModel make_output_structure(AugKind kind, bool dynamic, BaselinePtr base, Index n_x_a,
                                     const std::vector<Index>& hidden) {
  if (kind == AugKind::None) throw ConfigError("output structure kind must be P, SO or SI");
  if (!dynamic && n_x_a != 0) throw ConfigError("static structures have n_x_a = 0");
  if (dynamic && n_x_a < 1) throw ConfigError("dynamic structures need n_x_a >= 1");
  StructureSpec s;
  s.output = kind;
  s.n_xa_output = n_x_a;
  return make_structured_model(s, std::move(base), hidden);
}

AugmentedModel compose_structures(const AugmentedModel& state_model, Extra extra,
                                  Index n_x_a_extra, const std::vector<Index>& hidden) {
  StructureSpec spec = parse_structure(state_model.structure, state_model.dims.n_x_a);
  if (spec.state == AugKind::None || spec.output != AugKind::None || spec.input_series) {
    throw ConfigError("compose_structures expects a plain state-level model, got " +
                      state_model.structure);
  }
  if (extra == Extra::InputSeries) {
    spec.input_series = true;
  } else {
    if (n_x_a_extra < 1) throw ConfigError("dynamic series-output part needs n_x_a >= 1");
    spec.output = AugKind::SeriesOutput;
    spec.n_xa_output = n_x_a_extra;
  }
  AugmentedModel m = make_structured_model(spec, state_model.base, hidden);
  m.theta_base = state_model.theta_base;
  m.theta_base0 = state_model.theta_base0;
  m.theta_base_trainable = state_model.theta_base_trainable;
  m.norm = state_model.norm;
  for (auto& b : m.aug.blocks) {
    if (const AugBlock* old = state_model.aug.find(b.name)) {
      if (old->net.widths == b.net.widths) b.net = old->net;
    }
  }
  const WellPosednessReport rep = check_well_posed(m, 0);
  if (!rep.verdict) throw WellPosednessError("composed structure " + m.structure + " is not well-posed");
  return m;
}

AugmentedModel make_flexible_model(BaselinePtr base, Index n_x_a, Index n_z_a, Index n_w_a,
                                   DzwMode mode, const std::vector<Index>& hidden, bool fix_zb) {
  if (!base) throw ConfigError("flexible model: null baseline");
  AugmentedModel m;
  m.dims = Dimensions{base->n_x(), n_x_a, base->n_u(), base->n_y(), n_z_a, n_w_a};
  m.dims.validate();
  m.W = LfrMatrix::zeros(m.dims);
  m.mode = mode;
  for (int i = 0; i < kNumBlocks; ++i) m.trainable[i] = mode_allows(mode, static_cast<Blk>(i));
  if (fix_zb) {
    m.trainable[static_cast<int>(Blk::C_z_b)] = false;
    m.trainable[static_cast<int>(Blk::D_zu_b)] = false;
    for (Index i = 0; i < m.dims.n_x_b; ++i) m.W[Blk::C_z_b](i, i) = 1.0;
    for (Index i = 0; i < m.dims.n_u; ++i) m.W[Blk::D_zu_b](m.dims.n_x_b + i, i) = 1.0;
  }
  m.theta_base = base->nominal_theta();
  m.theta_base0 = m.theta_base;
  m.base = std::move(base);
  m.aug = dense_learning_component(n_z_a, n_w_a, hidden);
  m.norm = NormalizationTransforms::identity(m.dims.n_u, m.dims.n_y, m.dims.n_x_b);
  m.structure = "flexible";
  m.validate();
  return m;
}

std::vector<StructureSpec> structure_catalog(Index n_x_a) {
  const AugKind kinds[] = {AugKind::None, AugKind::Parallel, AugKind::SeriesOutput,
                           AugKind::SeriesInput};
  std::vector<StructureSpec> out;
  for (AugKind st : kinds) {
    for (AugKind op : kinds) {
      for (bool inp : {false, true}) {
        if (st == AugKind::None && op == AugKind::None) continue;
        if (inp && st == AugKind::None) continue;
        for (Index nxs = 0; nxs <= n_x_a; ++nxs) {
          const Index nxo = n_x_a - nxs;
          if (st == AugKind::None && nxs > 0) continue;
          if (op == AugKind::None && nxo > 0) continue;
          StructureSpec s{st, nxs, op, nxo, inp};
          try {
            s.validate();
          } catch (const Error&) {
            continue;
          }
          out.push_back(s);
        }
      }
    }
  }
  return out;
}

}  // namespace lfr
