#include "lfr/model_tape.hpp"

#include <algorithm>
#include <mutex>

namespace lfr {

void pack_resnet(ad::ParamVector& p, const std::string& prefix, const ResNet& net) {
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    p.add(prefix + ".w" + std::to_string(i), net.weights[i], true);
    p.add(prefix + ".b" + std::to_string(i), Mat(net.biases[i]), true);
  }
  p.add(prefix + ".Wa", net.bypass, true);
}

void unpack_resnet(const ad::ParamVector& p, const std::string& prefix, ResNet& net) {
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    net.weights[i] = p.get(prefix + ".w" + std::to_string(i));
    net.biases[i] = p.get_vec(prefix + ".b" + std::to_string(i));
  }
  net.bypass = p.get(prefix + ".Wa");
}

ad::ParamVector pack_params(const AugmentedModel& m) {
  ad::ParamVector p;
  for (int i = 0; i < kNumBlocks; ++i) {
    const Blk b = static_cast<Blk>(i);
    p.add(std::string("W.") + block_name(b), m.W[b], m.trainable[i]);
  }
  p.add("theta_base", Mat(m.theta_base), m.theta_base_trainable);
  for (const auto& blk : m.aug.blocks) pack_resnet(p, "aug." + blk.name, blk.net);
  if (!m.encoder.base_head.widths.empty()) pack_resnet(p, "enc.b", m.encoder.base_head);
  if (!m.encoder.aug_head.widths.empty()) pack_resnet(p, "enc.a", m.encoder.aug_head);
  return p;
}

void unpack_params(const ad::ParamVector& p, AugmentedModel& m) {
  for (int i = 0; i < kNumBlocks; ++i) {
    const Blk b = static_cast<Blk>(i);
    m.W[b] = p.get(std::string("W.") + block_name(b));
  }
  m.theta_base = p.get_vec("theta_base");
  for (auto& blk : m.aug.blocks) unpack_resnet(p, "aug." + blk.name, blk.net);
  if (!m.encoder.base_head.widths.empty()) unpack_resnet(p, "enc.b", m.encoder.base_head);
  if (!m.encoder.aug_head.widths.empty()) unpack_resnet(p, "enc.a", m.encoder.aug_head);
}

void register_model_primitives() {
  static std::once_flag once;
  std::call_once(once, [] {
    ad::CustomPrimitive prim;
    prim.shape = [](const std::vector<ad::Shape>& in, const void* ctx) {
      const auto* base = static_cast<const BaselineComponent*>(ctx);
      if (in.size() != 2 || in[0].size() != base->n_theta() || in[1].rows != base->n_z()) {
        throw DimensionError("baseline primitive: expects (theta, z_b) inputs");
      }
      return ad::Shape{base->n_w(), in[1].cols};
    };
    prim.forward = [](ad::CustomCall& c) {
      const auto* base = static_cast<const BaselineComponent*>(c.ctx);
      const Vec theta = Eigen::Map<const Vec>(c.in[0], c.in_shapes[0].size());
      base->eval_batch(theta, c.in[1], c.out, c.in_shapes[1].cols);
    };
    prim.backward = [](ad::CustomCall& c) {
      const auto* base = static_cast<const BaselineComponent*>(c.ctx);
      if (c.gin[0] == nullptr && c.gin[1] == nullptr) return;
      const Vec theta = Eigen::Map<const Vec>(c.in[0], c.in_shapes[0].size());
      base->vjp_batch(theta, c.in[1], c.gout, c.in_shapes[1].cols, c.gin[1], c.gin[0]);
    };
    ad::register_primitive("baseline", std::move(prim));
  });
}

ad::NodeId tape_resnet(ad::Tape& t, const std::string& prefix, const ResNet& net, ad::NodeId z) {
  ad::NodeId xi = z;
  const std::size_t L = net.weights.size();
  for (std::size_t i = 0; i + 1 < L; ++i) {
    const ad::NodeId w = t.param(prefix + ".w" + std::to_string(i));
    const ad::NodeId b = t.param(prefix + ".b" + std::to_string(i));
    xi = t.tanh(t.add(t.matmul(w, xi), b));
  }
  const ad::NodeId w = t.param(prefix + ".w" + std::to_string(L - 1));
  const ad::NodeId b = t.param(prefix + ".b" + std::to_string(L - 1));
  const ad::NodeId out = t.add(t.matmul(w, xi), b);
  return t.add(out, t.matmul(t.param(prefix + ".Wa"), z));
}

ad::NodeId tape_encoder(ad::Tape& t, const EncoderNet& enc, ad::NodeId input) {
  if (enc.base_head.widths.empty()) throw ConfigError("model has no encoder");
  const ad::NodeId xb = tape_resnet(t, "enc.b", enc.base_head, input);
  if (enc.aug_head.widths.empty() || enc.aug_head.n_out() == 0) return xb;
  return t.concat_rows({xb, tape_resnet(t, "enc.a", enc.aug_head, input)});
}

ModelNodes tape_model_params(ad::Tape& t, const AugmentedModel& m, const ad::ParamVector& p) {
  ModelNodes n;
  n.W.fill(-1);
  for (int i = 0; i < kNumBlocks; ++i) {
    const Blk b = static_cast<Blk>(i);
    const auto& s = p.slice(std::string("W.") + block_name(b));
    if (s.size() == 0) continue;
    bool nonzero = s.trainable;
    for (Index k = 0; k < s.size() && !nonzero; ++k) nonzero = p.values(s.offset + k) != 0.0;
    if (nonzero) n.W[i] = t.param(s.name);
  }
  (void)m;
  n.theta = t.param("theta_base");
  return n;
}

StepNodes tape_step(ad::Tape& t, const AugmentedModel& m, const ModelNodes& nodes, ad::NodeId x,
                    ad::NodeId u) {
  register_model_primitives();
  const Index p = t.shape(x).cols;
  const Dimensions& d = m.dims;
  auto lin = [&](Index rows, std::initializer_list<std::pair<Blk, ad::NodeId>> terms) {
    ad::NodeId acc = -1;
    for (const auto& [b, v] : terms) {
      const ad::NodeId w = nodes.W[static_cast<int>(b)];
      if (w < 0 || v < 0) continue;
      const ad::NodeId mm = t.matmul(w, v);
      acc = acc < 0 ? mm : t.add(acc, mm);
    }
    return acc < 0 ? t.constant(Mat::Zero(rows, p)) : acc;
  };
  auto aug = [&](ad::NodeId za) -> ad::NodeId {
    if (d.n_w_a == 0) return -1;
    std::vector<const AugBlock*> blocks;
    for (const auto& b : m.aug.blocks) blocks.push_back(&b);
    std::sort(blocks.begin(), blocks.end(),
              [](const AugBlock* a, const AugBlock* b) { return a->w_offset < b->w_offset; });
    std::vector<ad::NodeId> outs;
    for (const AugBlock* b : blocks) {
      const ad::NodeId zin = blocks.size() == 1 && b->z_size == d.n_z_a ? za : t.slice_rows(za, b->z_offset, b->z_size);
      outs.push_back(tape_resnet(t, "aug." + b->name, b->net, zin));
    }
    return outs.size() == 1 ? outs.front() : t.concat_rows(outs);
  };
  auto base = [&](ad::NodeId zb) {
    return t.custom("baseline", {nodes.theta, zb}, std::shared_ptr<const void>(m.base));
  };

  ad::NodeId zb = -1, za = -1, wb = -1, wa = -1;
  switch (m.mode) {
    case DzwMode::Zero:
      zb = lin(d.n_z_b(), {{Blk::C_z_b, x}, {Blk::D_zu_b, u}});
      wb = base(zb);
      if (d.n_z_a > 0) za = lin(d.n_z_a, {{Blk::C_z_a, x}, {Blk::D_zu_a, u}});
      if (za >= 0) wa = aug(za);
      break;
    case DzwMode::AbOnly:
      zb = lin(d.n_z_b(), {{Blk::C_z_b, x}, {Blk::D_zu_b, u}});
      wb = base(zb);
      if (d.n_z_a > 0) za = lin(d.n_z_a, {{Blk::C_z_a, x}, {Blk::D_zu_a, u}, {Blk::D_zw_ab, wb}});
      if (za >= 0) wa = aug(za);
      break;
    case DzwMode::BaOnly:
      if (d.n_z_a > 0) za = lin(d.n_z_a, {{Blk::C_z_a, x}, {Blk::D_zu_a, u}});
      if (za >= 0) wa = aug(za);
      zb = lin(d.n_z_b(), {{Blk::C_z_b, x}, {Blk::D_zu_b, u}, {Blk::D_zw_ba, wa}});
      wb = base(zb);
      break;
    case DzwMode::Unrestricted:
      throw ModeError("tape_step: Unrestricted D_zw has no substitution order");
  }
  StepNodes s;
  s.x_next = lin(d.n_x(), {{Blk::A, x}, {Blk::B_u, u}, {Blk::B_w_b, wb}, {Blk::B_w_a, wa}});
  s.y = lin(d.n_y, {{Blk::C_y, x}, {Blk::D_yu, u}, {Blk::D_yw_b, wb}, {Blk::D_yw_a, wa}});
  return s;
}

void check_starts(const AugmentedModel& m, Index N, const std::vector<Index>& starts, Index T) {
  if (T < 1) throw ConfigError("truncation length must be >= 1");
  const Index lag = m.encoder.lag();
  for (Index k : starts) {
    if (k < lag || k + T > N) {
      throw DataError("subsection start " + std::to_string(k) + " outside [" + std::to_string(lag) +
                      ", " + std::to_string(N - T) + "]");
    }
  }
}

ad::NodeId tape_truncated_sse(ad::Tape& t, const AugmentedModel& m, const ad::ParamVector& p,
                              const Mat& u, const Mat& y, const Index* starts, Index count,
                              Index T) {
  const EncoderNet& enc = m.encoder;
  const Index nu = m.dims.n_u, ny = m.dims.n_y;
  Mat window(enc.input_size(), count);
  for (Index j = 0; j < count; ++j) {
    const Index k = starts[j];
    window.col(j) = encoder_input(enc, y.block(k - enc.n_a, 0, enc.n_a, ny),
                                  u.block(k - enc.n_b, 0, enc.n_b, nu));
  }
  const ModelNodes nodes = tape_model_params(t, m, p);
  ad::NodeId x = tape_encoder(t, enc, t.constant(window));
  if (t.shape(x).rows != m.dims.n_x()) throw DimensionError("encoder output does not match n_x");

  std::vector<double> ut(static_cast<std::size_t>(nu * count));
  std::vector<double> yt(static_cast<std::size_t>(ny * count));
  ad::NodeId acc = -1;
  for (Index s = 0; s < T; ++s) {
    for (Index j = 0; j < count; ++j) {
      for (Index c = 0; c < nu; ++c) ut[static_cast<std::size_t>(c * count + j)] = u(starts[j] + s, c);
      for (Index c = 0; c < ny; ++c) yt[static_cast<std::size_t>(c * count + j)] = y(starts[j] + s, c);
    }
    const StepNodes st = tape_step(t, m, nodes, x, t.constant(nu, count, ut.data()));
    const ad::NodeId e = t.sqnorm(t.sub(st.y, t.constant(ny, count, yt.data())));
    acc = acc < 0 ? e : t.add(acc, e);
    x = st.x_next;
  }
  return acc;
}

ad::NodeId tape_regularizer(ad::Tape& t, const AugmentedModel& m, double lambda) {
  const Vec& th0 = m.theta_base0;
  const Index n = th0.size();
  Mat inv(n, 1);
  std::vector<std::string> names = m.base ? m.base->theta_names() : std::vector<std::string>{};
  for (Index i = 0; i < n; ++i) {
    if (th0(i) == 0.0) {
      const std::string name = i < static_cast<Index>(names.size()) ? names[static_cast<std::size_t>(i)] : std::to_string(i);
      throw NumericError("regularizer: nominal value of " + name + " is zero");
    }
    inv(i, 0) = lambda / th0(i);
  }
  const ad::NodeId dev = t.sub(t.param("theta_base"), t.constant(Mat(th0)));
  return t.sqnorm(t.mul(dev, t.constant(inv)));
}

LossValue loss_and_grad(const AugmentedModel& m, const ad::ParamVector& p, const Mat& u,
                        const Mat& y, const std::vector<Index>& starts, Index T, double lambda,
                        bool want_grad, Index chunk) {
  check_starts(m, u.rows(), starts, T);
  if (starts.empty()) throw DataError("no subsections");
  LossValue r;
  if (want_grad) r.grad = Vec::Zero(p.size());
  const double w = 1.0 / (static_cast<double>(starts.size()) * static_cast<double>(T));
  ad::Tape t;
  for (std::size_t off = 0; off < starts.size(); off += static_cast<std::size_t>(chunk)) {
    const Index cnt = std::min<Index>(chunk, static_cast<Index>(starts.size() - off));
    t.reset(&p);
    const ad::NodeId l = t.scale(tape_truncated_sse(t, m, p, u, y, starts.data() + off, cnt, T), w);
    r.truncated += t.scalar_value(l);
    if (want_grad) t.backward(l, r.grad);
  }
  if (lambda > 0.0) {
    t.reset(&p);
    const ad::NodeId reg = tape_regularizer(t, m, lambda);
    r.reg = t.scalar_value(reg);
    if (want_grad) t.backward(reg, r.grad);
  }
  r.loss = r.truncated + r.reg;
  return r;
}

ad::LossBuilder regularized_loss_builder(const AugmentedModel& m, const Mat& u, const Mat& y,
                                         std::vector<Index> starts, Index T, double lambda) {
  check_starts(m, u.rows(), starts, T);
  return [&m, &u, &y, starts = std::move(starts), T, lambda](ad::Tape& t, const ad::ParamVector& p) {
    const double w = 1.0 / (static_cast<double>(starts.size()) * static_cast<double>(T));
    ad::NodeId l = t.scale(
        tape_truncated_sse(t, m, p, u, y, starts.data(), static_cast<Index>(starts.size()), T), w);
    if (lambda > 0.0) l = t.add(l, tape_regularizer(t, m, lambda));
    return l;
  };
}

}  // namespace lfr
