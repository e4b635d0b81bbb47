#pragma once

#include "lfr/autodiff.hpp"
#include "lfr/model_core.hpp"

#include <string>
#include <vector>

namespace lfr {

// Parameter names:
//   W.<block>                  LFR blocks, trainable per model.trainable
//   theta_base                 physical parameters (n_theta x 1)
//   aug.<block>.w<i> / b<i>    ResNet layers of phi_aug; .Wa is the bypass
//   enc.b.* / enc.a.*          encoder heads psi_b / psi_a
ad::ParamVector pack_params(const AugmentedModel& m);
void unpack_params(const ad::ParamVector& p, AugmentedModel& m);
void pack_resnet(ad::ParamVector& p, const std::string& prefix, const ResNet& net);
void unpack_resnet(const ad::ParamVector& p, const std::string& prefix, ResNet& net);

// Registers the "baseline" tape primitive: inputs (theta, z_b), ctx is the
// BaselineComponent. Safe to call repeatedly.
void register_model_primitives();

ad::NodeId tape_resnet(ad::Tape& t, const std::string& prefix, const ResNet& net, ad::NodeId z);
// (n_x x p) initial states from a (input_size x p) window matrix.
ad::NodeId tape_encoder(ad::Tape& t, const EncoderNet& enc, ad::NodeId input);

// Parameter leaves for one tape. Blocks that are zero and frozen are skipped.
struct ModelNodes {
  std::array<ad::NodeId, kNumBlocks> W{};
  ad::NodeId theta = -1;
};

ModelNodes tape_model_params(ad::Tape& t, const AugmentedModel& m, const ad::ParamVector& p);

struct StepNodes {
  ad::NodeId x_next = -1;
  ad::NodeId y = -1;
};

// One step for p parallel samples: x is (n_x x p), u is (n_u x p).
StepNodes tape_step(ad::Tape& t, const AugmentedModel& m, const ModelNodes& nodes, ad::NodeId x,
                    ad::NodeId u);

// Sum over subsections and horizon of squared output errors. u and y are
// normalized (N x channels) records; starts are 0-based indices of the
// first simulated sample, each needing the encoder lag before it and T
// samples from it.
ad::NodeId tape_truncated_sse(ad::Tape& t, const AugmentedModel& m, const ad::ParamVector& p,
                              const Mat& u, const Mat& y, const Index* starts, Index count,
                              Index T);

// lambda^2 * sum(((theta - theta0) / theta0)^2).
ad::NodeId tape_regularizer(ad::Tape& t, const AugmentedModel& m, double lambda);

void check_starts(const AugmentedModel& m, Index N, const std::vector<Index>& starts, Index T);

struct LossValue {
  double loss = 0.0;  // truncated loss + regularizer
  double truncated = 0.0;
  double reg = 0.0;
  Vec grad;  // empty unless requested
};

// Subsections are processed in chunks of chunk columns, one tape each;
// gradients are summed in chunk order.
LossValue loss_and_grad(const AugmentedModel& m, const ad::ParamVector& p, const Mat& u,
                        const Mat& y, const std::vector<Index>& starts, Index T, double lambda,
                        bool want_grad, Index chunk = 128);

// Single-tape loss builder, convenient for gradient checks.
ad::LossBuilder regularized_loss_builder(const AugmentedModel& m, const Mat& u, const Mat& y,
                                         std::vector<Index> starts, Index T, double lambda);

}  // namespace lfr
