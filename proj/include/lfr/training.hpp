#pragma once

#include "lfr/autodiff.hpp"
#include "lfr/dataset.hpp"
#include "lfr/model_core.hpp"
#include "lfr/normalization.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace lfr {

struct TrainingConfig {
  Index T = 200;
  Index batch_size = 2000;
  Index epochs = 3000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lambda = 1.0;
  Index n_a = 7;
  Index n_b = 7;
  std::vector<Index> encoder_hidden{16, 16};
  Index encoder_epochs = 300;
  Index encoder_batch = 256;
  std::uint64_t seed = 1;
  Index val_every = 1;
  Index chunk = 128;  // subsections per tape

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainingConfig from_json(const nlohmann::json& j);
};

// Means and stds of u and y from the estimation split. x_std is left empty
// until the baseline states are known.
NormalizationTransforms fit_normalization(const Dataset& est);

BaselinePtr wrap_baseline_normalized(BaselinePtr base, const NormalizationTransforms& norm);

struct BaselineStates {
  Dataset extended;  // est with x_base filled in (physical units)
  Vec x_std;
};

// Simulates the raw baseline from the zero state with theta0 over est.u.
// The first `discard` samples are left out of the std estimate.
BaselineStates simulate_baseline_states(const BaselineComponent& base, const Dataset& est,
                                        const Vec& theta0, Index discard);

// Fits psi_b to the normalized baseline states with Adam. psi_a keeps a
// Xavier initialization. Returns the final mean squared fit error.
double pretrain_encoder(EncoderNet& enc, const Mat& u_n, const Mat& y_n, const Mat& xb_n,
                        const TrainingConfig& cfg, std::mt19937_64& rng);

// Makes the model reproduce the baseline at initialization. Structured
// models keep their W; flexible models get selector rows for the baseline
// path and random augmented-state rows.
void init_baseline_equivalent(AugmentedModel& m, std::uint64_t seed);

double truncated_loss(const AugmentedModel& m, const Mat& u_n, const Mat& y_n,
                      const std::vector<Index>& starts, Index T);
double regularized_loss(const AugmentedModel& m, const Mat& u_n, const Mat& y_n,
                        const std::vector<Index>& starts, Index T, double lambda);

// Non-overlapping subsections with stride T over the valid range.
std::vector<Index> tiled_starts(Index N, Index lag, Index T);

enum class Metric { RMSE, NRMS };
Metric parse_metric(const std::string& s);

struct EvalResult {
  double rmse = 0.0;  // output units
  double nrms = 0.0;  // percent
  bool diverged = false;
  Index horizon = 0;  // samples simulated
};

// Full simulation from the encoder estimate at the first valid index. The
// dataset is normalized with the model's transforms; errors are reported
// after de-normalization.
EvalResult evaluate(const AugmentedModel& m, const Dataset& data_n);
double evaluate(const AugmentedModel& m, const Dataset& data_n, Metric metric);

// Raw baseline simulated from rest over the raw dataset.
EvalResult baseline_simulation_error(const BaselineComponent& base, const Vec& theta,
                                     const Dataset& raw, Index skip = 0);

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0.0;
  double reg_term = 0.0;
  double val_rmse = 0.0;
  double val_trunc_loss = 0.0;
};

struct TrainRun {
  std::vector<EpochRecord> history;  // epoch 0 holds the pre-training validation
  Index best_epoch = 0;
  double best_val_rmse = 0.0;
  ad::ParamVector best_params;
  std::vector<Vec> theta_trace;  // theta_base after every epoch
  bool aborted = false;
  std::string abort_reason;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam over the truncated loss with per-epoch reshuffled subsections. The
// model is left holding the parameters with the best validation RMSE.
TrainRun train(AugmentedModel& m, const Dataset& est_n, const Dataset& val_n,
               const TrainingConfig& cfg, const EpochCallback& on_epoch = {});

void write_metrics_csv(const TrainRun& run, const std::string& path,
                       const nlohmann::json& header = nullptr);

// Error raised from the end-to-end pipeline, tagged with the failing stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct ExperimentConfig {
  std::string structure = "S-DP";  // catalog label(s) or "flexible"
  Index n_x_a = 2;
  std::vector<Index> hidden{8, 8};
  DzwMode flexible_mode = DzwMode::Zero;
  Index n_z_a = 4;
  Index n_w_a = 4;
  bool fix_zb = false;
  Index n_est = 0;  // 0 keeps the whole estimation split
  TrainingConfig train;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct PipelineResult {
  AugmentedModel model;
  AugmentedModel init_model;  // right after the baseline-equivalent init
  TrainRun run;
  double encoder_mse = 0.0;
  Dataset est_n, val_n;
};

// normalize -> wrap -> simulate baseline -> pretrain encoder -> init -> train.
// Datasets are raw; failures are rethrown as StageError.
PipelineResult run_pipeline(BaselinePtr base, const Dataset& est, const Dataset& val,
                            const ExperimentConfig& cfg, const EpochCallback& on_epoch = {});

AugmentedModel build_model(const ExperimentConfig& cfg, BaselinePtr base);

Dataset normalize_dataset(const Dataset& raw, const NormalizationTransforms& norm);

}  // namespace lfr
