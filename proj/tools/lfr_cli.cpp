// lfr-augment: dataset generation, well-posedness checks, training and
// evaluation from JSON experiment files.

#include "lfr/benchmark.hpp"
#include "lfr/checkpoint.hpp"
#include "lfr/graph.hpp"
#include "lfr/structures.hpp"
#include "lfr/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 ok / well-posed, 1 semantic failure, 2 usage or parse error.
constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

struct UsageError : lfr::Error {
  using lfr::Error::Error;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void echo_config(const json& cfg, const fs::path& out) {
  fs::create_directories(out);
  std::ofstream f(out / "config.json");
  if (!f) throw lfr::DataError("cannot write to " + out.string());
  f << cfg.dump(2) << '\n';
}

lfr::msd::BenchmarkConfig benchmark_config(const json& j, std::optional<std::uint64_t> seed) {
  lfr::msd::BenchmarkConfig c;
  c.variant = lfr::msd::parse_variant(j.value("variant", std::string("a")));
  c.seed = seed ? *seed : j.value("seed", c.seed);
  c.period = j.value("period", c.period);
  c.rms = j.value("rms", c.rms);
  c.Ts = j.value("Ts", c.Ts);
  c.lpf_cutoff_hz = j.value("lpf_cutoff_hz", c.lpf_cutoff_hz);
  c.snr_db = j.value("snr_db", c.snr_db);
  c.est_periods = j.value("est_periods", c.est_periods);
  c.val_periods = j.value("val_periods", c.val_periods);
  c.test_periods = j.value("test_periods", c.test_periods);
  if (j.contains("a1")) c.params.a1 = j.at("a1").get<double>();
  return c;
}

lfr::BaselinePtr baseline_from_config(const json& j) {
  const json b = j.value("baseline", json{{"type", "msd2"}});
  if (b.is_string()) return lfr::baseline_from_json(json{{"id", b.get<std::string>()}});
  const std::string type = b.value("type", std::string("msd2"));
  if (type == "msd2") {
    const std::string set = b.value("param_set", std::string("ideal"));
    lfr::msd::Msd2Baseline::ParamSet ps;
    if (set == "ideal") {
      ps = lfr::msd::Msd2Baseline::ParamSet::Ideal;
    } else if (set == "approx") {
      ps = lfr::msd::Msd2Baseline::ParamSet::Approx;
    } else {
      throw lfr::ConfigError("param_set must be ideal or approx");
    }
    return std::make_shared<lfr::msd::Msd2Baseline>(lfr::msd::Msd2Baseline::param_set(ps),
                                                    b.value("Ts", 0.02));
  }
  return lfr::baseline_from_json(b);
}

std::string data_path(const json& cfg, const std::string& key, const fs::path& base_dir) {
  if (!cfg.contains("data") || !cfg.at("data").contains(key)) {
    throw lfr::DataError("config has no data." + key + " path");
  }
  fs::path p = cfg.at("data").at(key).get<std::string>();
  if (p.is_relative()) p = base_dir / p;
  if (!fs::exists(p)) throw lfr::DataError("dataset " + p.string() + " does not exist");
  return p.string();
}

void append_result(const fs::path& path, const std::string& label, const lfr::EvalResult& r) {
  const bool fresh = !fs::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw lfr::DataError("cannot write " + path.string());
  if (fresh) f << "model,rmse,nrms_percent,diverged,horizon\n";
  char line[256];
  std::snprintf(line, sizeof line, "%s,%.10g,%.6g,%d,%lld\n", label.c_str(), r.rmse, r.nrms,
                r.diverged ? 1 : 0, static_cast<long long>(r.horizon));
  f << line;
}

// ---- generate --------------------------------------------------------------

int cmd_generate(const std::string& config, const std::string& out_opt,
                 std::optional<std::uint64_t> seed) {
  const json cfg = load_config(config);
  const fs::path out = !out_opt.empty() ? fs::path(out_opt) : fs::path(cfg.value("out", std::string("data")));
  const auto bc = benchmark_config(cfg, seed);
  const auto data = lfr::msd::generate_dataset(bc);
  echo_config(cfg, out);
  lfr::write_dataset_csv(data.est, (out / "est.csv").string());
  lfr::write_dataset_csv(data.val, (out / "val.csv").string());
  lfr::write_dataset_csv(data.test, (out / "test.csv").string());
  std::printf("variant %s seed %llu\n", lfr::msd::to_string(bc.variant).c_str(),
              static_cast<unsigned long long>(bc.seed));
  for (const auto* d : {&data.est, &data.val, &data.test}) {
    std::printf("%-4s N=%lld  SNR %.3f dB\n", d->split.c_str(), static_cast<long long>(d->size()),
                lfr::msd::measured_snr_db(*d));
  }
  return kOk;
}

// ---- check -----------------------------------------------------------------

int cmd_check(const std::string& config, lfr::Index samples) {
  const json j = load_config(config);
  lfr::WellPosednessReport rep;
  std::vector<std::string> labels;
  try {
    if (j.contains("format")) {
      const lfr::AugmentedModel m = lfr::model_from_json(j);
      rep = lfr::check_well_posed(m, samples);
      labels = lfr::detect_structure(lfr::build_adjacency(m), m.dims);
    } else if (j.contains("structure")) {
      const lfr::ExperimentConfig ec = lfr::ExperimentConfig::from_json(j);
      lfr::AugmentedModel m = lfr::build_model(ec, baseline_from_config(j));
      if (ec.structure == "flexible" && j.contains("trainable")) {
        for (auto it = j.at("trainable").begin(); it != j.at("trainable").end(); ++it)
          m.trainable[static_cast<int>(lfr::parse_block(it.key()))] = it.value().get<bool>();
      }
      rep = lfr::check_well_posed(m, samples);
      labels = lfr::detect_structure(lfr::build_adjacency(m), m.dims);
    } else if (j.contains("dims")) {
      const lfr::PatternSpec p = lfr::PatternSpec::from_json(j);
      rep = lfr::check_well_posed(p);
      labels = lfr::detect_structure(lfr::build_adjacency(p), p.dims);
    } else {
      throw UsageError("expected a checkpoint, a structure spec or a pattern spec");
    }
  } catch (const json::exception& e) {
    throw UsageError(e.what());
  } catch (const lfr::ConfigError& e) {
    throw UsageError(e.what());
  }
  json out = rep.to_json();
  out.erase("topological_order");
  out["structures"] = labels;
  std::cout << out.dump(2) << '\n';
  if (!rep.cycle.empty()) {
    std::cout << "cycle:";
    for (const auto& n : rep.cycle) std::cout << ' ' << n;
    std::cout << '\n';
  }
  std::cout << "verdict: " << (rep.verdict ? "well-posed" : "NOT well-posed") << '\n';
  return rep.verdict ? kOk : kFail;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const std::string& config, const std::string& out_opt,
              std::optional<std::uint64_t> seed) {
  json cfg = load_config(config);
  if (seed) cfg["training"]["seed"] = *seed;
  const fs::path base_dir = fs::path(config).parent_path();
  const fs::path out = !out_opt.empty() ? fs::path(out_opt) : fs::path(cfg.value("out", std::string("run")));
  lfr::ExperimentConfig ec;
  try {
    ec = lfr::ExperimentConfig::from_json(cfg);
  } catch (const json::exception& e) {
    throw UsageError(e.what());
  } catch (const lfr::ConfigError& e) {
    throw UsageError(e.what());
  }
  echo_config(cfg, out);

  lfr::Dataset est, val;
  std::optional<lfr::Dataset> test;
  try {
    est = lfr::read_dataset_csv(data_path(cfg, "est", base_dir));
    val = lfr::read_dataset_csv(data_path(cfg, "val", base_dir));
    if (cfg.contains("data") && cfg.at("data").contains("test")) {
      test = lfr::read_dataset_csv(data_path(cfg, "test", base_dir));
    }
  } catch (const std::exception& e) {
    throw lfr::StageError("normalize", e.what());
  }
  const lfr::BaselinePtr base = baseline_from_config(cfg);

  json header = ec.to_json();
  std::printf("structure %s, T=%lld, batch=%lld, epochs=%lld, lambda=%g\n", ec.structure.c_str(),
              static_cast<long long>(ec.train.T), static_cast<long long>(ec.train.batch_size),
              static_cast<long long>(ec.train.epochs), ec.train.lambda);
  const lfr::PipelineResult res = lfr::run_pipeline(base, est, val, ec, [](const lfr::EpochRecord& r) {
    if (r.epoch % 10 == 0) {
      std::printf("epoch %5lld  loss %.6g  reg %.3g  val_rmse %.6g\n", static_cast<long long>(r.epoch),
                  r.train_loss, r.reg_term, r.val_rmse);
      std::fflush(stdout);
    }
  });

  lfr::write_metrics_csv(res.run, (out / "metrics.csv").string(), header);
  lfr::save_checkpoint(res.model, (out / "model.json").string(),
                       json{{"best_epoch", res.run.best_epoch}, {"best_val_rmse", res.run.best_val_rmse},
                            {"encoder_fit_mse", res.encoder_mse}, {"experiment", header}});
  lfr::save_checkpoint(res.init_model, (out / "init_model.json").string());
  std::printf("encoder fit MSE %.4g, best epoch %lld, val RMSE %.6g\n", res.encoder_mse,
              static_cast<long long>(res.run.best_epoch), res.run.best_val_rmse);
  if (test) {
    const lfr::Dataset test_n = lfr::normalize_dataset(*test, res.model.norm);
    const auto r0 = lfr::evaluate(res.init_model, test_n);
    const auto r1 = lfr::evaluate(res.model, test_n);
    append_result(out / "results.csv", "init", r0);
    append_result(out / "results.csv", "trained", r1);
    std::printf("test RMSE: init %.6g, trained %.6g\n", r0.rmse, r1.rmse);
  }
  if (res.run.aborted) {
    std::fprintf(stderr, "training aborted: %s\n", res.run.abort_reason.c_str());
    return kFail;
  }
  return kOk;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(std::string checkpoint, std::string data, const std::string& config,
             const std::string& metric, const std::string& out) {
  if (!config.empty()) {
    const json j = load_config(config);
    if (checkpoint.empty()) checkpoint = j.value("checkpoint", std::string());
    if (data.empty()) data = j.value("data", std::string());
  }
  if (checkpoint.empty() || data.empty()) throw UsageError("eval needs a checkpoint and a dataset");
  lfr::Metric met;
  lfr::AugmentedModel m;
  try {
    met = lfr::parse_metric(metric);
    m = lfr::load_checkpoint(checkpoint);
  } catch (const lfr::ConfigError& e) {
    throw UsageError(e.what());
  } catch (const json::exception& e) {
    throw UsageError(e.what());
  }
  const lfr::Dataset raw = lfr::read_dataset_csv(data);
  const lfr::Dataset d = lfr::normalize_dataset(raw, m.norm);
  const lfr::EvalResult r = lfr::evaluate(m, d);
  if (met == lfr::Metric::RMSE) {
    std::printf("RMSE %.10g\n", r.rmse);
  } else {
    std::printf("NRMS %.4g %%\n", r.nrms);
  }
  if (r.diverged) std::printf("diverged after %lld samples\n", static_cast<long long>(r.horizon));
  if (!out.empty()) append_result(out, fs::path(checkpoint).stem().string(), r);
  return r.diverged ? kFail : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LFR-based model augmentation: generate, check, train, eval"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, data, metric = "rmse";
  std::optional<std::uint64_t> seed;
  long long samples = 50;

  auto* gen = app.add_subcommand("generate", "Generate mass-spring-damper benchmark data");
  gen->add_option("--config", config, "Benchmark JSON")->required();
  gen->add_option("--out", out, "Output directory");
  gen->add_option("--seed", seed, "Override the config seed");

  auto* chk = app.add_subcommand("check", "Well-posedness report and structure detection");
  chk->add_option("--config", config, "Checkpoint, structure spec or pattern spec JSON")->required();
  chk->add_option("--samples", samples, "Sampled determinant checks")->check(CLI::NonNegativeNumber);

  auto* trn = app.add_subcommand("train", "Run the identification pipeline");
  trn->add_option("--config", config, "Experiment JSON")->required();
  trn->add_option("--out", out, "Output directory");
  trn->add_option("--seed", seed, "Override the training seed");

  auto* evl = app.add_subcommand("eval", "Simulation error of a checkpoint on a dataset");
  evl->add_option("--checkpoint", checkpoint, "Model checkpoint");
  evl->add_option("--data", data, "Dataset CSV");
  evl->add_option("--config", config, "JSON with checkpoint and data paths");
  evl->add_option("--metric", metric, "rmse or nrms");
  evl->add_option("--out", out, "Results CSV to append to");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(config, out, seed);
    if (*chk) return cmd_check(config, static_cast<lfr::Index>(samples));
    if (*trn) return cmd_train(config, out, seed);
    if (*evl) return cmd_eval(checkpoint, data, config, metric, out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const lfr::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFail;
  }
  return kUsage;
}
