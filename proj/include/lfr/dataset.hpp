#pragma once

#include "lfr/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace lfr {

// Sampled I/O records, one row per sample.
struct Dataset {
  Mat u;        // N x n_u
  Mat y;        // N x n_y (measured, noisy)
  Mat y_clean;  // N x n_y or empty
  Mat x_base;   // N x n_x_b baseline-simulated states, or empty
  double Ts = 0.02;
  std::string split = "est";
  nlohmann::json meta = nlohmann::json::object();

  Index size() const { return u.rows(); }
  Index n_u() const { return u.cols(); }
  Index n_y() const { return y.cols(); }
  void validate() const;
  // First n samples (all columns).
  Dataset head(Index n) const;
};

// Single-channel CSV with header k,u,y,y_clean and a JSON sidecar at
// <path>.json holding Ts, split and generation metadata.
void write_dataset_csv(const Dataset& d, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace lfr
