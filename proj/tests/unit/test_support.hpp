#pragma once

// Helpers shared by the unit tests and the acceptance runner: tiny model
// configurations, scratch directories and reference implementations that do
// not reuse library code paths.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simcond/denoiser.hpp"
#include "simcond/identity_embedder.hpp"

namespace simcond::testkit {

std::filesystem::path scratch_dir(const std::string& name);

DenoiserConfig tiny_denoiser_config();
EncoderConfig tiny_encoder_config();
std::int64_t parameter_count(const torch::nn::Module& module);

// Exhaustive ten-fold threshold search: every candidate threshold is scored
// by a full pass over the training folds.
double brute_force_tenfold(const std::vector<double>& sims, const std::vector<bool>& same);

struct GradCheckResult {
  int coordinates = 0;
  double max_rel_error = 0.0;
  double max_abs_x0_hat = 0.0;
  std::int64_t denoiser_params = 0;
  std::int64_t encoder_params = 0;
};

// Central differences on random denoiser coordinates of the full objective
// MSE + lambda * SimMat, in double precision on the tiny models.
GradCheckResult gradcheck_objective(std::uint64_t seed, bool clamp_x0, double lambda, int coordinates);

}  // namespace simcond::testkit
