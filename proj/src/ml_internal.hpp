#pragma once

#include <cstdint>
#include <vector>

#include "jsvuln/ml.hpp"

namespace jsvuln::ml::detail {

/// Fills m.state (and m.converged) from already standardized features.
void fit(TrainedModel& m, const Matrix& x, const std::vector<int>& y, std::uint64_t seed);
std::vector<int> predict_scaled(const TrainedModel& m, const Matrix& x);

int param_int(const ModelSpec& spec, const char* key);
std::vector<int> mlp_widths(const ModelSpec& spec, int inputs);
/// One pass of mini-batch SGD over shuffled rows.
void mlp_epoch(MlpState& s, const Matrix& x, const std::vector<int>& y, int batch_size, double lr, Rng& rng);

}  // namespace jsvuln::ml::detail
