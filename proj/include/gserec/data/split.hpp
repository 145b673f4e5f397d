#pragma once

#include "gserec/data/dataset.hpp"

namespace gserec::data {

/// Users with at least three rec events: last -> test, second-to-last ->
/// valid, rest -> train. Shorter users are train-only. Idempotent.
Dataset leave_one_out_split(Dataset dataset);

/// Minimum rec history length for a user to receive valid/test rows.
inline constexpr int kMinRecForEvaluation = 3;

}  // namespace gserec::data
