#include "gserec/data/split.hpp"

namespace gserec::data {

Dataset leave_one_out_split(Dataset dataset) {
  for (auto& user : dataset.users) {
    const auto n = user.rec.size();
    user.rec_split.assign(n, Split::kTrain);
    if (n >= static_cast<std::size_t>(kMinRecForEvaluation)) {
      user.rec_split[n - 1] = Split::kTest;
      user.rec_split[n - 2] = Split::kValid;
    }
  }
  return dataset;
}

}  // namespace gserec::data
