#pragma once

#include "gserec/util/matrix.hpp"
#include "gserec/util/rng.hpp"

namespace gserec::rq {

/// Lloyd's k-means seeded with k distinct random rows. Clusters that empty
/// out keep their previous centroid. Requires points.rows() >= k.
Matrix kmeans(const Matrix& points, int k, util::Rng& rng, int iterations = 25);

}  // namespace gserec::rq
