// Copyright 2026 The sner Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "sner/common.hpp"

namespace sner {

// n x d token representations h_1..h_n.
using TokenMatrix = Mat;
// d-dimensional sentence representation.
using SentenceVector = RowVec;

// Mean of the token rows. Only real tokens are ever present in a TokenMatrix.
inline SentenceVector sentence_embedding(const TokenMatrix& h) {
  if (h.rows() == 0) throw InputError("sentence_embedding of an empty token matrix");
  return h.colwise().mean();
}

// Gradient of the mean pool: every row receives d_c / n.
inline TokenMatrix sentence_embedding_backward(const SentenceVector& d_c, Eigen::Index rows) {
  return d_c.replicate(rows, 1) / static_cast<double>(rows);
}

}  // namespace sner
