/* Copyright 2026 The dcss Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DCSS_OPS_HPP_
#define DCSS_OPS_HPP_

#include <cstdint>
#include <vector>

#include "dcss/tensor.hpp"

namespace dcss::ops {

// Every op takes the tape as its first argument. Passing nullptr runs the op
// in inference mode: nothing is recorded and outputs never require grad.

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);

/// scale * x + shift, elementwise with compile-time constants.
Tensor affine(Tape* tape, const Tensor& x, double scale, double shift);

/// x * s where s is a one-element tensor (differentiable in both).
Tensor scalar_mul(Tape* tape, const Tensor& x, const Tensor& s);

/// One-element view of x at a flat index.
Tensor select(Tape* tape, const Tensor& x, index_t flat_index);

Tensor sum(Tape* tape, const Tensor& x);

Tensor relu(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);
/// Natural log; inputs must be strictly positive.
Tensor log(Tape* tape, const Tensor& x);
/// ln(1 + e^x), overflow-safe at both tails.
Tensor softplus(Tape* tape, const Tensor& x);

/// Stable softmax along `axis` (max-subtracted).
Tensor softmax(Tape* tape, const Tensor& x, int axis);

/// Softmax over the entries of a rank-1 tensor where mask[i] != 0; masked-out
/// entries get probability exactly 0 and receive no gradient. Used for the
/// blending weights of a sampled edge subset.
Tensor masked_softmax(Tape* tape, const Tensor& x,
                      const std::vector<std::uint8_t>& mask);

Tensor concat(Tape* tape, const std::vector<Tensor>& xs, int axis);

/// Gathers the given channel indices of an NCHW tensor.
Tensor channel_gather(Tape* tape, const Tensor& x,
                      const std::vector<index_t>& channels);

/// Inverse of channel_gather that also fills the remaining channels from
/// `base`: out[:, channels[j]] = y[:, j], out[:, others] = base[:, others].
/// The pass-through channels are copied bit-exactly.
Tensor channel_scatter_merge(Tape* tape, const Tensor& y, const Tensor& base,
                             const std::vector<index_t>& channels);

/// Grouped 2-D convolution, square kernel, no bias.
/// input [N,Cin,H,W], weight [Cout,Cin/groups,k,k].
/// H' = floor((H + 2*padding - k)/stride) + 1.
Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight,
              int stride, int padding, int groups);

/// Bilinear upsampling by an integer power-of-two factor,
/// align-corners=false convention.
Tensor bilinear_upsample(Tape* tape, const Tensor& input, int factor);

/// Batch normalization over (N,H,W) per channel. In training mode the batch
/// statistics are used and running stats are updated in place with momentum
/// 0.9; in eval mode the stored running stats are used.
Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta_shift, Tensor running_mean,
                  Tensor running_var, bool training, double momentum = 0.9,
                  double eps = 1e-5);

/// Mean pixelwise cross entropy with an ignore label. logits [N,C,H,W],
/// labels [N,H,W] with values in [0,C) or ignore_index. Errors out (rather
/// than returning NaN) when every pixel is ignored.
Tensor cross_entropy(Tape* tape, const Tensor& logits, const LabelMap& labels,
                     int ignore_index = 255);

}  // namespace dcss::ops

#endif  // DCSS_OPS_HPP_
