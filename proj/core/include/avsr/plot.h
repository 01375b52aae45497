// avsr/plot.h

// Copyright 2026  The avsr-cmfe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef AVSR_PLOT_H_
#define AVSR_PLOT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "avsr/nn/tensor.h"

namespace avsr::plot {

/// Projection of the rows of x [n, d] onto the two leading principal axes.
/// Each axis is sign-normalised so that its largest-magnitude coefficient
/// is positive, which makes the result a deterministic function of x.
nn::RowMatrix Pca2d(const nn::RowMatrix& x);

/// Renders a scatter plot as an 8-bit RGB PNG. labels[i] in [0, classes)
/// picks the colour of points[i]. Output bytes depend only on the inputs.
std::vector<uint8_t> ScatterPng(const nn::RowMatrix& points, const std::vector<int>& labels,
                                int classes, int width = 480, int height = 480);

}  // namespace avsr::plot

#endif  // AVSR_PLOT_H_
