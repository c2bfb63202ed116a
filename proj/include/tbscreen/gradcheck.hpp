#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tbscreen/autograd.hpp"

namespace tbscreen {

/// Builds a graph from its inputs. Must be pure: the same inputs give the
/// same output.
using GraphFn = std::function<Var(std::span<const Var>)>;

/// Compares the analytic gradient of `fn` at `point` against central
/// differences with step `epsilon`, over every coordinate of every input.
///
/// Outputs with more than one element are reduced to a scalar by a fixed
/// seeded random projection first. Returns
///   max |analytic - numeric| / max(1, |analytic|, |numeric|).
///
/// Throws UnsupportedError if the graph contains an op without a backward.
double grad_check(const GraphFn& fn, const std::vector<Tensor>& point, double epsilon = 1e-5,
                  std::uint64_t projection_seed = 0x5eed);

}  // namespace tbscreen
