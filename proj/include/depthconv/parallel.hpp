// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace depthconv {

// Worker count used by parallel_for. Defaults to the hardware concurrency.
void set_num_workers(int workers);
int num_workers();

// Runs fn(i) for i in [0, n). Each index must write only its own outputs;
// callers reduce per-index buffers in index order, so results do not depend
// on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace depthconv
