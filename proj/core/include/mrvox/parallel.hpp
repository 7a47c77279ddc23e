// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace mrvox {

/// Worker cap from the MRVOX_THREADS environment variable. 0 or unset means
/// std::thread::hardware_concurrency(). Always at least 1.
std::size_t worker_count();

/// Overrides MRVOX_THREADS for the current process (0 restores auto).
void set_worker_count(std::size_t workers);

/// Runs `body(begin, end)` over contiguous chunks of [0, n). Chunks are
/// disjoint; any cross-chunk reduction is the caller's job. Runs inline when
/// n is small or only one worker is available.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 1);

}  // namespace mrvox
