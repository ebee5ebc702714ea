// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <functional>

namespace loftq::cli {

/// Runs task(0) .. task(count - 1) on up to `threads` workers. Tasks must
/// write their results into caller-owned slots indexed by task number, which
/// keeps output order independent of scheduling. If tasks throw, the
/// exception from the lowest task index is rethrown after all workers join.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task);

/// --threads if given, else LOFTQ_THREADS, else hardware concurrency (at least 1).
unsigned resolve_threads(unsigned flag_value);

}  // namespace loftq::cli
