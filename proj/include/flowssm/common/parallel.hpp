#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace flowssm {

inline constexpr const char* kThreadsEnv = "FLOWSSM_THREADS";

/// Worker count: FLOWSSM_THREADS if set (ConfigError unless a positive
/// integer), otherwise the hardware concurrency.
[[nodiscard]] int thread_count();

/// Runs body(i) for i in [0, n) on up to thread_count() threads. Each index is
/// handled exactly once, so results stored by index do not depend on the
/// schedule. The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace flowssm
