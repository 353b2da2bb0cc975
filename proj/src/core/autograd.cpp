#include "core/autograd.hpp"

#include <atomic>

namespace sologan {

namespace {
std::atomic<uint64_t> g_param_generation{1};
}

uint64_t param_generation() { return g_param_generation.load(std::memory_order_relaxed); }

void bump_param_generation() { g_param_generation.fetch_add(1, std::memory_order_relaxed); }

}  // namespace sologan
