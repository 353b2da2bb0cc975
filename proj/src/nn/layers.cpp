#include "nn/layers.hpp"

namespace sologan {

namespace {
thread_local bool g_training_mode = false;
}

bool training_mode() { return g_training_mode; }

void set_training_mode(bool on) { g_training_mode = on; }

}  // namespace sologan
