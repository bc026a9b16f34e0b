#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace pendec {

// Diagnostics channel ("pendec"). Defaults to stderr at warn level; tests
// and front ends may swap sinks or change the level.
std::shared_ptr<spdlog::logger> logger();

}  // namespace pendec
