#include "pendec/log.h"

#include <spdlog/sinks/stdout_sinks.h>

namespace pendec {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = std::make_shared<spdlog::logger>(
        "pendec", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    l->set_level(spdlog::level::warn);
    l->set_pattern("[%n] %l: %v");
    return l;
  }();
  return instance;
}

}  // namespace pendec
