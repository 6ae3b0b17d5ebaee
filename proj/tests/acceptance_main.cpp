#include <iostream>
#include <string>

#include <spdlog/spdlog.h>

#include "robust_precoding/acceptance.hpp"

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  rbp::acceptance::Options options;
  for (int i = 1; i < argc; ++i) options.only.emplace_back(argv[i]);
  const auto results =
      rbp::acceptance::run(options, [](const auto& r) { std::cout << rbp::acceptance::format(r) << std::endl; });
  const bool ok = rbp::acceptance::all_passed(results);
  std::cout << (ok ? "acceptance: all criteria met" : "acceptance: FAILED") << std::endl;
  return ok ? 0 : 1;
}
