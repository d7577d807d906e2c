#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "dpp/program.hpp"

namespace dpp::test {

inline std::string fixture_text(const std::string& name) {
  std::ifstream in(std::string(DPP_FIXTURES) + "/" + name, std::ios::binary);
  if (!in) throw std::runtime_error("missing fixture " + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Program fixture_program(const std::string& name) { return parse_program(fixture_text(name)); }

}  // namespace dpp::test
