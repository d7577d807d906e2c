#pragma once

#include <string>

#include "dpp/types.hpp"

namespace dpp {

enum class Direction { Input, Output };

/// A typed input or output point of a node.
struct IOPoint {
  std::string name;
  DataType data;
  Direction direction = Direction::Input;

  friend bool operator==(const IOPoint&, const IOPoint&) = default;
};

}  // namespace dpp
