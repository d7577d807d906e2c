#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpp/io_point.hpp"

namespace dpp {

using InstanceId = std::uint32_t;

/// A node definition: kernel body plus typed io points keyed by name.
struct Node {
  std::string name;
  std::string body;
  std::map<std::string, IOPoint> io;

  std::vector<IOPoint> points() const;

  friend bool operator==(const Node&, const Node&) = default;
};

/// A vertex of the graph: one placement of a node.
struct Instance {
  InstanceId id = 0;
  std::string kernel;

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Endpoint {
  InstanceId instance = 0;
  std::string point;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

/// Edge from an output point to an input point of another instance.
struct Arrow {
  Endpoint output;
  Endpoint input;

  friend bool operator==(const Arrow&, const Arrow&) = default;
};

/// The program document: node definitions, instances and arrows.
struct Program {
  std::map<std::string, Node> kernels;
  std::vector<Instance> nodes;
  std::vector<Arrow> arrows;

  const Instance* find_instance(InstanceId id) const;
  /// Node of an instance; throws std::out_of_range for unknown ids.
  const Node& node_of(InstanceId id) const;
  /// Point at an endpoint, or nullptr.
  const IOPoint* point_at(const Endpoint& e) const;

  friend bool operator==(const Program&, const Program&) = default;
};

/// Point with no attached arrow; external streams attach here.
struct FreePoint {
  InstanceId instance = 0;
  std::string point;
  Direction direction = Direction::Input;
  DataType data;

  /// "<instance id>.<point name>"
  std::string stream_name() const;

  friend bool operator==(const FreePoint&, const FreePoint&) = default;
};

enum class ViolationKind {
  Cycle,
  TypeMismatch,
  DuplicateEndpoint,
  ArrowDirection,
  SelfArrow,
  MissingInputPoint,
  MissingOutputPoint,
  InvalidPointName,
  KernelError,
  NoFreeInput,
  NoFreeOutput,
};

std::string_view violation_name(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string message;
  std::vector<InstanceId> instances;  // e.g. the cycle, or the arrow's two ends
  std::string kernel;                 // for node-level violations
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
  nlohmann::json to_json() const;
  std::string to_string() const;
};

/// Parses a program document. Throws ParseError for malformed JSON, missing or unknown
/// top-level keys, unknown kernel/instance/point references, duplicate instance ids
/// and unknown data type names.
Program parse_program(std::string_view document);

/// Canonical form: sorted keys, no insignificant whitespace, arrays in stored order.
std::string serialize_program(const Program& program);

/// Structural checks. Violations are reported, never thrown.
ValidationReport validate(const Program& program);

/// Instance ids such that every arrow points forward; ties go to the lower id.
/// Throws GraphError if the graph has a cycle.
std::vector<InstanceId> topological_order(const Program& program);

/// Lowercase hex SHA-256 of serialize_program(program).
std::string program_id(const Program& program);

/// Unconnected points sorted by (instance id, point name).
std::vector<FreePoint> free_points(const Program& program);

}  // namespace dpp
