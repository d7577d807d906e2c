#include "dpp/program.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <set>

#include "dpp/digest.hpp"
#include "dpp/error.hpp"
#include "dpp/kernel/typecheck.hpp"

namespace dpp {

using nlohmann::json;

std::vector<IOPoint> Node::points() const {
  std::vector<IOPoint> out;
  out.reserve(io.size());
  for (const auto& [name, p] : io) out.push_back(p);
  return out;
}

const Instance* Program::find_instance(InstanceId id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const Node& Program::node_of(InstanceId id) const {
  const Instance* inst = find_instance(id);
  if (!inst) throw std::out_of_range("unknown instance " + std::to_string(id));
  return kernels.at(inst->kernel);
}

const IOPoint* Program::point_at(const Endpoint& e) const {
  const Instance* inst = find_instance(e.instance);
  if (!inst) return nullptr;
  auto k = kernels.find(inst->kernel);
  if (k == kernels.end()) return nullptr;
  auto p = k->second.io.find(e.point);
  return p == k->second.io.end() ? nullptr : &p->second;
}

std::string FreePoint::stream_name() const { return std::to_string(instance) + "." + point; }

// ---- parsing -----------------------------------------------------------------

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ParseError(msg); }

void require_keys(const json& obj, std::initializer_list<std::string_view> keys, const std::string& where) {
  if (!obj.is_object()) fail(where + " must be an object");
  for (auto k : keys) {
    if (!obj.contains(k)) fail("missing key '" + std::string(k) + "' in " + where);
  }
  for (const auto& [k, v] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) fail("unknown key '" + k + "' in " + where);
  }
}

InstanceId parse_id(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where + ": instance id must be a non-negative integer");
  if (v.is_number_unsigned()) {
    auto u = v.get<std::uint64_t>();
    if (u > std::numeric_limits<InstanceId>::max()) fail(where + ": instance id out of range");
    return static_cast<InstanceId>(u);
  }
  auto i = v.get<std::int64_t>();
  if (i < 0) fail(where + ": instance id must be a non-negative integer");
  if (static_cast<std::uint64_t>(i) > std::numeric_limits<InstanceId>::max()) fail(where + ": instance id out of range");
  return static_cast<InstanceId>(i);
}

Node parse_node(const std::string& name, const json& j) {
  const std::string where = "kernel '" + name + "'";
  require_keys(j, {"body", "io"}, where);
  if (!j["body"].is_string()) fail(where + ": body must be a string");
  if (!j["io"].is_object()) fail(where + ": io must be an object");
  Node n;
  n.name = name;
  n.body = j["body"].get<std::string>();
  for (const auto& [pname, pj] : j["io"].items()) {
    const std::string pwhere = where + " point '" + pname + "'";
    require_keys(pj, {"data", "type"}, pwhere);
    if (!pj["data"].is_string() || !pj["type"].is_string()) fail(pwhere + ": data and type must be strings");
    auto dt = parse_data_type(pj["data"].get<std::string>());
    if (!dt) fail(pwhere + ": unknown data type '" + pj["data"].get<std::string>() + "'");
    const auto dir = pj["type"].get<std::string>();
    IOPoint p{pname, *dt, Direction::Input};
    if (dir == "InputPoint") {
      p.direction = Direction::Input;
    } else if (dir == "OutputPoint") {
      p.direction = Direction::Output;
    } else {
      fail(pwhere + ": unknown point type '" + dir + "'");
    }
    n.io.emplace(pname, std::move(p));
  }
  return n;
}

Endpoint parse_endpoint(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[1].is_string()) fail(where + " must be [instance id, point name]");
  return {parse_id(j[0], where), j[1].get<std::string>()};
}

}  // namespace

Program parse_program(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    fail(std::string("malformed JSON: ") + e.what());
  }
  require_keys(doc, {"kernels", "nodes", "arrows"}, "program document");
  if (!doc["kernels"].is_object()) fail("'kernels' must be an object");
  if (!doc["nodes"].is_array()) fail("'nodes' must be an array");
  if (!doc["arrows"].is_array()) fail("'arrows' must be an array");

  Program p;
  for (const auto& [name, kj] : doc["kernels"].items()) p.kernels.emplace(name, parse_node(name, kj));

  std::set<InstanceId> ids;
  for (const auto& nj : doc["nodes"]) {
    if (!nj.is_array() || nj.size() != 2) fail("node entries must be [id, {\"kernel\": name}] pairs");
    InstanceId id = parse_id(nj[0], "node entry");
    require_keys(nj[1], {"kernel"}, "node " + std::to_string(id));
    if (!nj[1]["kernel"].is_string()) fail("node " + std::to_string(id) + ": kernel must be a string");
    auto kernel = nj[1]["kernel"].get<std::string>();
    if (!p.kernels.count(kernel)) fail("node " + std::to_string(id) + ": unknown kernel '" + kernel + "'");
    if (!ids.insert(id).second) fail("duplicate instance id " + std::to_string(id));
    p.nodes.push_back({id, std::move(kernel)});
  }

  for (const auto& aj : doc["arrows"]) {
    require_keys(aj, {"output", "input"}, "arrow");
    Arrow a{parse_endpoint(aj["output"], "arrow output"), parse_endpoint(aj["input"], "arrow input")};
    for (const Endpoint* e : {&a.output, &a.input}) {
      if (!ids.count(e->instance)) fail("unknown instance " + std::to_string(e->instance));
      if (!p.point_at(*e)) {
        fail("unknown point '" + e->point + "' on instance " + std::to_string(e->instance));
      }
    }
    p.arrows.push_back(std::move(a));
  }
  return p;
}

std::string serialize_program(const Program& program) {
  json kernels = json::object();
  for (const auto& [name, node] : program.kernels) {
    json io = json::object();
    for (const auto& [pname, p] : node.io) {
      io[pname] = {{"data", p.data.name()}, {"type", p.direction == Direction::Input ? "InputPoint" : "OutputPoint"}};
    }
    kernels[name] = {{"body", node.body}, {"io", std::move(io)}};
  }
  json nodes = json::array();
  for (const auto& n : program.nodes) nodes.push_back(json::array({n.id, json{{"kernel", n.kernel}}}));
  json arrows = json::array();
  for (const auto& a : program.arrows) {
    arrows.push_back({{"output", json::array({a.output.instance, a.output.point})},
                      {"input", json::array({a.input.instance, a.input.point})}});
  }
  // nlohmann's default object is a std::map, so keys come out in byte order,
  // which for UTF-8 equals code point order.
  json doc = {{"arrows", std::move(arrows)}, {"kernels", std::move(kernels)}, {"nodes", std::move(nodes)}};
  return doc.dump();
}

std::string program_id(const Program& program) { return sha256_hex(serialize_program(program)); }

// ---- graph queries -------------------------------------------------------------

std::vector<FreePoint> free_points(const Program& program) {
  std::set<Endpoint> connected;
  for (const auto& a : program.arrows) {
    connected.insert(a.output);
    connected.insert(a.input);
  }
  std::vector<FreePoint> out;
  for (const auto& inst : program.nodes) {
    auto k = program.kernels.find(inst.kernel);
    if (k == program.kernels.end()) continue;
    for (const auto& [pname, p] : k->second.io) {
      if (connected.count({inst.id, pname})) continue;
      out.push_back({inst.id, pname, p.direction, p.data});
    }
  }
  std::sort(out.begin(), out.end(), [](const FreePoint& a, const FreePoint& b) {
    return std::tie(a.instance, a.point) < std::tie(b.instance, b.point);
  });
  return out;
}

namespace {

std::map<InstanceId, std::set<InstanceId>> successors(const Program& program) {
  std::map<InstanceId, std::set<InstanceId>> succ;
  for (const auto& n : program.nodes) succ[n.id];
  for (const auto& a : program.arrows) {
    if (succ.count(a.output.instance) && succ.count(a.input.instance)) {
      succ[a.output.instance].insert(a.input.instance);
    }
  }
  return succ;
}

/// Some cycle as a closed walk (first == last), rotated to start at its smallest id.
std::vector<InstanceId> find_cycle(const Program& program) {
  auto succ = successors(program);
  std::map<InstanceId, int> color;  // 0 white, 1 on stack, 2 done
  std::vector<InstanceId> stack;
  std::vector<InstanceId> cycle;

  std::function<bool(InstanceId)> dfs = [&](InstanceId u) {
    color[u] = 1;
    stack.push_back(u);
    for (InstanceId v : succ[u]) {
      if (color[v] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        cycle.assign(it, stack.end());
        return true;
      }
      if (color[v] == 0 && dfs(v)) return true;
    }
    stack.pop_back();
    color[u] = 2;
    return false;
  };
  for (const auto& [id, _] : succ) {
    if (color[id] == 0 && dfs(id)) break;
  }
  if (cycle.empty()) return cycle;
  std::rotate(cycle.begin(), std::min_element(cycle.begin(), cycle.end()), cycle.end());
  cycle.push_back(cycle.front());
  return cycle;
}

}  // namespace

std::vector<InstanceId> topological_order(const Program& program) {
  auto succ = successors(program);
  std::map<InstanceId, int> indegree;
  for (const auto& [u, vs] : succ) {
    indegree.try_emplace(u, 0);
    for (auto v : vs) ++indegree[v];
  }
  std::priority_queue<InstanceId, std::vector<InstanceId>, std::greater<>> ready;
  for (const auto& [u, d] : indegree) {
    if (d == 0) ready.push(u);
  }
  std::vector<InstanceId> order;
  while (!ready.empty()) {
    InstanceId u = ready.top();
    ready.pop();
    order.push_back(u);
    for (auto v : succ[u]) {
      if (--indegree[v] == 0) ready.push(v);
    }
  }
  if (order.size() != succ.size()) throw GraphError("program graph contains a cycle");
  return order;
}

// ---- validation ----------------------------------------------------------------

std::string_view violation_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Cycle: return "cycle";
    case ViolationKind::TypeMismatch: return "type_mismatch";
    case ViolationKind::DuplicateEndpoint: return "duplicate_endpoint";
    case ViolationKind::ArrowDirection: return "arrow_direction";
    case ViolationKind::SelfArrow: return "self_arrow";
    case ViolationKind::MissingInputPoint: return "missing_input_point";
    case ViolationKind::MissingOutputPoint: return "missing_output_point";
    case ViolationKind::InvalidPointName: return "invalid_point_name";
    case ViolationKind::KernelError: return "kernel_error";
    case ViolationKind::NoFreeInput: return "no_free_input";
    case ViolationKind::NoFreeOutput: return "no_free_output";
  }
  return "unknown";
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; });
}

json ValidationReport::to_json() const {
  json list = json::array();
  for (const auto& v : violations) {
    json item = {{"kind", violation_name(v.kind)}, {"message", v.message}};
    if (!v.instances.empty()) item["instances"] = v.instances;
    if (!v.kernel.empty()) item["kernel"] = v.kernel;
    list.push_back(std::move(item));
  }
  return {{"valid", ok()}, {"violations", std::move(list)}};
}

std::string ValidationReport::to_string() const {
  if (ok()) return "valid\n";
  std::string out;
  for (const auto& v : violations) {
    out += std::string(violation_name(v.kind)) + ": " + v.message + "\n";
  }
  return out;
}

ValidationReport validate(const Program& program) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, std::string msg, std::vector<InstanceId> ids = {}, std::string kernel = {}) {
    report.violations.push_back({kind, std::move(msg), std::move(ids), std::move(kernel)});
  };

  for (const auto& [name, node] : program.kernels) {
    bool has_in = false, has_out = false, names_ok = true;
    for (const auto& [pname, p] : node.io) {
      (p.direction == Direction::Input ? has_in : has_out) = true;
      if (!kernel::is_identifier(pname) || pname == "M_PI_F") {
        add(ViolationKind::InvalidPointName, "kernel '" + name + "': invalid point name '" + pname + "'", {}, name);
        names_ok = false;
      }
    }
    if (!has_in) add(ViolationKind::MissingInputPoint, "kernel '" + name + "' has no input point", {}, name);
    if (!has_out) add(ViolationKind::MissingOutputPoint, "kernel '" + name + "' has no output point", {}, name);
    if (names_ok) {
      try {
        auto points = node.points();
        kernel::compile_kernel(node.body, points);
      } catch (const dpp::KernelError& e) {
        add(ViolationKind::KernelError, "kernel '" + name + "': " + e.what(), {}, name);
      }
    }
  }

  std::set<Endpoint> seen_out, seen_in;
  for (const auto& a : program.arrows) {
    const std::vector<InstanceId> ends{a.output.instance, a.input.instance};
    const std::string label = std::to_string(a.output.instance) + "." + a.output.point + " -> " +
                              std::to_string(a.input.instance) + "." + a.input.point;
    const IOPoint* out = program.point_at(a.output);
    const IOPoint* in = program.point_at(a.input);
    if (!out || !in) {
      add(ViolationKind::ArrowDirection, "arrow " + label + " references a missing point", ends);
      continue;
    }
    if (a.output.instance == a.input.instance) {
      add(ViolationKind::SelfArrow, "arrow " + label + " connects an instance to itself", ends);
    }
    if (out->direction != Direction::Output) {
      add(ViolationKind::ArrowDirection, "arrow " + label + ": source is not an output point", ends);
    }
    if (in->direction != Direction::Input) {
      add(ViolationKind::ArrowDirection, "arrow " + label + ": target is not an input point", ends);
    }
    if (out->data.base != in->data.base) {
      add(ViolationKind::TypeMismatch,
          "arrow " + label + ": base scalar type mismatch (" + out->data.name() + " vs " + in->data.name() + ")", ends);
    }
    if (!seen_out.insert(a.output).second) {
      add(ViolationKind::DuplicateEndpoint, "output point " + std::to_string(a.output.instance) + "." + a.output.point +
                                                " has more than one arrow", ends);
    }
    if (!seen_in.insert(a.input).second) {
      add(ViolationKind::DuplicateEndpoint, "input point " + std::to_string(a.input.instance) + "." + a.input.point +
                                                " has more than one arrow", ends);
    }
  }

  auto cycle = find_cycle(program);
  if (!cycle.empty()) {
    std::string path;
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      if (k) path += " -> ";
      path += std::to_string(cycle[k]);
    }
    add(ViolationKind::Cycle, "cycle: " + path, cycle);
  }

  auto free = free_points(program);
  bool free_in = std::any_of(free.begin(), free.end(), [](const FreePoint& f) { return f.direction == Direction::Input; });
  bool free_out = std::any_of(free.begin(), free.end(), [](const FreePoint& f) { return f.direction == Direction::Output; });
  if (!free_in) add(ViolationKind::NoFreeInput, "program has no free input point");
  if (!free_out) add(ViolationKind::NoFreeOutput, "program has no free output point");
  return report;
}

}  // namespace dpp
