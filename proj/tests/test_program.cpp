#include <doctest.h>

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "dpp/error.hpp"
#include "dpp/program.hpp"
#include "support.hpp"

using namespace dpp;
using nlohmann::json;

namespace {

const DataType kFloat{ScalarType::Float, 1};
const DataType kInt{ScalarType::Int, 1};

const char* const kCorpus[] = {"table2.json", "identity.json", "chain.json", "widen.json", "ints.json"};

// Ids recomputed by tests/oracles/program_ids.py from the fixture documents.
const std::pair<const char*, const char*> kGoldenIds[] = {
    {"table2.json", "61ad51d3ab3295eff94debe143306d5ef4355061b13c982ab0caac49563bd504"},
    {"identity.json", "b6ac148da7f39845369a13419d70e7623274b9fee461a88cea4fd5c9784a177f"},
    {"chain.json", "c4eb006f53781d5b73f4f6479a1239d196097efe5c97b46ea5106abf93f14d82"},
    {"widen.json", "73279da13367c8aaed07ad83404630c52b684af44135d394b63b5833444839e0"},
    {"ints.json", "c4bd49cb7bb4f1898c4066aaf22a6ed01b76f8e4905cf808a5570c6d5d2a8d9c"},
    {"table2_printed.json", "d3deffce6a30d9d2be22ac7e8cd35e26c43854db8afd1f92da81acf3c9563263"},
};

Node pass_node(const std::string& name, DataType in, DataType out) {
  Node n;
  n.name = name;
  n.body = "int i = get_global_id(0); y[i] = x[i];";
  n.io["x"] = {"x", in, Direction::Input};
  n.io["y"] = {"y", out, Direction::Output};
  return n;
}

json mutate(const std::string& fixture) { return json::parse(test::fixture_text(fixture)); }

}  // namespace

TEST_CASE("parse: fan, rot and adder document") {
  Program p = test::fixture_program("table2.json");
  CHECK(p.kernels.size() == 3);
  CHECK(p.kernels.count("adder") == 1);
  CHECK(p.kernels.count("fan") == 1);
  CHECK(p.kernels.count("rot") == 1);
  CHECK(p.nodes.size() == 3);
  CHECK(p.arrows.size() == 3);
  CHECK(p.kernels.at("fan").io.at("z").data == DataType{ScalarType::Float, 2});
  CHECK(p.kernels.at("fan").io.at("z").direction == Direction::Input);
  CHECK(p.kernels.at("adder").io.at("z").direction == Direction::Output);
  CHECK(p.node_of(2).name == "adder");
  CHECK(p.arrows[0].output == Endpoint{0, "x"});
  CHECK(p.arrows[0].input == Endpoint{2, "x"});
}

TEST_CASE("parse: empty graph parses and fails validation") {
  Program p = parse_program(R"({"kernels":{"k":{"body":"","io":{}}},"nodes":[],"arrows":[]})");
  CHECK(p.kernels.size() == 1);
  CHECK(p.nodes.empty());
  CHECK(p.arrows.empty());
  CHECK(free_points(p).empty());
  auto r = validate(p);
  CHECK_FALSE(r.ok());
  CHECK(r.has(ViolationKind::NoFreeInput));
  CHECK(r.has(ViolationKind::NoFreeOutput));
}

TEST_CASE("parse: arrow to an unknown instance") {
  json doc = mutate("table2.json");
  for (auto& a : doc["arrows"]) {
    if (a["input"] == json::array({2, "x"})) a["input"] = json::array({9, "x"});
  }
  CHECK_THROWS_WITH_AS(parse_program(doc.dump()), doctest::Contains("unknown instance 9"), ParseError);
}

TEST_CASE("parse: rejected documents") {
  CHECK_THROWS_AS(parse_program("{"), ParseError);
  CHECK_THROWS_AS(parse_program("[]"), ParseError);
  CHECK_THROWS_AS(parse_program(R"({"kernels":{},"nodes":[]})"), ParseError);

  json extra = mutate("table2.json");
  extra["comment"] = "x";
  CHECK_THROWS_WITH_AS(parse_program(extra.dump()), doctest::Contains("unknown key 'comment'"), ParseError);

  json dup = mutate("table2.json");
  dup["nodes"][2][0] = 1;
  CHECK_THROWS_WITH_AS(parse_program(dup.dump()), doctest::Contains("duplicate instance id 1"), ParseError);

  json badk = mutate("table2.json");
  badk["nodes"][1][1]["kernel"] = "rotate";
  CHECK_THROWS_WITH_AS(parse_program(badk.dump()), doctest::Contains("unknown kernel 'rotate'"), ParseError);

  json badt = mutate("table2.json");
  badt["kernels"]["rot"]["io"]["x"]["data"] = "double";
  CHECK_THROWS_WITH_AS(parse_program(badt.dump()), doctest::Contains("unknown data type 'double'"), ParseError);

  json badw = mutate("table2.json");
  badw["kernels"]["rot"]["io"]["x"]["data"] = "float3";
  CHECK_THROWS_AS(parse_program(badw.dump()), ParseError);

  json badd = mutate("table2.json");
  badd["kernels"]["rot"]["io"]["x"]["type"] = "Input";
  CHECK_THROWS_WITH_AS(parse_program(badd.dump()), doctest::Contains("unknown point type"), ParseError);

  json badp = mutate("table2.json");
  badp["arrows"][0]["output"] = json::array({0, "w"});
  CHECK_THROWS_WITH_AS(parse_program(badp.dump()), doctest::Contains("unknown point 'w'"), ParseError);
}

TEST_CASE("serialize: round trip over the fixture corpus") {
  for (const char* name : kCorpus) {
    CAPTURE(name);
    Program p = test::fixture_program(name);
    std::string s = serialize_program(p);
    Program q = parse_program(s);
    CHECK(q == p);
    CHECK(serialize_program(q) == s);
  }
}

TEST_CASE("serialize: canonical text has sorted keys and no whitespace") {
  Program p = test::fixture_program("table2.json");
  std::string s = serialize_program(p);
  CHECK(s.rfind(R"({"arrows":[{"input":[2,"x"],"output":[0,"x"]})", 0) == 0);
  CHECK(s.find("\n") == std::string::npos);
  CHECK(s.find(R"("adder":{"body":"int i=get_global_id(0);\nz[i]=x[i]+y[i];","io":{"x":{"data":"float","type":"InputPoint"})") !=
        std::string::npos);
  CHECK(s.find(R"("nodes":[[0,{"kernel":"fan"}],[1,{"kernel":"rot"}],[2,{"kernel":"adder"}]])") != std::string::npos);
}

TEST_CASE("serialize: insertion order of maps does not matter") {
  Program a;
  a.kernels["b"] = pass_node("b", kFloat, kFloat);
  a.kernels["a"] = pass_node("a", kFloat, kFloat);
  a.nodes = {{0, "a"}, {1, "b"}};
  a.arrows = {{{0, "y"}, {1, "x"}}};

  Program b;
  b.kernels["a"] = pass_node("a", kFloat, kFloat);
  b.kernels["b"] = pass_node("b", kFloat, kFloat);
  b.nodes = a.nodes;
  b.arrows = a.arrows;
  CHECK(serialize_program(a) == serialize_program(b));
  CHECK(program_id(a) == program_id(b));

  // Key order in the source document is irrelevant too.
  std::string d1 = R"({"nodes":[[0,{"kernel":"k"}]],"arrows":[],"kernels":{"k":{"io":{"y":{"type":"OutputPoint","data":"float"},"x":{"type":"InputPoint","data":"float"}},"body":"y[0]=x[0];"}}})";
  std::string d2 = R"({"kernels":{"k":{"body":"y[0]=x[0];","io":{"x":{"data":"float","type":"InputPoint"},"y":{"data":"float","type":"OutputPoint"}}}},"nodes":[[0,{"kernel":"k"}]],"arrows":[]})";
  CHECK(serialize_program(parse_program(d1)) == serialize_program(parse_program(d2)));
}

TEST_CASE("program_id: golden values") {
  for (const auto& [name, id] : kGoldenIds) {
    CAPTURE(name);
    CHECK(program_id(test::fixture_program(name)) == id);
  }
}

TEST_CASE("program_id: stable under reparse, injective on corpus, sensitive to the body") {
  std::set<std::string> ids;
  for (const char* name : kCorpus) {
    Program p = test::fixture_program(name);
    std::string id = program_id(p);
    CHECK(id.size() == 64);
    CHECK(std::all_of(id.begin(), id.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); }));
    CHECK(program_id(parse_program(serialize_program(p))) == id);
    ids.insert(id);
  }
  CHECK(ids.size() == std::size(kCorpus));

  Program p = test::fixture_program("table2.json");
  std::string before = program_id(p);
  p.kernels["adder"].body.back() = ' ';
  CHECK(program_id(p) != before);
}

TEST_CASE("validate: the table2 fixture is executable") {
  auto r = validate(test::fixture_program("table2.json"));
  CHECK(r.ok());
  CHECK(r.to_json() == json{{"valid", true}, {"violations", json::array()}});
}

TEST_CASE("validate: the unfixed table2 variant reports both kernel errors") {
  auto r = validate(test::fixture_program("table2_printed.json"));
  CHECK_FALSE(r.ok());
  CHECK(r.has(ViolationKind::KernelError));
  std::string text = r.to_string();
  CHECK(text.find("unknown identifier 'id'") != std::string::npos);
  CHECK(text.find("shift requires integer operands") != std::string::npos);
}

TEST_CASE("validate: two-instance cycle") {
  Program p;
  p.kernels["k"] = pass_node("k", kFloat, kFloat);
  Node src = pass_node("src", kFloat, kFloat);
  src.io["z"] = {"z", kFloat, Direction::Input};
  src.io["w"] = {"w", kFloat, Direction::Output};
  src.body = "int i = get_global_id(0); y[i] = x[i]; w[i] = z[i];";
  p.kernels["src"] = src;
  p.nodes = {{0, "src"}, {1, "k"}};
  p.arrows = {{{0, "y"}, {1, "x"}}, {{1, "y"}, {0, "x"}}};
  auto r = validate(p);
  REQUIRE(r.has(ViolationKind::Cycle));
  auto it = std::find_if(r.violations.begin(), r.violations.end(),
                         [](const Violation& v) { return v.kind == ViolationKind::Cycle; });
  CHECK(it->instances == std::vector<InstanceId>{0, 1, 0});
  CHECK_THROWS_AS(topological_order(p), GraphError);
  CHECK(r.to_json()["violations"][0]["kind"] == "cycle");
}

TEST_CASE("validate: float output into int input") {
  Program p;
  p.kernels["f"] = pass_node("f", kFloat, kFloat);
  p.kernels["g"] = pass_node("g", kInt, kInt);
  p.nodes = {{0, "f"}, {1, "g"}};
  p.arrows = {{{0, "y"}, {1, "x"}}};
  auto r = validate(p);
  REQUIRE(r.has(ViolationKind::TypeMismatch));
  CHECK(r.to_string().find("base scalar type mismatch") != std::string::npos);
}

TEST_CASE("validate: width may differ when the base type matches") {
  CHECK(validate(test::fixture_program("widen.json")).ok());
}

TEST_CASE("validate: duplicate endpoint, direction, self arrow") {
  Program p;
  p.kernels["k"] = pass_node("k", kFloat, kFloat);
  p.nodes = {{0, "k"}, {1, "k"}, {2, "k"}};
  p.arrows = {{{0, "y"}, {1, "x"}}, {{0, "y"}, {2, "x"}}};
  CHECK(validate(p).has(ViolationKind::DuplicateEndpoint));

  p.arrows = {{{0, "x"}, {1, "x"}}};
  CHECK(validate(p).has(ViolationKind::ArrowDirection));

  p.arrows = {{{1, "y"}, {1, "x"}}};
  CHECK(validate(p).has(ViolationKind::SelfArrow));
}

TEST_CASE("validate: nodes need an input and an output point") {
  Program p;
  Node only_out;
  only_out.name = "gen";
  only_out.body = "int i = get_global_id(0); y[i] = 1.0f;";
  only_out.io["y"] = {"y", kFloat, Direction::Output};
  p.kernels["gen"] = only_out;
  p.nodes = {{0, "gen"}};
  auto r = validate(p);
  CHECK(r.has(ViolationKind::MissingInputPoint));
  CHECK(r.has(ViolationKind::NoFreeInput));
  CHECK_FALSE(r.has(ViolationKind::NoFreeOutput));

  Node only_in;
  only_in.name = "sink";
  only_in.body = "int i = get_global_id(0); float v = x[i];";
  only_in.io["x"] = {"x", kFloat, Direction::Input};
  p.kernels = {{"sink", only_in}};
  p.nodes = {{0, "sink"}};
  r = validate(p);
  CHECK(r.has(ViolationKind::MissingOutputPoint));
  CHECK(r.has(ViolationKind::NoFreeOutput));
}

TEST_CASE("validate: kernel body type errors are reported per kernel") {
  Program p;
  Node bad = pass_node("bad", kFloat, kFloat);
  bad.body = "int i = get_global_id(0); y[i] = x[i] % 2;";
  p.kernels["bad"] = bad;
  p.nodes = {{0, "bad"}};
  auto r = validate(p);
  REQUIRE(r.has(ViolationKind::KernelError));
  CHECK(r.violations[0].kernel == "bad");
  CHECK(r.to_json()["violations"][0]["kernel"] == "bad");
}

TEST_CASE("topological_order") {
  CHECK(topological_order(test::fixture_program("table2.json")) == std::vector<InstanceId>{0, 1, 2});

  Program one;
  one.kernels["k"] = pass_node("k", kFloat, kFloat);
  one.nodes = {{5, "k"}};
  CHECK(topological_order(one) == std::vector<InstanceId>{5});

  Program two;
  two.kernels["k"] = pass_node("k", kFloat, kFloat);
  two.nodes = {{7, "k"}, {3, "k"}};
  CHECK(topological_order(two) == std::vector<InstanceId>{3, 7});

  // Order is forced by arrows even against id order; ties otherwise go low first.
  Program three;
  three.kernels["k"] = pass_node("k", kFloat, kFloat);
  three.nodes = {{0, "k"}, {1, "k"}, {2, "k"}};
  three.arrows = {{{2, "y"}, {0, "x"}}};
  CHECK(topological_order(three) == std::vector<InstanceId>{1, 2, 0});
}

TEST_CASE("free_points") {
  auto fp = free_points(test::fixture_program("table2.json"));
  REQUIRE(fp.size() == 2);
  CHECK(fp[0].stream_name() == "0.z");
  CHECK(fp[0].direction == Direction::Input);
  CHECK(fp[0].data == DataType{ScalarType::Float, 2});
  CHECK(fp[1].stream_name() == "2.z");
  CHECK(fp[1].direction == Direction::Output);

  Program chain;
  chain.kernels["k"] = pass_node("k", kFloat, kFloat);
  chain.nodes = {{0, "k"}, {1, "k"}, {2, "k"}};
  chain.arrows = {{{0, "y"}, {1, "x"}}, {{1, "y"}, {2, "x"}}};
  auto cp = free_points(chain);
  REQUIRE(cp.size() == 2);
  CHECK(cp[0].stream_name() == "0.x");
  CHECK(cp[1].stream_name() == "2.y");

  CHECK(free_points(Program{}).empty());
}

TEST_CASE("validate accepts exactly when ordering succeeds and arrow types agree") {
  for (const char* name : kCorpus) {
    CAPTURE(name);
    Program p = test::fixture_program(name);
    CHECK(validate(p).ok());
    CHECK_NOTHROW(topological_order(p));
  }
}
