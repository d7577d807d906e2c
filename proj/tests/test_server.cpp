#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dpp/client.hpp"
#include "dpp/digest.hpp"
#include "dpp/server.hpp"
#include "dpp/socket.hpp"
#include "dpp/wire.hpp"
#include "support.hpp"

using namespace dpp;
using json = nlohmann::json;

namespace {

const DataType kFloat{ScalarType::Float, 1};
const DataType kFloat2{ScalarType::Float, 2};

ServerConfig quiet_config() {
  ServerConfig c;
  c.workers = 2;
  return c;
}

json body(const Reply& r) { return json::parse(r.body); }

std::string upload_fixture(Server& s, const std::string& name) {
  auto r = s.handle_upload_program(test::fixture_text(name));
  REQUIRE(r.status / 100 == 2);
  return body(r)["program_id"];
}

json wait_for_state(Server& s, const std::string& run, const std::string& state) {
  json j;
  for (int k = 0; k < 500; ++k) {
    j = body(s.handle_run_status(run));
    if (j["state"] == state) return j;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  FAIL("run never reached state " << state << ", last: " << j.dump());
  return j;
}

struct DataConn {
  net::TcpStream sock;
  wire::ReadFn read;

  explicit DataConn(std::uint16_t port) : sock(net::TcpStream::connect("127.0.0.1", port)) {
    read = [this](std::byte* d, std::size_t n) { return sock.recv_some(d, n); };
  }

  wire::Reply handshake(const std::string& id) {
    sock.send_all(wire::encode_handshake(id));
    return wire::read_reply(read).value();
  }

  void send(const wire::Frame& f) { sock.send_all(wire::encode_frame(f)); }

  std::vector<wire::Frame> drain() {
    std::vector<wire::Frame> frames;
    while (auto f = wire::read_frame(read)) frames.push_back(std::move(*f));
    return frames;
  }
};

wire::DataFrame data(const std::string& stream, std::uint64_t index, const Buffer& b) {
  return {stream, index, static_cast<std::uint32_t>(b.elements()), b.bytes};
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("dpp-test-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("status reports an empty store and at least one worker") {
  Server s(quiet_config());
  auto j = body(s.handle_status());
  CHECK(j["stored_programs"] == 0);
  CHECK(j["workers"].get<int>() >= 1);
  CHECK(j["active_runs"] == 0);
  CHECK(j["version"] == std::string(kVersion));
  upload_fixture(s, "table2.json");
  CHECK(body(s.handle_status())["stored_programs"] == 1);
}

TEST_CASE("upload is idempotent and content addressed") {
  Server s(quiet_config());
  auto first = s.handle_upload_program(test::fixture_text("table2.json"));
  CHECK(first.status == 201);
  std::string id = body(first)["program_id"];
  CHECK(id.size() == 64);
  CHECK(id == program_id(test::fixture_program("table2.json")));
  auto again = s.handle_upload_program(test::fixture_text("table2.json"));
  CHECK(again.status == 200);
  CHECK(body(again)["program_id"] == id);

  auto doc = s.handle_get_program(id);
  CHECK(doc.status == 200);
  CHECK(sha256_hex(doc.body) == id);
  CHECK(s.handle_get_program(std::string(64, '0')).status == 404);
}

TEST_CASE("upload rejects invalid programs with a report") {
  Server s(quiet_config());
  Program p = test::fixture_program("chain.json");
  // Close the chain into a loop: tail output back into the head input.
  auto fp = free_points(p);
  p.arrows.push_back({{fp[1].instance, fp[1].point}, {fp[0].instance, fp[0].point}});
  auto r = s.handle_upload_program(serialize_program(p));
  CHECK(r.status == 400);
  auto j = body(r);
  CHECK(j["valid"] == false);
  bool has_cycle = false;
  for (const auto& v : j["violations"]) has_cycle |= v["kind"] == "cycle";
  CHECK(has_cycle);

  auto bad = s.handle_upload_program("{not json");
  CHECK(bad.status == 400);
  CHECK(body(bad)["violations"][0]["kind"] == "parse_error");
  CHECK(body(s.handle_status())["stored_programs"] == 0);
}

TEST_CASE("create run: 404 for unknown program, waiting state, run limit") {
  auto cfg = quiet_config();
  Server s(cfg);
  CHECK(s.handle_create_run(std::string(64, 'a'), "").status == 404);
  std::string id = upload_fixture(s, "table2.json");

  auto r = s.handle_create_run(id, R"({"chunk_size": 3})");
  REQUIRE(r.status == 201);
  auto run = body(r);
  CHECK(run["data_port"].get<int>() > 0);
  auto st = body(s.handle_run_status(run["run_id"]));
  CHECK(st["state"] == "waiting");
  CHECK(st["chunks_in"] == 0);
  CHECK(st["chunks_out"] == 0);
  CHECK(s.handle_run_status("nope").status == 404);

  CHECK(s.handle_create_run(id, R"({"chunk_size": 0})").status == 400);
  CHECK(s.handle_create_run(id, R"({"chunk_size": "big"})").status == 400);

  for (int k = 1; k < 16; ++k) CHECK(s.handle_create_run(id, "{}").status == 201);
  auto over = s.handle_create_run(id, "{}");
  CHECK(over.status == 409);
  CHECK(body(s.handle_status())["active_runs"] == 16);

  // Cancelling frees a slot.
  CHECK(s.handle_cancel_run(run["run_id"]).status == 200);
  CHECK(s.handle_run_status(run["run_id"]).status == 404);
  CHECK(s.handle_create_run(id, "{}").status == 201);
}

TEST_CASE("create run rejects a chunk size with non-integral width conversion") {
  Server s(quiet_config());
  std::string id = upload_fixture(s, "widen.json");
  auto r = s.handle_create_run(id, R"({"chunk_size": 3})");
  CHECK(r.status == 400);
  CHECK(body(r)["error"].get<std::string>().find("non-integral") != std::string::npos);
}

TEST_CASE("data plane: table2 chunk of three elements") {
  Server s(quiet_config());
  std::string id = upload_fixture(s, "table2.json");
  auto run = body(s.handle_create_run(id, R"({"chunk_size": 3})"));
  std::string run_id = run["run_id"];

  DataConn c(run["data_port"].get<std::uint16_t>());
  CHECK(c.handshake(run_id).ok);
  c.send(data("0.z", 0, make_buffer<float>(kFloat2, {1, 2, 3, 4, 5, 6})));
  c.send(wire::EndFrame{"0.z"});
  auto frames = c.drain();
  REQUIRE(frames.size() == 2);
  auto& d = std::get<wire::DataFrame>(frames[0]);
  CHECK(d.stream == "2.z");
  CHECK(d.chunk_index == 0);
  CHECK(d.element_count == 3);
  CHECK(to_vector<float>(Buffer(kFloat, d.payload)) == std::vector<float>{131073, 262147, 393221});
  CHECK(std::get<wire::EndFrame>(frames[1]).stream == "2.z");

  auto st = wait_for_state(s, run_id, "done");
  CHECK(st["chunks_in"] == 1);
  CHECK(st["chunks_out"] == 1);
  CHECK(st["work_items"] == 3);
}

TEST_CASE("data plane: unknown run id is refused and the session keeps waiting") {
  Server s(quiet_config());
  std::string id = upload_fixture(s, "identity.json");
  auto run = body(s.handle_create_run(id, "{}"));
  auto port = run["data_port"].get<std::uint16_t>();
  {
    DataConn bad(port);
    auto reply = bad.handshake("not-a-run");
    CHECK_FALSE(reply.ok);
    CHECK(reply.message.find("unknown run id") != std::string::npos);
    CHECK(bad.drain().empty());
  }
  CHECK(body(s.handle_run_status(run["run_id"]))["state"] == "waiting");

  // Immediate END with no DATA.
  DataConn c(port);
  CHECK(c.handshake(run["run_id"]).ok);
  auto fp = free_points(test::fixture_program("identity.json"));
  c.send(wire::EndFrame{fp[0].stream_name()});
  auto frames = c.drain();
  REQUIRE(frames.size() == 1);
  CHECK(std::get<wire::EndFrame>(frames[0]).stream == fp[1].stream_name());
  auto st = wait_for_state(s, run["run_id"], "done");
  CHECK(st["chunks_out"] == 0);
}

TEST_CASE("data plane: protocol violations produce an ERROR frame and a failed run") {
  Server s(quiet_config());
  std::string id = upload_fixture(s, "table2.json");

  auto expect_failure = [&](auto&& drive, const std::string& needle) {
    auto run = body(s.handle_create_run(id, R"({"chunk_size": 2})"));
    DataConn c(run["data_port"].get<std::uint16_t>());
    REQUIRE(c.handshake(run["run_id"]).ok);
    drive(c);
    auto frames = c.drain();
    REQUIRE_FALSE(frames.empty());
    auto* err = std::get_if<wire::ErrorFrame>(&frames.back());
    REQUIRE(err);
    CHECK_MESSAGE(err->message.find(needle) != std::string::npos, err->message);
    auto st = wait_for_state(s, run["run_id"], "failed");
    CHECK(st["error"] == err->message);
  };

  auto two = make_buffer<float>(kFloat2, {1, 2, 3, 4});
  expect_failure([&](DataConn& c) { c.send(data("9.q", 0, two)); }, "unknown input stream");
  expect_failure([&](DataConn& c) { c.send(data("0.z", 1, two)); }, "expecting chunk 0");
  expect_failure(
      [&](DataConn& c) {
        c.send(wire::DataFrame{"0.z", 0, 3, two.bytes});
      },
      "expected 24");
  expect_failure(
      [&](DataConn& c) {
        c.send(data("0.z", 0, two));
        c.send(data("0.z", 1, make_buffer<float>(kFloat2, {1, 2, 3, 4, 5, 6})));
      },
      "more than the chunk size");
  expect_failure([&](DataConn& c) { c.send(wire::ErrorFrame{"giving up"}); }, "giving up");
  expect_failure(
      [&](DataConn& c) {
        std::vector<std::byte> junk{std::byte{7}};
        c.sock.send_all(junk);
      },
      "unknown frame type");
}

TEST_CASE("data plane: closing mid-stream fails the run") {
  Server s(quiet_config());
  std::string id = upload_fixture(s, "table2.json");
  auto run = body(s.handle_create_run(id, R"({"chunk_size": 2})"));
  {
    DataConn c(run["data_port"].get<std::uint16_t>());
    REQUIRE(c.handshake(run["run_id"]).ok);
    c.send(data("0.z", 0, make_buffer<float>(kFloat2, {1, 2, 3, 4})));
  }
  auto st = wait_for_state(s, run["run_id"], "failed");
  CHECK(st["error"].get<std::string>().find("closed") != std::string::npos);
}

TEST_CASE("data plane: kernel runtime errors are reported to the client and recorded") {
  Server s(quiet_config());
  Program p;
  p.kernels["div"] = {"div", "int i = get_global_id(0);\nint d = x[i];\ny[i] = 10 / d;",
                      {{"x", {"x", {ScalarType::Int, 1}, Direction::Input}},
                       {"y", {"y", {ScalarType::Int, 1}, Direction::Output}}}};
  p.nodes = {{0, "div"}};
  auto id = body(s.handle_upload_program(serialize_program(p)))["program_id"].get<std::string>();
  auto run = body(s.handle_create_run(id, R"({"chunk_size": 4})"));
  DataConn c(run["data_port"].get<std::uint16_t>());
  REQUIRE(c.handshake(run["run_id"]).ok);
  c.send(data("0.x", 0, make_buffer<std::int32_t>({ScalarType::Int, 1}, {1, 2, 0, 4})));
  c.send(wire::EndFrame{"0.x"});
  auto frames = c.drain();
  REQUIRE_FALSE(frames.empty());
  auto* err = std::get_if<wire::ErrorFrame>(&frames.back());
  REQUIRE(err);
  CHECK(err->message.find("work-item 2") != std::string::npos);
  CHECK(err->message.find("integer division by zero") != std::string::npos);
  wait_for_state(s, run["run_id"], "failed");
}

TEST_CASE("store survives a restart") {
  TempDir dir;
  std::string id;
  {
    auto cfg = quiet_config();
    cfg.store_dir = dir.path;
    Server s(cfg);
    id = upload_fixture(s, "table2.json");
    CHECK(std::filesystem::exists(dir.path / (id + ".json")));
  }
  auto cfg = quiet_config();
  cfg.store_dir = dir.path;
  Server s(cfg);
  CHECK(s.stored_programs() == 1);
  auto doc = s.handle_get_program(id);
  CHECK(doc.status == 200);
  CHECK(sha256_hex(doc.body) == id);
  CHECK(s.handle_upload_program(test::fixture_text("table2.json")).status == 200);
}

TEST_CASE("store skips files whose content does not match their name") {
  TempDir dir;
  std::string text = test::fixture_text("identity.json");
  {
    std::ofstream(dir.path / (std::string(64, 'f') + ".json")) << text;
    std::ofstream(dir.path / "garbage.json") << "{";
  }
  auto cfg = quiet_config();
  cfg.store_dir = dir.path;
  Server s(cfg);
  CHECK(s.stored_programs() == 0);
}

TEST_CASE("inline runs decode and encode base64 streams") {
  Server s(quiet_config());
  std::string id = upload_fixture(s, "table2.json");
  auto in = make_buffer<float>(kFloat2, {1, 2, 3, 4, 5, 6});
  json req = {{"chunk_size", 2}, {"inputs", {{"0.z", {{"type", "float2"}, {"data", base64_encode(in.bytes)}}}}}};
  auto r = s.handle_inline_run(id, req.dump());
  REQUIRE(r.status == 200);
  auto out = body(r)["outputs"]["2.z"];
  CHECK(out["type"] == "float");
  CHECK(out["elements"] == 3);
  auto bytes = base64_decode(out["data"].get<std::string>()).value();
  CHECK(to_vector<float>(Buffer(kFloat, bytes)) == std::vector<float>{131073, 262147, 393221});

  CHECK(s.handle_inline_run(id, R"({"inputs": {"0.z": {"type": "float2", "data": "%%%"}}})").status == 400);
  CHECK(s.handle_inline_run(id, R"({"inputs": {}})").status == 422);
  CHECK(s.handle_inline_run(std::string(64, '1'), "{}").status == 404);

  auto cfg = quiet_config();
  cfg.max_inline_bytes = 8;
  Server small(cfg);
  upload_fixture(small, "table2.json");
  CHECK(small.handle_inline_run(id, req.dump()).status == 413);
}

TEST_CASE("HTTP routes") {
  Server s(quiet_config());
  auto port = s.start(0);
  httplib::Client cli("127.0.0.1", port);
  auto st = cli.Get("/v1/status");
  REQUIRE(st);
  CHECK(st->status == 200);
  CHECK(st->get_header_value("Access-Control-Allow-Origin") == "*");

  auto up = cli.Post("/v1/programs", test::fixture_text("table2.json"), "application/json");
  REQUIRE(up);
  CHECK(up->status == 201);
  std::string id = json::parse(up->body)["program_id"];

  auto head = cli.Head("/v1/programs/" + id);
  REQUIRE(head);
  CHECK(head->status == 200);
  auto missing = cli.Head("/v1/programs/" + std::string(64, '0'));
  REQUIRE(missing);
  CHECK(missing->status == 404);

  auto run = cli.Post("/v1/programs/" + id + "/runs", R"({"chunk_size": 8})", "application/json");
  REQUIRE(run);
  CHECK(run->status == 201);
  std::string run_id = json::parse(run->body)["run_id"];
  auto rs = cli.Get("/v1/runs/" + run_id);
  REQUIRE(rs);
  CHECK(json::parse(rs->body)["state"] == "waiting");
  auto del = cli.Delete("/v1/runs/" + run_id);
  REQUIRE(del);
  CHECK(del->status == 200);
  auto gone = cli.Get("/v1/runs/" + run_id);
  REQUIRE(gone);
  CHECK(gone->status == 404);

  auto nowhere = cli.Get("/v2/nothing");
  REQUIRE(nowhere);
  CHECK(nowhere->status == 404);
  s.stop();
}

TEST_CASE("client: local and remote backends agree") {
  Server s(quiet_config());
  auto port = s.start(0);
  std::string url = "http://127.0.0.1:" + std::to_string(port);

  Program p = test::fixture_program("table2.json");
  std::vector<float> z(2 * 10000);
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = static_cast<float>(k % 97) - 40.0f;
  std::map<std::string, Buffer> in{{"0.z", make_buffer<float>(kFloat2, z)}};

  auto local = run(LocalBackend{2, 256}, p, in);
  auto remote = run(RemoteBackend{url, 256}, p, in);
  CHECK(local == remote);
  CHECK(local.at("2.z").elements() == 10000);
  auto remote_again = run(RemoteBackend{url, 1000}, p, in);
  CHECK(remote_again == local);
  CHECK(s.stored_programs() == 1);

  CHECK_THROWS_WITH_AS(run(LocalBackend{}, p, {}), doctest::Contains("missing input stream '0.z'"), InputError);
  CHECK_THROWS_AS(run(RemoteBackend{url, 16}, test::fixture_program("table2_printed.json"), in), ValidationError);
  CHECK(server_status(url)["stored_programs"] == 1);
  s.stop();
}

TEST_CASE("client: remote runtime failure and unreachable server") {
  Server s(quiet_config());
  auto port = s.start(0);
  std::string url = "http://127.0.0.1:" + std::to_string(port);
  Program p;
  p.kernels["div"] = {"div", "int i = get_global_id(0);\nint d = x[i];\ny[i] = 10 / d;",
                      {{"x", {"x", {ScalarType::Int, 1}, Direction::Input}},
                       {"y", {"y", {ScalarType::Int, 1}, Direction::Output}}}};
  p.nodes = {{0, "div"}};
  std::vector<std::int32_t> x(100000, 1);
  x[77777] = 0;
  std::map<std::string, Buffer> in{{"0.x", make_buffer<std::int32_t>({ScalarType::Int, 1}, x)}};
  CHECK_THROWS_WITH_AS(run(RemoteBackend{url, 4096}, p, in), doctest::Contains("chunk 18, instance 0 (div), work-item 4049"), RemoteRunError);
  s.stop();

  try {
    run(RemoteBackend{url, 16}, p, in);
    FAIL("expected a network error");
  } catch (const NetworkError& e) {
    CHECK(e.retriable());
  }
  CHECK_THROWS_AS(run(RemoteBackend{"https://example.invalid", 16}, p, in), NetworkError);
}

TEST_CASE("concurrent runs of different programs are isolated") {
  Server s(quiet_config());
  auto port = s.start(0);
  std::string url = "http://127.0.0.1:" + std::to_string(port);
  Program a = test::fixture_program("table2.json");
  Program b = test::fixture_program("chain.json");
  std::vector<float> za(4000), xb(3000);
  for (std::size_t k = 0; k < za.size(); ++k) za[k] = static_cast<float>(k) * 0.5f;
  for (std::size_t k = 0; k < xb.size(); ++k) xb[k] = static_cast<float>(k) * 0.01f;
  std::map<std::string, Buffer> ia{{"0.z", make_buffer<float>(kFloat2, za)}};
  std::map<std::string, Buffer> ib{{free_points(b)[0].stream_name(), make_buffer<float>(kFloat, xb)}};

  auto serial_a = run(RemoteBackend{url, 128}, a, ia);
  auto serial_b = run(RemoteBackend{url, 100}, b, ib);
  std::map<std::string, Buffer> par_a, par_b;
  std::thread ta([&] { par_a = run(RemoteBackend{url, 128}, a, ia); });
  std::thread tb([&] { par_b = run(RemoteBackend{url, 100}, b, ib); });
  ta.join();
  tb.join();
  CHECK(par_a == serial_a);
  CHECK(par_b == serial_b);
  s.stop();
}
