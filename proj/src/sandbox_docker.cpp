#include <sys/socket.h>

#include <chrono>
#include <cstdlib>
#include <memory>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "envdeploy/bashfile.hpp"
#include "envdeploy/errors.hpp"
#include "envdeploy/sandbox.hpp"

namespace envdeploy {

namespace {

struct Endpoint {
  bool unix_socket = false;
  std::string address;  // socket path, or host:port scheme url
};

Endpoint resolve_endpoint(const DockerConfig& config) {
  std::string ep = config.endpoint;
  if (ep.empty()) {
    if (const char* env = std::getenv("DOCKER_HOST")) ep = env;
  }
  if (ep.empty()) ep = "unix:///var/run/docker.sock";

  Endpoint out;
  if (ep.rfind("unix://", 0) == 0) {
    out.unix_socket = true;
    out.address = ep.substr(7);
  } else if (ep.rfind("unix:", 0) == 0) {
    out.unix_socket = true;
    out.address = ep.substr(5);
  } else if (ep.rfind("tcp://", 0) == 0) {
    out.address = "http://" + ep.substr(6);
  } else {
    out.address = ep;  // already an http url
  }
  return out;
}

std::string b64_encode(const std::string& in) {
  static const char* digits =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 2 < in.size()) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                       (static_cast<unsigned char>(in[i + 1]) << 8) |
                       static_cast<unsigned char>(in[i + 2]);
    out += digits[(v >> 18) & 63];
    out += digits[(v >> 12) & 63];
    out += digits[(v >> 6) & 63];
    out += digits[v & 63];
    i += 3;
  }
  const std::size_t rest = in.size() - i;
  if (rest == 1) {
    const unsigned v = static_cast<unsigned char>(in[i]) << 16;
    out += digits[(v >> 18) & 63];
    out += digits[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                       (static_cast<unsigned char>(in[i + 1]) << 8);
    out += digits[(v >> 18) & 63];
    out += digits[(v >> 12) & 63];
    out += digits[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

// Splits the engine's multiplexed exec stream into stdout and stderr.
// Frame: 1 byte type, 3 bytes zero, 4 bytes big-endian length, payload.
void demux_stream(const std::string& raw, std::string& out, std::string& err) {
  std::size_t i = 0;
  while (i + 8 <= raw.size()) {
    const unsigned char type = static_cast<unsigned char>(raw[i]);
    std::size_t len = (static_cast<std::size_t>(
                           static_cast<unsigned char>(raw[i + 4]))
                       << 24) |
                      (static_cast<std::size_t>(
                           static_cast<unsigned char>(raw[i + 5]))
                       << 16) |
                      (static_cast<std::size_t>(
                           static_cast<unsigned char>(raw[i + 6]))
                       << 8) |
                      static_cast<std::size_t>(
                          static_cast<unsigned char>(raw[i + 7]));
    i += 8;
    if (i + len > raw.size()) len = raw.size() - i;
    (type == 2 ? err : out).append(raw, i, len);
    i += len;
  }
}

class EngineClient {
public:
  EngineClient(const DockerConfig& config, int read_timeout_s)
      : endpoint_(resolve_endpoint(config)), api_(config.api_version) {
    client_ = make_client(read_timeout_s);
  }

  httplib::Result get(const std::string& path) {
    return client_->Get(api_path(path));
  }

  httplib::Result post(const std::string& path, const std::string& body,
                       const std::string& content_type) {
    return client_->Post(api_path(path), body, content_type);
  }

  httplib::Result post_json(const std::string& path, const nlohmann::json& doc) {
    return post(path, doc.dump(), "application/json");
  }

  httplib::Result del(const std::string& path) {
    return client_->Delete(api_path(path));
  }

  bool ping() {
    auto res = client_->Get("/_ping");
    return res && res->status == 200;
  }

private:
  std::string api_path(const std::string& path) const {
    return "/" + api_ + path;
  }

  std::unique_ptr<httplib::Client> make_client(int read_timeout_s) {
    std::unique_ptr<httplib::Client> cli;
    if (endpoint_.unix_socket) {
      cli = std::make_unique<httplib::Client>(endpoint_.address);
      cli->set_address_family(AF_UNIX);
      cli->set_default_headers({{"Host", "localhost"}});
    } else {
      cli = std::make_unique<httplib::Client>(endpoint_.address);
    }
    cli->set_connection_timeout(5, 0);
    cli->set_read_timeout(read_timeout_s, 0);
    cli->set_write_timeout(30, 0);
    return cli;
  }

  Endpoint endpoint_;
  std::string api_;
  std::unique_ptr<httplib::Client> client_;
};

std::string body_excerpt(const httplib::Result& res) {
  if (!res) return "transport: " + httplib::to_string(res.error());
  std::string body = res->body;
  if (body.size() > 300) body = body.substr(0, 300) + "...";
  return "status " + std::to_string(res->status) + ": " + body;
}

class DockerSandbox final : public Sandbox {
public:
  DockerSandbox(SandboxSpec spec, DockerConfig config)
      : Sandbox(std::move(spec)), config_(std::move(config)) {
    if (!valid_image_reference(spec_.base_image)) {
      throw ImageError("malformed base image reference: " + spec_.base_image);
    }
    EngineClient probe(config_, 10);
    if (!probe.ping()) {
      throw SandboxUnavailable("container engine is not reachable");
    }
    ensure_image();
    create_and_start();
  }

  ~DockerSandbox() override {
    try {
      destroy();
    } catch (...) {
      // Destructor stays silent; destroy() itself never throws.
    }
  }

protected:
  ExecOutcome do_run_script(const std::string& script_text) override {
    const std::string b64 = b64_encode(script_text);
    const std::string upload = "mkdir -p /opt/envdeploy && printf '%s' '" +
                               b64 + "' | base64 -d > /opt/envdeploy/setup.sh";
    ExecOutcome up = exec_shell(upload, 60);
    if (!up.success()) {
      throw ExecTransportError("script upload failed: " + up.stderr_text);
    }
    const std::string run = "cd " + spec_.workdir +
                            " && bash /opt/envdeploy/setup.sh";
    ExecOutcome out = exec_shell(run, spec_.script_time_limit_s);
    out.command = "bash setup.sh";
    return out;
  }

  ExecOutcome do_run_command(const std::string& command,
                             int time_limit_s) override {
    // Commands run in fresh processes, so a virtualenv prepared by the
    // script is re-activated here when present.
    const std::string wrapped =
        "cd " + spec_.workdir +
        " || exit 97; [ -f .venv/bin/activate ] && . .venv/bin/activate; " +
        command;
    ExecOutcome out = exec_shell(wrapped, time_limit_s);
    out.command = command;
    return out;
  }

  void do_destroy() override {
    if (container_id_.empty()) return;
    try {
      EngineClient client(config_, 30);
      client.del("/containers/" + container_id_ + "?force=true&v=true");
    } catch (...) {
      // Best effort; the container is labeled for manual cleanup.
    }
  }

private:
  void ensure_image() {
    EngineClient client(config_, 30);
    auto res = client.get("/images/" + spec_.base_image + "/json");
    if (res && res->status == 200) return;
    if (!res || res->status != 404) {
      throw SandboxUnavailable("image inspect failed: " + body_excerpt(res));
    }
    if (!config_.pull_missing_image) {
      throw ImageError("image not present: " + spec_.base_image);
    }
    std::string name = spec_.base_image;
    std::string tag = "latest";
    const std::size_t slash = name.find_last_of('/');
    const std::size_t colon = name.find_last_of(':');
    if (colon != std::string::npos &&
        (slash == std::string::npos || colon > slash)) {
      tag = name.substr(colon + 1);
      name = name.substr(0, colon);
    }
    EngineClient puller(config_, 600);
    auto pull = puller.post(
        "/images/create?fromImage=" + name + "&tag=" + tag, "", "text/plain");
    if (!pull || pull->status != 200 ||
        pull->body.find("errorDetail") != std::string::npos) {
      throw ImageError("image pull failed for " + spec_.base_image + ": " +
                       body_excerpt(pull));
    }
  }

  void create_and_start() {
    nlohmann::json host_config = nlohmann::json::object();
    nlohmann::json binds = nlohmann::json::array();
    for (const SandboxSpec::Mount& m : spec_.mounts) {
      binds.push_back(m.host_path + ":" + m.container_path +
                      (m.read_only ? ":ro" : ""));
    }
    if (!binds.empty()) host_config["Binds"] = binds;
    if (!spec_.network_enabled) host_config["NetworkMode"] = "none";
    if (spec_.memory_limit_bytes) {
      host_config["Memory"] = *spec_.memory_limit_bytes;
    }

    nlohmann::json env = nlohmann::json::array();
    for (const auto& [k, v] : spec_.env) env.push_back(k + "=" + v);

    const nlohmann::json body = {
        {"Image", spec_.base_image},
        {"Cmd", {"tail", "-f", "/dev/null"}},
        {"WorkingDir", spec_.workdir},
        {"Env", env},
        {"Labels", {{"envdeploy.managed", "1"}}},
        {"HostConfig", host_config},
    };

    EngineClient client(config_, 60);
    auto res = client.post_json("/containers/create", body);
    if (!res || res->status != 201) {
      throw SandboxUnavailable("container create failed: " + body_excerpt(res));
    }
    container_id_ = nlohmann::json::parse(res->body).at("Id").get<std::string>();

    auto start = client.post("/containers/" + container_id_ + "/start", "",
                             "text/plain");
    if (!start || (start->status != 204 && start->status != 304)) {
      throw SandboxUnavailable("container start failed: " + body_excerpt(start));
    }
  }

  ExecOutcome exec_shell(const std::string& shell_command, int time_limit_s) {
    const nlohmann::json exec_body = {
        {"AttachStdout", true},
        {"AttachStderr", true},
        {"Tty", false},
        {"Cmd",
         {"timeout", std::to_string(time_limit_s), "/bin/sh", "-c",
          shell_command}},
    };

    EngineClient client(config_, time_limit_s + 120);
    auto created = client.post_json("/containers/" + container_id_ + "/exec",
                                    exec_body);
    if (!created || created->status != 201) {
      throw ExecTransportError("exec create failed: " + body_excerpt(created));
    }
    const std::string exec_id =
        nlohmann::json::parse(created->body).at("Id").get<std::string>();

    const auto t0 = std::chrono::steady_clock::now();
    auto started = client.post_json(
        "/exec/" + exec_id + "/start",
        nlohmann::json{{"Detach", false}, {"Tty", false}});
    if (!started || started->status != 200) {
      throw ExecTransportError("exec start failed: " + body_excerpt(started));
    }
    const auto t1 = std::chrono::steady_clock::now();

    ExecOutcome out;
    demux_stream(started->body, out.stdout_text, out.stderr_text);
    out.duration_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();

    // The stream closing usually means the process is done; poll briefly in
    // case the engine is still recording the exit code.
    for (int i = 0; i < 20; ++i) {
      auto inspect = client.get("/exec/" + exec_id + "/json");
      if (!inspect || inspect->status != 200) {
        throw ExecTransportError("exec inspect failed: " +
                                 body_excerpt(inspect));
      }
      const nlohmann::json doc = nlohmann::json::parse(inspect->body);
      if (!doc.value("Running", false)) {
        out.exit_code = doc.value("ExitCode", -1);
        return out;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    throw ExecTransportError("exec did not report an exit code");
  }

  DockerConfig config_;
  std::string container_id_;
};

}  // namespace

std::unique_ptr<Sandbox> create_docker_sandbox(SandboxSpec spec,
                                               DockerConfig config) {
  return std::make_unique<DockerSandbox>(std::move(spec), std::move(config));
}

bool docker_engine_available(const DockerConfig& config) {
  try {
    EngineClient client(config, 5);
    return client.ping();
  } catch (...) {
    return false;
  }
}

}  // namespace envdeploy
