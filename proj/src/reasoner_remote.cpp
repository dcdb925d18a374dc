#include <cstdlib>
#include <memory>
#include <mutex>
#include <condition_variable>

#include "httplib.h"

#include "envdeploy/errors.hpp"
#include "envdeploy/reasoner.hpp"

namespace envdeploy {

namespace {

// Bounds concurrent requests from batch runs sharing one provider.
class RequestGate {
public:
  explicit RequestGate(int limit) : slots_(limit > 0 ? limit : 1) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return slots_ > 0; });
    --slots_;
  }

  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++slots_;
    }
    cv_.notify_one();
  }

private:
  std::mutex mu_;
  std::condition_variable cv_;
  int slots_;
};

class RemoteProvider : public DecisionProvider {
public:
  explicit RemoteProvider(RemoteConfig config)
      : config_(std::move(config)),
        gate_(config_.max_in_flight),
        fallback_(make_heuristic_provider()) {}

  DecisionResponse decide(const DecisionRequest& req) override {
    const std::string prompt = render_prompt(req);
    std::string transport_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::string body;
      if (!post_chat(prompt, &body, &transport_error)) continue;
      const std::optional<std::string> content = reply_content(body);
      if (!content) continue;
      const std::optional<nlohmann::json> payload =
          extract_json_object(*content);
      if (!payload) continue;  // unparsable reply, ask again once
      DecisionResponse resp;
      resp.kind = req.kind;
      resp.payload = *payload;
      resp.provider = ProviderKind::Remote;
      if (payload->contains("rationale") &&
          payload->at("rationale").is_string()) {
        resp.rationale = payload->at("rationale").get<std::string>();
      }
      return resp;
    }
    if (!transport_error.empty()) {
      throw ReasonerError("remote provider unreachable: " + transport_error);
    }
    // The service answered but never with usable JSON; degrade locally.
    DecisionResponse resp = fallback_->decide(req);
    resp.provider = ProviderKind::Remote;
    resp.rationale += " (remote reply unusable, heuristic fallback)";
    return resp;
  }

  ProviderKind kind() const override { return ProviderKind::Remote; }

private:
  bool post_chat(const std::string& prompt, std::string* body,
                 std::string* transport_error) {
    nlohmann::json payload = {
        {"model", config_.model},
        {"temperature", config_.temperature},
        {"messages",
         nlohmann::json::array({
             {{"role", "user"}, {"content", prompt}},
         })},
    };

    gate_.acquire();
    struct Release {
      RequestGate& g;
      ~Release() { g.release(); }
    } release{gate_};

    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str());
        key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const httplib::Result res = client.Post(
        "/v1/chat/completions", headers, payload.dump(), "application/json");
    if (!res) {
      *transport_error = httplib::to_string(res.error());
      return false;
    }
    if (res->status < 200 || res->status >= 300) {
      *transport_error = "HTTP " + std::to_string(res->status);
      return false;
    }
    transport_error->clear();
    *body = res->body;
    return true;
  }

  static std::optional<std::string> reply_content(const std::string& body) {
    nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded()) return std::nullopt;
    if (!doc.contains("choices") || !doc.at("choices").is_array() ||
        doc.at("choices").empty()) {
      return std::nullopt;
    }
    const nlohmann::json& first = doc.at("choices").front();
    if (!first.contains("message") ||
        !first.at("message").contains("content") ||
        !first.at("message").at("content").is_string()) {
      return std::nullopt;
    }
    return first.at("message").at("content").get<std::string>();
  }

  RemoteConfig config_;
  RequestGate gate_;
  std::unique_ptr<DecisionProvider> fallback_;
};

}  // namespace

std::unique_ptr<DecisionProvider> make_remote_provider(RemoteConfig config) {
  return std::make_unique<RemoteProvider>(std::move(config));
}

}  // namespace envdeploy
