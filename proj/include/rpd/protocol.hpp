#pragma once

// Teacher HTTP protocol.
//   POST /v1/act     {"observations": [[f64...]...], "instruction": str, "sample_count": k}
//                 -> {"actions": [[[f64...] x k] x B]}
//   GET  /v1/health -> {"status": "ok", "act_dim": n}
// Errors are HTTP 400 with {"error": message}.

#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <regex>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rpd/errors.hpp"
#include "rpd/teacher.hpp"

namespace rpd {

using json = nlohmann::json;

namespace protocol {

inline json encode_query(const TeacherQuery& q) {
  json obs = json::array();
  for (std::size_t b = 0; b < q.observations.rows(); ++b) {
    auto r = q.observations.row(b);
    obs.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"observations", std::move(obs)}, {"instruction", q.instruction}, {"sample_count", q.sample_count}};
}

inline TeacherQuery decode_query(const json& j) {
  if (!j.is_object()) throw ProtocolError("request body must be a JSON object");
  if (!j.contains("observations") || !j["observations"].is_array())
    throw ProtocolError("'observations' must be an array of arrays");
  const auto& obs = j["observations"];
  if (obs.empty()) throw ProtocolError("empty observation batch");
  TeacherQuery q;
  const std::size_t width = obs[0].is_array() ? obs[0].size() : 0;
  if (width == 0) throw ProtocolError("observation rows must be non-empty arrays");
  q.observations = Matrix(obs.size(), width);
  for (std::size_t b = 0; b < obs.size(); ++b) {
    if (!obs[b].is_array() || obs[b].size() != width) throw ProtocolError("observation rows must have equal length");
    for (std::size_t c = 0; c < width; ++c) {
      if (!obs[b][c].is_number()) throw ProtocolError("observations must be numbers");
      q.observations(b, c) = obs[b][c].get<double>();
    }
  }
  if (j.contains("instruction")) {
    if (!j["instruction"].is_string()) throw ProtocolError("'instruction' must be a string");
    q.instruction = j["instruction"].get<std::string>();
  }
  if (j.contains("sample_count")) {
    if (!j["sample_count"].is_number_integer()) throw ProtocolError("'sample_count' must be an integer");
    q.sample_count = j["sample_count"].get<int>();
  }
  if (q.sample_count < 1) throw ProtocolError("'sample_count' must be >= 1");
  return q;
}

inline json encode_response(const TeacherResponse& r) {
  json acts = json::array();
  for (std::size_t b = 0; b < r.batch; ++b) {
    json row = json::array();
    for (std::size_t k = 0; k < r.samples; ++k) {
      auto s = r.sample(b, k);
      row.push_back(std::vector<double>(s.begin(), s.end()));
    }
    acts.push_back(std::move(row));
  }
  return {{"actions", std::move(acts)}};
}

// Validates shape [batch][samples][act_dim] and finiteness.
inline TeacherResponse decode_response(const json& j, std::size_t batch, std::size_t samples, std::size_t act_dim) {
  if (!j.is_object() || !j.contains("actions") || !j["actions"].is_array())
    throw ProtocolError("response must contain an 'actions' array");
  const auto& a = j["actions"];
  if (a.size() != batch) throw ProtocolError("response batch size mismatch");
  TeacherResponse r(batch, samples, act_dim);
  for (std::size_t b = 0; b < batch; ++b) {
    if (!a[b].is_array() || a[b].size() != samples) throw ProtocolError("response sample count mismatch");
    for (std::size_t k = 0; k < samples; ++k) {
      const auto& v = a[b][k];
      if (!v.is_array() || v.size() != act_dim) throw ProtocolError("response action dimension mismatch");
      for (std::size_t d = 0; d < act_dim; ++d) {
        if (!v[d].is_number()) throw ProtocolError("actions must be numbers");
        const double x = v[d].get<double>();
        if (!std::isfinite(x)) throw ProtocolError("actions must be finite");
        r.at(b, k, d) = x;
      }
    }
  }
  return r;
}

inline json error_body(const std::string& msg) { return {{"error", msg}}; }

}  // namespace protocol

struct Endpoint {
  std::string host;
  int port = 0;

  static Endpoint parse(const std::string& url) {
    static const std::regex re(R"(^(?:http://)?([^:/]+):(\d+)/?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw ConfigError("invalid teacher endpoint '" + url + "' (expected http://host:port)");
    return {m[1].str(), std::stoi(m[2].str())};
  }
  std::string url() const { return "http://" + host + ":" + std::to_string(port); }
};

struct RemoteOptions {
  double timeout_s = 30.0;
  int retries = 2;
  double backoff_s = 0.2;  // doubled after every failed attempt
};

// Teacher behind an HTTP server speaking the protocol above.
class RemoteTeacher : public TeacherPolicy {
 public:
  RemoteTeacher(Endpoint endpoint, RemoteOptions opts = {}) : endpoint_(std::move(endpoint)), opts_(opts) {}

  std::size_t act_dim() const override {
    if (!act_dim_) act_dim_ = fetch_act_dim();
    return *act_dim_;
  }

  TeacherResponse act(const TeacherQuery& q) override {
    const std::size_t a = act_dim();
    const auto res = post("/v1/act", protocol::encode_query(q).dump());
    json body;
    try {
      body = json::parse(res);
    } catch (const json::parse_error& e) {
      throw ProtocolError(std::string("malformed response: ") + e.what());
    }
    return protocol::decode_response(body, q.observations.rows(), static_cast<std::size_t>(q.sample_count), a);
  }

 private:
  std::size_t fetch_act_dim() const {
    const auto res = request([](httplib::Client& c) { return c.Get("/v1/health"); });
    try {
      const auto j = json::parse(res);
      if (j.value("status", "") != "ok" || !j.contains("act_dim") || !j["act_dim"].is_number_integer())
        throw ProtocolError("unexpected health response");
      return j["act_dim"].get<std::size_t>();
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("malformed health response: ") + e.what());
    }
  }

  std::string post(const std::string& path, const std::string& body) const {
    return request([&](httplib::Client& c) { return c.Post(path, body, "application/json"); });
  }

  template <class Call>
  std::string request(Call call) const {
    double wait = opts_.backoff_s;
    std::string last_error;
    for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        wait *= 2.0;
      }
      httplib::Client client(endpoint_.host, endpoint_.port);
      const auto t = std::chrono::duration<double>(opts_.timeout_s);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      auto res = call(client);
      if (!res) {
        last_error = httplib::to_string(res.error());
        spdlog::debug("teacher request to {} failed: {}", endpoint_.url(), last_error);
        continue;
      }
      if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        std::string msg = "HTTP " + std::to_string(res->status);
        try {
          msg += ": " + json::parse(res->body).value("error", std::string{});
        } catch (const json::exception&) {
        }
        throw ProtocolError("teacher rejected request (" + msg + ")");
      }
      return res->body;
    }
    throw TeacherUnavailable("teacher at " + endpoint_.url() + " unavailable after " +
                             std::to_string(opts_.retries + 1) + " attempts: " + last_error);
  }

  Endpoint endpoint_;
  RemoteOptions opts_;
  mutable std::optional<std::size_t> act_dim_;
};

// Serves a teacher over HTTP with a single worker (requests are handled in
// arrival order).
class TeacherServer {
 public:
  explicit TeacherServer(TeacherPolicy& teacher) : teacher_(teacher) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(1); };
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      const json body = {{"status", "ok"}, {"act_dim", teacher_.act_dim()}};
      res.set_content(body.dump(), "application/json");
    });
    server_.Post("/v1/act", [this](const httplib::Request& req, httplib::Response& res) { handle_act(req, res); });
  }
  ~TeacherServer() { stop(); }
  TeacherServer(const TeacherServer&) = delete;
  TeacherServer& operator=(const TeacherServer&) = delete;

  // Binds without serving. port 0 picks a free port; returns the bound port.
  int bind(const std::string& host = "127.0.0.1", int port = 0) {
    if (port == 0)
      port_ = server_.bind_to_any_port(host);
    else
      port_ = server_.bind_to_port(host, port) ? port : -1;
    if (port_ < 0)
      throw ConfigError("teacher server: cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
    return port_;
  }

  // Serves on the calling thread until stop() or interrupt().
  void listen() { server_.listen_after_bind(); }

  // Binds and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    const int bound = bind(host, port);
    thread_ = std::thread([this] { listen(); });
    server_.wait_until_ready();
    return bound;
  }

  void run(const std::string& host, int port) {
    bind(host, port);
    listen();
  }

  // Makes listen() return; does not join.
  void interrupt() { server_.stop(); }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  void handle_act(const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mutex_);
    try {
      const auto q = protocol::decode_query(json::parse(req.body));
      const auto r = teacher_.act(q);
      res.set_content(protocol::encode_response(r).dump(), "application/json");
    } catch (const json::exception& e) {
      reject(res, std::string("malformed JSON: ") + e.what());
    } catch (const ProtocolError& e) {
      reject(res, e.what());
    } catch (const ConfigError& e) {
      reject(res, e.what());
    }
  }

  static void reject(httplib::Response& res, const std::string& msg) {
    res.status = 400;
    res.set_content(protocol::error_body(msg).dump(), "application/json");
  }

  TeacherPolicy& teacher_;
  httplib::Server server_;
  std::thread thread_;
  std::mutex mutex_;
  int port_ = -1;
};

}  // namespace rpd
