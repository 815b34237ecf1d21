#include "dope/http_api.hpp"

#include <csignal>
#include <cstdlib>
#include <iostream>

#include "dope/errors.hpp"
#include "httplib.h"

namespace dope {

namespace {

const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const std::string& field = {}) {
  ordered_json j;
  j["code"] = code;
  j["message"] = message;
  if (!field.empty()) j["field"] = field;
  send_json(res, status, j);
}

bool wants_async(const httplib::Request& req) {
  if (!req.has_param("async")) return false;
  const auto v = req.get_param_value("async");
  return v == "1" || v == "true";
}

ordered_json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return ordered_json::object();
  try {
    return ordered_json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw service_error(service_error::Code::validation, std::string("malformed JSON body: ") + e.what(), "body");
  }
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const service_error& e) {
    switch (e.code()) {
      case service_error::Code::validation: send_error(res, 400, "validation_error", e.what(), e.field()); break;
      case service_error::Code::not_found: send_error(res, 404, "not_found", e.what(), e.field()); break;
      case service_error::Code::conflict: send_error(res, 409, "conflict", e.what(), e.field()); break;
    }
  } catch (const validation_error& e) {
    send_error(res, 400, "validation_error", e.what(), e.field());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

TestData parse_results(const ordered_json& body) {
  if (!body.is_object() || !body.contains("results") || !body.at("results").is_array())
    throw service_error(service_error::Code::validation, "results must be a list of 0/1 values", "results");
  TestData out;
  for (const auto& v : body.at("results")) {
    if (v.is_boolean()) {
      out.push_back(v.get<bool>());
    } else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) {
      out.push_back(static_cast<std::uint8_t>(v.get<int>()));
    } else {
      throw service_error(service_error::Code::validation, "results must be 0 or 1", "results");
    }
  }
  return out;
}

}  // namespace

ServerOptions server_options_from_env(ServerOptions o) {
  if (const char* d = std::getenv("DOPE_DATA_DIR"); d && *d) o.data_dir = d;
  if (const char* b = std::getenv("DOPE_BIND_ADDR"); b && *b) {
    const std::string addr = b;
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) {
      o.host = addr;
    } else {
      o.host = addr.substr(0, colon);
      o.port = std::stoi(addr.substr(colon + 1));
    }
  }
  if (const char* w = std::getenv("DOPE_WORKERS"); w && *w) o.workers = std::max(1, std::atoi(w));
  return o;
}

struct ApiServer::Impl {
  SessionStore& store;
  httplib::Server server;

  explicit Impl(SessionStore& s) : store(s) {
    server.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto view = store.create(parse_body(req));
        if (wants_async(req)) return send_json(res, 202, view_to_json(view));
        send_json(res, 201, view_to_json(store.wait(view.id)));
      });
    });
    server.Get("/v1/sessions", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        ordered_json list = ordered_json::array();
        for (const auto& v : store.list()) list.push_back(view_to_json(v, false));
        send_json(res, 200, {{"sessions", list}});
      });
    });
    server.Get(R"(/v1/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, view_to_json(store.get(req.matches[1]))); });
    });
    server.Get(R"(/v1/sessions/([0-9a-f]+)/transcript)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        res.status = 200;
        res.set_content(store.transcript(req.matches[1]), "application/x-ndjson");
      });
    });
    server.Post(R"(/v1/sessions/([0-9a-f]+)/results)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = parse_body(req);
        std::optional<int> round;
        if (body.contains("round")) {
          if (!body.at("round").is_number_integer())
            throw service_error(service_error::Code::validation, "round must be an integer", "round");
          round = body.at("round").get<int>();
        }
        auto view = store.submit(req.matches[1], parse_results(body), round);
        if (wants_async(req)) return send_json(res, 202, view_to_json(view));
        send_json(res, 200, view_to_json(store.wait(view.id)));
      });
    });
    server.Post(R"(/v1/sessions/([0-9a-f]+)/abort)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, view_to_json(store.abort(req.matches[1]))); });
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not_found" : "error", "no such route");
    });
  }
};

ApiServer::ApiServer(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {}
ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool ApiServer::listen() { return impl_->server.listen_after_bind(); }
void ApiServer::stop() { impl_->server.stop(); }
void ApiServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

namespace {
ApiServer* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int run_server(const ServerOptions& options) {
  SessionStore store({options.data_dir, options.workers});
  ApiServer server(store);
  const int port = server.bind(options.host, options.port);
  if (port < 0) {
    std::cerr << "cannot bind " << options.host << ":" << options.port << "\n";
    return 1;
  }
  std::cerr << "serving on http://" << options.host << ":" << port << "/v1 with data in " << options.data_dir
            << "\n";
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace dope
