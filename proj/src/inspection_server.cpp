#include "forge/inspection_server.hpp"

#include "forge/error.hpp"
#include "httplib.h"

namespace forge::inspection {

using nlohmann::json;

namespace {

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict: return 409;
    case ErrorKind::kParse:
    case ErrorKind::kSchema:
    case ErrorKind::kValidation:
    case ErrorKind::kFormat:
    case ErrorKind::kContract:
    case ErrorKind::kRange: return 400;
    case ErrorKind::kPrecondition: return 412;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Runs a handler and maps library errors onto HTTP statuses.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_json(res, status_for(e.kind()), e.to_json());
    } catch (const json::exception& e) {
      send_json(res, 400, Error(ErrorKind::kParse, std::string("bad JSON body: ") + e.what()).to_json());
    } catch (const std::exception& e) {
      send_json(res, 500, Error(ErrorKind::kIo, e.what()).to_json());
    }
  };
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("request body is not JSON: ") + e.what());
  }
}

std::optional<std::string> query(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  auto v = req.get_param_value(key);
  if (v.empty()) return std::nullopt;
  return v;
}

bool is_api_path(const std::string& path) {
  for (const char* p : {"/tasks", "/samples/", "/verdicts", "/board", "/preference/"}) {
    if (path.rfind(p, 0) == 0) return true;
  }
  return false;
}

}  // namespace

InspectionServer::InspectionServer(InspectionService& service, PreferenceStore* preferences, ServerOptions options)
    : service_(service),
      preferences_(preferences),
      options_(std::move(options)),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

InspectionServer::~InspectionServer() { stop(); }

void InspectionServer::install_routes() {
  auto& srv = *server_;

  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (options_.token.empty() || !is_api_path(req.path)) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + options_.token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    res.set_header("WWW-Authenticate", "Bearer");
    send_json(res, 401, {{"kind", "unauthorized"}, {"message", "missing or invalid bearer token"}});
    return httplib::Server::HandlerResponse::Handled;
  });

  if (options_.static_dir) srv.set_mount_point("/ui", *options_.static_dir);

  srv.Get("/tasks", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::optional<TaskState> state;
    if (auto s = query(req, "state")) state = parse_task_state(*s);
    json tasks = json::array();
    for (const auto& t : service_.tasks(query(req, "assignee"), state)) tasks.push_back(t.to_json());
    send_json(res, 200, {{"tasks", tasks}});
  }));

  srv.Get(R"(/samples/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto sample = service_.sample(id);
    json tasks = json::array();
    for (const auto& t : service_.tasks()) {
      if (t.sample_id == id) tasks.push_back(t.to_json());
    }
    const auto uri = service_.image_uri(sample.image_id);
    send_json(res, 200, {{"sample", dataset::to_json(sample)}, {"uri", uri ? json(*uri) : json(nullptr)}, {"tasks", tasks}});
  }));

  srv.Post("/verdicts", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto task = service_.record_verdict(Verdict::from_json(parse_body(req)));
    send_json(res, 200, task.to_json());
  }));

  srv.Get("/board", guarded([this](const httplib::Request&, httplib::Response& res) {
    json body = service_.board().to_json();
    json prefs = json::array();
    if (preferences_) {
      for (const auto& st : preferences_->statuses()) prefs.push_back(st.to_json());
    }
    body["preference"] = prefs;
    send_json(res, 200, body);
  }));

  srv.Get("/preference/items", guarded([this](const httplib::Request& req, httplib::Response& res) {
    if (!preferences_) throw Error(ErrorKind::kNotFound, "no preference set is loaded");
    send_json(res, 200, {{"items", preferences_->anonymized_items(query(req, "annotator"))}});
  }));

  srv.Post("/preference/ballots", guarded([this](const httplib::Request& req, httplib::Response& res) {
    if (!preferences_) throw Error(ErrorKind::kNotFound, "no preference set is loaded");
    send_json(res, 200, preferences_->cast(Ballot::from_json(parse_body(req))).to_json());
  }));
}

int InspectionServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(ErrorKind::kIo, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void InspectionServer::serve_forever(const std::string& host, int port) {
  if (!server_->listen(host, port)) {
    throw Error(ErrorKind::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void InspectionServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace forge::inspection
