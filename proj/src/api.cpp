#include <loom/api.hpp>

#include <httplib.h>

#include <charconv>
#include <cstdio>
#include <memory>

namespace loom {

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::Conflict:
    case ErrorCode::CompositeStreamWrite:
      return 409;
    case ErrorCode::QueueFull:
    case ErrorCode::RuntimeUnhealthy:
      return 503;
    case ErrorCode::IoError:
      return 500;
    default:
      return 400;
  }
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, const Error& e) {
  reply(res, http_status_for(e.code()),
        json{{"error", error_code_name(e.code())}, {"message", e.what()}});
}

// Wraps a handler body with the uniform error mapping.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    reply_error(res, e);
  } catch (const json::exception& e) {
    reply_error(res, Error(ErrorCode::MalformedDescriptor,
                           std::string("bad document: ") + e.what()));
  } catch (const std::exception& e) {
    reply(res, 500, json{{"error", "Internal"}, {"message", e.what()}});
  }
}

json parse_body(const std::string& body, ErrorCode code) {
  try {
    return json::parse(body.empty() ? "{}" : body);
  } catch (const json::exception& e) {
    throw Error(code, std::string("invalid JSON: ") + e.what());
  }
}

std::optional<int64_t> int_param(const httplib::Request& req,
                                 const std::string& name) {
  if (!req.has_param(name)) return std::nullopt;
  const std::string raw = req.get_param_value(name);
  int64_t value = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc() || ptr != raw.data() + raw.size())
    throw Error(ErrorCode::BadRange,
                "parameter " + name + " must be integer milliseconds");
  return value;
}

}  // namespace

void register_routes(httplib::Server& server, Service& service) {
  server.Post("/", [&service](const httplib::Request& req,
                              httplib::Response& res) {
    guarded(res, [&] {
      json body = parse_body(req.body, ErrorCode::MalformedDescriptor);
      reply(res, 201, service.create_so(body));
    });
  });

  server.Get("/", [&service](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, service.list_so()); });
  });

  server.Delete(R"(/subscriptions/([^/]+))",
                [&service](const httplib::Request& req,
                           httplib::Response& res) {
                  guarded(res, [&] {
                    service.delete_subscription(req.matches[1]);
                    res.status = 204;
                  });
                });

  server.Post(R"(/([^/]+)/streams/([^/]+)/subscriptions)",
              [&service](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  json body =
                      parse_body(req.body, ErrorCode::MalformedSubscription);
                  std::string id = service.create_subscription(
                      req.matches[1], req.matches[2], body);
                  reply(res, 201, json{{"id", id}});
                });
              });

  server.Put(R"(/([^/]+)/streams/([^/]+))",
             [&service](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 json body = parse_body(req.body, ErrorCode::MalformedUpdate);
                 IngestResult r =
                     service.ingest(req.matches[1], req.matches[2], body);
                 switch (r.outcome) {
                   case IngestOutcome::Accepted:
                     reply(res, 200, json{{"accepted", true}});
                     break;
                   case IngestOutcome::StaleDiscard:
                     reply(res, 200,
                           json{{"accepted", false}, {"reason", "stale"}});
                     break;
                   case IngestOutcome::QueueFull:
                     throw Error(ErrorCode::QueueFull,
                                 "ingestion queue at capacity");
                 }
               });
             });

  server.Get(R"(/([^/]+)/streams/([^/]+))",
             [&service](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 auto from = int_param(req, "from");
                 auto to = int_param(req, "to");
                 reply(res, 200,
                       service.query(req.matches[1], req.matches[2], from,
                                     to));
               });
             });

  server.Get(R"(/([^/]+)/streams)", [&service](const httplib::Request& req,
                                               httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, service.get_streams(req.matches[1])); });
  });

  server.Get(R"(/([^/]+))", [&service](const httplib::Request& req,
                                       httplib::Response& res) {
    guarded(res,
            [&] { reply(res, 200, service.get_so_description(req.matches[1])); });
  });

  server.Put(R"(/([^/]+))", [&service](const httplib::Request& req,
                                       httplib::Response& res) {
    guarded(res, [&] {
      json body = parse_body(req.body, ErrorCode::MalformedDescriptor);
      reply(res, 200, service.update_so(req.matches[1], body));
    });
  });

  server.Delete(R"(/([^/]+))", [&service](const httplib::Request& req,
                                          httplib::Response& res) {
    guarded(res, [&] {
      service.delete_so(req.matches[1]);
      res.status = 204;
    });
  });
}

int run_server(const ApiConfig& config) {
  std::unique_ptr<Store> store;
  if (config.store_root.empty())
    store = std::make_unique<MemoryStore>();
  else
    store = std::make_unique<FileStore>(config.store_root);

  RuntimeOptions opts;
  opts.workers = config.workers;
  opts.queue_capacity = config.queue_capacity;
  opts.callback_timeout_ms = config.callback_timeout_ms;
  Runtime runtime(*store, opts);
  runtime.start();
  Service service(*store, runtime);

  auto colon = config.bind_address.rfind(':');
  if (colon == std::string::npos) {
    std::fprintf(stderr, "bind address must be host:port, got %s\n",
                 config.bind_address.c_str());
    return 2;
  }
  std::string host = config.bind_address.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(config.bind_address.substr(colon + 1));
  } catch (const std::exception&) {
    std::fprintf(stderr, "invalid port in %s\n", config.bind_address.c_str());
    return 2;
  }

  httplib::Server server;
  register_routes(server, service);
  std::fprintf(stderr, "listening on %s:%d (%s store, %d workers)\n",
               host.c_str(), port, config.store_root.empty() ? "memory" : "file",
               runtime.options().workers);
  if (!server.listen(host, port)) {
    std::fprintf(stderr, "failed to listen on %s:%d\n", host.c_str(), port);
    runtime.shutdown();
    return 1;
  }
  runtime.shutdown();
  return 0;
}

}  // namespace loom
