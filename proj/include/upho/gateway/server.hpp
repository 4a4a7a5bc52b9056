#pragma once

// HTTP surface over a workspace. Reports are cached by id; a cache miss on an
// explanation endpoint re-runs the stored request, which is deterministic.

#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <shared_mutex>
#include <string>

// Eigen must be seen before httplib, whose <resolv.h> defines a `_res` macro.
#include "upho/error.hpp"
#include "upho/gateway/request.hpp"
#include "upho/gateway/workspace.hpp"

#include <httplib.h>

namespace upho {

inline constexpr const char* kVersion = "1.0.0";

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadRequest:
    case ErrorCode::UnknownTract:
    case ErrorCode::TractNotInTable:
    case ErrorCode::InvalidArgument: return 400;
    case ErrorCode::UnknownReport:
    case ErrorCode::UnknownNode:
    case ErrorCode::UnknownEdge:
    case ErrorCode::UnknownFact: return 404;
    default: return 500;
  }
}

class Service {
 public:
  Service(Workspace ws, RunConfig cfg = {}) : ws_(std::move(ws)), cfg_(std::move(cfg)) {}

  const Workspace& workspace() const noexcept { return ws_; }

  void register_routes(httplib::Server& srv) {
    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      send(res, 200, Json{{"status", "ok"}, {"version", kVersion}});
    });
    srv.Post("/analyses", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const auto request = parse_request(std::string_view(req.body));
        if (request.role == Role::public_ && request.level == Level::patient) {
          return send(res, 403, Json{{"error", "Forbidden"}, {"message", "public role cannot run patient-level analyses"}});
        }
        auto result = std::make_shared<AnalysisResult>(analyze(ws_, request, cfg_));
        try {
          persist_report(ws_.root, result->report);
        } catch (const Error& e) {
          throw e.with_stage("persist");
        }
        const std::string id = result->report.at("id");
        remember(id, std::move(result));
        send(res, 201, Json{{"id", id}});
      });
    });
    const std::string id_re = "/analyses/([0-9a-f]{64})";
    srv.Get(id_re, [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const auto report = load_report(ws_.root, req.matches[1]);
        if (forbidden(req, report)) return deny(res);
        send(res, 200, report);
      });
    });
    srv.Get(id_re + "/graph", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const auto report = load_report(ws_.root, req.matches[1]);
        if (forbidden(req, report)) return deny(res);
        send(res, 200, report.at("graph"));
      });
    });
    srv.Get(id_re + "/pathways", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const auto report = load_report(ws_.root, req.matches[1]);
        if (forbidden(req, report)) return deny(res);
        send(res, 200, report.at("pathways"));
      });
    });
    srv.Get(id_re + "/explain/(node|edge)/(.+)", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const std::string id = req.matches[1];
        const auto report = load_report(ws_.root, id);
        if (forbidden(req, report)) return deny(res);
        const auto result = result_for(id, report);
        const Role role = req.has_param("role") ? parse_role(req.get_param_value("role"))
                                                : parse_role(report.at("request").at("role").get<std::string>());
        const TemplateSet templates = detail::templates_for(ws_, cfg_, role);
        const std::string target = httplib::detail::decode_url(req.matches[3], false);
        const Explanation ex = req.matches[2] == "node" ? explain_node(result->graph, target, result->stats, templates)
                                                        : explain_edge(result->graph, target, result->stats, templates);
        send(res, 200, to_json(ex));
      });
    });
    srv.Get("/metrics/([0-9]+)", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { send(res, 200, metrics_json(req.matches[1])); });
    });
  }

  /// Tract metrics with city averages.
  Json metrics_json(const std::string& tract) const {
    const auto& t = ws_.table;
    auto r = t.find_row(tract);
    if (!r) fail(ErrorCode::UnknownTract, "tract " + tract + " is not in the workspace");
    Json metrics = Json::array();
    for (std::size_t j = 0; j < t.column_count(); ++j) {
      const auto& b = t.bindings()[j];
      metrics.push_back(Json{{"column", b.column_name},
                             {"term", b.term},
                             {"value", t.rows()[*r].values[j]},
                             {"units", to_string(b.units)},
                             {"city_mean", t.column_mean(j)}});
    }
    return Json{{"tract", tract}, {"metrics", metrics}};
  }

  /// Cached analysis for a stored report, rebuilt from its request on a miss.
  std::shared_ptr<const AnalysisResult> result_for(const std::string& id, const Json& report) {
    {
      std::shared_lock lock(cache_mutex_);
      if (auto it = cache_.find(id); it != cache_.end()) return it->second;
    }
    auto rebuilt = std::make_shared<AnalysisResult>(analyze(ws_, parse_request(std::string_view(report.at("request").dump())), cfg_));
    if (rebuilt->report.at("id") != id) {
      fail(ErrorCode::UnknownReport, "report " + id + " cannot be reproduced from this workspace and configuration");
    }
    remember(id, rebuilt);
    return rebuilt;
  }

 private:
  static void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void deny(httplib::Response& res) {
    send(res, 403, Json{{"error", "Forbidden"}, {"message", "patient-level data is not available to the public role"}});
  }

  static bool forbidden(const httplib::Request& req, const Json& report) {
    const auto& r = report.at("request");
    const std::string role = req.has_param("role") ? req.get_param_value("role") : r.at("role").get<std::string>();
    return role == "public" && r.at("level") == "patient";
  }

  template <typename Fn>
  static void guard(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send(res, http_status(e.code()),
           Json{{"error", to_string(e.code())}, {"stage", e.stage()}, {"message", e.detail()}});
    } catch (const std::exception& e) {
      send(res, 500, Json{{"error", "Internal"}, {"message", e.what()}});
    }
  }

  void remember(const std::string& id, std::shared_ptr<const AnalysisResult> r) {
    std::unique_lock lock(cache_mutex_);
    cache_.emplace(id, std::move(r));
  }

  Workspace ws_;
  RunConfig cfg_;
  std::shared_mutex cache_mutex_;
  std::map<std::string, std::shared_ptr<const AnalysisResult>> cache_;
};

/// "host:port" or ":port" or "port".
inline std::pair<std::string, int> parse_bind(std::string_view bind) {
  std::string host = "127.0.0.1";
  std::string_view port = bind;
  if (auto colon = bind.rfind(':'); colon != std::string_view::npos) {
    if (colon > 0) host = std::string(bind.substr(0, colon));
    port = bind.substr(colon + 1);
  }
  int p = 0;
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), p);
  if (ec != std::errc{} || ptr != port.data() + port.size() || p < 0 || p > 65535) {
    fail(ErrorCode::BindFailure, "invalid bind address '" + std::string(bind) + "'");
  }
  return {host, p};
}

/// Blocks serving `service` on the bind address.
inline void serve(Service& service, std::string_view bind) {
  const auto [host, port] = parse_bind(bind);
  httplib::Server srv;
  service.register_routes(srv);
  if (!srv.bind_to_port(host, port)) fail(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  srv.listen_after_bind();
}

}  // namespace upho
