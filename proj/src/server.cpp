#include "hearth/server.hpp"

#include <httplib.h>
#include <openssl/crypto.h>

#include <atomic>
#include <sstream>
#include <thread>

#include "hearth/errors.hpp"
#include "hearth/gateway.hpp"
#include "hearth/pcap.hpp"

namespace hearth {

namespace {

class AuthError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

Json error_body(const char* cls, const std::string& message) {
    return Json{{"error", Json{{"class", cls}, {"message", message}}}};
}

Json with(Json body, const char* key, Json value) {
    body["error"][key] = std::move(value);
    return body;
}

void reply(httplib::Response& res, const Json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

Json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    try {
        auto j = Json::parse(req.body);
        if (!j.is_object()) throw ValidationError("body", "request body must be a JSON object");
        return j;
    } catch (const Json::parse_error&) {
        throw ValidationError("body", "request body is not valid JSON");
    }
}

std::optional<std::int64_t> int_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    auto s = req.get_param_value(name);
    try {
        std::size_t used = 0;
        auto v = std::stoll(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(name, std::string("query parameter '") + name + "' must be an integer");
}

std::optional<std::string> str_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    return req.get_param_value(name);
}

std::int64_t need_int(const httplib::Request& req, const char* name) {
    auto v = int_param(req, name);
    if (!v) throw ValidationError(name, std::string("missing query parameter '") + name + "'");
    return *v;
}

TimeWindow checked(TimeWindow w, const char* field) {
    if (w.start_ms >= w.end_ms) throw ValidationError(field, "window end must be after its start");
    return w;
}

/// start_ms/end_ms; when absent the window spans everything up to now.
TimeWindow window_param(const httplib::Request& req, const Gateway& gw, bool required = false) {
    if (required) return checked({need_int(req, "start_ms"), need_int(req, "end_ms")}, "end_ms");
    auto start = int_param(req, "start_ms").value_or(0);
    auto end = int_param(req, "end_ms").value_or(std::max(gw.now(), start) + 1);
    return checked({start, end}, "end_ms");
}

BucketFilter filter_param(const httplib::Request& req) {
    BucketFilter f;
    f.device_id = str_param(req, "device_id");
    f.company = str_param(req, "company");
    return f;
}

std::uint64_t id_param(const httplib::Request& req, const char* name) {
    auto s = req.path_params.at(name);
    try {
        std::size_t used = 0;
        auto v = std::stoull(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(name, std::string("path segment '") + name + "' must be a number");
}

DirectiveSpec spec_from_json(const Json& j) {
    DirectiveSpec s;
    const auto& dev = require_field(j, "device_id");
    if (dev.is_string()) {
        s.device_id = dev.get<std::string>();
    } else if (!dev.is_null()) {
        throw ValidationError("device_id", "device_id must be a string or null");
    }
    s.scope = scope_from_json(require_field(j, "scope"));
    return s;
}

bool token_matches(const std::string& expected, const std::string& header) {
    const std::string prefix = "Bearer ";
    if (expected.empty() || header.rfind(prefix, 0) != 0) return false;
    auto given = header.substr(prefix.size());
    return given.size() == expected.size() && CRYPTO_memcmp(given.data(), expected.data(), given.size()) == 0;
}

}  // namespace

std::pair<int, Json> describe_current_exception() {
    try {
        throw;
    } catch (const StageGateError& e) {
        auto body = error_body(error_class::kStageGate, e.what());
        body = with(body, "feature", std::string(to_string(e.feature())));
        body = with(body, "required_stage", e.required());
        return {403, with(body, "current_stage", e.current())};
    } catch (const ValidationError& e) {
        return {400, with(error_body(error_class::kValidation, e.what()), "field", e.field())};
    } catch (const NotFoundError& e) {
        return {404, error_body(error_class::kNotFound, e.what())};
    } catch (const AuthError& e) {
        return {401, error_body(error_class::kAuth, e.what())};
    } catch (const StorageFullError& e) {
        return {507, error_body(error_class::kStorageFull, e.what())};
    } catch (const RedactedScopeError& e) {
        return {409, with(error_body(error_class::kValidation, e.what()), "field", "scope")};
    } catch (const AdapterError& e) {
        return {502, error_body(error_class::kEnforcement, e.what())};
    } catch (const CaptureError& e) {
        return {400, with(error_body(error_class::kValidation, e.what()), "field", "pcap")};
    } catch (const FixtureError& e) {
        return {400, with(error_body(error_class::kValidation, e.what()), "field", "fixtures")};
    } catch (const DeviceError& e) {
        return {400, with(error_body(error_class::kValidation, e.what()), "field", "device_map")};
    } catch (const GroupCycleError& e) {
        return {400, with(error_body(error_class::kValidation, e.what()), "field", "company")};
    } catch (const QueryError& e) {
        return {400, with(error_body(error_class::kValidation, e.what()), "field", "window")};
    } catch (const std::invalid_argument& e) {
        return {400, with(error_body(error_class::kValidation, e.what()), "field", "")};
    } catch (const std::exception& e) {
        return {500, error_body(error_class::kServer, e.what())};
    } catch (...) {
        return {500, error_body(error_class::kServer, "unknown error")};
    }
}

struct ApiServer::Impl {
    Gateway& gw;
    httplib::Server svr;
    std::thread thread;
    std::atomic<bool> stopping{false};

    explicit Impl(Gateway& g) : gw(g) { routes(); }

    void routes();
    void read_routes();
    void control_routes();
    void data_routes();
    void stream_route();
};

void ApiServer::Impl::routes() {
    svr.new_task_queue = [] { return new httplib::ThreadPool(32); };
    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (...) {
            auto [status, body] = describe_current_exception();
            reply(res, body, status);
        }
    });
    svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 404) reply(res, error_body(error_class::kNotFound, "no route for " + req.path), 404);
    });
    read_routes();
    control_routes();
    data_routes();
    stream_route();
    if (!gw.config().static_dir.empty()) svr.set_mount_point("/", gw.config().static_dir);
}

void ApiServer::Impl::read_routes() {
    svr.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        auto rules = gw.guard().active();
        reply(res, Json{{"status", gw.storage_full() ? "storage_full" : "ok"},
                        {"stage", gw.stage().stage},
                        {"storage_full", gw.storage_full()},
                        {"flows", gw.store().flow_count()},
                        {"devices", gw.devices().size()},
                        {"adapter", gw.adapter().name()},
                        {"rules_version", rules ? rules->version() : 0},
                        {"last_event", gw.events().last_seq()}});
    });
    svr.Get("/v1/devices", [this](const httplib::Request&, httplib::Response& res) {
        Json out = Json::array();
        for (const auto& d : gw.devices()) out.push_back(to_json(d));
        reply(res, out);
    });
    svr.Get("/v1/companies", [this](const httplib::Request&, httplib::Response& res) {
        Json out = Json::array();
        for (const auto& name : gw.resolver().company_names()) {
            auto info = gw.resolver().company_info(name);
            if (!info) continue;
            auto j = to_json(*info);
            try {
                j["group_root"] = gw.resolver().corporate_group(name).root;
            } catch (const GroupCycleError&) {
                j["group_root"] = nullptr;
            }
            out.push_back(std::move(j));
        }
        reply(res, out);
    });
    svr.Get("/v1/flows", [this](const httplib::Request& req, httplib::Response& res) {
        FlowFilter f;
        f.window = window_param(req, gw);
        f.device_id = str_param(req, "device_id");
        f.company = str_param(req, "company");
        Json out = Json::array();
        for (const auto& af : gw.store().query_flows(f)) out.push_back(to_json(af));
        reply(res, out);
    });
    svr.Get("/v1/buckets", [this](const httplib::Request& req, httplib::Response& res) {
        Json out = Json::array();
        for (const auto& b : gw.exposure().buckets(window_param(req, gw), filter_param(req))) out.push_back(to_json(b));
        reply(res, out);
    });
    svr.Get("/v1/timeseries", [this](const httplib::Request& req, httplib::Response& res) {
        auto w = window_param(req, gw, true);
        auto width = int_param(req, "width_ms").value_or(gw.exposure().storage_width_ms());
        reply(res, to_json(gw.exposure().timeseries(filter_param(req), w, width)));
    });
    svr.Get("/v1/profile", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, to_json(gw.exposure().profile(window_param(req, gw))));
    });
    svr.Get("/v1/report", [this](const httplib::Request& req, httplib::Response& res) {
        auto top_n = int_param(req, "top_n").value_or(3);
        if (top_n < 1) throw ValidationError("top_n", "top_n must be at least 1");
        RegionSet region = gw.home_region();
        if (auto r = str_param(req, "home_region")) {
            try {
                region = parse_home_region(*r);
            } catch (const std::invalid_argument& e) {
                throw ValidationError("home_region", e.what());
            }
        }
        reply(res, to_json(gw.exposure().stats_report(window_param(req, gw), static_cast<std::size_t>(top_n), region)));
    });
    svr.Get("/v1/compare", [this](const httplib::Request& req, httplib::Response& res) {
        TimeWindow a = checked({need_int(req, "a_start_ms"), need_int(req, "a_end_ms")}, "a_end_ms");
        TimeWindow b = checked({need_int(req, "b_start_ms"), need_int(req, "b_end_ms")}, "b_end_ms");
        reply(res, to_json(gw.exposure().compare_periods(a, b, filter_param(req))));
    });
    svr.Get("/v1/directives", [this](const httplib::Request&, httplib::Response& res) {
        Json out = Json::array();
        for (const auto& d : gw.guard().directives()) out.push_back(to_json(d));
        reply(res, out);
    });
    svr.Get("/v1/rules", [this](const httplib::Request&, httplib::Response& res) {
        auto rules = gw.guard().active();
        reply(res, rules ? to_json(*rules) : Json(nullptr));
    });
    svr.Get("/v1/blocklists", [this](const httplib::Request&, httplib::Response& res) {
        Json out = Json::array();
        for (const auto& b : gw.guard().blocklists()) out.push_back(to_json(b));
        reply(res, out);
    });
    svr.Get("/v1/curriculum", [this](const httplib::Request&, httplib::Response& res) {
        Json modules = Json::array();
        for (const auto& m : gw.tutor().modules()) modules.push_back(to_json(m));
        reply(res, Json{{"stage", gw.stage().stage}, {"due", gw.curriculum_due()}, {"modules", std::move(modules)}});
    });
    svr.Get("/v1/curriculum/:id", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, to_json(gw.render_module(req.path_params.at("id"), window_param(req, gw))));
    });
    svr.Get("/v1/redactions", [this](const httplib::Request&, httplib::Response& res) {
        Json out = Json::array();
        for (const auto& r : gw.store().audit()) out.push_back(to_json(r));
        reply(res, out);
    });
    svr.Get("/v1/stage", [this](const httplib::Request&, httplib::Response& res) { reply(res, to_json(gw.stage())); });
}

void ApiServer::Impl::control_routes() {
    svr.Post("/v1/stage", [this](const httplib::Request& req, httplib::Response& res) {
        if (gw.config().admin_token.empty()) throw AuthError("no admin token is configured; set HEARTH_ADMIN_TOKEN");
        if (!token_matches(gw.config().admin_token, req.get_header_value("Authorization")))
            throw AuthError("missing or wrong admin token");
        auto body = parse_body(req);
        auto target = require_int(body, "stage");
        bool force = false;
        if (body.contains("override")) {
            if (!body["override"].is_boolean()) throw ValidationError("override", "override must be a boolean");
            force = body["override"].get<bool>();
        }
        reply(res, to_json(gw.set_stage(static_cast<int>(target), force)));
    });
    svr.Post("/v1/directives", [this](const httplib::Request& req, httplib::Response& res) {
        auto spec = spec_from_json(parse_body(req));
        reply(res, to_json(gw.create_directive(spec)), 201);
    });
    svr.Post("/v1/directives/preview", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        auto window = window_from_json(require_field(body, "window"));
        if (body.contains("directive_id")) {
            reply(res, to_json(gw.preview(require_uint(body, "directive_id"), window)));
        } else {
            reply(res, to_json(gw.preview(spec_from_json(body), window)));
        }
    });
    svr.Post("/v1/directives/import", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, Json{{"imported", gw.import_directives(req.body)}});
    });
    svr.Post("/v1/directives/:id/enable", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, to_json(gw.set_directive_state(id_param(req, "id"), DirectiveState::Enabled)));
    });
    svr.Post("/v1/directives/:id/disable", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, to_json(gw.set_directive_state(id_param(req, "id"), DirectiveState::Disabled)));
    });
    svr.Get("/v1/directives/:id/suggestions", [this](const httplib::Request& req, httplib::Response& res) {
        Json out = Json::array();
        for (const auto& s : gw.suggestions(id_param(req, "id"), window_param(req, gw))) out.push_back(to_json(s));
        reply(res, out);
    });
    svr.Post("/v1/curriculum/:id/complete", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, to_json(gw.complete_module(req.path_params.at("id"))));
    });
}

void ApiServer::Impl::data_routes() {
    svr.Post("/v1/devices/:id/name", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        reply(res, to_json(gw.rename_device(req.path_params.at("id"), require_string(body, "name"))));
    });
    svr.Post("/v1/redactions", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, to_json(gw.redact(redaction_scope_from_json(parse_body(req)))), 201);
    });
    svr.Post("/v1/fixtures", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        reply(res, Json{{"loaded", gw.load_fixtures_text(require_string(body, "text"))}});
    });
    svr.Post("/v1/replay", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        double speed = 0;
        if (auto s = str_param(req, "speed")) {
            try {
                std::size_t used = 0;
                speed = std::stod(*s, &used);
                if (used != s->size() || speed < 0) throw std::invalid_argument("speed");
            } catch (const std::exception&) {
                throw ValidationError("speed", "speed must be a non-negative number");
            }
        }
        auto pcap = require_string(body, "pcap");
        std::vector<DeviceMapEntry> map;
        if (body.contains("device_map") && !body["device_map"].is_null()) {
            auto path = require_string(body, "device_map");
            try {
                map = load_device_map(path);
            } catch (const std::invalid_argument& e) {
                throw ValidationError("device_map", e.what());
            } catch (const std::runtime_error& e) {
                throw ValidationError("device_map", e.what());
            }
        }
        auto r = gw.replay(pcap, map, speed);
        reply(res, Json{{"flows_ingested", r.flows_ingested},
                        {"flows_refused", r.flows_refused},
                        {"stats", to_json(r.stats)}});
    });
    svr.Get("/v1/export/flows", [this](const httplib::Request&, httplib::Response& res) {
        std::ostringstream out;
        gw.store().export_flows(out);
        res.set_content(out.str(), "application/x-ndjson");
    });
    svr.Get("/v1/export/directives", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(gw.guard().export_directives(), "application/json");
    });
}

void ApiServer::Impl::stream_route() {
    svr.Get("/v1/events", [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t after = 0;
        auto resume = req.get_header_value("Last-Event-ID");
        if (resume.empty() && req.has_param("since")) resume = req.get_param_value("since");
        if (!resume.empty()) {
            try {
                after = std::stoull(resume);
            } catch (const std::exception&) {
                throw ValidationError("Last-Event-ID", "Last-Event-ID must be a sequence number");
            }
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [this, after, idle = 0](std::size_t,
                                                                                       httplib::DataSink& sink) mutable {
            if (stopping) return false;
            auto batch = gw.events().next(after, std::chrono::milliseconds(500));
            if (stopping || batch.closed) {
                sink.done();
                return false;
            }
            if (batch.gap) {
                std::string note = "event: gap\ndata: " + Json{{"after", after}}.dump() + "\n\n";
                if (!sink.write(note.data(), note.size())) return false;
            }
            for (const auto& e : batch.events) {
                auto frame = sse_frame(e);
                if (!sink.write(frame.data(), frame.size())) return false;
                after = e.seq;
            }
            if (batch.events.empty() && ++idle >= 30) {
                idle = 0;
                static const std::string ping = ": keepalive\n\n";
                if (!sink.write(ping.data(), ping.size())) return false;
            }
            return true;
        });
    });
}

ApiServer::ApiServer(Gateway& gateway) : impl_(std::make_unique<Impl>(gateway)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->svr.bind_to_any_port(host) : (impl_->svr.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->svr.listen_after_bind(); });
    impl_->svr.wait_until_ready();
    return bound;
}

void ApiServer::stop() {
    impl_->stopping = true;
    impl_->svr.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace hearth
