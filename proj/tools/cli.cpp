#include "cli.hpp"

#include <httplib.h>

#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "hearth/codec.hpp"
#include "hearth/errors.hpp"
#include "hearth/server.hpp"

namespace hearth::cli {

namespace {

namespace fs = std::filesystem;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  2  validation error or bad usage\n"
    "  3  gateway unreachable\n"
    "  4  feature locked at the current stage\n"
    "  5  not found\n"
    "  6  gateway or storage failure\n"
    "  7  admin token missing or wrong\n";

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out.push_back(c);
    }
    return out + "\"";
}

int code_for(const std::string& cls) {
    if (cls == error_class::kValidation) return kValidation;
    if (cls == error_class::kStageGate) return kStageGate;
    if (cls == error_class::kNotFound) return kNotFound;
    if (cls == error_class::kAuth) return kAuth;
    return kServer;
}

std::string fmt_time(std::int64_t ms) {
    std::time_t t = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream o;
    o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return o.str();
}

std::string percent(double share) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", share * 100.0);
    return buf;
}

struct Failure {
    int code;
    std::string cls;
    std::string message;
    std::string field;
};

class Session {
public:
    Session(std::ostream& out, std::ostream& err, const Options& opt) : out_(out), err_(err), opt_(opt) {}

    std::string url;
    std::ostream& out() { return out_; }
    const Options& options() const { return opt_; }

    int fail(const Failure& f) {
        const char* prefix = opt_.color ? "\x1b[31merror:\x1b[0m" : "error:";
        err_ << prefix << " class=" << f.cls;
        if (!f.field.empty()) err_ << " field=" << f.field;
        err_ << " message=" << quote(f.message) << "\n";
        return f.code;
    }

    /// One API call. On success fills `body` (raw text) and returns kOk.
    int call(const std::string& method, const std::string& path, const std::string& payload, std::string& body,
             const httplib::Headers& headers = {}) {
        httplib::Client http(url);
        http.set_connection_timeout(std::chrono::seconds(5));
        http.set_read_timeout(std::chrono::hours(24));
        httplib::Result res = method == "GET" ? http.Get(path, headers)
                                              : http.Post(path, headers, payload, "application/json");
        if (!res) return fail({kConnection, "connection", "cannot reach " + url + ": " + httplib::to_string(res.error()), ""});
        if (res->status >= 400) {
            std::string cls = error_class::kServer;
            std::string message = "HTTP " + std::to_string(res->status);
            std::string field;
            try {
                auto j = Json::parse(res->body);
                const auto& e = j.at("error");
                cls = e.at("class").get<std::string>();
                message = e.at("message").get<std::string>();
                if (e.contains("field") && e["field"].is_string()) field = e["field"].get<std::string>();
            } catch (const std::exception&) {
            }
            return fail({code_for(cls), cls, message, field});
        }
        body = std::move(res->body);
        return kOk;
    }

    int call_json(const std::string& method, const std::string& path, const Json& payload, Json& result,
                  const httplib::Headers& headers = {}) {
        std::string body;
        if (int rc = call(method, path, payload.is_null() ? std::string() : payload.dump(), body, headers)) return rc;
        try {
            result = Json::parse(body);
        } catch (const Json::parse_error&) {
            return fail({kServer, error_class::kServer, "gateway returned malformed JSON", ""});
        }
        return kOk;
    }

private:
    std::ostream& out_;
    std::ostream& err_;
    const Options& opt_;
};

std::string encode(const std::string& s) { return httplib::detail::encode_query_param(s); }

/// "all", "START_MS:END_MS", or a trailing span such as "7d", "12h", "30m".
std::string window_query(const std::string& spec) {
    if (spec.empty() || spec == "all") return {};
    auto colon = spec.find(':');
    try {
        if (colon != std::string::npos) {
            std::size_t a = 0, b = 0;
            auto start = std::stoll(spec.substr(0, colon), &a);
            auto end = std::stoll(spec.substr(colon + 1), &b);
            if (a == colon && b == spec.size() - colon - 1)
                return "start_ms=" + std::to_string(start) + "&end_ms=" + std::to_string(end);
        } else if (spec.size() >= 2) {
            std::size_t used = 0;
            auto n = std::stoll(spec.substr(0, spec.size() - 1), &used);
            std::int64_t unit = 0;
            switch (spec.back()) {
                case 'd': unit = kDay; break;
                case 'h': unit = 3'600'000; break;
                case 'm': unit = 60'000; break;
            }
            if (unit && n > 0 && used == spec.size() - 1) {
                auto end = system_clock_ms();
                return "start_ms=" + std::to_string(end - n * unit) + "&end_ms=" + std::to_string(end + 1);
            }
        }
    } catch (const std::exception&) {
    }
    throw ValidationError("window", "window must be 'all', START_MS:END_MS, or a span like 7d, 12h, 30m");
}

std::string join_query(const std::vector<std::string>& parts) {
    std::string q;
    for (const auto& p : parts) {
        if (p.empty()) continue;
        q += (q.empty() ? "?" : "&") + p;
    }
    return q;
}

int write_output(Session& s, const std::string& path, const std::string& data) {
    if (path.empty() || path == "-") {
        s.out() << data;
        return kOk;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << data)) return s.fail({kValidation, error_class::kValidation, "cannot write " + path, "output"});
    return kOk;
}

int serve(Session& s, const std::string& config_path) {
    auto config = load_config(config_path, s.options().env);
    Gateway gateway(config);
    ApiServer server(gateway);
    int port = server.start(config.bind, config.port);
    s.out() << "listening on http://" << config.bind << ":" << port << std::endl;
    g_stop = false;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    int polls = 0;
    while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        if (++polls % 150 == 0) gateway.tick();  // every 30 s
    }
    server.stop();
    s.out() << "stopped" << std::endl;
    return kOk;
}

void print_report(std::ostream& out, const Json& r, std::int64_t top_n, const std::string& window) {
    auto row = [&](const std::string& k, const std::string& v) { out << std::left << std::setw(16) << k << v << "\n"; };
    row("window", window.empty() ? "all" : window);
    row("bytes", std::to_string(r.at("total_bytes").get<std::uint64_t>()));
    row("packets", std::to_string(r.at("total_packets").get<std::uint64_t>()));
    row("devices", std::to_string(r.at("distinct_devices").get<std::uint64_t>()));
    row("companies", std::to_string(r.at("distinct_companies").get<std::uint64_t>()));
    row("jurisdictions", std::to_string(r.at("distinct_jurisdictions").get<std::uint64_t>()));
    row("top-" + std::to_string(top_n) + " share", percent(r.at("top_n_share").get<double>()));
    row("out-of-region", percent(r.at("out_of_region_share").get<double>()));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Options& options) {
    Session s(out, err, options);
    CLI::App app{"Home network privacy gateway", "hearth"};
    app.footer(kExitCodes);
    app.fallthrough();
    app.require_subcommand(1);

    std::string default_url = "http://127.0.0.1:8787";
    if (auto u = options.env("HEARTH_URL")) {
        default_url = *u;
    } else if (auto p = options.env("HEARTH_PORT")) {
        default_url = "http://127.0.0.1:" + *p;
    }
    s.url = default_url;
    app.add_option("--url", s.url, "Gateway base URL (env HEARTH_URL)")->capture_default_str();

    std::function<int()> action;
    bool json = false;

    auto* serve_cmd = app.add_subcommand("serve", "Run the gateway and its HTTP API");
    std::string config_path;
    serve_cmd->add_option("--config", config_path, "JSON config file; HEARTH_* variables override it");
    serve_cmd->callback([&] { action = [&] { return serve(s, config_path); }; });

    auto* replay_cmd = app.add_subcommand("replay", "Ingest a capture file through the gateway");
    std::string pcap, device_map;
    double speed = 0;
    bool fast = false;
    replay_cmd->add_option("pcap", pcap, "pcap or pcapng file")->required();
    replay_cmd->add_option("--device-map", device_map, "MAC<TAB>name file");
    auto* speed_opt = replay_cmd->add_option("--speed", speed, "Replay at N times capture speed")->check(CLI::PositiveNumber);
    replay_cmd->add_flag("--as-fast-as-possible", fast, "No pacing (default)")->excludes(speed_opt);
    replay_cmd->add_flag("--json", json, "Print the API payload");
    replay_cmd->callback([&] {
        action = [&] {
            Json body{{"pcap", fs::absolute(pcap).string()},
                      {"device_map", device_map.empty() ? Json(nullptr) : Json(fs::absolute(device_map).string())}};
            std::ostringstream q;
            q << "/v1/replay?speed=" << (fast ? 0.0 : speed);
            Json r;
            if (int rc = s.call_json("POST", q.str(), body, r)) return rc;
            if (json) {
                s.out() << r.dump(2) << "\n";
            } else {
                s.out() << r.at("flows_ingested").get<std::uint64_t>() << " flows ingested";
                if (auto refused = r.at("flows_refused").get<std::uint64_t>())
                    s.out() << " (" << refused << " refused inside a fresh redaction)";
                s.out() << "\n";
            }
            return kOk;
        };
    });

    auto* devices_cmd = app.add_subcommand("devices", "List or name household devices");
    devices_cmd->require_subcommand(1);
    auto* devices_list = devices_cmd->add_subcommand("list", "List devices");
    devices_list->add_flag("--json", json, "Print the API payload");
    devices_list->callback([&] {
        action = [&] {
            Json r;
            if (int rc = s.call_json("GET", "/v1/devices", nullptr, r)) return rc;
            if (json) {
                s.out() << r.dump(2) << "\n";
                return kOk;
            }
            s.out() << std::left << std::setw(34) << "DEVICE" << std::setw(24) << "NAME" << std::setw(22) << "FIRST SEEN"
                    << "LAST SEEN\n";
            for (const auto& d : r)
                s.out() << std::left << std::setw(34) << d.at("device_id").get<std::string>() << std::setw(24)
                        << d.at("friendly_name").get<std::string>() << std::setw(22)
                        << fmt_time(d.at("first_seen_ms").get<std::int64_t>())
                        << fmt_time(d.at("last_seen_ms").get<std::int64_t>()) << "\n";
            return kOk;
        };
    });
    auto* devices_name = devices_cmd->add_subcommand("name", "Give a device a friendly name");
    std::string device_id, device_name;
    devices_name->add_option("device_id", device_id)->required();
    devices_name->add_option("name", device_name)->required();
    devices_name->callback([&] {
        action = [&] {
            Json r;
            if (int rc = s.call_json("POST", "/v1/devices/" + encode(device_id) + "/name", Json{{"name", device_name}}, r))
                return rc;
            s.out() << r.at("device_id").get<std::string>() << " is now " << r.at("friendly_name").get<std::string>() << "\n";
            return kOk;
        };
    });

    auto* stage_cmd = app.add_subcommand("stage", "Show or change the deployment stage");
    stage_cmd->require_subcommand(1);
    auto* stage_get = stage_cmd->add_subcommand("get", "Print the current stage");
    stage_get->add_flag("--json", json, "Print the API payload");
    stage_get->callback([&] {
        action = [&] {
            Json r;
            if (int rc = s.call_json("GET", "/v1/stage", nullptr, r)) return rc;
            if (json) {
                s.out() << r.dump(2) << "\n";
            } else {
                s.out() << r.at("stage").get<int>() << "\n";
            }
            return kOk;
        };
    });
    auto* stage_set = stage_cmd->add_subcommand("set", "Move to another stage (admin)");
    int target = 0;
    bool override_flag = false;
    std::string token;
    stage_set->add_option("stage", target, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
    stage_set->add_flag("--override", override_flag, "Allow moving backwards");
    stage_set->add_option("--token", token, "Admin token (env HEARTH_ADMIN_TOKEN)");
    stage_set->callback([&] {
        action = [&] {
            if (token.empty()) token = options.env("HEARTH_ADMIN_TOKEN").value_or("");
            Json r;
            httplib::Headers h{{"Authorization", "Bearer " + token}};
            if (int rc = s.call_json("POST", "/v1/stage", Json{{"stage", target}, {"override", override_flag}}, r, h))
                return rc;
            s.out() << r.at("stage").get<int>() << "\n";
            return kOk;
        };
    });

    auto* fixtures_cmd = app.add_subcommand("fixtures", "Manage destination fixtures");
    fixtures_cmd->require_subcommand(1);
    auto* fixtures_load = fixtures_cmd->add_subcommand("load", "Replace the fixture set from a file");
    std::string fixtures_path;
    fixtures_load->add_option("file", fixtures_path)->required();
    fixtures_load->callback([&] {
        action = [&] {
            std::ifstream f(fixtures_path, std::ios::binary);
            if (!f) return s.fail({kValidation, error_class::kValidation, "cannot read " + fixtures_path, "file"});
            std::ostringstream text;
            text << f.rdbuf();
            Json r;
            if (int rc = s.call_json("POST", "/v1/fixtures", Json{{"text", text.str()}}, r)) return rc;
            s.out() << r.at("loaded").get<std::uint64_t>() << " fixtures loaded\n";
            return kOk;
        };
    });

    auto* report_cmd = app.add_subcommand("report", "Exposure summary for a window");
    std::string window;
    std::int64_t top_n = 3;
    std::string home_region;
    report_cmd->add_option("--window", window, "all, START_MS:END_MS, or a span like 7d");
    report_cmd->add_option("--top-n", top_n, "Companies counted in the top share")->check(CLI::PositiveNumber)->capture_default_str();
    report_cmd->add_option("--home-region", home_region, "Country codes or EU (default: gateway setting)");
    report_cmd->add_flag("--json", json, "Print the API payload");
    report_cmd->callback([&] {
        action = [&] {
            auto path = "/v1/report" + join_query({window_query(window), "top_n=" + std::to_string(top_n),
                                                   home_region.empty() ? "" : "home_region=" + encode(home_region)});
            Json r;
            if (int rc = s.call_json("GET", path, nullptr, r)) return rc;
            if (json) {
                s.out() << r.dump(2) << "\n";
            } else {
                print_report(s.out(), r, top_n, window);
            }
            return kOk;
        };
    });

    auto* export_cmd = app.add_subcommand("export", "Export stored data");
    export_cmd->require_subcommand(1);
    std::string output;
    for (const char* what : {"flows", "directives"}) {
        auto* sub = export_cmd->add_subcommand(what, std::string("Export ") + what);
        sub->add_option("-o,--output", output, "Output file (default stdout)");
        std::string route = std::string("/v1/export/") + what;
        sub->callback([&, route] {
            action = [&, route] {
                std::string body;
                if (int rc = s.call("GET", route, "", body)) return rc;
                if (!body.empty() && body.back() != '\n') body.push_back('\n');
                return write_output(s, output, body);
            };
        });
    }

    auto* redact_cmd = app.add_subcommand("redact", "Delete stored data (audited)");
    redact_cmd->require_subcommand(1);
    std::string redact_value;
    std::int64_t range_start = 0, range_end = 0;
    Json scope;
    auto* redact_device = redact_cmd->add_subcommand("device", "Everything recorded for one device");
    redact_device->add_option("device_id", redact_value)->required();
    redact_device->callback([&] { scope = Json{{"kind", "DEVICE"}, {"value", redact_value}}; });
    auto* redact_company = redact_cmd->add_subcommand("company", "Everything sent to one company");
    redact_company->add_option("company", redact_value)->required();
    redact_company->callback([&] { scope = Json{{"kind", "COMPANY"}, {"value", redact_value}}; });
    auto* redact_range = redact_cmd->add_subcommand("range", "Everything inside a time range");
    redact_range->add_option("start_ms", range_start)->required();
    redact_range->add_option("end_ms", range_end)->required();
    redact_range->callback([&] {
        scope = Json{{"kind", "TIME_RANGE"}, {"range", Json{{"start_ms", range_start}, {"end_ms", range_end}}}};
    });
    redact_cmd->add_flag("--json", json, "Print the API payload");
    redact_cmd->callback([&] {
        action = [&] {
            Json r;
            if (int rc = s.call_json("POST", "/v1/redactions", scope, r)) return rc;
            if (json) {
                s.out() << r.dump(2) << "\n";
            } else {
                s.out() << "redacted " << r.at("rows_removed").get<std::uint64_t>() << " rows ("
                        << r.at("description").get<std::string>() << "), audit entry " << r.at("id").get<std::uint64_t>()
                        << "\n";
            }
            return kOk;
        };
    });

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e, out, err);
        return rc == 0 ? kOk : kValidation;
    }
    try {
        return action ? action() : kOk;
    } catch (...) {
        auto [status, body] = describe_current_exception();
        const auto& e = body["error"];
        auto cls = e["class"].get<std::string>();
        return s.fail({code_for(cls), cls, e["message"].get<std::string>(),
                       e.contains("field") ? e["field"].get<std::string>() : ""});
    }
}

}  // namespace hearth::cli
