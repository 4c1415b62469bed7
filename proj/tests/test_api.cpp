#include <doctest.h>

#include <thread>

#include "gate_surface.hpp"
#include "hearth/errors.hpp"

using namespace hearth;

namespace {

std::string window_query(TimeWindow w) {
    return "start_ms=" + std::to_string(w.start_ms) + "&end_ms=" + std::to_string(w.end_ms);
}

struct Got {
    int status = 0;
    std::string text;
    Json json() const { return Json::parse(text); }
};

Got get(httplib::Client& c, const std::string& path, const httplib::Headers& h = {}) {
    auto res = c.Get(path, h);
    REQUIRE(res);
    return {res->status, res->body};
}

Got post(httplib::Client& c, const std::string& path, const Json& body, const httplib::Headers& h = {}) {
    auto res = c.Post(path, h, body.dump(), "application/json");
    REQUIRE(res);
    return {res->status, res->body};
}

template <class T>
std::string array_of(const std::vector<T>& xs) {
    Json out = Json::array();
    for (const auto& x : xs) out.push_back(to_json(x));
    return out.dump();
}

httplib::Headers admin() { return {{"Authorization", std::string("Bearer ") + harness::kToken}}; }

struct Sse {
    std::uint64_t id = 0;
    std::string event;
    Json data;
};

/// Reads the stream until `stop` says so; returns the frames seen.
std::vector<Sse> read_stream(httplib::Client& c, const httplib::Headers& h,
                             const std::function<bool(const std::vector<Sse>&)>& stop,
                             const std::string& path = "/v1/events") {
    std::vector<Sse> frames;
    std::string buf;
    c.Get(path, h, [&](const char* data, std::size_t len) {
        buf.append(data, len);
        for (auto end = buf.find("\n\n"); end != std::string::npos; end = buf.find("\n\n")) {
            std::string frame = buf.substr(0, end);
            buf.erase(0, end + 2);
            Sse s;
            std::istringstream lines(frame);
            for (std::string line; std::getline(lines, line);) {
                if (line.rfind("id: ", 0) == 0) s.id = std::stoull(line.substr(4));
                if (line.rfind("event: ", 0) == 0) s.event = line.substr(7);
                if (line.rfind("data: ", 0) == 0) s.data = Json::parse(line.substr(6));
            }
            if (!s.event.empty()) frames.push_back(std::move(s));
        }
        return !stop(frames);
    });
    return frames;
}

}  // namespace

TEST_CASE("read routes equal the module calls byte for byte") {
    harness::Options o;
    o.stage = 3;
    harness::Gateway h(o);
    auto& gw = *h.gw;
    gw.create_directive({fixture_a::device_id(1), {ScopeKind::Company, "A"}});
    auto c = h.client();
    const auto w = fixture_a::full_window();
    const auto q = window_query(w);

    CHECK(get(c, "/v1/profile?" + q).text == to_json(gw.exposure().profile(w)).dump());
    CHECK(get(c, "/v1/report?" + q + "&top_n=3&home_region=EU").text ==
          to_json(gw.exposure().stats_report(w, 3, parse_home_region("EU"))).dump());
    CHECK(get(c, "/v1/report?" + q + "&top_n=2&home_region=DE,FR").text ==
          to_json(gw.exposure().stats_report(w, 2, parse_home_region("DE,FR"))).dump());
    CHECK(get(c, "/v1/timeseries?" + q + "&width_ms=3600000").text ==
          to_json(gw.exposure().timeseries({}, w, 3'600'000)).dump());
    BucketFilter tv;
    tv.device_id = fixture_a::device_id(2);
    CHECK(get(c, "/v1/timeseries?" + q + "&width_ms=86400000&device_id=" + *tv.device_id).text ==
          to_json(gw.exposure().timeseries(tv, w, 86'400'000)).dump());
    CHECK(get(c, "/v1/buckets?" + q + "&company=C").text == array_of(gw.exposure().buckets(w, {std::nullopt, "C"})));
    CHECK(get(c, "/v1/devices").text == array_of(gw.devices()));
    CHECK(get(c, "/v1/directives").text == array_of(gw.guard().directives()));
    CHECK(get(c, "/v1/rules").text == to_json(*gw.guard().active()).dump());
    CHECK(get(c, "/v1/stage").text == to_json(gw.stage()).dump());
    CHECK(get(c, "/v1/blocklists").text == array_of(gw.guard().blocklists()));
    FlowFilter in_window;
    in_window.window = w;
    CHECK(get(c, "/v1/flows?" + q).text == array_of(gw.store().query_flows(in_window)));

    const TimeWindow day0{fixture_a::kT0, fixture_a::kT0 + fixture_a::kDayMs};
    const TimeWindow day1{fixture_a::kT0 + fixture_a::kDayMs, fixture_a::kT0 + 2 * fixture_a::kDayMs};
    CHECK(get(c, "/v1/compare?a_start_ms=" + std::to_string(day0.start_ms) + "&a_end_ms=" + std::to_string(day0.end_ms) +
                     "&b_start_ms=" + std::to_string(day1.start_ms) + "&b_end_ms=" + std::to_string(day1.end_ms))
              .text == to_json(gw.exposure().compare_periods(day0, day1, {})).dump());

    auto render = get(c, "/v1/curriculum/internet-basics?" + q);
    CHECK(render.status == 200);
    CHECK(render.text == to_json(gw.render_module("internet-basics", w)).dump());

    auto companies = get(c, "/v1/companies").json();
    REQUIRE(companies.size() == 6);
    for (const auto& j : companies) CHECK(j["group_root"] == j["name"]);

    gw.redact({RedactionKind::Company, "F", {}});
    CHECK(get(c, "/v1/redactions").text == array_of(gw.store().audit()));

    auto health = get(c, "/v1/health").json();
    CHECK(health["status"] == "ok");
    CHECK(health["stage"] == 3);
    CHECK(health["adapter"] == "simulated");
}

TEST_CASE("malformed requests get a structured validation error naming the field") {
    harness::Options o;
    o.stage = 3;
    harness::Gateway h(o);
    auto c = h.client();
    auto expect_field = [&](const Got& g, const std::string& field) {
        CHECK(g.status == 400);
        auto e = g.json()["error"];
        CHECK(e["class"] == "validation");
        CHECK(e["field"] == field);
        CHECK_FALSE(e["message"].get<std::string>().empty());
    };
    expect_field(get(c, "/v1/timeseries?start_ms=10"), "end_ms");
    expect_field(get(c, "/v1/timeseries?start_ms=10&end_ms=5"), "end_ms");
    expect_field(get(c, "/v1/profile?start_ms=abc"), "start_ms");
    expect_field(get(c, "/v1/report?top_n=0"), "top_n");
    expect_field(get(c, "/v1/report?home_region=ZZZ"), "home_region");
    expect_field(post(c, "/v1/directives", Json{{"scope", {{"kind", "COMPANY"}, {"name", "A"}}}}), "device_id");
    expect_field(post(c, "/v1/directives", Json{{"device_id", nullptr}, {"scope", {{"kind", "NOPE"}, {"name", "A"}}}}),
                 "kind");
    expect_field(post(c, "/v1/directives", Json{{"device_id", nullptr}, {"scope", {{"kind", "COMPANY"}, {"name", "Q"}}}}),
                 "company");
    expect_field(post(c, "/v1/directives", Json{{"device_id", "nobody"}, {"scope", {{"kind", "COMPANY"}, {"name", "A"}}}}),
                 "device");
    expect_field(post(c, "/v1/redactions", Json{{"kind", "DEVICE"}, {"value", ""}}), "value");
    expect_field(post(c, "/v1/redactions", Json{{"kind", "TIME_RANGE"}, {"range", {{"start_ms", 1}, {"end_ms", 2}}}}),
                 "range");
    expect_field(post(c, "/v1/devices/" + fixture_a::device_id(1) + "/name", Json{{"name", ""}}), "name");

    auto bad = c.Post("/v1/directives", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(Json::parse(bad->body)["error"]["field"] == "body");
}

TEST_CASE("unknown routes and ids are 404") {
    harness::Options o;
    o.stage = 3;
    harness::Gateway h(o);
    auto c = h.client();
    for (const auto& path : {"/v1/nope", "/v1/curriculum/no-such-module", "/v1/directives/99/suggestions"}) {
        auto g = get(c, path);
        CHECK(g.status == 404);
        CHECK(g.json()["error"]["class"] == "not_found");
    }
    CHECK(post(c, "/v1/directives/99/enable", Json::object()).status == 404);
    CHECK(post(c, "/v1/devices/nobody/name", Json{{"name", "x"}}).status == 404);
}

TEST_CASE("a directive posted below stage 3 is refused naming stage 3") {
    harness::Gateway h;  // stage 1
    auto c = h.client();
    for (int stage : {1, 2}) {
        if (stage == 2) REQUIRE(post(c, "/v1/stage", Json{{"stage", 2}}, admin()).status == 200);
        auto g = post(c, "/v1/directives",
                      Json{{"device_id", fixture_a::device_id(1)}, {"scope", {{"kind", "COMPANY"}, {"name", "A"}}}});
        CHECK(g.status == 403);
        auto e = g.json()["error"];
        CHECK(e["class"] == "stage_gate");
        CHECK(e["feature"] == "controls");
        CHECK(e["required_stage"] == 3);
        CHECK(e["current_stage"] == stage);
    }
    CHECK(h.gw->guard().directives().empty());
}

TEST_CASE("stage changes need the admin token and only move forward") {
    harness::Gateway h;
    auto c = h.client();
    CHECK(post(c, "/v1/stage", Json{{"stage", 2}}).status == 401);
    auto wrong = post(c, "/v1/stage", Json{{"stage", 2}}, {{"Authorization", "Bearer test-admin-tokeX"}});
    CHECK(wrong.status == 401);
    CHECK(wrong.json()["error"]["class"] == "auth");
    CHECK(get(c, "/v1/stage").json()["stage"] == 1);

    // 1 -> 3 skips forward and unlocks both features.
    auto s = post(c, "/v1/stage", Json{{"stage", 3}}, admin());
    REQUIRE(s.status == 200);
    CHECK(s.json()["stage"] == 3);
    CHECK(get(c, "/v1/curriculum/internet-basics").status == 200);
    CHECK(post(c, "/v1/directives/preview",
               Json{{"window", to_json(fixture_a::full_window())},
                    {"device_id", nullptr},
                    {"scope", {{"kind", "COMPANY"}, {"name", "A"}}}})
              .status == 200);

    auto back = post(c, "/v1/stage", Json{{"stage", 2}}, admin());
    CHECK(back.status == 400);
    CHECK(back.json()["error"]["field"] == "stage");
    CHECK(post(c, "/v1/stage", Json{{"stage", 4}}, admin()).status == 400);
    CHECK(post(c, "/v1/stage", Json{{"stage", 2}, {"override", true}}, admin()).status == 200);
    CHECK(get(c, "/v1/stage").json()["stage"] == 2);
}

TEST_CASE("gate soundness: locked mutate routes change nothing, unlocked ones all succeed") {
    for (std::uint32_t seed = 1; seed <= 6; ++seed) {
        CAPTURE(seed);
        auto out = gate::run_trial(seed);
        INFO(out.why);
        CHECK(out.ok);
    }
}

TEST_CASE("event stream: ordered ids, resume without gaps, live delivery") {
    harness::Gateway h;
    auto& gw = *h.gw;
    const auto last = gw.events().last_seq();
    REQUIRE(last > 10);

    auto c = h.client();
    auto all = read_stream(c, {}, [&](const auto& f) { return !f.empty() && f.back().id >= last; });
    REQUIRE(!all.empty());
    CHECK(all.front().id == 1);
    for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i].id == all[i - 1].id + 1);
    std::size_t buckets = 0;
    for (const auto& e : all) buckets += e.event == "bucket";
    CHECK(buckets > 0);

    const std::uint64_t resume = last / 2;
    auto rest = read_stream(c, {{"Last-Event-ID", std::to_string(resume)}},
                            [&](const auto& f) { return !f.empty() && f.back().id >= last; });
    REQUIRE(!rest.empty());
    CHECK(rest.front().id == resume + 1);
    CHECK(rest.back().id == last);
    CHECK(rest.size() == last - resume);
    auto via_param = read_stream(c, {}, [&](const auto& f) { return !f.empty(); },
                                 "/v1/events?since=" + std::to_string(last - 1));
    REQUIRE(via_param.size() == 1);
    CHECK(via_param[0].id == last);

    // A subscriber parked at the head sees a change made after it connected.
    std::vector<Sse> live;
    std::thread reader([&] {
        auto rc = h.client();
        live = read_stream(rc, {{"Last-Event-ID", std::to_string(last)}},
                           [](const auto& f) { return !f.empty() && f.back().event == "device"; });
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    REQUIRE(post(c, "/v1/devices/" + fixture_a::device_id(2) + "/name", Json{{"name", "den tv"}}).status == 200);
    reader.join();
    REQUIRE(!live.empty());
    CHECK(live.back().id > last);
    CHECK(live.back().data["friendly_name"] == "den tv");
}

TEST_CASE("replay, fixtures, redaction and export over HTTP") {
    harness::Options o;
    o.stage = 3;
    o.load_fixture_a = false;
    harness::Gateway h(o);
    auto c = h.client();

    synth::write_pcap(h.dir.file("empty.pcap"), {});
    auto empty = post(c, "/v1/replay", Json{{"pcap", h.dir.file("empty.pcap")}});
    REQUIRE(empty.status == 200);
    CHECK(empty.json()["flows_ingested"] == 0);
    CHECK(post(c, "/v1/replay", Json{{"pcap", h.dir.file("missing.pcap")}}).status == 400);

    synth::write_pcap(h.dir.file("a.pcap"), fixture_a::packets());
    synth::write_text(h.dir.file("devices.tsv"), fixture_a::device_map_text());
    auto r = post(c, "/v1/replay?speed=0", Json{{"pcap", h.dir.file("a.pcap")}, {"device_map", h.dir.file("devices.tsv")}});
    REQUIRE(r.status == 200);
    CHECK(r.json()["flows_ingested"] == 24);

    // A load replaces the fixture set.
    auto more = post(c, "/v1/fixtures", Json{{"text", fixture_a::fixtures_text() + "23.9.0.0/16\tZeta\t-\tUS\tnone\n"}});
    CHECK(more.status == 200);
    CHECK(more.json()["loaded"] == 7);
    CHECK(get(c, "/v1/companies").json().size() == 7);
    CHECK(post(c, "/v1/fixtures", Json{{"text", "garbage"}}).json()["error"]["field"] == "fixtures");

    auto ndjson = get(c, "/v1/export/flows");
    CHECK(ndjson.text.rfind(R"({"schema":"hearth.flows")", 0) == 0);
    CHECK(std::count(ndjson.text.begin(), ndjson.text.end(), '\n') == 1 + 24);

    const auto tv = fixture_a::device_id(2);
    auto red = post(c, "/v1/redactions", Json{{"kind", "DEVICE"}, {"value", tv}});
    REQUIRE(red.status == 201);
    CHECK(red.json()["rows_removed"].get<int>() > 0);
    const auto q = window_query(fixture_a::full_window());
    for (const auto& path : std::vector<std::string>{"/v1/flows?" + q, "/v1/buckets?" + q, "/v1/profile?" + q, "/v1/devices",
                             "/v1/timeseries?" + q + "&width_ms=3600000", "/v1/curriculum/internet-basics?" + q,
                             std::string("/v1/export/flows")}) {
        auto g = get(c, path);
        CHECK(g.status == 200);
        CHECK(g.text.find(tv) == std::string::npos);
        CHECK(g.text.find("living-room-tv") == std::string::npos);
    }
    auto report = get(c, "/v1/report?" + q).json();
    CHECK(report["distinct_devices"] == 1);
    CHECK(get(c, "/v1/redactions").json().size() == 1);

    // Directives round-trip through export and import on a fresh gateway.
    auto made = post(c, "/v1/directives",
                     Json{{"device_id", fixture_a::device_id(1)}, {"scope", {{"kind", "COMPANY"}, {"name", "A"}}}});
    INFO(made.text);
    REQUIRE(made.status == 201);
    auto exported = get(c, "/v1/export/directives").text;
    o.load_fixture_a = true;  // the directive names a device the new gateway must know
    harness::Gateway other(o);
    auto oc = other.client();
    auto imported = oc.Post("/v1/directives/import", exported, "application/json");
    REQUIRE(imported);
    CHECK(imported->status == 200);
    CHECK(get(oc, "/v1/directives").text == get(c, "/v1/directives").text);
}
