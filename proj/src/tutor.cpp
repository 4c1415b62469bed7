#include "hearth/tutor.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hearth/errors.hpp"

namespace hearth {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool is_slot_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; }

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
    return out;
}

// Walks a template, calling `slot` for each well-formed placeholder and `text` otherwise.
template <class Text, class Slot>
void scan(std::string_view body, Text text, Slot slot) {
    std::size_t at = 0;
    while (at < body.size()) {
        auto open = body.find("{{", at);
        if (open == std::string_view::npos) break;
        auto close = body.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        auto name = body.substr(open + 2, close - open - 2);
        if (name.empty() || !std::all_of(name.begin(), name.end(), is_slot_char)) {
            text(body.substr(at, open + 2 - at));
            at = open + 2;
            continue;
        }
        text(body.substr(at, open - at));
        slot(std::string(name));
        at = close + 2;
    }
    text(body.substr(at));
}

}  // namespace

CurriculumModule parse_module(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || trim(line) != "---") throw ValidationError("front_matter", "module must start with ---");
    CurriculumModule m;
    bool have_offset = false, closed = false;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t == "---") {
            closed = true;
            break;
        }
        if (t.empty()) continue;
        auto colon = t.find(':');
        if (colon == std::string::npos) throw ValidationError("front_matter", "malformed front-matter line '" + t + "'");
        auto key = trim(std::string_view(t).substr(0, colon));
        auto value = trim(std::string_view(t).substr(colon + 1));
        if (key == "id") {
            m.id = value;
        } else if (key == "title") {
            m.title = value;
        } else if (key == "offset") {
            int v = 0;
            auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
            if (ec != std::errc() || p != value.data() + value.size() || v < 0)
                throw ValidationError("offset", "offset must be a non-negative integer of days");
            m.stage_offset_days = v;
            have_offset = true;
        }
    }
    if (!closed) throw ValidationError("front_matter", "front-matter is not closed with ---");
    if (m.id.empty()) throw ValidationError("id", "module id is missing");
    if (m.title.empty()) throw ValidationError("title", "module title is missing");
    if (!have_offset) throw ValidationError("offset", "module offset is missing");
    std::stringstream rest;
    rest << in.rdbuf();
    m.body_template = rest.str();
    // Trailing newlines belong to the file, not the text.
    while (!m.body_template.empty() && (m.body_template.back() == '\n' || m.body_template.back() == '\r'))
        m.body_template.pop_back();
    return m;
}

std::vector<CurriculumModule> load_curriculum(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec))
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    if (ec) throw ValidationError("path", "cannot read curriculum directory " + dir);
    std::sort(files.begin(), files.end());
    std::vector<CurriculumModule> out;
    for (const auto& f : files) {
        std::ifstream in(f);
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            out.push_back(parse_module(ss.str()));
        } catch (const ValidationError& e) {
            throw ValidationError(e.field(), f.filename().string() + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::string> template_slots(std::string_view body) {
    std::vector<std::string> out;
    scan(body, [](std::string_view) {},
         [&](std::string name) {
             if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
         });
    return out;
}

ContextExample encrypted_vs_plaintext_devices(const SlotContext& ctx) {
    ContextExample ex;
    ex.slot = "encrypted_vs_plaintext_devices";
    ex.window = ctx.window;
    ex.source_query = "stored EXTERNAL flows in the window, devices split by any PLAINTEXT flow";
    std::map<std::string, bool> plaintext;  // device id -> saw plaintext
    for (const auto& af : ctx.flows) {
        const auto& f = af.flow;
        if (f.locality != Locality::External || !ctx.window.contains(f.window_start_ms)) continue;
        plaintext[f.device_id] = plaintext[f.device_id] || f.encryption == Encryption::Plaintext;
    }
    if (plaintext.empty()) {
        ex.text = "No devices sent data outside your home in this period.";
        return ex;
    }
    std::vector<std::string> enc, plain;
    for (const auto& [id, p] : plaintext) (p ? plain : enc).push_back(ctx.device_name ? ctx.device_name(id) : id);
    std::sort(enc.begin(), enc.end());
    std::sort(plain.begin(), plain.end());
    ex.text = "Only encrypted traffic: " + (enc.empty() ? std::string("none") : join(enc)) +
              ". Some unencrypted traffic: " + (plain.empty() ? std::string("none") : join(plain)) + ".";
    return ex;
}

ContextExample top_companies(const SlotContext& ctx) {
    ContextExample ex;
    ex.slot = "top_companies";
    ex.window = ctx.window;
    ex.source_query = "profile(window) summed by company, top 3 by bytes, ties by name";
    std::map<std::string, std::uint64_t> by_company;
    for (const auto& r : ctx.exposure.profile(ctx.window).rows) by_company[r.company] += r.byte_count;
    if (by_company.empty()) {
        ex.text = "No companies received data from your home in this period.";
        return ex;
    }
    std::vector<std::pair<std::string, std::uint64_t>> ranked(by_company.begin(), by_company.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> names;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) names.push_back(ranked[i].first);
    ex.text = join(names);
    return ex;
}

ContextExample jurisdiction_count(const SlotContext& ctx) {
    ContextExample ex;
    ex.slot = "jurisdiction_count";
    ex.window = ctx.window;
    ex.source_query = "stats_report(window).distinct_jurisdictions";
    auto n = ctx.exposure.stats_report(ctx.window, 1, ctx.home_region).distinct_jurisdictions;
    if (n == 0) {
        ex.text = "No data left your home for another country in this period.";
    } else {
        ex.text = std::to_string(n) + (n == 1 ? " jurisdiction" : " jurisdictions");
    }
    return ex;
}

Tutor::Tutor(std::vector<CurriculumModule> modules) : modules_(std::move(modules)) {
    std::set<std::string> ids;
    for (const auto& m : modules_) {
        if (!ids.insert(m.id).second) throw ValidationError("id", "duplicate module id '" + m.id + "'");
        if (m.stage_offset_days < 0) throw ValidationError("offset", "module '" + m.id + "' has a negative offset");
    }
    slots_["encrypted_vs_plaintext_devices"] = encrypted_vs_plaintext_devices;
    slots_["top_companies"] = top_companies;
    slots_["jurisdiction_count"] = jurisdiction_count;
}

void Tutor::register_slot(std::string name, SlotGenerator generator) {
    std::lock_guard lock(mu_);
    slots_[std::move(name)] = std::move(generator);
}

std::optional<std::int64_t> Tutor::curriculum_start(const StageConfig& stage) {
    if (stage.stage < 2) return std::nullopt;
    if (auto s = stage.started(2)) return s;
    return stage.started(3);
}

std::vector<std::string> Tutor::schedule(const StageConfig& stage, std::int64_t now_ms) const {
    auto start = curriculum_start(stage);
    if (!start) return {};
    std::vector<const CurriculumModule*> due;
    std::lock_guard lock(mu_);
    for (const auto& m : modules_)
        if (!m.completed_at_ms && *start + m.stage_offset_days * kDay <= now_ms) due.push_back(&m);
    std::sort(due.begin(), due.end(), [](auto* a, auto* b) {
        if (a->stage_offset_days != b->stage_offset_days) return a->stage_offset_days < b->stage_offset_days;
        return a->id < b->id;
    });
    std::vector<std::string> out;
    for (auto* m : due) out.push_back(m->id);
    return out;
}

RenderedModule Tutor::render(std::string_view id, const SlotContext& ctx) const {
    CurriculumModule m;
    std::map<std::string, SlotGenerator, std::less<>> slots;
    {
        std::lock_guard lock(mu_);
        auto it = std::find_if(modules_.begin(), modules_.end(), [&](const auto& x) { return x.id == id; });
        if (it == modules_.end()) throw NotFoundError("no curriculum module '" + std::string(id) + "'");
        m = *it;
        slots = slots_;
    }
    for (const auto& name : template_slots(m.body_template))
        if (!slots.count(name)) throw RenderError(name);

    RenderedModule out;
    out.id = m.id;
    out.title = m.title;
    std::map<std::string, std::string> rendered;
    scan(
        m.body_template, [&](std::string_view t) { out.body += t; },
        [&](std::string name) {
            auto it = rendered.find(name);
            if (it == rendered.end()) {
                auto ex = slots.find(name)->second(ctx);
                ex.slot = name;
                it = rendered.emplace(name, ex.text).first;
                out.examples.push_back(std::move(ex));
            }
            out.body += it->second;
        });
    return out;
}

CurriculumModule Tutor::mark_complete(std::string_view id, const StageConfig& stage, std::int64_t now_ms) {
    require(stage, Feature::Curriculum);
    std::lock_guard lock(mu_);
    auto it = std::find_if(modules_.begin(), modules_.end(), [&](const auto& x) { return x.id == id; });
    if (it == modules_.end()) throw NotFoundError("no curriculum module '" + std::string(id) + "'");
    if (it->completed_at_ms) return *it;
    auto start = curriculum_start(stage);
    if (!start || *start + it->stage_offset_days * kDay > now_ms)
        throw ValidationError("id", "module '" + it->id + "' is not due yet");
    it->completed_at_ms = now_ms;
    return *it;
}

std::vector<CurriculumModule> Tutor::modules() const {
    std::lock_guard lock(mu_);
    return modules_;
}

std::optional<CurriculumModule> Tutor::find(std::string_view id) const {
    std::lock_guard lock(mu_);
    for (const auto& m : modules_)
        if (m.id == id) return m;
    return std::nullopt;
}

void Tutor::restore_completion(std::string_view id, std::int64_t completed_at_ms) {
    std::lock_guard lock(mu_);
    for (auto& m : modules_)
        if (m.id == id) m.completed_at_ms = completed_at_ms;
}

}  // namespace hearth
