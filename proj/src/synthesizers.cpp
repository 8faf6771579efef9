#include "cape/pipeline.hpp"

#include "cape/rng.hpp"

#include <httplib.h>

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <map>

namespace cape::pipeline {

namespace detail {
const std::map<std::string, std::string>& prompt_assets();
}

std::string prompt_asset(const std::string& name)
{
    const auto& assets = detail::prompt_assets();
    const auto it = assets.find(name);
    if (it == assets.end())
        throw std::invalid_argument("unknown prompt '" + name + "'");
    return it->second;
}

std::vector<std::string> prompt_asset_names()
{
    std::vector<std::string> names;
    for (const auto& [name, text] : detail::prompt_assets())
        names.push_back(name);
    return names;
}

EndpointConfig EndpointConfig::from_json(const io::Json& j)
{
    EndpointConfig c;
    c.url = io::text(j, "url");
    c.model = io::text(j, "model");
    if (j.contains("path"))
        c.path = io::text(j, "path");
    if (j.contains("api_key_env"))
        c.api_key_env = io::text(j, "api_key_env");
    if (j.contains("timeout_seconds"))
        c.timeout_seconds = io::number(j, "timeout_seconds");
    if (j.contains("prompt"))
        c.prompt = io::text(j, "prompt");
    prompt_asset(c.prompt);
    if (!(c.timeout_seconds > 0))
        throw io::FormatError("timeout_seconds must be positive");
    return c;
}

EndpointConfig EndpointConfig::load(const std::filesystem::path& file)
{
    try {
        return from_json(io::read_json(file));
    } catch (const io::FormatError& e) {
        throw io::FormatError(file.string() + ": " + e.what());
    }
}

namespace {

void replace_all(std::string& text, const std::string& from, const std::string& to)
{
    for (std::size_t pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size()))
        text.replace(pos, from.size(), to);
}

std::string upper(std::string s)
{
    for (char& c : s)
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::string waypoints_text(const geometry::TimedPath& path)
{
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const auto& w = path.waypoints[i];
        out += "  step " + std::to_string(i) + ": (" + dsl::format_number(round2(w.pose.x)) + ", " +
               dsl::format_number(round2(w.pose.y)) + ", " + dsl::format_number(round2(w.pose.theta)) + ")";
        if (w.dwell)
            out += " wait " + std::to_string(w.dwell);
        out += "\n";
    }
    return out;
}

std::string paths_text(const SynthesizerRequest& r)
{
    std::string out;
    const auto& cands = r.session.candidates.candidates;
    for (std::size_t i = 0; i < cands.size(); ++i)
        out += "Path " + std::to_string(i) + ":\n" + waypoints_text(cands[i].path);
    return out;
}

std::string others_text(const SynthesizerRequest& r)
{
    std::string out;
    for (const auto& [id, track] : r.session.others)
        out += id + " predicted path:\n" +
               waypoints_text(geometry::remaining_path(track.path, r.session.body(id), track.offset));
    return out.empty() ? "none\n" : out;
}

} // namespace

std::string ExternalSynthesizer::system_prompt() const
{
    return config_.prompt == "simworld_edit" ? "" : prompt_asset(config_.prompt);
}

std::string ExternalSynthesizer::user_prompt(const SynthesizerRequest& r) const
{
    const std::string& target = r.session.target;
    if (config_.prompt == "simworld_edit") {
        std::string text = prompt_asset("simworld_edit");
        replace_all(text, "{target_agent.upper()}", upper(target));
        replace_all(text, "{target_agent}", target);
        replace_all(text, "{instruction}", r.instruction);
        replace_all(text, "{paths_text}", paths_text(r));
        replace_all(text, "{other_agents_text}", others_text(r));
        return text;
    }
    return r.scene + "\nCANDIDATE PATHS FOR " + target + " (0-indexed):\n" + paths_text(r) + "\nOTHER AGENTS:\n" +
           others_text(r) + "\nINSTRUCTION: " + r.instruction + "\n";
}

SynthesizerResponse ExternalSynthesizer::call_once(const SynthesizerRequest& request) const
{
    io::Json messages = io::Json::array();
    if (const std::string sys = system_prompt(); !sys.empty())
        messages.push_back({{"role", "system"}, {"content", sys}});
    messages.push_back({{"role", "user"}, {"content", user_prompt(request)}});
    const io::Json body{{"model", config_.model}, {"messages", std::move(messages)}, {"temperature", 0}};

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (!key || !*key)
            throw TransportError("environment variable " + config_.api_key_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    httplib::Client client(config_.url);
    const auto seconds = static_cast<time_t>(config_.timeout_seconds);
    const auto micros = static_cast<time_t>((config_.timeout_seconds - double(seconds)) * 1e6);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    const auto start = std::chrono::steady_clock::now();
    const auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || elapsed >= config_.timeout_seconds * 0.95)
            throw Timeout("synthesizer endpoint timed out after " + std::to_string(elapsed) + " s");
        throw TransportError("synthesizer endpoint: " + httplib::to_string(err));
    }
    if (res->status != 200)
        throw TransportError("synthesizer endpoint returned HTTP " + std::to_string(res->status));

    SynthesizerResponse out;
    out.latency = elapsed;
    try {
        const auto j = io::Json::parse(res->body);
        out.program_text = strip_fences(j.at("choices").at(0).at("message").at("content").get<std::string>());
        if (j.contains("usage")) {
            const auto& u = j["usage"];
            if (u.contains("total_tokens"))
                out.token_count = u["total_tokens"].get<std::int64_t>();
            else
                out.token_count =
                    u.value("prompt_tokens", std::int64_t{0}) + u.value("completion_tokens", std::int64_t{0});
        }
    } catch (const io::Json::exception& e) {
        throw TransportError(std::string("malformed synthesizer response: ") + e.what());
    }
    return out;
}

SynthesizerResponse ExternalSynthesizer::synthesize(const SynthesizerRequest& request) const
{
    try {
        return call_once(request);
    } catch (const TransportError&) {
        return call_once(request);
    }
}

ReplaySynthesizer::ReplaySynthesizer(std::filesystem::path dir, std::shared_ptr<const Synthesizer> record_from)
    : dir_(std::move(dir)), inner_(std::move(record_from))
{
}

std::string ReplaySynthesizer::fixture_key(const SynthesizerRequest& request)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(request.to_json().dump())));
    return buf;
}

SynthesizerResponse ReplaySynthesizer::synthesize(const SynthesizerRequest& request) const
{
    const std::string key = fixture_key(request);
    const auto file = dir_ / (key + ".json");
    if (std::filesystem::exists(file)) {
        const auto j = io::read_json(file);
        const auto& r = io::field(j, "response");
        return {io::text(r, "program_text"), io::integer(r, "token_count"), io::number(r, "latency")};
    }
    if (!inner_)
        throw TransportError("no replay fixture " + file.string());
    const auto response = inner_->synthesize(request);
    const io::Json fixture{{"key", key},
                           {"request", request.to_json()},
                           {"response",
                            {{"program_text", response.program_text},
                             {"token_count", response.token_count},
                             {"latency", response.latency}}}};
    io::write_text(file, io::dump_pretty(fixture));
    return response;
}

} // namespace cape::pipeline
