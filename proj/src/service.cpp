#include "finagent/service.hpp"

#include "finagent/error.hpp"
#include "finagent/text.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace finagent {

std::string_view to_string(Profile p) noexcept {
    return p == Profile::Institutional ? "institutional" : "individual";
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------
namespace {

[[noreturn]] void config_error(std::size_t line, const std::string& msg) {
    throw Error(ErrorCode::ConfigError, fmt::format("config line {}: {}", line, msg));
}

std::string unquote(std::string_view v) {
    auto t = trim(v);
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"') {
        std::string out;
        for (std::size_t i = 1; i + 1 < t.size(); ++i) {
            if (t[i] == '\\' && i + 2 < t.size()) {
                char n = t[++i];
                out.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
            } else {
                out.push_back(t[i]);
            }
        }
        return out;
    }
    return std::string(t);
}

// strips a trailing "# comment" that sits outside quotes
std::string_view strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

template <typename T>
T parse_num(const std::string& v, std::size_t line, const std::string& key) {
    T out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) config_error(line, fmt::format("{}: '{}' is not a number", key, v));
    return out;
}

double parse_double(const std::string& v, std::size_t line, const std::string& key) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    config_error(line, fmt::format("{}: '{}' is not a number", key, v));
}

bool parse_bool(const std::string& v, std::size_t line, const std::string& key) {
    auto l = to_lower_ascii(v);
    if (l == "true" || l == "yes" || l == "on" || l == "1") return true;
    if (l == "false" || l == "no" || l == "off" || l == "0") return false;
    config_error(line, fmt::format("{}: '{}' is not a boolean", key, v));
}

std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(v);
    while (std::getline(in, cur, ',')) {
        auto t = trim(cur);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

}  // namespace

AgentConfig parse_config(std::string_view text) {
    AgentConfig c;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        auto line = trim(strip_comment(raw));
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) config_error(line_no, "expected 'key = value'");
        std::string key(trim(line.substr(0, eq)));
        std::string value = unquote(line.substr(eq + 1));
        if (key.empty()) config_error(line_no, "empty key");

        if (key == "profile") {
            if (value == "individual") c.profile = Profile::Individual;
            else if (value == "institutional") c.profile = Profile::Institutional;
            else config_error(line_no, "profile must be individual or institutional");
        } else if (key == "store_dir") {
            c.store_dir = value;
        } else if (key == "listen") {
            auto colon = value.rfind(':');
            if (colon == std::string::npos) config_error(line_no, "listen must be host:port");
            c.listen_host = value.substr(0, colon);
            c.listen_port = parse_num<int>(value.substr(colon + 1), line_no, key);
        } else if (key == "server.threads") {
            c.server_threads = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "default_backend") {
            c.default_backend = value;
        } else if (key == "backend.timeout_ms") {
            c.backend_timeout_ms = parse_num<int>(value, line_no, key);
        } else if (key.starts_with("backend.")) {
            auto rest = key.substr(8);
            auto dot = rest.rfind('.');
            if (dot == std::string::npos || dot == 0) config_error(line_no, fmt::format("unknown key '{}'", key));
            auto id = rest.substr(0, dot);
            auto field = rest.substr(dot + 1);
            auto& b = c.backends[id];
            if (field == "base_url") b.base_url = value;
            else if (field == "model") b.model = value;
            else if (field == "api_key_env") b.api_key_env = value;
            else if (field == "api_key") config_error(line_no, "secrets go in the environment; use api_key_env");
            else config_error(line_no, fmt::format("unknown backend field '{}'", field));
        } else if (key == "embed.provider") {
            c.embed.provider = value;
        } else if (key == "embed.url") {
            c.embed.url = value;
        } else if (key == "embed.dim") {
            c.embed.dim = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "embed.timeout_ms") {
            c.embed.timeout_ms = parse_num<int>(value, line_no, key);
        } else if (key == "search.provider") {
            c.search.provider = value;
        } else if (key == "search.url_template") {
            c.search.url_template = value;
        } else if (key == "search.fixture") {
            c.search.fixture = value;
        } else if (key == "search.timeout_ms") {
            c.search.timeout_ms = parse_num<int>(value, line_no, key);
        } else if (key == "retrieval.k_per_tier") {
            c.retrieval.k_per_tier = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "retrieval.k_web") {
            c.default_preferences.k_web = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "retrieval.budget_tokens") {
            c.budget_tokens = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "retrieval.chunk_tokens") {
            c.retrieval.chunk_tokens = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "retrieval.overlap_tokens") {
            c.retrieval.overlap_tokens = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "retrieval.fetch_timeout_ms") {
            c.retrieval.fetch_timeout_ms = parse_num<int>(value, line_no, key);
        } else if (key == "retrieval.max_in_flight") {
            c.retrieval.max_in_flight = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "retrieval.source_ttl_s") {
            c.retrieval.source_ttl = std::chrono::seconds(parse_num<long>(value, line_no, key));
        } else if (key == "retrieval.store_tier") {
            c.retrieval.store_tier_enabled = parse_bool(value, line_no, key);
        } else if (key == "retrieval.web_search") {
            c.default_preferences.web_search_enabled = parse_bool(value, line_no, key);
        } else if (key == "preferences.preferred_urls") {
            c.default_preferences.preferred_urls = parse_list(value);
        } else if (key == "preferences.api_endpoints") {
            c.default_preferences.api_endpoints = parse_list(value);
        } else if (key == "preferences.local_paths") {
            c.default_preferences.local_paths = parse_list(value);
        } else if (key == "store.collection") {
            c.retrieval.store_collection = value;
        } else if (key.starts_with("converter.")) {
            auto ext = to_lower_ascii(key.substr(10));
            if (ext.starts_with(".")) ext.erase(0, 1);
            if (ext.empty()) config_error(line_no, "converter needs an extension");
            c.converters[ext] = value;
        } else if (key == "prompt.mode") {
            c.prompt_mode = value;
        } else if (key == "finetune.mode") {
            c.finetune.mode = value;
        } else if (key == "finetune.epochs") {
            c.finetune.epochs = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "finetune.lr") {
            c.finetune.lr = parse_double(value, line_no, key);
        } else if (key == "finetune.batch_size") {
            c.finetune.batch_size = parse_num<std::size_t>(value, line_no, key);
        } else if (key == "finetune.seed") {
            c.finetune.seed = parse_num<std::uint64_t>(value, line_no, key);
        } else if (key == "finetune.export_path") {
            c.finetune.export_path = value;
        } else if (key == "ui_dir") {
            c.ui_dir = value;
        } else {
            config_error(line_no, fmt::format("unknown key '{}'", key));
        }
    }
    c.validate();
    return c;
}

AgentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ConfigError, fmt::format("cannot read config {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    auto cfg = parse_config(ss.str());
    // relative paths in the file are relative to the file
    auto base = path.parent_path();
    auto rebase = [&](std::filesystem::path& p) {
        if (!p.empty() && p.is_relative()) p = base / p;
    };
    rebase(cfg.store_dir);
    rebase(cfg.ui_dir);
    rebase(cfg.search.fixture);
    rebase(cfg.finetune.export_path);
    return cfg;
}

void AgentConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
    if (default_backend != kMockBackendId && !backends.contains(default_backend)) {
        fail(fmt::format("default_backend '{}' is not configured", default_backend));
    }
    for (const auto& [id, b] : backends) {
        if (id == kMockBackendId) fail("backend id 'mock' is reserved");
        if (!is_absolute_url(b.base_url)) fail(fmt::format("backend.{}.base_url must be an http(s) URL", id));
        if (b.model.empty()) fail(fmt::format("backend.{}.model is missing", id));
    }
    if (embed.provider != "reference" && embed.provider != "remote") fail("embed.provider must be reference or remote");
    if (embed.provider == "remote" && !is_absolute_url(embed.url)) fail("embed.url must be an http(s) URL");
    if (embed.dim == 0) fail("embed.dim must be >= 1");
    if (search.provider == "http" && search.url_template.find("{query}") == std::string::npos) {
        fail("search.url_template must contain {query}");
    }
    if (search.provider == "fixture" && search.fixture.empty()) fail("search.fixture is missing");
    if (search.provider != "none" && search.provider != "http" && search.provider != "fixture") {
        fail("search.provider must be none, http or fixture");
    }
    if (retrieval.k_per_tier == 0) fail("retrieval.k_per_tier must be >= 1");
    if (retrieval.chunk_tokens == 0 || retrieval.overlap_tokens >= retrieval.chunk_tokens) {
        fail("retrieval.overlap_tokens must be smaller than retrieval.chunk_tokens");
    }
    if (budget_tokens < kMinBudgetTokens) fail(fmt::format("retrieval.budget_tokens must be >= {}", kMinBudgetTokens));
    if (!valid_collection_name(retrieval.store_collection)) fail("store.collection must match [a-z0-9_]+");
    if (prompt_mode != "template" && prompt_mode != "rewrite") fail("prompt.mode must be template or rewrite");
    if (finetune.mode != "linear" && finetune.mode != "sft" && finetune.mode != "both") {
        fail("finetune.mode must be linear, sft or both");
    }
    if (finetune.epochs == 0 || finetune.batch_size == 0) fail("finetune.epochs and batch_size must be >= 1");
    if (!(finetune.lr >= 0.0)) fail("finetune.lr must be >= 0");
    if (listen_port < 0 || listen_port > 65535) fail("listen port out of range");
}

// ---------------------------------------------------------------------------
// Errors and routes
// ---------------------------------------------------------------------------

int http_status_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::SchemaError:
        case ErrorCode::EmptyInput:
        case ErrorCode::EmptyContent:
        case ErrorCode::DimensionMismatch:
            return 400;
        case ErrorCode::UnknownSession:
        case ErrorCode::UnknownResponse:
            return 404;
        case ErrorCode::BackendError:
        case ErrorCode::ProviderError:
        case ErrorCode::NetworkError:
            return 502;
        default:
            return 500;
    }
}

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
    return {status, {{"code", std::string(code)}, {"message", message}}};
}

ApiResponse error_response(const Error& e) {
    return error_response(http_status_for(e.code()), to_string(e.code()), e.what());
}

const std::vector<RouteSpec>& route_table() {
    static const std::vector<RouteSpec> routes = {
        {"POST", "/api/session", RouteAccess::Both},
        {"POST", "/api/query", RouteAccess::Both},
        {"GET", "/api/sources", RouteAccess::Both},
        {"GET", "/api/preferences", RouteAccess::Both},
        {"POST", "/api/preferences", RouteAccess::Both},
        {"POST", "/api/feedback", RouteAccess::Both},
        {"POST", "/api/clear", RouteAccess::Both},
        {"POST", "/api/datasets", RouteAccess::InstitutionalOnly},
        {"POST", "/api/finetune", RouteAccess::InstitutionalOnly},
        {"GET", "/api/finetune/status", RouteAccess::InstitutionalOnly},
        {"GET", "/api/health", RouteAccess::Both},
    };
    return routes;
}

bool route_allowed(const RouteSpec& route, Profile profile) noexcept {
    return route.access == RouteAccess::Both || profile == Profile::Institutional;
}

// ---------------------------------------------------------------------------
// Dataset ingest
// ---------------------------------------------------------------------------

IngestOutcome ingest_jsonl(Store& store, const std::string& collection, std::string_view body) {
    if (!valid_collection_name(collection)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("collection '{}' must match [a-z0-9_]+", collection));
    }
    IngestOutcome out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < body.size()) {
        auto nl = body.find('\n', pos);
        auto line = body.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? body.size() : nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            if (!j.is_object()) throw Error(ErrorCode::SchemaError, "expected an object");
            if (!j.contains("text") || !j["text"].is_string() || trim(j["text"].get<std::string>()).empty()) {
                throw Error(ErrorCode::SchemaError, "missing or empty 'text'");
            }
            if (!j.contains("source_uri") || !j["source_uri"].is_string() ||
                j["source_uri"].get<std::string>().empty()) {
                throw Error(ErrorCode::SchemaError, "missing or empty 'source_uri'");
            }
            SourceRef src;
            src.id = make_id("d");
            src.kind = SourceKind::StoreRecord;
            src.uri = j["source_uri"].get<std::string>();
            if (j.contains("title") && j["title"].is_string()) src.title = j["title"].get<std::string>();
            src.fetched_at = now_utc();
            store.insert(collection, j["text"].get<std::string>(), src, RecordKind::Corpus);
            ++out.inserted;
        } catch (const nlohmann::json::exception& e) {
            out.errors.push_back({line_no, fmt::format("invalid JSON: {}", e.what())});
        } catch (const Error& e) {
            if (e.code() == ErrorCode::StorageError) throw;
            out.errors.push_back({line_no, e.what()});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preferences
// ---------------------------------------------------------------------------

nlohmann::json preferences_to_json(const UserPreferences& p) {
    return {{"preferred_urls", p.preferred_urls}, {"api_endpoints", p.api_endpoints},
            {"local_paths", p.local_paths},       {"web_search_enabled", p.web_search_enabled},
            {"k_web", p.k_web}};
}

UserPreferences preferences_from_json(const nlohmann::json& j, const UserPreferences& defaults) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "preferences must be an object");
    UserPreferences p = defaults;
    auto strings = [&](const char* field, auto&& check) {
        std::vector<std::string> out;
        if (!j.contains(field)) return std::optional<std::vector<std::string>>{};
        const auto& arr = j[field];
        if (!arr.is_array()) throw Error(ErrorCode::InvalidArgument, fmt::format("{} must be an array", field));
        for (std::size_t i = 0; i < arr.size(); ++i) {
            if (!arr[i].is_string()) {
                throw Error(ErrorCode::InvalidArgument, fmt::format("{}[{}]: expected a string", field, i));
            }
            auto v = arr[i].get<std::string>();
            if (auto why = check(v)) {
                throw Error(ErrorCode::InvalidArgument, fmt::format("{}[{}]: '{}' {}", field, i, v, *why));
            }
            out.push_back(std::move(v));
        }
        return std::optional{out};
    };
    auto url_check = [](const std::string& v) -> std::optional<std::string> {
        if (!is_absolute_url(v)) return "is not an absolute http(s) URL";
        return std::nullopt;
    };
    auto path_check = [](const std::string& v) -> std::optional<std::string> {
        if (trim(v).empty()) return "is an empty path";
        if (v.find('\0') != std::string::npos) return "contains a NUL byte";
        return std::nullopt;
    };
    if (auto v = strings("preferred_urls", url_check)) p.preferred_urls = std::move(*v);
    if (auto v = strings("api_endpoints", url_check)) p.api_endpoints = std::move(*v);
    if (auto v = strings("local_paths", path_check)) p.local_paths = std::move(*v);
    if (j.contains("web_search_enabled")) {
        if (!j["web_search_enabled"].is_boolean()) {
            throw Error(ErrorCode::InvalidArgument, "web_search_enabled must be a boolean");
        }
        p.web_search_enabled = j["web_search_enabled"].get<bool>();
    }
    if (j.contains("k_web")) {
        if (!j["k_web"].is_number_unsigned() || j["k_web"].get<std::size_t>() == 0) {
            throw Error(ErrorCode::InvalidArgument, "k_web must be an integer >= 1");
        }
        p.k_web = j["k_web"].get<std::size_t>();
    }
    return p;
}

// ---------------------------------------------------------------------------
// Agent
// ---------------------------------------------------------------------------
namespace {

std::string require_string(const nlohmann::json& body, const char* field) {
    if (!body.is_object() || !body.contains(field) || !body[field].is_string()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("'{}' is required", field));
    }
    return body[field].get<std::string>();
}

std::string optional_string(const nlohmann::json& body, const char* field) {
    if (body.is_object() && body.contains(field) && body[field].is_string()) return body[field].get<std::string>();
    return {};
}

nlohmann::json source_json(const SourceRef& s) {
    nlohmann::json j = {{"id", s.id}, {"kind", std::string(to_string(s.kind))}, {"uri", s.uri}};
    j["title"] = s.title ? nlohmann::json(*s.title) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json report_json(const TrainReport& r) {
    return {{"epoch_losses", r.epoch_losses},
            {"epochs", r.epochs},
            {"batches_per_epoch", r.batches_per_epoch},
            {"lr", r.lr}};
}

}  // namespace

Agent::Agent(AgentConfig config, AgentDeps deps)
    : config_(std::move(config)),
      pages_(std::move(deps.pages)),
      search_(std::move(deps.search)),
      embedder_(std::move(deps.embedder)),
      backends_(std::move(deps.backends)) {
    config_.validate();
    if (!pages_) pages_ = std::make_shared<HttpPageSource>();
    if (!search_) {
        if (config_.search.provider == "http") {
            search_ = std::make_shared<HttpSearchProvider>(config_.search.url_template, config_.search.timeout_ms);
        } else if (config_.search.provider == "fixture") {
            search_ = std::make_shared<FixtureSearchProvider>(config_.search.fixture);
        }
    }
    if (!embedder_) {
        if (config_.embed.provider == "remote") {
            embedder_ = std::make_shared<RemoteEmbedder>(config_.embed.url, config_.embed.dim, config_.embed.timeout_ms,
                                                         static_cast<int>(config_.retrieval.max_in_flight));
        } else {
            embedder_ = std::make_shared<ReferenceEmbedder>(config_.embed.dim);
        }
    }
    for (const auto& [id, b] : config_.backends) {
        if (!backends_.contains(id)) {
            backends_[id] = std::make_shared<HttpChatBackend>(b, config_.backend_timeout_ms);
        }
    }
    generator_ = std::make_unique<Generator>(config_.retrieval.max_in_flight);
    for (const auto& [id, backend] : backends_) {
        auto it = config_.backends.find(id);
        generator_->add_backend(id, backend, it == config_.backends.end() ? id : it->second.model);
    }
    if (!generator_->has_backend(config_.default_backend)) {
        throw Error(ErrorCode::ConfigError, fmt::format("default_backend '{}' is not available", config_.default_backend));
    }

    if (deps.in_memory) {
        store_ = std::make_unique<Store>(Store::in_memory(embedder_));
        sessions_ = std::make_unique<SessionManager>(std::nullopt, config_.default_preferences);
    } else {
        std::error_code ec;
        std::filesystem::create_directories(config_.store_dir, ec);
        if (ec) {
            throw Error(ErrorCode::StorageError,
                        fmt::format("store_dir {} is not writable: {}", config_.store_dir.string(), ec.message()));
        }
        store_ = std::make_unique<Store>(Store::open(config_.store_dir / "vectors", embedder_));
        sessions_ = std::make_unique<SessionManager>(config_.store_dir / "sessions.json", config_.default_preferences);
    }
    retriever_ = std::make_unique<Retriever>(*pages_, search_.get(), embedder_, config_.converters, config_.retrieval);
}

Agent::~Agent() { job_.wait(); }

ApiResponse Agent::create_session() {
    auto id = sessions_->create();
    auto s = sessions_->get(id);
    return {200, {{"session_id", id}, {"preferences", preferences_to_json(s.preferences)}}};
}

ApiResponse Agent::query(const nlohmann::json& body) {
    try {
        if (!body.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
        auto q = optional_string(body, "query");
        if (trim(q).empty()) throw Error(ErrorCode::InvalidArgument, "query is empty");
        auto sid = optional_string(body, "session_id");
        sid = sid.empty() ? sessions_->create() : sessions_->ensure(sid);
        auto backend = optional_string(body, "backend");
        if (backend.empty()) backend = config_.default_backend;
        return run_query(sid, q, backend);
    } catch (const Error& e) {
        return error_response(e);
    }
}

std::string Agent::rewrite_prompt(const std::string& backend, const std::string& draft) {
    auto it = backends_.find(backend);
    if (it == backends_.end()) return {};
    ChatRequest req;
    auto cfg = config_.backends.find(backend);
    req.model = cfg == config_.backends.end() ? backend : cfg->second.model;
    req.messages = {{Role::System,
                     "Rewrite the user's request into a precise prompt for a financial research assistant. "
                     "Keep every source tag. Reply with the rewritten prompt only."},
                    {Role::User, draft}};
    return it->second->reply(req);
}

ApiResponse Agent::run_query(const std::string& sid, const std::string& q, const std::string& backend) {
    auto t0 = std::chrono::steady_clock::now();
    auto lock = sessions_->serialize(sid);
    auto session = sessions_->get(sid);

    const Store* store = config_.retrieval.store_tier_enabled ? store_.get() : nullptr;
    auto gathered = retriever_->gather_context(q, session.preferences, store);
    auto window = pack_context(gathered.items, session.turns, config_.budget_tokens);
    RefinedPrompt refined;
    if (config_.prompt_mode == "rewrite") {
        refined = refine_query_rewrite(q, window.items,
                                       [&](const std::string& draft) { return rewrite_prompt(backend, draft); });
    } else {
        refined = refine_query(q, window.items);
    }
    auto resp = generator_->complete(window, refined, backend, t0);

    // A reply that cites nothing was still grounded in everything we packed.
    if (resp.sources_used.empty()) {
        for (const auto& p : window.items) {
            resp.sources_used.push_back(p.item.source);
            resp.cited_tags.push_back(p.tag);
        }
    }
    store_->record_interaction(config_.retrieval.store_collection, sid, resp);

    std::vector<SessionSource> used;
    nlohmann::json sources = nlohmann::json::array();
    for (std::size_t i = 0; i < resp.sources_used.size(); ++i) {
        const auto* packed = window.find_tag(resp.cited_tags[i]);
        Tier tier = packed ? packed->item.tier : tier_for(resp.sources_used[i].kind);
        used.push_back({resp.sources_used[i], tier});
        auto s = source_json(resp.sources_used[i]);
        s["tag"] = resp.cited_tags[i];
        s["tier"] = static_cast<int>(tier);
        s["tier_name"] = std::string(to_string(tier));
        sources.push_back(std::move(s));
    }
    sessions_->append_turn(sid, Turn{q, resp.text}, resp.response_id, used);
    resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json diagnostics = gathered.diagnostics;
    for (const auto& d : resp.diagnostics) diagnostics.push_back(d);
    return {200,
            {{"session_id", sid},
             {"response_id", resp.response_id},
             {"text", resp.text},
             {"sources", sources},
             {"latency_ms", resp.latency_ms},
             {"backend", resp.backend_id},
             {"refined_prompt", refined.refined},
             {"diagnostics", diagnostics}}};
}

ApiResponse Agent::sources(const std::string& session_id) {
    try {
        if (session_id.empty()) throw Error(ErrorCode::InvalidArgument, "'session' is required");
        auto s = sessions_->get(session_id);
        nlohmann::json list = nlohmann::json::array();
        for (const auto& src : s.sources) {
            auto j = source_json(src.source);
            j["tier"] = static_cast<int>(src.tier);
            j["tier_name"] = std::string(to_string(src.tier));
            list.push_back(std::move(j));
        }
        return {200, {{"session_id", session_id}, {"sources", list}, {"turns", s.turns.size()}}};
    } catch (const Error& e) {
        return error_response(e);
    }
}

ApiResponse Agent::get_preferences(const std::string& session_id) {
    try {
        if (session_id.empty()) throw Error(ErrorCode::InvalidArgument, "'session' is required");
        auto s = sessions_->get(session_id);
        return {200, {{"session_id", session_id}, {"preferences", preferences_to_json(s.preferences)}}};
    } catch (const Error& e) {
        return error_response(e);
    }
}

ApiResponse Agent::set_preferences(const nlohmann::json& body) {
    try {
        auto sid = require_string(body, "session_id");
        if (!body.contains("preferences")) throw Error(ErrorCode::InvalidArgument, "'preferences' is required");
        auto current = sessions_->get(sid).preferences;
        // parse fully before touching the session so a bad entry changes nothing
        auto prefs = preferences_from_json(body["preferences"], current);
        sessions_->set_preferences(sid, prefs);
        return {200, {{"session_id", sid}, {"preferences", preferences_to_json(prefs)}}};
    } catch (const Error& e) {
        return error_response(e);
    }
}

ApiResponse Agent::feedback(const nlohmann::json& body) {
    try {
        auto sid = require_string(body, "session_id");
        Feedback fb;
        fb.response_id = require_string(body, "response_id");
        if (!body.contains("rating") || !body["rating"].is_number_integer()) {
            throw Error(ErrorCode::InvalidArgument, "'rating' must be -1, 0 or 1");
        }
        fb.rating = body["rating"].get<int>();
        if (fb.rating < -1 || fb.rating > 1) throw Error(ErrorCode::InvalidArgument, "'rating' must be -1, 0 or 1");
        if (auto c = optional_string(body, "comment"); !c.empty()) fb.comment = c;
        if (!sessions_->owns_response(sid, fb.response_id)) {
            throw Error(ErrorCode::UnknownResponse,
                        fmt::format("response '{}' does not belong to session '{}'", fb.response_id, sid));
        }
        auto id = store_->record_feedback(config_.retrieval.store_collection, sid, fb);
        return {200, {{"recorded", true}, {"record_id", id}}};
    } catch (const Error& e) {
        return error_response(e);
    }
}

ApiResponse Agent::clear(const nlohmann::json& body) {
    try {
        auto sid = require_string(body, "session_id");
        auto s = sessions_->clear(sid);
        return {200,
                {{"session_id", sid},
                 {"turns", s.turns.size()},
                 {"sources", nlohmann::json::array()},
                 {"preferences", preferences_to_json(s.preferences)}}};
    } catch (const Error& e) {
        return error_response(e);
    }
}

ApiResponse Agent::ingest_dataset(const std::string& collection, std::string_view body) {
    try {
        auto coll = collection.empty() ? config_.retrieval.store_collection : collection;
        auto before = store_->size(coll);
        auto outcome = ingest_jsonl(*store_, coll, body);
        nlohmann::json errors = nlohmann::json::array();
        for (const auto& e : outcome.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
        nlohmann::json out = {{"collection", coll},
                              {"inserted", outcome.inserted},
                              {"errors", errors},
                              {"count", store_->size(coll)},
                              {"previous_count", before}};
        // nothing usable at all is a bad request; partial success is reported inline
        int status = outcome.inserted == 0 ? 400 : 200;
        if (status == 400) {
            out["code"] = "SchemaError";
            out["message"] = outcome.errors.empty() ? "empty dataset" : "no line could be ingested";
        }
        return {status, out};
    } catch (const Error& e) {
        return error_response(e);
    }
}

ApiResponse Agent::finetune_start(const nlohmann::json& body) {
    auto mode = optional_string(body, "mode");
    if (mode.empty()) mode = config_.finetune.mode;
    if (mode != "linear" && mode != "sft" && mode != "both") {
        return error_response(400, "InvalidArgument", "mode must be linear, sft or both");
    }
    auto ft = config_.finetune;
    if (body.is_object()) {
        if (body.contains("epochs") && body["epochs"].is_number_unsigned()) ft.epochs = body["epochs"].get<std::size_t>();
        if (body.contains("lr") && body["lr"].is_number()) ft.lr = body["lr"].get<double>();
        if (ft.epochs == 0 || !(ft.lr >= 0.0)) return error_response(400, "InvalidArgument", "bad epochs or lr");
    }
    auto collection = config_.retrieval.store_collection;
    auto export_path = ft.export_path.empty() ? config_.store_dir / "sft.jsonl" : ft.export_path;
    Store* store = store_.get();
    bool started = job_.start([=](const ProgressFn& progress) {
        JobResult result;
        if (mode == "linear" || mode == "both") {
            auto batches = build_batches(*store, collection, ft.batch_size, ft.seed);
            LinearModel model(batches.front().inputs.front().size());
            result.report = train(model, batches, ft.epochs, ft.lr, [&](std::size_t epoch, double) {
                progress(static_cast<double>(epoch + 1) / static_cast<double>(ft.epochs));
            });
        }
        if (mode == "sft" || mode == "both") result.exported = export_sft(*store, collection, export_path);
        return result;
    });
    if (!started) return error_response(409, "JobRunning", "a fine-tune job is already running");
    return {202, {{"state", "running"}, {"mode", mode}}};
}

ApiResponse Agent::finetune_status() const {
    auto st = job_.status();
    nlohmann::json j = {{"state", std::string(to_string(st.state))}, {"progress", st.progress}};
    if (st.report) j["report"] = report_json(*st.report);
    if (st.exported) j["exported"] = *st.exported;
    if (st.state == JobState::Failed) j["reason"] = st.reason;
    return {200, j};
}

ApiResponse Agent::health() const {
    nlohmann::json collections = nlohmann::json::object();
    for (const auto& c : store_->collections()) collections[c] = store_->size(c);
    return {200,
            {{"status", "ok"},
             {"profile", std::string(to_string(config_.profile))},
             {"default_backend", config_.default_backend},
             {"backends", generator_->backend_ids()},
             {"embedder", embedder_->name()},
             {"store_records", store_->size()},
             {"collections", collections},
             {"web_search", search_ != nullptr}}};
}

ApiResponse Agent::dispatch(std::string_view method, std::string_view path,
                            const std::map<std::string, std::string>& params, std::string_view raw_body) {
    const RouteSpec* route = nullptr;
    bool path_known = false;
    for (const auto& r : route_table()) {
        if (r.path != path) continue;
        path_known = true;
        if (r.method == method) route = &r;
    }
    if (!route) {
        return path_known ? error_response(405, "MethodNotAllowed", fmt::format("{} not allowed on {}", method, path))
                          : error_response(404, "NotFound", fmt::format("no route {}", path));
    }
    if (!route_allowed(*route, config_.profile)) {
        return error_response(403, "Forbidden",
                              fmt::format("{} is not available under the {} profile", path, to_string(config_.profile)));
    }
    auto param = [&](const char* k) {
        auto it = params.find(k);
        return it == params.end() ? std::string() : it->second;
    };

    if (path == "/api/datasets") return ingest_dataset(param("collection"), raw_body);

    nlohmann::json body = nlohmann::json::object();
    if (method == "POST" && !trim(raw_body).empty()) {
        try {
            body = nlohmann::json::parse(raw_body);
        } catch (const nlohmann::json::exception& e) {
            return error_response(400, "InvalidArgument", fmt::format("malformed JSON body: {}", e.what()));
        }
    }
    try {
        if (path == "/api/session") return create_session();
        if (path == "/api/query") return query(body);
        if (path == "/api/sources") return sources(param("session"));
        if (path == "/api/preferences") {
            return method == "GET" ? get_preferences(param("session")) : set_preferences(body);
        }
        if (path == "/api/feedback") return feedback(body);
        if (path == "/api/clear") return clear(body);
        if (path == "/api/finetune") return finetune_start(body);
        if (path == "/api/finetune/status") return finetune_status();
        if (path == "/api/health") return health();
    } catch (const Error& e) {
        return error_response(e);
    } catch (const std::exception& e) {
        return error_response(500, "InternalError", e.what());
    }
    return error_response(404, "NotFound", fmt::format("no route {}", path));
}

}  // namespace finagent
