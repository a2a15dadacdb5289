#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "finagent/embed.hpp"
#include "finagent/generate.hpp"
#include "finagent/ingest.hpp"
#include "finagent/prompt.hpp"
#include "finagent/retrieve.hpp"
#include "finagent/tune.hpp"
#include "finagent/vecstore.hpp"

namespace finagent {

enum class Profile { Individual, Institutional };

std::string_view to_string(Profile p) noexcept;

struct EmbedConfig {
    std::string provider = "reference";  // reference | remote
    std::string url;
    std::size_t dim = ReferenceEmbedder::kDefaultDim;
    int timeout_ms = 10000;
};

struct SearchConfig {
    std::string provider = "none";  // none | http | fixture
    std::string url_template;
    std::filesystem::path fixture;
    int timeout_ms = 10000;
};

struct FinetuneConfig {
    std::string mode = "linear";  // linear | sft | both
    std::size_t epochs = 20;
    double lr = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 7;
    std::filesystem::path export_path;  // default <store_dir>/sft.jsonl
};

struct AgentConfig {
    Profile profile = Profile::Individual;
    std::filesystem::path store_dir = "agent-data";
    std::string listen_host = "127.0.0.1";
    int listen_port = 8080;
    std::string default_backend = std::string(kMockBackendId);
    std::map<std::string, BackendConfig> backends;  // "mock" is always available
    int backend_timeout_ms = 60000;
    EmbedConfig embed;
    SearchConfig search;
    RetrievalConfig retrieval;
    std::size_t budget_tokens = kDefaultBudgetTokens;
    UserPreferences default_preferences;
    ConverterMap converters;
    std::string prompt_mode = "template";  // template | rewrite
    FinetuneConfig finetune;
    std::filesystem::path ui_dir;  // static assets served under "/"
    std::size_t server_threads = 8;

    /// Throws Error{ConfigError} when the combination makes no sense.
    void validate() const;
};

/// `key = value` lines; `#` starts a comment; values may be double-quoted.
/// Keys are dotted, e.g. `backend.gpt.base_url`. Lists are comma-separated.
AgentConfig parse_config(std::string_view text);
AgentConfig load_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Transport-independent request handling
// ---------------------------------------------------------------------------

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

/// `{code, message}` with the HTTP status that matches the error code.
ApiResponse error_response(const Error& e);
ApiResponse error_response(int status, std::string_view code, const std::string& message);
int http_status_for(ErrorCode code) noexcept;

enum class RouteAccess { Both, InstitutionalOnly };

struct RouteSpec {
    std::string_view method;
    std::string_view path;
    RouteAccess access;
};

/// Every API route the service answers.
const std::vector<RouteSpec>& route_table();
bool route_allowed(const RouteSpec& route, Profile profile) noexcept;

struct IngestError {
    std::size_t line = 0;
    std::string message;
};

struct IngestOutcome {
    std::size_t inserted = 0;
    std::vector<IngestError> errors;
};

/// Line-delimited `{"text": str, "source_uri": str, "title"?: str}` records,
/// each inserted as a corpus record. Bad lines are reported, not fatal.
IngestOutcome ingest_jsonl(Store& store, const std::string& collection, std::string_view body);

/// Swappable collaborators, mostly for tests. Anything left empty is built
/// from the config.
struct AgentDeps {
    std::shared_ptr<PageSource> pages;
    std::shared_ptr<SearchProvider> search;
    std::shared_ptr<const EmbeddingProvider> embedder;
    std::map<std::string, std::shared_ptr<ChatBackend>> backends;
    bool in_memory = false;  // keep the store and sessions off disk
};

/// The agent behind the HTTP routes. Each handler takes the parsed request
/// and returns status + JSON; the HTTP layer only moves bytes.
class Agent {
public:
    explicit Agent(AgentConfig config, AgentDeps deps = {});
    ~Agent();
    Agent(const Agent&) = delete;
    Agent& operator=(const Agent&) = delete;

    ApiResponse create_session();
    /// {session_id?, query, backend?} -> QueryResult
    ApiResponse query(const nlohmann::json& body);
    ApiResponse sources(const std::string& session_id);
    ApiResponse get_preferences(const std::string& session_id);
    /// {session_id, preferences: {...}}
    ApiResponse set_preferences(const nlohmann::json& body);
    /// {session_id, response_id, rating, comment?}
    ApiResponse feedback(const nlohmann::json& body);
    ApiResponse clear(const nlohmann::json& body);
    ApiResponse ingest_dataset(const std::string& collection, std::string_view body);
    ApiResponse finetune_start(const nlohmann::json& body);
    ApiResponse finetune_status() const;
    ApiResponse health() const;

    /// Dispatch by method and path, applying the profile gate. `query_params`
    /// holds URL query parameters; `raw_body` is the request body.
    ApiResponse dispatch(std::string_view method, std::string_view path,
                         const std::map<std::string, std::string>& query_params, std::string_view raw_body);

    const AgentConfig& config() const noexcept { return config_; }
    Store& store() noexcept { return *store_; }
    SessionManager& sessions() noexcept { return *sessions_; }
    Generator& generator() noexcept { return *generator_; }
    TrainingJob& job() noexcept { return job_; }

private:
    ApiResponse run_query(const std::string& session_id, const std::string& query, const std::string& backend);
    std::string rewrite_prompt(const std::string& backend, const std::string& draft);

    AgentConfig config_;
    std::shared_ptr<PageSource> pages_;
    std::shared_ptr<SearchProvider> search_;
    std::shared_ptr<const EmbeddingProvider> embedder_;
    std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
    std::unique_ptr<Store> store_;
    std::unique_ptr<SessionManager> sessions_;
    std::unique_ptr<Generator> generator_;
    std::unique_ptr<Retriever> retriever_;
    TrainingJob job_;
};

nlohmann::json preferences_to_json(const UserPreferences& p);
/// Throws Error{InvalidArgument} naming the offending entry, e.g.
/// "preferred_urls[0]: 'ht!tp:/x' is not an absolute http(s) URL".
UserPreferences preferences_from_json(const nlohmann::json& j, const UserPreferences& defaults);

// ---------------------------------------------------------------------------
// HTTP server
// ---------------------------------------------------------------------------

class HttpServer {
public:
    explicit HttpServer(Agent& agent);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds (port 0 picks a free one) and serves on a background thread.
    /// Returns the bound port.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();
    int port() const noexcept { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace finagent
