#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "finagent/evalharness.hpp"
#include "finagent/service.hpp"
#include "finagent/text.hpp"

namespace {

finagent::HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw finagent::Error(finagent::ErrorCode::FileNotFound, fmt::format("cannot read {}", path));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!finagent::trim(line).empty()) out.push_back(line);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Local financial search agent"};
    app.require_subcommand(1);

    std::string config_path;
    std::string listen;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
    serve->add_option("--listen", listen, "host:port, overrides the config");

    std::string collection;
    std::string data_file;
    std::string store_dir;
    auto* ingest = app.add_subcommand("ingest", "Insert line-delimited {text, source_uri} records into the store");
    ingest->add_option("--collection", collection, "target collection")->required();
    ingest->add_option("--file", data_file, "JSONL file")->required()->check(CLI::ExistingFile);
    ingest->add_option("--config", config_path, "config file (store_dir and embedder)")->check(CLI::ExistingFile);
    ingest->add_option("--store", store_dir, "store directory, overrides the config");

    auto* eval = app.add_subcommand("eval", "Evaluation harness");
    eval->require_subcommand(1);
    std::string dataset;
    std::string endpoint = "http://127.0.0.1:8080";
    std::string out_dir = "eval-out";
    int timeout_ms = 120000;
    auto* run = eval->add_subcommand("run", "Grade a dataset against a running agent");
    run->add_option("--dataset", dataset, "JSONL eval items")->required()->check(CLI::ExistingFile);
    run->add_option("--endpoint", endpoint, "agent base URL");
    run->add_option("--out", out_dir, "report directory");
    run->add_option("--timeout-ms", timeout_ms, "per-request timeout");

    std::string queries_file;
    auto* latency = eval->add_subcommand("latency", "Mean and sample std of query latency");
    latency->add_option("--endpoint", endpoint, "agent base URL");
    latency->add_option("--queries", queries_file, "one query per line")->required()->check(CLI::ExistingFile);
    latency->add_option("--timeout-ms", timeout_ms, "per-request timeout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) {
            auto cfg = finagent::load_config(config_path);
            if (!listen.empty()) {
                auto colon = listen.rfind(':');
                if (colon == std::string::npos) throw CLI::ValidationError("--listen", "expected host:port");
                cfg.listen_host = listen.substr(0, colon);
                cfg.listen_port = std::stoi(listen.substr(colon + 1));
            }
            finagent::Agent agent(cfg);
            const auto& rec = agent.store().recovery();
            if (rec.truncated) std::cerr << "store recovery: " << rec.message << "\n";
            finagent::HttpServer server(agent);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << fmt::format("serving {} profile on http://{}:{} ({} records)\n",
                                     finagent::to_string(cfg.profile), cfg.listen_host, cfg.listen_port,
                                     agent.store().size());
            server.run(cfg.listen_host, cfg.listen_port);
            g_server = nullptr;
            return 0;
        }
        if (*ingest) {
            finagent::AgentConfig cfg;
            if (!config_path.empty()) cfg = finagent::load_config(config_path);
            if (!store_dir.empty()) cfg.store_dir = store_dir;
            std::shared_ptr<const finagent::EmbeddingProvider> embedder;
            if (cfg.embed.provider == "remote") {
                embedder = std::make_shared<finagent::RemoteEmbedder>(cfg.embed.url, cfg.embed.dim, cfg.embed.timeout_ms);
            } else {
                embedder = std::make_shared<finagent::ReferenceEmbedder>(cfg.embed.dim);
            }
            auto store = finagent::Store::open(cfg.store_dir / "vectors", embedder);
            std::ifstream in(data_file, std::ios::binary);
            std::stringstream body;
            body << in.rdbuf();
            auto outcome = finagent::ingest_jsonl(store, collection, body.str());
            for (const auto& e : outcome.errors) std::cerr << fmt::format("line {}: {}\n", e.line, e.message);
            std::cout << fmt::format("inserted {} records into '{}' ({} errors, {} total)\n", outcome.inserted,
                                     collection, outcome.errors.size(), store.size(collection));
            return outcome.errors.empty() ? 0 : 2;
        }
        if (*run) {
            finagent::eval::HttpQueryAgent agent(endpoint, timeout_ms);
            auto report = finagent::eval::run_eval(dataset, agent, out_dir);
            if (!report.grades.empty()) std::cout << finagent::eval::summary_table(report.accuracy);
            std::cout << fmt::format("reports written to {}\n", out_dir);
            return 0;
        }
        if (*latency) {
            finagent::eval::HttpQueryAgent agent(endpoint, timeout_ms);
            try {
                auto stats = finagent::eval::measure_latency(agent, read_lines(queries_file));
                std::cout << fmt::format("n={} mean={:.3f} ms std={:.3f} ms\n", stats.n, stats.mean_ms, stats.std_ms);
            } catch (const finagent::eval::LatencyAborted& e) {
                std::cerr << e.what() << "\n";
                for (std::size_t i = 0; i < e.partial().size(); ++i) {
                    std::cerr << fmt::format("  query {}: {:.3f} ms\n", i, e.partial()[i]);
                }
                return 1;
            }
            return 0;
        }
    } catch (const finagent::Error& e) {
        std::cerr << fmt::format("error [{}]: {}\n", finagent::to_string(e.code()), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
