#include "finagent/tune.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

namespace finagent {

// ---------------------------------------------------------------------------
// LinearModel
// ---------------------------------------------------------------------------

LinearModel::LinearModel(std::size_t input_dim) : params_(input_dim + 1, 0.0) {
    if (input_dim == 0) throw Error(ErrorCode::InvalidArgument, "linear model needs input_dim >= 1");
}

void LinearModel::set_parameters(const std::vector<double>& params) {
    if (params.size() != params_.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("expected {} parameters, got {}", params_.size(), params.size()));
    }
    params_ = params;
}

std::vector<double> LinearModel::forward(const TrainBatch& batch) const {
    const auto d = input_dim();
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& x : batch.inputs) {
        if (x.size() != d) {
            throw Error(ErrorCode::DimensionMismatch, fmt::format("input has dim {}, model expects {}", x.size(), d));
        }
        double y = params_[d];
        for (std::size_t i = 0; i < d; ++i) y += params_[i] * x[i];
        out.push_back(y);
    }
    return out;
}

double LinearModel::loss(const std::vector<double>& predictions, const std::vector<double>& targets) const {
    if (predictions.size() != targets.size() || predictions.empty()) {
        throw Error(ErrorCode::InvalidArgument, "predictions and targets must be non-empty and equal length");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double r = predictions[i] - targets[i];
        s += r * r;
    }
    return s / static_cast<double>(predictions.size());
}

std::vector<double> LinearModel::gradients(const TrainBatch& batch, const std::vector<double>& predictions) const {
    const auto d = input_dim();
    const auto n = static_cast<double>(batch.size());
    std::vector<double> g(d + 1, 0.0);
    for (std::size_t k = 0; k < batch.size(); ++k) {
        double r = 2.0 * (predictions[k] - batch.targets[k]) / n;
        for (std::size_t i = 0; i < d; ++i) g[i] += r * batch.inputs[k][i];
        g[d] += r;
    }
    return g;
}

void LinearModel::apply(const std::vector<double>& gradients, double lr) {
    if (gradients.size() != params_.size()) {
        throw Error(ErrorCode::DimensionMismatch, "gradient shape does not match parameters");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= lr * gradients[i];
}

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

TrainReport train(TrainableModel& model, const std::vector<TrainBatch>& batches, std::size_t epochs, double lr,
                  const EpochCallback& on_epoch) {
    if (epochs == 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::InvalidArgument, "lr must be finite and >= 0");
    if (batches.empty()) throw Error(ErrorCode::EmptyInput, "no training batches");
    for (const auto& b : batches) {
        if (b.size() == 0 || b.targets.size() != b.size()) {
            throw Error(ErrorCode::InvalidArgument, "every batch needs matching, non-empty inputs and targets");
        }
    }

    TrainReport report;
    report.batches_per_epoch = batches.size();
    report.lr = lr;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        double total = 0.0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& batch = batches[bi];
            auto pred = model.forward(batch);
            double l = model.loss(pred, batch.targets);
            if (!std::isfinite(l)) {
                report.epochs = report.epoch_losses.size();
                throw TrainingDiverged(
                    fmt::format("loss became non-finite at epoch {}, batch {} (lr {})", epoch, bi, lr), report);
            }
            total += l;
            model.apply(model.gradients(batch, pred), lr);
        }
        double mean = total / static_cast<double>(batches.size());
        report.epoch_losses.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    report.epochs = epochs;
    return report;
}

// ---------------------------------------------------------------------------
// Store-backed data
// ---------------------------------------------------------------------------
namespace {

// uri -> rating of the most recent feedback for that interaction
std::map<std::string, int> latest_ratings(const std::vector<EmbeddingRecord>& records) {
    std::map<std::string, int> out;
    for (const auto& r : records) {
        if (r.record_kind != RecordKind::Feedback) continue;
        if (auto rating = parse_feedback_rating(r.payload_text)) out[r.source.uri] = *rating;
    }
    return out;
}

}  // namespace

std::vector<TrainBatch> build_batches(const Store& store, const std::string& collection, std::size_t batch_size,
                                      std::uint64_t shuffle_seed) {
    if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    auto records = store.records(collection);
    if (records.empty()) {
        throw Error(ErrorCode::EmptyCollection, fmt::format("collection '{}' has no records", collection));
    }
    auto ratings = latest_ratings(records);

    struct Example {
        std::uint64_t id;
        const std::vector<double>* input;
        double target;
    };
    std::vector<Example> examples;
    for (const auto& r : records) {
        double target = 1.0;
        if (r.record_kind == RecordKind::Feedback) {
            auto rating = parse_feedback_rating(r.payload_text).value_or(0);
            if (rating == -1) continue;
            target = rating;
        } else if (r.record_kind == RecordKind::Response) {
            auto it = ratings.find(r.source.uri);
            if (it != ratings.end() && it->second == -1) continue;
            target = it == ratings.end() ? 0.0 : it->second;
        }
        examples.push_back({r.id, &r.vector.values, target});
    }
    if (examples.empty()) {
        throw Error(ErrorCode::EmptyCollection,
                    fmt::format("collection '{}' has no records left after filtering", collection));
    }

    // Fisher-Yates with mt19937_64, whose output sequence is fixed by the standard
    std::mt19937_64 rng(shuffle_seed);
    for (std::size_t i = examples.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(rng() % i);
        std::swap(examples[i - 1], examples[j]);
    }

    std::vector<TrainBatch> batches;
    for (std::size_t start = 0; start < examples.size(); start += batch_size) {
        TrainBatch b;
        for (std::size_t i = start; i < std::min(start + batch_size, examples.size()); ++i) {
            b.inputs.push_back(*examples[i].input);
            b.targets.push_back(examples[i].target);
            b.record_ids.push_back(examples[i].id);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

std::size_t export_sft(const Store& store, const std::string& collection, const std::filesystem::path& path) {
    auto records = store.records(collection);
    auto ratings = latest_ratings(records);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::StorageError, fmt::format("cannot write {}", path.string()));
    std::size_t lines = 0;
    for (const auto& r : records) {
        if (r.record_kind != RecordKind::Response) continue;
        nlohmann::json line;
        line["prompt"] = r.source.title.value_or(r.payload_text);
        line["completion"] = r.payload_text;
        if (auto it = ratings.find(r.source.uri); it != ratings.end()) line["rating"] = it->second;
        out << line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
        ++lines;
    }
    out.flush();
    if (!out) throw Error(ErrorCode::StorageError, fmt::format("write to {} failed", path.string()));
    return lines;
}

// ---------------------------------------------------------------------------
// Job
// ---------------------------------------------------------------------------

std::string_view to_string(JobState s) noexcept {
    switch (s) {
        case JobState::Idle: return "idle";
        case JobState::Running: return "running";
        case JobState::Done: return "done";
        case JobState::Failed: return "failed";
    }
    return "idle";
}

TrainingJob::~TrainingJob() { wait(); }

bool TrainingJob::start(std::function<JobResult(const ProgressFn&)> work) {
    std::lock_guard lock(mu_);
    if (status_.state == JobState::Running) return false;
    if (worker_.joinable()) worker_.join();
    status_ = JobStatus{};
    status_.state = JobState::Running;
    worker_ = std::thread([this, work = std::move(work)] {
        ProgressFn progress = [this](double p) {
            std::lock_guard l(mu_);
            status_.progress = std::clamp(p, 0.0, 1.0);
        };
        JobStatus final_status;
        try {
            auto result = work(progress);
            final_status.state = JobState::Done;
            final_status.progress = 1.0;
            final_status.report = std::move(result.report);
            final_status.exported = result.exported;
        } catch (const TrainingDiverged& e) {
            final_status.state = JobState::Failed;
            final_status.report = e.partial();
            final_status.reason = e.what();
        } catch (const std::exception& e) {
            final_status.state = JobState::Failed;
            final_status.reason = e.what();
        }
        std::lock_guard l(mu_);
        status_ = std::move(final_status);
    });
    return true;
}

JobStatus TrainingJob::status() const {
    std::lock_guard lock(mu_);
    return status_;
}

void TrainingJob::wait() {
    std::thread t;
    {
        std::lock_guard lock(mu_);
        if (!worker_.joinable()) return;
        t = std::move(worker_);
    }
    t.join();
}

}  // namespace finagent
