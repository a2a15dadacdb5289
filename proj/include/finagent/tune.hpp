#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "finagent/error.hpp"
#include "finagent/vecstore.hpp"

namespace finagent {

struct TrainBatch {
    std::vector<std::vector<double>> inputs;
    std::vector<double> targets;
    std::vector<std::uint64_t> record_ids;  // empty for synthetic data

    std::size_t size() const noexcept { return inputs.size(); }
};

struct TrainReport {
    std::vector<double> epoch_losses;
    std::size_t batches_per_epoch = 0;
    double lr = 0.0;
    std::size_t epochs = 0;

    friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

/// A differentiable model the training loop can drive.
class TrainableModel {
public:
    virtual ~TrainableModel() = default;
    virtual std::vector<double> forward(const TrainBatch& batch) const = 0;
    /// Non-negative scalar.
    virtual double loss(const std::vector<double>& predictions, const std::vector<double>& targets) const = 0;
    /// d loss / d parameters, same length as parameters().
    virtual std::vector<double> gradients(const TrainBatch& batch, const std::vector<double>& predictions) const = 0;
    /// parameters -= lr * gradients
    virtual void apply(const std::vector<double>& gradients, double lr) = 0;
    virtual std::vector<double> parameters() const = 0;
    virtual void set_parameters(const std::vector<double>& params) = 0;
};

/// y = w.x + b under mean squared error. Parameters are laid out as
/// [w_0 .. w_{d-1}, b].
class LinearModel final : public TrainableModel {
public:
    explicit LinearModel(std::size_t input_dim);

    std::vector<double> forward(const TrainBatch& batch) const override;
    double loss(const std::vector<double>& predictions, const std::vector<double>& targets) const override;
    std::vector<double> gradients(const TrainBatch& batch, const std::vector<double>& predictions) const override;
    void apply(const std::vector<double>& gradients, double lr) override;
    std::vector<double> parameters() const override { return params_; }
    void set_parameters(const std::vector<double>& params) override;

    std::size_t input_dim() const noexcept { return params_.size() - 1; }

private:
    std::vector<double> params_;
};

/// Thrown when a batch loss stops being finite; carries the epochs completed.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& message, TrainReport partial)
        : Error(ErrorCode::NonFiniteLoss, message), partial_(std::move(partial)) {}
    const TrainReport& partial() const noexcept { return partial_; }

private:
    TrainReport partial_;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// For each epoch and each batch: forward, loss, gradients, apply(lr).
/// An epoch's loss is the mean of its batch losses (measured before each
/// batch's update).
TrainReport train(TrainableModel& model, const std::vector<TrainBatch>& batches, std::size_t epochs, double lr,
                  const EpochCallback& on_epoch = {});

/// Training examples from a store collection, shuffled by seed and cut into
/// batches of at most batch_size.
///
/// Feedback records rated -1 are dropped along with the responses they rate.
/// Inputs are the stored vectors; targets are 1 for corpus records, the
/// linked rating (0 if none) for responses, and the rating for feedback.
std::vector<TrainBatch> build_batches(const Store& store, const std::string& collection, std::size_t batch_size,
                                      std::uint64_t shuffle_seed);

/// Writes one `{"prompt", "completion", "rating"}` object per response record.
/// `rating` is omitted for responses without feedback. Returns the line count.
std::size_t export_sft(const Store& store, const std::string& collection, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Background job
// ---------------------------------------------------------------------------

enum class JobState { Idle, Running, Done, Failed };

std::string_view to_string(JobState s) noexcept;

struct JobStatus {
    JobState state = JobState::Idle;
    double progress = 0.0;  // 0..1 while running
    std::optional<TrainReport> report;
    std::optional<std::size_t> exported;  // SFT lines when the job exported
    std::string reason;                   // failure message
};

struct JobResult {
    std::optional<TrainReport> report;
    std::optional<std::size_t> exported;
};

using ProgressFn = std::function<void(double)>;

/// At most one job at a time; status can be polled from any thread.
class TrainingJob {
public:
    TrainingJob() = default;
    ~TrainingJob();
    TrainingJob(const TrainingJob&) = delete;
    TrainingJob& operator=(const TrainingJob&) = delete;

    /// False (and nothing started) when a job is already running.
    bool start(std::function<JobResult(const ProgressFn&)> work);
    JobStatus status() const;
    /// Blocks until the current job (if any) finishes.
    void wait();

private:
    mutable std::mutex mu_;
    JobStatus status_;
    std::thread worker_;
};

}  // namespace finagent
