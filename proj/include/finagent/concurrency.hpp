#pragma once

#include <cstddef>
#include <exception>
#include <future>
#include <semaphore>
#include <vector>

namespace finagent {

using InFlightLimit = std::counting_semaphore<64>;

class InFlightGuard {
public:
    explicit InFlightGuard(InFlightLimit& sem) : sem_(sem) { sem_.acquire(); }
    ~InFlightGuard() { sem_.release(); }
    InFlightGuard(const InFlightGuard&) = delete;
    InFlightGuard& operator=(const InFlightGuard&) = delete;

private:
    InFlightLimit& sem_;
};

/// Runs fn(i) for i in [0, n) with at most `bound` calls in flight and returns
/// the results in index order. fn must not throw; wrap failures in the result.
template <class Fn>
auto bounded_parallel_map(std::size_t n, std::size_t bound, Fn fn) {
    using R = decltype(fn(std::size_t{0}));
    std::vector<R> results;
    results.reserve(n);
    if (bound <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) results.push_back(fn(i));
        return results;
    }
    InFlightLimit sem(static_cast<std::ptrdiff_t>(bound));
    std::vector<std::future<R>> futures;
    futures.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        sem.acquire();
        futures.push_back(std::async(std::launch::async, [&sem, &fn, i] {
            struct Release {
                InFlightLimit& s;
                ~Release() { s.release(); }
            } release{sem};
            return fn(i);
        }));
    }
    for (auto& f : futures) results.push_back(f.get());
    return results;
}

}  // namespace finagent
