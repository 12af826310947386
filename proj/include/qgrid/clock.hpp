#ifndef QGRID_CLOCK_HPP
#define QGRID_CLOCK_HPP

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <queue>
#include <set>
#include <thread>
#include <utility>
#include <vector>

namespace qgrid {

// Source of message timestamps (milliseconds since an epoch). The simulated
// clock uses a virtual epoch starting at zero; the wall clock uses Unix time.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() const = 0;
};

class SystemClock : public Clock {
public:
    std::int64_t now_ms() const override {
        using namespace std::chrono;
        return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
    }
};

// Adds a fixed skew to a base clock; used to exercise the freshness window.
class OffsetClock : public Clock {
public:
    OffsetClock(const Clock& base, std::int64_t offset_ms) : base_(base), offset_ms_(offset_ms) {}
    std::int64_t now_ms() const override { return base_.now_ms() + offset_ms_; }

private:
    const Clock& base_;
    std::int64_t offset_ms_;
};

using TimerId = std::uint64_t;

// Single-owner execution context: every callback runs serialized on the
// scheduler, so protocol state machines need no locking of their own.
class Scheduler {
public:
    virtual ~Scheduler() = default;
    virtual std::int64_t now_ms() const = 0;
    virtual TimerId call_at(std::int64_t when_ms, std::function<void()> fn) = 0;
    virtual void cancel(TimerId id) = 0;

    TimerId call_after(std::int64_t delay_ms, std::function<void()> fn) {
        return call_at(now_ms() + delay_ms, std::move(fn));
    }

    void post(std::function<void()> fn) { call_at(now_ms(), std::move(fn)); }
};

// Deterministic virtual-time scheduler. Events at equal timestamps run in
// submission order. Not thread-safe: one thread owns the simulation.
class SimScheduler : public Scheduler, public Clock {
public:
    std::int64_t now_ms() const override { return now_; }

    TimerId call_at(std::int64_t when_ms, std::function<void()> fn) override {
        TimerId id = ++next_id_;
        if (when_ms < now_) when_ms = now_;
        queue_.emplace(Entry{when_ms, next_seq_++, id, std::move(fn)});
        return id;
    }

    void cancel(TimerId id) override { cancelled_.insert(id); }

    // Runs every event with timestamp <= until_ms, then advances time to until_ms.
    void run_until(std::int64_t until_ms) {
        while (!queue_.empty() && queue_.top().when <= until_ms) {
            Entry e = queue_.top();
            queue_.pop();
            now_ = e.when;
            if (auto it = cancelled_.find(e.id); it != cancelled_.end()) {
                cancelled_.erase(it);
                continue;
            }
            e.fn();
        }
        if (until_ms > now_) now_ = until_ms;
    }

    void run_for(std::int64_t duration_ms) { run_until(now_ + duration_ms); }

    // Drains the queue regardless of timestamps; bounded by event count so a
    // retransmission loop cannot hang a test.
    void run_until_idle(std::size_t max_events = 1'000'000) {
        std::size_t n = 0;
        while (!queue_.empty() && n++ < max_events) {
            Entry e = queue_.top();
            queue_.pop();
            now_ = std::max(now_, e.when);
            if (auto it = cancelled_.find(e.id); it != cancelled_.end()) {
                cancelled_.erase(it);
                continue;
            }
            e.fn();
        }
    }

    bool idle() const { return queue_.empty(); }

private:
    struct Entry {
        std::int64_t when;
        std::uint64_t seq;
        TimerId id;
        std::function<void()> fn;
        bool operator>(const Entry& o) const {
            return when != o.when ? when > o.when : seq > o.seq;
        }
    };

    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
    std::set<TimerId> cancelled_;
    std::int64_t now_ = 0;
    std::uint64_t next_seq_ = 0;
    TimerId next_id_ = 0;
};

// Wall-clock scheduler backed by one worker thread. Callbacks may be
// submitted from any thread; they all execute on the worker.
class ThreadScheduler : public Scheduler {
public:
    ThreadScheduler() : worker_([this] { loop(); }) {}

    ~ThreadScheduler() override { stop(); }

    void stop() {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
            stopping_ = true;
        }
        cv_.notify_all();
        if (worker_.joinable()) worker_.join();
    }

    std::int64_t now_ms() const override {
        using namespace std::chrono;
        return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
    }

    TimerId call_at(std::int64_t when_ms, std::function<void()> fn) override {
        std::lock_guard lk(mu_);
        TimerId id = ++next_id_;
        tasks_.emplace(Key{when_ms, next_seq_++}, Task{id, std::move(fn)});
        cv_.notify_all();
        return id;
    }

    void cancel(TimerId id) override {
        std::lock_guard lk(mu_);
        for (auto it = tasks_.begin(); it != tasks_.end(); ++it) {
            if (it->second.id == id) {
                tasks_.erase(it);
                return;
            }
        }
    }

private:
    struct Key {
        std::int64_t when;
        std::uint64_t seq;
        bool operator<(const Key& o) const {
            return when != o.when ? when < o.when : seq < o.seq;
        }
    };
    struct Task {
        TimerId id;
        std::function<void()> fn;
    };

    void loop() {
        std::unique_lock lk(mu_);
        while (true) {
            if (stopping_) return;
            if (tasks_.empty()) {
                cv_.wait(lk, [this] { return stopping_ || !tasks_.empty(); });
                continue;
            }
            auto next = tasks_.begin();
            std::int64_t wait_ms = next->first.when - now_ms();
            if (wait_ms > 0) {
                cv_.wait_for(lk, std::chrono::milliseconds(wait_ms));
                continue;
            }
            Task task = std::move(next->second);
            tasks_.erase(next);
            lk.unlock();
            task.fn();
            lk.lock();
        }
    }

    std::mutex mu_;
    std::condition_variable cv_;
    std::map<Key, Task> tasks_;
    std::uint64_t next_seq_ = 0;
    TimerId next_id_ = 0;
    bool stopping_ = false;
    std::thread worker_;
};

} // namespace qgrid

#endif
