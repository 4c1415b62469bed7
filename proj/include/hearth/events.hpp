#pragma once
// In-process event feed behind the server-sent-event stream. Every event
// gets the next sequence number; a bounded ring keeps recent events so a
// reconnecting subscriber can resume from the last id it saw.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "hearth/codec.hpp"

namespace hearth {

struct Event {
    std::uint64_t seq = 0;
    std::string type;  // bucket, resolved, ruleset, curriculum_due, stage, directive, device, redaction, storage
    Json data;
};

struct EventBatch {
    std::vector<Event> events;
    /// Some events after the resume point were already evicted from the ring.
    bool gap = false;
    bool closed = false;
};

class EventHub {
public:
    explicit EventHub(std::size_t capacity = 16384);

    std::uint64_t publish(std::string type, Json data);

    /// Events with seq > `after`, waiting up to `timeout` for the first one.
    EventBatch next(std::uint64_t after, std::chrono::milliseconds timeout, std::size_t max = 256) const;
    std::uint64_t last_seq() const;

    /// Drops matching events from the ring; their sequence numbers stay used.
    std::size_t purge(const std::function<bool(const Event&)>& pred);

    /// Wakes every waiter; later `next` calls return immediately with `closed`.
    void close();

private:
    std::size_t capacity_;
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::deque<Event> ring_;
    std::uint64_t seq_ = 0;
    std::uint64_t evicted_ = 0;  // highest sequence number pushed out of the ring
    bool closed_ = false;
};

/// `id:`/`event:`/`data:` framing of one event.
std::string sse_frame(const Event& e);

}  // namespace hearth
