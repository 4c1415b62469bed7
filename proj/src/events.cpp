#include "hearth/events.hpp"

#include <algorithm>

namespace hearth {

EventHub::EventHub(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

std::uint64_t EventHub::publish(std::string type, Json data) {
    std::uint64_t seq;
    {
        std::lock_guard lock(mu_);
        seq = ++seq_;
        ring_.push_back({seq, std::move(type), std::move(data)});
        if (ring_.size() > capacity_) {
            evicted_ = ring_.front().seq;
            ring_.pop_front();
        }
    }
    cv_.notify_all();
    return seq;
}

EventBatch EventHub::next(std::uint64_t after, std::chrono::milliseconds timeout, std::size_t max) const {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || seq_ > after; });
    EventBatch out;
    out.closed = closed_;
    out.gap = after < evicted_;
    // The ring is in sequence order but purges may leave holes.
    auto it = std::upper_bound(ring_.begin(), ring_.end(), after,
                               [](std::uint64_t s, const Event& e) { return s < e.seq; });
    for (; it != ring_.end() && out.events.size() < max; ++it) out.events.push_back(*it);
    return out;
}

std::uint64_t EventHub::last_seq() const {
    std::lock_guard lock(mu_);
    return seq_;
}

std::size_t EventHub::purge(const std::function<bool(const Event&)>& pred) {
    std::lock_guard lock(mu_);
    return std::erase_if(ring_, pred);
}

void EventHub::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

std::string sse_frame(const Event& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + e.data.dump() + "\n\n";
}

}  // namespace hearth
