#pragma once

#include "spadsim/time.hpp"

#include <cstddef>
#include <cstdint>
#include <queue>
#include <string_view>
#include <vector>

namespace spadsim {

/// Event kinds, listed in tie-break priority order: at equal times a lower
/// value is processed first, so state transitions complete before new stimuli.
enum class EventKind : std::uint8_t {
    TimerExpiry = 0,
    TrapRelease = 1,
    DarkCount = 2,
    PhotonArrival = 3,
};

std::string_view to_string(EventKind kind);

struct SimEvent {
    TimePs time;
    EventKind kind = EventKind::PhotonArrival;
    std::uint64_t payload = 0; ///< kind-specific (arrival index, timer token, ...)
};

/// Time-ordered event queue with deterministic tie-breaking:
/// (time, kind priority, insertion sequence).
class EventQueue {
public:
    /// Throws std::logic_error if `ev.time` precedes the time of the last popped event.
    void push(const SimEvent& ev);

    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }
    const SimEvent& top() const { return heap_.top().ev; }

    /// Removes the next event and advances the queue clock to its time.
    SimEvent pop();

    TimePs now() const { return now_; }

private:
    struct Entry {
        SimEvent ev;
        std::uint64_t seq;
    };
    struct Later {
        bool operator()(const Entry& a, const Entry& b) const
        {
            if (a.ev.time != b.ev.time) return a.ev.time > b.ev.time;
            if (a.ev.kind != b.ev.kind) return a.ev.kind > b.ev.kind;
            return a.seq > b.seq;
        }
    };

    std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
    std::uint64_t next_seq_ = 0;
    TimePs now_ = TimePs::zero();
};

/// Drains `queue` in order, calling `handler(event, queue)` for each event with
/// time <= t_end. Halts at the first event later than t_end (left queued).
/// Returns the number of processed events.
template <typename Handler>
std::size_t run(EventQueue& queue, Handler&& handler, TimePs t_end)
{
    std::size_t processed = 0;
    while (!queue.empty() && queue.top().time <= t_end) {
        const SimEvent ev = queue.pop();
        handler(ev, queue);
        ++processed;
    }
    return processed;
}

} // namespace spadsim
