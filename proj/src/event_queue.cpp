#include "spadsim/event_queue.hpp"

#include <fmt/core.h>

#include <stdexcept>

namespace spadsim {

std::string_view to_string(EventKind kind)
{
    switch (kind) {
    case EventKind::TimerExpiry: return "TimerExpiry";
    case EventKind::TrapRelease: return "TrapRelease";
    case EventKind::DarkCount: return "DarkCount";
    case EventKind::PhotonArrival: return "PhotonArrival";
    }
    return "Unknown";
}

void EventQueue::push(const SimEvent& ev)
{
    if (ev.time < now_) {
        throw std::logic_error(fmt::format("enqueue into the past: {} event at {} ps (payload {}) while engine time is {} ps",
                                           to_string(ev.kind), ev.time.ps(), ev.payload, now_.ps()));
    }
    heap_.push(Entry{ev, next_seq_++});
}

SimEvent EventQueue::pop()
{
    SimEvent ev = heap_.top().ev;
    heap_.pop();
    now_ = ev.time;
    return ev;
}

} // namespace spadsim
