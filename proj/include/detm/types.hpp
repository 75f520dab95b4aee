#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace detm {

using Vector = std::vector<double>;

/// Which control map is active. Mirrors the trigger phase.
enum class Mode { Primary, Secondary };

enum class EventKind { ToPrimary, ToSecondary };

struct Event {
    double time;
    EventKind kind;
    std::size_t step = 0;  // grid index of `time`

    bool operator==(const Event&) const = default;
};

using EventLog = std::vector<Event>;

constexpr std::string_view to_string(EventKind k) {
    return k == EventKind::ToPrimary ? "ToPrimary" : "ToSecondary";
}

constexpr std::string_view to_string(Mode m) { return m == Mode::Primary ? "Primary" : "Secondary"; }

constexpr Mode mode_after(EventKind k) { return k == EventKind::ToPrimary ? Mode::Primary : Mode::Secondary; }

}  // namespace detm
