#include "ttsa/log.hpp"

#include <iostream>
#include <mutex>

namespace ttsa {

namespace {

std::mutex sink_mutex;
WarningSink current_sink;

}  // namespace

void warn(const std::string& message) {
    std::lock_guard lock(sink_mutex);
    if (current_sink)
        current_sink(message);
    else
        std::cerr << "warning: " << message << '\n';
}

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(sink_mutex);
    WarningSink previous = std::move(current_sink);
    current_sink = std::move(sink);
    return previous;
}

}  // namespace ttsa
