#pragma once

#include <functional>
#include <string>

namespace ttsa {

using WarningSink = std::function<void(const std::string&)>;

/// Reports a non-fatal condition. The default sink prints "warning: ..." to stderr.
void warn(const std::string& message);

/// Replaces the sink and returns the previous one. Passing an empty function
/// restores the default.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace ttsa
