#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace medcorpus {

using Date = std::chrono::year_month_day;

// Strict `YYYY-MM-DD`; a trailing `T...` time part is accepted and ignored.
std::optional<Date> parse_iso_date(std::string_view s);

std::string format_iso_date(const Date& d);

}  // namespace medcorpus
