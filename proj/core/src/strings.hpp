#pragma once

#include <sstream>
#include <string>

namespace rpnr::detail {

template <class... Parts>
std::string cat(const Parts&... parts) {
  std::ostringstream out;
  (out << ... << parts);
  return out.str();
}

}  // namespace rpnr::detail
