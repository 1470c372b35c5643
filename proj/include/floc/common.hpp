#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace floc {

// All numerics run at double precision; the loss kernels and their
// finite-difference checks depend on it.
using real = double;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <class T, class... Rest>
void format_into(std::ostringstream& os, T&& v, Rest&&... rest) {
    os << v;
    format_into(os, static_cast<Rest&&>(rest)...);
}
} // namespace detail

template <class... Args>
[[noreturn]] inline void fail(Args&&... args) {
    std::ostringstream os;
    detail::format_into(os, static_cast<Args&&>(args)...);
    throw Error(os.str());
}

} // namespace floc

#define FLOC_CHECK(cond, ...)                \
    do {                                     \
        if (!(cond)) ::floc::fail(__VA_ARGS__); \
    } while (0)
