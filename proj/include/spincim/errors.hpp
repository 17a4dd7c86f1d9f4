#pragma once

#include <stdexcept>
#include <string>

namespace spincim {

// Error categories map onto CLI exit codes: config -> 2, data -> 3,
// numeric -> 4. Everything else is a contract violation inside the
// library and exits 1 when it escapes.
enum class ErrorKind {
    dimension,
    domain,
    numeric,
    config,
    data,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline Error dimension_error(const std::string& msg) { return Error(ErrorKind::dimension, msg); }
inline Error domain_error(const std::string& msg) { return Error(ErrorKind::domain, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::numeric, msg); }
inline Error config_error(const std::string& msg) { return Error(ErrorKind::config, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorKind::data, msg); }

} // namespace spincim
