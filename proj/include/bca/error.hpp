#pragma once

#include <stdexcept>
#include <string>

namespace bca {

// Error with a machine-readable kind; the CLI maps kinds onto the JSON it
// prints to stderr.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

    static Error format(const std::string& m) { return {"format", m}; }
    static Error io(const std::string& m) { return {"io", m}; }
    static Error invalid(const std::string& m) { return {"invalid_argument", m}; }
    static Error numeric(const std::string& m) { return {"numeric", m}; }

private:
    std::string kind_;
};

}  // namespace bca
