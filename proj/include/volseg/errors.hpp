#ifndef VOLSEG_ERRORS_HPP
#define VOLSEG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace volseg {

// Error taxonomy mirrored by the CLI exit codes:
//   param_error      -> 2 (bad parameters, config, shapes, capacity)
//   data_error       -> 3 (I/O failures, malformed files, content violations)
//   divergence_error -> 4 (non-finite numerics during training)
struct param_error : std::runtime_error {
    explicit param_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct divergence_error : std::runtime_error {
    explicit divergence_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace volseg

#endif
