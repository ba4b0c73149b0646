#pragma once

#include <stdexcept>
#include <string>

namespace pulsebp {

enum class errc {
    invalid_band,
    insufficient_length,
    unsupported_order,
    no_dominant_component,
    undefined_snr,
    zero_variance,
    degenerate_trace,
    no_label,
    invalid_spec,
    shape_mismatch,
    split_contamination,
    divergence,
    insufficient_data,
    degenerate_test,
    empty_partition,
    config,
    data,
};

const char* errc_name(errc c);

/// Library-wide exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
public:
    Error(errc c, const std::string& msg)
        : std::runtime_error(std::string(errc_name(c)) + ": " + msg), code_(c) {}
    errc code() const noexcept { return code_; }

private:
    errc code_;
};

} // namespace pulsebp
