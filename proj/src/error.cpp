#include "pulsebp/error.hpp"

namespace pulsebp {

const char* errc_name(errc c) {
    switch (c) {
        case errc::invalid_band: return "invalid-band";
        case errc::insufficient_length: return "insufficient-length";
        case errc::unsupported_order: return "unsupported-order";
        case errc::no_dominant_component: return "no-dominant-component";
        case errc::undefined_snr: return "undefined-snr";
        case errc::zero_variance: return "zero-variance";
        case errc::degenerate_trace: return "degenerate-trace";
        case errc::no_label: return "no-label";
        case errc::invalid_spec: return "invalid-spec";
        case errc::shape_mismatch: return "shape-mismatch";
        case errc::split_contamination: return "split-contamination";
        case errc::divergence: return "divergence";
        case errc::insufficient_data: return "insufficient-data";
        case errc::degenerate_test: return "degenerate-test";
        case errc::empty_partition: return "empty-partition";
        case errc::config: return "config-error";
        case errc::data: return "data-error";
    }
    return "unknown-error";
}

} // namespace pulsebp
