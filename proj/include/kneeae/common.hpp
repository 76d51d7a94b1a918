#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kneeae {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Failure categories raised by the library. Every thrown kneeae::Error
/// carries one of these so callers can branch without parsing messages.
enum class Errc {
    format,               // malformed file or record
    empty_input,          // zero-length payload
    degenerate_signal,    // zero RMS
    invalid_frame_length, // frame longer than segment or shorter than 2 samples
    resolution,           // too few DFT bins for the filterbank
    shape,                // dimension mismatch
    insufficient_frames,  // statistics need >= 2 frames
    degenerate_training,  // single-class training data
    numeric,              // non-finite input
    empty_evaluation,     // confusion matrix with no rows
    undefined_auc,        // single-class labels
    grouping,             // corpus too small for the fold template
    io,                   // filesystem failure
    config,               // invalid configuration value
};

inline std::string_view to_string(Errc c) {
    switch (c) {
    case Errc::format: return "format";
    case Errc::empty_input: return "empty-input";
    case Errc::degenerate_signal: return "degenerate-signal";
    case Errc::invalid_frame_length: return "invalid-frame-length";
    case Errc::resolution: return "resolution";
    case Errc::shape: return "shape";
    case Errc::insufficient_frames: return "insufficient-frames";
    case Errc::degenerate_training: return "degenerate-training";
    case Errc::numeric: return "numeric";
    case Errc::empty_evaluation: return "empty-evaluation";
    case Errc::undefined_auc: return "undefined-auc";
    case Errc::grouping: return "grouping";
    case Errc::io: return "io";
    case Errc::config: return "config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + " error: " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Clinical class. Numeric values are the classifier targets; "positive"
/// throughout the metrics code means abnormal.
enum class Label : int { normal = -1, abnormal = 1 };

inline int sign(Label l) { return static_cast<int>(l); }

inline std::string_view to_string(Label l) {
    return l == Label::abnormal ? "abnormal" : "normal";
}

inline Label parse_label(std::string_view s) {
    if (s == "normal" || s == "-1" || s == "0") return Label::normal;
    if (s == "abnormal" || s == "1" || s == "+1") return Label::abnormal;
    throw Error(Errc::format, "unknown label '" + std::string(s) + "'");
}

}  // namespace kneeae
