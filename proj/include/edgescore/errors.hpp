#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edgescore {

// Error taxonomy shared by every module. The CLI maps these onto its
// exit-code classes (usage / verification / data / training).
enum class ErrorCode {
    // tabular
    MissingColumn,
    NonNumericCell,
    EmptyFile,
    InvalidTargetValue,
    ClassTooSmall,
    SingleClass,
    ColumnMismatch,
    Precondition,
    // capsnet / gbt
    DimMismatch,
    NonfiniteLoss,
    EmptySeeds,
    // astore
    PayloadTooLarge,
    InvalidSpec,
    BadMagic,
    UnsupportedVersion,
    Truncated,
    SectionOverlap,
    KeyMismatch,
    // engine
    DescribeFailed,
    InputMismatch,
    OutputSetupFailed,
    ScoreFailed,
    WriteFailed,
    // ledger
    InvalidChain,
    UnanchoredModel,
    BadChainFormat,
    // evalharness
    LengthMismatch,
    DegenerateLabels,
    // generic
    IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail),
          code_(code),
          detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& detail) {
    throw Error(code, detail);
}

inline void require(bool ok, ErrorCode code, const std::string& detail) {
    if (!ok) raise(code, detail);
}

} // namespace edgescore
