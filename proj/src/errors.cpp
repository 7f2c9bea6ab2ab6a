#include "edgescore/errors.hpp"

namespace edgescore {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingColumn: return "MISSING_COLUMN";
        case ErrorCode::NonNumericCell: return "NON_NUMERIC_CELL";
        case ErrorCode::EmptyFile: return "EMPTY_FILE";
        case ErrorCode::InvalidTargetValue: return "INVALID_TARGET_VALUE";
        case ErrorCode::ClassTooSmall: return "CLASS_TOO_SMALL";
        case ErrorCode::SingleClass: return "SINGLE_CLASS";
        case ErrorCode::ColumnMismatch: return "COLUMN_MISMATCH";
        case ErrorCode::Precondition: return "PRECONDITION";
        case ErrorCode::DimMismatch: return "DIM_MISMATCH";
        case ErrorCode::NonfiniteLoss: return "NONFINITE_LOSS";
        case ErrorCode::EmptySeeds: return "EMPTY_SEEDS";
        case ErrorCode::PayloadTooLarge: return "PAYLOAD_TOO_LARGE";
        case ErrorCode::InvalidSpec: return "INVALID_SPEC";
        case ErrorCode::BadMagic: return "BAD_MAGIC";
        case ErrorCode::UnsupportedVersion: return "UNSUPPORTED_VERSION";
        case ErrorCode::Truncated: return "TRUNCATED";
        case ErrorCode::SectionOverlap: return "SECTION_OVERLAP";
        case ErrorCode::KeyMismatch: return "KEY_MISMATCH";
        case ErrorCode::DescribeFailed: return "DESCRIBE_FAILED";
        case ErrorCode::InputMismatch: return "INPUT_MISMATCH";
        case ErrorCode::OutputSetupFailed: return "OUTPUT_SETUP_FAILED";
        case ErrorCode::ScoreFailed: return "SCORE_FAILED";
        case ErrorCode::WriteFailed: return "WRITE_FAILED";
        case ErrorCode::InvalidChain: return "INVALID_CHAIN";
        case ErrorCode::UnanchoredModel: return "UNANCHORED_MODEL";
        case ErrorCode::BadChainFormat: return "BAD_CHAIN_FORMAT";
        case ErrorCode::LengthMismatch: return "LENGTH_MISMATCH";
        case ErrorCode::DegenerateLabels: return "DEGENERATE_LABELS";
        case ErrorCode::IoError: return "IO_ERROR";
    }
    return "UNKNOWN";
}

} // namespace edgescore
