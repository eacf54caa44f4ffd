#pragma once

#include <stdexcept>
#include <string>

namespace slowfast {

/* Every failure mode raised by the library carries one of these codes so
   callers (and the CLI exit-status mapping) can dispatch without parsing
   message strings. */
enum class ErrorCode {
    // configuration / input validation
    UnknownName,
    BadEpsilon,
    BoundViolated,
    NonStochasticRow,
    NegativeDensity,
    BadDomain,
    ParseError,
    UnknownKey,
    MissingKey,
    RangeError,
    EmptyData,
    Unsupported,
    TooLarge,
    NeighborhoodsOverlap,
    BetaOutOfBracket,
    OutOfTableRange,
    // numeric failures
    NoConvergence,
    DegenerateZero,
    BlowUp,
    TooCensored,
    TooFewGroups,
    NoAttractors,
    AllInfinite,
    TableGap,
    RhoAboveMerge,
    NoRoot,
    SignViolation,
    NonMonotone,
    TooFewReversals,
    // environment
    IoError,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    /* true for errors caused by bad inputs rather than numerics */
    bool is_config() const noexcept {
        switch (code_) {
            case ErrorCode::UnknownName:
            case ErrorCode::BadEpsilon:
            case ErrorCode::BoundViolated:
            case ErrorCode::NonStochasticRow:
            case ErrorCode::NegativeDensity:
            case ErrorCode::BadDomain:
            case ErrorCode::ParseError:
            case ErrorCode::UnknownKey:
            case ErrorCode::MissingKey:
            case ErrorCode::RangeError:
            case ErrorCode::EmptyData:
            case ErrorCode::Unsupported:
            case ErrorCode::TooLarge:
            case ErrorCode::NeighborhoodsOverlap:
            case ErrorCode::BetaOutOfBracket:
            case ErrorCode::OutOfTableRange:
                return true;
            default:
                return false;
        }
    }

    bool is_io() const noexcept { return code_ == ErrorCode::IoError; }

private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::UnknownName: return "UnknownName";
        case ErrorCode::BadEpsilon: return "BadEpsilon";
        case ErrorCode::BoundViolated: return "BoundViolated";
        case ErrorCode::NonStochasticRow: return "NonStochasticRow";
        case ErrorCode::NegativeDensity: return "NegativeDensity";
        case ErrorCode::BadDomain: return "BadDomain";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::UnknownKey: return "UnknownKey";
        case ErrorCode::MissingKey: return "MissingKey";
        case ErrorCode::RangeError: return "RangeError";
        case ErrorCode::EmptyData: return "EmptyData";
        case ErrorCode::Unsupported: return "Unsupported";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::NeighborhoodsOverlap: return "NeighborhoodsOverlap";
        case ErrorCode::BetaOutOfBracket: return "BetaOutOfBracket";
        case ErrorCode::OutOfTableRange: return "OutOfTableRange";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::DegenerateZero: return "DegenerateZero";
        case ErrorCode::BlowUp: return "BlowUp";
        case ErrorCode::TooCensored: return "TooCensored";
        case ErrorCode::TooFewGroups: return "TooFewGroups";
        case ErrorCode::NoAttractors: return "NoAttractors";
        case ErrorCode::AllInfinite: return "AllInfinite";
        case ErrorCode::TableGap: return "TableGap";
        case ErrorCode::RhoAboveMerge: return "RhoAboveMerge";
        case ErrorCode::NoRoot: return "NoRoot";
        case ErrorCode::SignViolation: return "SignViolation";
        case ErrorCode::NonMonotone: return "NonMonotone";
        case ErrorCode::TooFewReversals: return "TooFewReversals";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, std::string(error_code_name(code)) + ": " + what);
}

} // namespace slowfast
