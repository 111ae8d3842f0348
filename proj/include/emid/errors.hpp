#pragma once

#include <stdexcept>
#include <string>

namespace emid {

enum class Errc {
    VertexNotInGraph,
    DropRetainedRole,
    NotFixable,
    DivisionByZeroRegion,
    SizeCapExceeded,
    NonBinaryVariable,
    DegenerateExplosion,
    InterferencePatternPresent,
    Assumption1Violated,
    UnknownCounterfactual,
    NotADag,
    CriterionNotEstablished,
    NotMcarOrMar,
    PositivityViolation,
    ScopeMismatch,
    CovarianceNotPD,
    PositivityMarginViolated,
    SeparationInLogistic,
    RestrictedSampleEmpty,
    DegenerateWeights,
    EmptyPattern,
    CondensedUnrepresentable,
    InvalidScenario,
    InvalidQuery,
    IoError,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::VertexNotInGraph: return "VertexNotInGraph";
        case Errc::DropRetainedRole: return "DropRetainedRole";
        case Errc::NotFixable: return "NotFixable";
        case Errc::DivisionByZeroRegion: return "DivisionByZeroRegion";
        case Errc::SizeCapExceeded: return "SizeCapExceeded";
        case Errc::NonBinaryVariable: return "NonBinaryVariable";
        case Errc::DegenerateExplosion: return "DegenerateExplosion";
        case Errc::InterferencePatternPresent: return "InterferencePatternPresent";
        case Errc::Assumption1Violated: return "Assumption1Violated";
        case Errc::UnknownCounterfactual: return "UnknownCounterfactual";
        case Errc::NotADag: return "NotADag";
        case Errc::CriterionNotEstablished: return "CriterionNotEstablished";
        case Errc::NotMcarOrMar: return "NotMcarOrMar";
        case Errc::PositivityViolation: return "PositivityViolation";
        case Errc::ScopeMismatch: return "ScopeMismatch";
        case Errc::CovarianceNotPD: return "CovarianceNotPD";
        case Errc::PositivityMarginViolated: return "PositivityMarginViolated";
        case Errc::SeparationInLogistic: return "SeparationInLogistic";
        case Errc::RestrictedSampleEmpty: return "RestrictedSampleEmpty";
        case Errc::DegenerateWeights: return "DegenerateWeights";
        case Errc::EmptyPattern: return "EmptyPattern";
        case Errc::CondensedUnrepresentable: return "CondensedUnrepresentable";
        case Errc::InvalidScenario: return "InvalidScenario";
        case Errc::InvalidQuery: return "InvalidQuery";
        case Errc::IoError: return "IoError";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace emid
