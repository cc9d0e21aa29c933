#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ragc {

enum class ErrorKind {
  UnknownDim,
  UnknownTensor,
  MissingTable,
  InnerDependence,
  ArityMismatch,
  InvalidDecl,
  CyclicDependence,
  IllegalReorder,
  PadUnderflow,
  ReductionSplit,
  ReductionSplitHFuse,
  SingleDepViolation,
  NonMonotonePoints,
  DependentOps,
  NonOutermost,
  NotParallel,
  InvalidPrimitive,
  Unsupported,
  MissingPrelude,
  OutOfRangeAccess,
  UnboundVariable,
  SizeMismatch,
  ParseError,
  BadParams,
  UnknownOp,
};

inline std::string_view error_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::UnknownDim: return "UnknownDim";
    case ErrorKind::UnknownTensor: return "UnknownTensor";
    case ErrorKind::MissingTable: return "MissingTable";
    case ErrorKind::InnerDependence: return "InnerDependence";
    case ErrorKind::ArityMismatch: return "ArityMismatch";
    case ErrorKind::InvalidDecl: return "InvalidDecl";
    case ErrorKind::CyclicDependence: return "CyclicDependence";
    case ErrorKind::IllegalReorder: return "IllegalReorder";
    case ErrorKind::PadUnderflow: return "PadUnderflow";
    case ErrorKind::ReductionSplit: return "ReductionSplit";
    case ErrorKind::ReductionSplitHFuse: return "ReductionSplitHFuse";
    case ErrorKind::SingleDepViolation: return "SingleDepViolation";
    case ErrorKind::NonMonotonePoints: return "NonMonotonePoints";
    case ErrorKind::DependentOps: return "DependentOps";
    case ErrorKind::NonOutermost: return "NonOutermost";
    case ErrorKind::NotParallel: return "NotParallel";
    case ErrorKind::InvalidPrimitive: return "InvalidPrimitive";
    case ErrorKind::Unsupported: return "Unsupported";
    case ErrorKind::MissingPrelude: return "MissingPrelude";
    case ErrorKind::OutOfRangeAccess: return "OutOfRangeAccess";
    case ErrorKind::UnboundVariable: return "UnboundVariable";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::BadParams: return "BadParams";
    case ErrorKind::UnknownOp: return "UnknownOp";
  }
  return "Unknown";
}

/// Runtime data errors (as opposed to validation errors) map to CLI exit code 2.
inline bool is_runtime_error(ErrorKind k) {
  return k == ErrorKind::OutOfRangeAccess || k == ErrorKind::SizeMismatch ||
         k == ErrorKind::UnboundVariable;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(error_name(kind)) + ": " + msg), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace ragc
