#include "dqpipe/error.hpp"

namespace dqpipe {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyCycle: return "EmptyCycle";
    case Errc::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
    case Errc::WindowSizeMismatch: return "WindowSizeMismatch";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::AllMissingWindow: return "AllMissingWindow";
    case Errc::InsufficientSample: return "InsufficientSample";
    case Errc::EmptySample: return "EmptySample";
    case Errc::BinMismatch: return "BinMismatch";
    case Errc::DegenerateCorpus: return "DegenerateCorpus";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::InsufficientBaseline: return "InsufficientBaseline";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::StorageFailure: return "StorageFailure";
    case Errc::NotFound: return "NotFound";
    case Errc::WriterLocked: return "WriterLocked";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::SchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

}  // namespace dqpipe
