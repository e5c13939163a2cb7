#include "bmgc/error.hpp"

namespace bmgc {

const char* err_name(Err e) {
  switch (e) {
    case Err::MalformedContainer: return "MalformedContainer";
    case Err::UnsupportedEncoding: return "UnsupportedEncoding";
    case Err::EmptyAudio: return "EmptyAudio";
    case Err::ClipTooShort: return "ClipTooShort";
    case Err::FrameLongerThanClip: return "FrameLongerThanClip";
    case Err::DegenerateBand: return "DegenerateBand";
    case Err::BatchTooSmall: return "BatchTooSmall";
    case Err::BadMagic: return "BadMagic";
    case Err::VersionMismatch: return "VersionMismatch";
    case Err::ShapeChainBroken: return "ShapeChainBroken";
    case Err::TruncatedFile: return "TruncatedFile";
    case Err::UnknownGenre: return "UnknownGenre";
    case Err::DuplicatePath: return "DuplicatePath";
    case Err::EmptyManifest: return "EmptyManifest";
    case Err::ParseError: return "ParseError";
    case Err::GenreTooSmall: return "GenreTooSmall";
    case Err::KTooLarge: return "KTooLarge";
    case Err::InvalidArgument: return "InvalidArgument";
    case Err::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace bmgc
