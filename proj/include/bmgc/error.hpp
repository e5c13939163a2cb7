#pragma once

#include <stdexcept>
#include <string>

namespace bmgc {

enum class Err {
  // audio
  MalformedContainer,
  UnsupportedEncoding,
  EmptyAudio,
  ClipTooShort,
  // features
  FrameLongerThanClip,
  DegenerateBand,
  // nn
  BatchTooSmall,
  BadMagic,
  VersionMismatch,
  ShapeChainBroken,
  TruncatedFile,
  // dataset
  UnknownGenre,
  DuplicatePath,
  EmptyManifest,
  ParseError,
  GenreTooSmall,
  // baselines
  KTooLarge,
  // generic
  InvalidArgument,
  IoError,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
public:
  Error(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}
  Err code() const { return code_; }

private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Err code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace bmgc
