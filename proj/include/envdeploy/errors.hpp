#pragma once

#include <stdexcept>
#include <string>

namespace envdeploy {

// Base class for every error this library throws on purpose.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Repository root unreadable, clone failed, or index construction broke.
class IndexError : public Error {
public:
  using Error::Error;
};

// A retrieval round was requested after the round budget ran out.
class RetrievalExhausted : public Error {
public:
  using Error::Error;
};

// Decision provider failed: transport error, exhausted script, or a reply
// that stayed unusable after the retry.
class ReasonerError : public Error {
public:
  using Error::Error;
};

// A scripted provider was asked for a decision kind it did not record next.
class ScriptMismatch : public ReasonerError {
public:
  using ReasonerError::ReasonerError;
};

// Repair action referenced a line or section that does not exist, or edits
// a protected section.
class PatchError : public Error {
public:
  using Error::Error;
};

// Rendering artifacts failed validation (script structure, image reference).
class EmitError : public Error {
public:
  using Error::Error;
};

// Container engine unreachable or refused the session.
class SandboxUnavailable : public Error {
public:
  using Error::Error;
};

// Base image missing and could not be pulled, or the reference is malformed.
class ImageError : public Error {
public:
  using Error::Error;
};

// Engine transport broke mid-exec; distinct from a command that merely failed.
class ExecTransportError : public Error {
public:
  using Error::Error;
};

// Operation on a sandbox that was already destroyed.
class SandboxStopped : public Error {
public:
  using Error::Error;
};

// Repair planning produced no applicable action for this failure.
class EmptyPlanError : public Error {
public:
  using Error::Error;
};

// Input file or JSON document does not match the expected schema.
class ValidationError : public Error {
public:
  using Error::Error;
};

}  // namespace envdeploy
