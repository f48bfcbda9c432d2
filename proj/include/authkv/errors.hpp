// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace authkv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the encodable range (version >= 2^52, reserved depth, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Key routed to a shard/subtree other than the one asked to store it.
class RoutingError : public Error {
 public:
  using Error::Error;
};

/// Write carrying a version older than data already present.
class VersionError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

/// I/O failure underneath the journal or a snapshot sink.
class StorageError : public Error {
 public:
  using Error::Error;
};

/// Persisted bytes fail a checksum, or point somewhere they cannot.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Bytes are well-formed enough to read but violate the format (magic, reserved
/// bits, malformed entry streams, trailing data).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Operation not valid in the object's current state (append after seal, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

/// The recomputed root does not match the trusted root, or the proof is not
/// canonical. Never reported as a verdict.
class InvalidProofError : public Error {
 public:
  using Error::Error;
};

/// Two distinct keys with the same 256-bit digest. Unreachable barring a
/// broken hash.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace authkv
