#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace irm {

/// Failure categories. Each maps to a distinct process exit code in the CLI.
enum class ErrorKind {
  kParse,
  kValidation,
  kCapability,
  kDegenerateInput,
  kTokenizerMismatch,
  kTransport,
  kManifest,
  kDataset,
  kConfig,
};

std::string_view to_string(ErrorKind kind);

/// Exit code used by irm-detect for an error of the given kind.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::kParse, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& what) : Error(ErrorKind::kCapability, what) {}
};

class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what) : Error(ErrorKind::kDegenerateInput, what) {}
};

class TokenizerMismatchError : public Error {
 public:
  explicit TokenizerMismatchError(const std::string& what)
      : Error(ErrorKind::kTokenizerMismatch, what) {}
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what) : Error(ErrorKind::kTransport, what) {}
};

class ManifestError : public Error {
 public:
  explicit ManifestError(const std::string& what) : Error(ErrorKind::kManifest, what) {}
};

class DatasetError : public Error {
 public:
  explicit DatasetError(const std::string& what) : Error(ErrorKind::kDataset, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

}  // namespace irm
