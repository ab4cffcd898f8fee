#include "irm/error.hpp"

namespace irm {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kCapability: return "capability";
    case ErrorKind::kDegenerateInput: return "degenerate-input";
    case ErrorKind::kTokenizerMismatch: return "tokenizer-mismatch";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kManifest: return "manifest";
    case ErrorKind::kDataset: return "dataset";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kParse: return 3;
    case ErrorKind::kValidation: return 4;
    case ErrorKind::kCapability: return 5;
    case ErrorKind::kDegenerateInput: return 6;
    case ErrorKind::kTokenizerMismatch: return 7;
    case ErrorKind::kTransport: return 8;
    case ErrorKind::kManifest: return 9;
    case ErrorKind::kDataset: return 10;
  }
  return 1;
}

}  // namespace irm
