// Copyright 2026 The revoice Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace revoice {

/// Base class of every error thrown by the library. `category()` is a short
/// machine-readable tag the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const {
    return category_;
  }

 private:
  std::string category_;
};

/// Precondition or shape violation on caller-supplied data.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error("validation", what) {}
};

/// Unreadable, unwritable or truncated file.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

/// File is readable but its encoding is not supported.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

/// A codec or extractor backend cannot serve the request.
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error("backend", what) {}
};

/// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error("training", what) {}
};

} // namespace revoice
