/*
 * Copyright 2026 The FedGRec Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDGREC_ERRORS_HPP_
#define FEDGREC_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedgrec {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (dataset files, config values).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Input parsed but violates a structural invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A node with zero degree was used where a normalization is required.
class DegenerateNodeError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Value outside the fixed-point representable range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// A party broke the message contract (missing seed, missing item, ...).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss, gradient or update.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what, std::size_t epoch = 0)
      : Error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedgrec

#endif  // FEDGREC_ERRORS_HPP_
