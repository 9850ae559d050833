// Copyright 2026 The TemplateSense Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace templatesense {

// Root of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TEMPLATESENSE_ERROR(Name)       \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

// Malformed input file. Carries the 1-based line number when known (0 if not).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

TEMPLATESENSE_ERROR(ValidationError);
TEMPLATESENSE_ERROR(FamilyError);
TEMPLATESENSE_ERROR(MissingBinding);
TEMPLATESENSE_ERROR(MissingForm);
TEMPLATESENSE_ERROR(UnknownLexicon);
TEMPLATESENSE_ERROR(UnpairedInstance);

TEMPLATESENSE_ERROR(TransportError);
TEMPLATESENSE_ERROR(ProtocolError);
TEMPLATESENSE_ERROR(LabelSetMismatch);
TEMPLATESENSE_ERROR(MultiTokenCandidate);
TEMPLATESENSE_ERROR(MaskCountError);

TEMPLATESENSE_ERROR(TooFewPairs);
TEMPLATESENSE_ERROR(UndefinedBaseline);
TEMPLATESENSE_ERROR(EmptyInput);

TEMPLATESENSE_ERROR(EmptyGroup);
TEMPLATESENSE_ERROR(UndefinedRate);
TEMPLATESENSE_ERROR(NonPositiveProbability);
TEMPLATESENSE_ERROR(EmptyPolaritySubset);

TEMPLATESENSE_ERROR(MissingMetric);
TEMPLATESENSE_ERROR(MissingPredictions);
TEMPLATESENSE_ERROR(ConfigError);

// A possessive sentinel hit an entry without a stored possessive form.
class MissingPossessiveForm : public MissingForm {
 public:
  using MissingForm::MissingForm;
};

#undef TEMPLATESENSE_ERROR

}  // namespace templatesense
