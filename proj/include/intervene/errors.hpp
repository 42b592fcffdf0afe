#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace intervene {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A dataset sample failed validation. Names the sample and the field.
class ValidationError : public Error {
 public:
  ValidationError(std::string sample_id, std::string field, const std::string& detail)
      : Error("sample '" + sample_id + "' field '" + field + "': " + detail),
        sample_id_(std::move(sample_id)),
        field_(std::move(field)) {}
  const std::string& sample_id() const noexcept { return sample_id_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string sample_id_;
  std::string field_;
};

/// A trace violated the trace schema. `field` is a dotted path into the record.
class SchemaError : public Error {
 public:
  SchemaError(std::string field, const std::string& detail, std::size_t line = 0)
      : Error((line ? "line " + std::to_string(line) + ": " : std::string()) + "field '" +
              field + "': " + detail),
        field_(std::move(field)),
        detail_(detail),
        line_(line) {}
  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }
  std::size_t line() const noexcept { return line_; }
  SchemaError at_line(std::size_t line) const { return SchemaError(field_, detail_, line); }

 private:
  std::string field_;
  std::string detail_;
  std::size_t line_;
};

class InvalidSize : public Error {
 public:
  using Error::Error;
};

class DegenerateRow : public Error {
 public:
  explicit DegenerateRow(std::size_t token_index)
      : Error("attention row for output token " + std::to_string(token_index) + " sums to zero"),
        token_index_(token_index) {}
  std::size_t token_index() const noexcept { return token_index_; }

 private:
  std::size_t token_index_;
};

class EmptySpans : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  using Error::Error;
};

class OracleFailure : public Error {
 public:
  OracleFailure(const std::string& detail, std::size_t first, std::size_t second)
      : Error("entailment oracle failed on texts " + std::to_string(first) + " and " +
              std::to_string(second) + ": " + detail),
        first_(first),
        second_(second) {}
  std::size_t first() const noexcept { return first_; }
  std::size_t second() const noexcept { return second_; }

 private:
  std::size_t first_;
  std::size_t second_;
};

class EmptyClustering : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class DegenerateVariance : public Error {
 public:
  using Error::Error;
};

class JudgeUnavailable : public Error {
 public:
  using Error::Error;
};

class MalformedJudgeReply : public Error {
 public:
  using Error::Error;
};

class AdapterError : public Error {
 public:
  AdapterError(std::string sample_id, std::string config_id, const std::string& detail)
      : Error("adapter failed for sample '" + sample_id + "' config '" + config_id + "': " +
              detail),
        sample_id_(std::move(sample_id)),
        config_id_(std::move(config_id)) {}
  const std::string& sample_id() const noexcept { return sample_id_; }
  const std::string& config_id() const noexcept { return config_id_; }

 private:
  std::string sample_id_;
  std::string config_id_;
};

/// Raised when a run stops before every job finished. Persisted traces are kept
/// and the run resumes from them.
class PartialRun : public Error {
 public:
  using Error::Error;
};

}  // namespace intervene
