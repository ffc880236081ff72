#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cseae {

// Malformed input: bad JSON, wrong field types, I/O failures.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that breaks a documented invariant.
class InvariantError : public std::runtime_error {
 public:
  InvariantError(const std::string& doc_id, const std::string& field, const std::string& what)
      : std::runtime_error("doc '" + doc_id + "', field '" + field + "': " + what),
        doc_id_(doc_id),
        field_(field) {}

  const std::string& doc_id() const noexcept { return doc_id_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string doc_id_;
  std::string field_;
};

// Non-finite losses or probabilities.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape or argument mismatch inside the network code.
class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace cseae
