#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace survsr {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// data

class MissingColumn : public Error {
public:
    explicit MissingColumn(std::string column)
        : Error("missing column '" + column + "'"), column_(std::move(column)) {}
    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

/// Errors tied to a single cell of the input table. Rows are 1-based data rows
/// (the header is not counted).
class CellError : public Error {
public:
    CellError(const std::string& what, std::size_t row, std::string column)
        : Error(what + " at row " + std::to_string(row) + ", column '" + column + "'"),
          row_(row), column_(std::move(column)) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

class NonPositiveTime : public CellError {
public:
    NonPositiveTime(std::size_t row, std::string column)
        : CellError("non-positive survival time", row, std::move(column)) {}
};

class NonBinaryEvent : public CellError {
public:
    NonBinaryEvent(std::size_t row, std::string column)
        : CellError("event indicator is not binary", row, std::move(column)) {}
};

class MissingValue : public CellError {
public:
    MissingValue(std::size_t row, std::string column)
        : CellError("missing or non-numeric value", row, std::move(column)) {}
};

class UnknownCategory : public CellError {
public:
    UnknownCategory(std::size_t row, std::string column, const std::string& value)
        : CellError("unknown category '" + value + "'", row, std::move(column)) {}
};

class SchemaMismatch : public Error {
public:
    using Error::Error;
};

class DegenerateSplit : public Error {
public:
    using Error::Error;
};

class CsvError : public Error {
public:
    using Error::Error;
};

// exprtree

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error(what + " at index " + std::to_string(position)), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

// multimodel

class NotFitted : public Error {
public:
    NotFitted() : Error("model has not been fitted") {}
};

// cli

class ConfigError : public Error {
public:
    using Error::Error;
};

class MixedSchema : public Error {
public:
    using Error::Error;
};

}  // namespace survsr
