#pragma once

#include <stdexcept>
#include <string>

namespace sntf {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Malformed input file. Carries the 1-based line (and column, when known).
class FormatError : public std::runtime_error {
  public:
    FormatError(const std::string& what, long line = 0, long column = 0)
        : std::runtime_error(decorate(what, line, column)), line_(line),
          column_(column) {}

    long line() const noexcept { return line_; }
    long column() const noexcept { return column_; }

  private:
    static std::string decorate(const std::string& what, long line,
                                long column) {
        if (line <= 0)
            return what;
        std::string out = "line " + std::to_string(line);
        if (column > 0)
            out += ", column " + std::to_string(column);
        return out + ": " + what;
    }

    long line_;
    long column_;
};

/// A non-finite value surfaced during evaluation or inference; `block()`
/// names the variational block that produced it.
class NumericalError : public std::runtime_error {
  public:
    NumericalError(const std::string& block, const std::string& what)
        : std::runtime_error(block + ": " + what), block_(block) {}

    const std::string& block() const noexcept { return block_; }

  private:
    std::string block_;
};

} // namespace sntf
