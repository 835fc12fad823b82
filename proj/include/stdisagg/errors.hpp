#pragma once

//
// ... Standard header files
//
#include <cstddef>
#include <stdexcept>
#include <string>

namespace stdisagg {

  // Exit-code families used by the command line tool:
  //   usage/IO -> 1, validation -> 2, numerical -> 3.
  enum class ErrorClass { io = 1, validation = 2, numerical = 3 };

  class Error : public std::runtime_error {
  public:
    Error(ErrorClass cls, std::string const& what)
        : std::runtime_error(what), cls_(cls) {}
    ErrorClass error_class() const noexcept { return cls_; }

  private:
    ErrorClass cls_;
  };

  struct IoError : Error {
    explicit IoError(std::string const& w) : Error(ErrorClass::io, w) {}
  };

  struct ValidationError : Error {
    explicit ValidationError(std::string const& w)
        : Error(ErrorClass::validation, w) {}
  };

  struct NumericalError : Error {
    explicit NumericalError(std::string const& w)
        : Error(ErrorClass::numerical, w) {}
  };

  // sparsela
  struct NotPositiveDefinite : NumericalError {
    std::size_t pivot;
    explicit NotPositiveDefinite(std::size_t k)
        : NumericalError("NotPositiveDefinite: pivot " + std::to_string(k)),
          pivot(k) {}
  };
  struct DimensionMismatch : ValidationError {
    explicit DimensionMismatch(std::string const& w)
        : ValidationError("DimensionMismatch: " + w) {}
  };

  // lattice / operators / stmodel
  struct InvalidExtent : ValidationError {
    explicit InvalidExtent(std::string const& w)
        : ValidationError("InvalidExtent: " + w) {}
  };
  struct IndexOutOfRange : ValidationError {
    explicit IndexOutOfRange(std::string const& w)
        : ValidationError("IndexOutOfRange: " + w) {}
  };
  struct UnsupportedPower : ValidationError {
    explicit UnsupportedPower(int k)
        : ValidationError("UnsupportedPower: " + std::to_string(k)) {}
  };
  struct TorusTooSmall : ValidationError {
    explicit TorusTooSmall(std::string const& w)
        : ValidationError("TorusTooSmall: " + w) {}
  };

  // aggregate
  struct IndivisibleFactor : ValidationError {
    explicit IndivisibleFactor(std::string const& w)
        : ValidationError("IndivisibleFactor: " + w) {}
  };

  // infer / baseline
  struct NonFiniteLikelihood : NumericalError {
    explicit NonFiniteLikelihood(std::string const& w)
        : NumericalError("NonFiniteLikelihood: " + w) {}
  };
  struct DegenerateData : ValidationError {
    explicit DegenerateData(std::string const& w)
        : ValidationError("DegenerateData: " + w) {}
  };
  struct DisconnectedGraph : ValidationError {
    explicit DisconnectedGraph(std::string const& w)
        : ValidationError("DisconnectedGraph: " + w) {}
  };

  // simstudy
  struct ShapeMismatch : ValidationError {
    explicit ShapeMismatch(std::string const& w)
        : ValidationError("ShapeMismatch: " + w) {}
  };

  // io
  struct SchemaError : ValidationError {
    explicit SchemaError(std::string const& w)
        : ValidationError("SchemaError: " + w) {}
  };
  struct BoundsError : ValidationError {
    explicit BoundsError(std::string const& w)
        : ValidationError("BoundsError: " + w) {}
  };
  struct DuplicateCell : ValidationError {
    explicit DuplicateCell(std::string const& w)
        : ValidationError("DuplicateCell: " + w) {}
  };
  struct CovariateGap : ValidationError {
    explicit CovariateGap(std::string const& w)
        : ValidationError("CovariateGap: " + w) {}
  };

} // end of namespace stdisagg
