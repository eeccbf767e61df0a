#pragma once

#include <stdexcept>
#include <string>

namespace scalecalc {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// grid_core
struct NonCommensurate : Error { using Error::Error; };
struct BadStep : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };

// scale_ops
struct HaloExhausted : Error { using Error::Error; };
struct InsufficientLadder : Error { using Error::Error; };
struct DegenerateFit : Error { using Error::Error; };

// holder_gen
struct BadParams : Error { using Error::Error; };
struct UnknownName : Error { using Error::Error; };

// lagrangian
struct SyntaxError : Error {
    SyntaxError(const std::string& msg, std::size_t pos)
        : Error(msg + " (at position " + std::to_string(pos) + ")"), position(pos) {}
    std::size_t position;
};
struct UnknownVariable : Error { using Error::Error; };
struct OrderMismatch : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };

// variational
struct InadmissibleVariation : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct SingularJacobian : Error { using Error::Error; };
struct NoRoot : Error { using Error::Error; };
struct IndeterminateT : Error { using Error::Error; };

// cli
struct GridMismatch : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };

} // namespace scalecalc
