#pragma once

#include <stdexcept>
#include <string>

namespace chaoslab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Symmetric eigensolver did not converge or produced a non-PSD spectrum.
class EigenFailure : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Contraction order outside [0, min(p, q)].
class RankError : public Error {
public:
    using Error::Error;
};

class NotPureChaos : public Error {
public:
    using Error::Error;
};

/// FFT density grid truncates too much mass or tail.
class GridTooCoarse : public Error {
public:
    using Error::Error;
};

class QuadratureFailure : public Error {
public:
    using Error::Error;
};

/// Neither circulant embedding nor Cholesky produced a sampler.
class EmbeddingFailure : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

}  // namespace chaoslab
