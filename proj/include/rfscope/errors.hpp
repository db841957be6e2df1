// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rfscope {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed architecture file text (bad syntax, unknown kind, duplicate id,
// dangling predecessor). Carries a position where one is known.
struct ParseError : Error {
  using Error::Error;
};

// Structural problems with an in-memory graph (cycles, invalid graphs passed
// to operations that require a valid one).
struct GraphError : Error {
  using Error::Error;
};

// Tensor shape mismatches inside the evaluation engine.
struct ShapeError : Error {
  using Error::Error;
};

// File and serialization failures.
struct IoError : Error {
  using Error::Error;
};

// Data that is technically well-formed but unusable (e.g. an all-zero
// gradient map, which has no statistics).
struct DegenerateDataError : Error {
  using Error::Error;
};

}  // namespace rfscope
