#pragma once

#include <doctest.h>

#include "prunekit/error.hpp"

// Asserts that evaluating `expr` throws prunekit::Error with the given code.
// Compares code names so failures print readable diagnostics.
#define CHECK_PK_ERROR(expr, expected_code)                                   \
  do {                                                                        \
    bool caught_pk_ = false;                                                  \
    try {                                                                     \
      (void)(expr);                                                           \
    } catch (const prunekit::Error& e_pk_) {                                  \
      caught_pk_ = true;                                                      \
      CHECK(prunekit::error_code_name(e_pk_.code()) ==                        \
            prunekit::error_code_name(prunekit::ErrorCode::expected_code));   \
    }                                                                         \
    CHECK_MESSAGE(caught_pk_, #expr " was expected to throw");                \
  } while (0)
