// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hgfm
{
	/// Base class for every error raised by the library.
	class Error : public std::runtime_error
	{
		public:
			using std::runtime_error::runtime_error;
	};

	/// Bad user input: malformed files, inconsistent configuration, violated preconditions.
	/// The command line maps this to exit code 1.
	class ValidationError : public Error
	{
		public:
			using Error::Error;
	};

	/// Incompatible tensor or vector shapes.
	class ShapeError : public Error
	{
		public:
			using Error::Error;
	};

	/// Non-finite value or domain violation detected in checked numeric mode.
	class NumericError : public Error
	{
		public:
			using Error::Error;
	};

	/// Broken internal invariant (a bug rather than bad input).
	class InternalError : public Error
	{
		public:
			using Error::Error;
	};
}
