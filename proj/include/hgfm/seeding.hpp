// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace hgfm
{
	/// splitmix64 finalizer; a bijective mixer on 64-bit words.
	constexpr std::uint64_t mix64(std::uint64_t x) noexcept
	{
		x += 0x9e3779b97f4a7c15ull;
		x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
		x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
		return x ^ (x >> 31);
	}

	/// Stable seed derivation: every stream of randomness in a run is a pure function of the
	/// global seed and a handful of coordinates (epoch, layer, node, ...), so results do not
	/// depend on evaluation order.
	constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) noexcept
	{
		std::uint64_t h = mix64(base);
		for (std::uint64_t p : parts)
			h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ull));
		return h;
	}

	/// 64-bit FNV-1a.
	constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) noexcept
	{
		for (unsigned char c : bytes)
		{
			h ^= c;
			h *= 0x100000001b3ull;
		}
		return h;
	}
}
