// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/autodiff.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hgfm
{
	enum class DType : std::uint8_t
	{
		F32 = 1,
		F64 = 2
	};

	/// One named matrix with its raw little-endian payload.
	struct ArchiveEntry
	{
			std::string name;
			ad::Shape shape;
			DType dtype = DType::F32;
			std::vector<std::uint8_t> payload;

			template<typename T>
			static ArchiveEntry from_values(std::string name, ad::Shape shape, std::span<const T> values);
			template<typename T>
			std::vector<T> values() const;
	};

	/**
	 * Named-tensor archive:
	 *
	 *   "H2GC" u32 version=1
	 *   u64 metadata length, metadata bytes (JSON text)
	 *   u64 entry count, then per entry:
	 *     u32 name length, name, u8 dtype, u64 rows, u64 cols, rows*cols values
	 *   u64 manifest hash: FNV-1a over every preceding byte
	 *
	 * Payloads keep the native precision of the tensor, so reloading is bit-exact in both modes.
	 */
	struct Archive
	{
			std::string metadata;
			std::vector<ArchiveEntry> entries;

			const ArchiveEntry* find(const std::string &name) const;
	};

	void save_archive(const Archive &archive, const std::filesystem::path &path);
	Archive load_archive(const std::filesystem::path &path);
	/// Manifest hash of an archive file as stored in its trailer.
	std::uint64_t archive_manifest_hash(const std::filesystem::path &path);
}
