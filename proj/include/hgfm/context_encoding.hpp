// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/feature_space.hpp>

#include <span>
#include <vector>

namespace hgfm
{
	enum class PathPooling
	{
		Mean,
		Max,
		Sum
	};

	/**
	 * Harmonic context encoding of a meta-path: the relation embedding of hop m (1-based) is
	 * weighted by 1/m and the weighted embeddings are summed. The result is not normalized;
	 * its magnitude carries the path length.
	 */
	template<typename T>
	std::vector<T> encode_path(std::span<const RelationId> path, const EmbeddingTable &relations);

	/// Same as `encode_path`, writing into `out` (relations.dim entries).
	template<typename T>
	void encode_path_into(std::span<const RelationId> path, const EmbeddingTable &relations, std::span<T> out);

	/// Order-insensitive poolings kept for comparison with the harmonic encoding.
	template<typename T>
	std::vector<T> encode_path_pooled(std::span<const RelationId> path, const EmbeddingTable &relations, PathPooling mode);
}
