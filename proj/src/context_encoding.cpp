// SPDX-License-Identifier: Apache-2.0

#include <hgfm/context_encoding.hpp>
#include <hgfm/error.hpp>

#include <algorithm>

namespace
{
	void require_path(std::span<const hgfm::RelationId> path, const hgfm::EmbeddingTable &relations)
	{
		if (path.empty())
			throw hgfm::ValidationError("cannot encode an empty meta-path");
		for (hgfm::RelationId id : path)
			if (id >= relations.count)
				throw hgfm::ValidationError("relation id " + std::to_string(id) + " has no embedding");
	}
}

namespace hgfm
{
	template<typename T>
	void encode_path_into(std::span<const RelationId> path, const EmbeddingTable &relations, std::span<T> out)
	{
		require_path(path, relations);
		if (out.size() != relations.dim)
			throw ShapeError("path embedding buffer has the wrong dimension");
		std::fill(out.begin(), out.end(), T(0));
		for (std::size_t m = 0; m < path.size(); m++)
		{
			const T weight = T(1) / static_cast<T>(m + 1);
			const auto r = relations.row(path[m]);
			for (std::size_t j = 0; j < out.size(); j++)
				out[j] += weight * static_cast<T>(r[j]);
		}
	}

	template<typename T>
	std::vector<T> encode_path(std::span<const RelationId> path, const EmbeddingTable &relations)
	{
		std::vector<T> out(relations.dim);
		encode_path_into<T>(path, relations, out);
		return out;
	}

	template<typename T>
	std::vector<T> encode_path_pooled(std::span<const RelationId> path, const EmbeddingTable &relations, PathPooling mode)
	{
		require_path(path, relations);
		std::vector<T> out(relations.dim, T(0));
		for (std::size_t m = 0; m < path.size(); m++)
		{
			const auto r = relations.row(path[m]);
			for (std::size_t j = 0; j < out.size(); j++)
			{
				const T x = static_cast<T>(r[j]);
				if (mode == PathPooling::Max)
					out[j] = m == 0 ? x : std::max(out[j], x);
				else
					out[j] += x;
			}
		}
		if (mode == PathPooling::Mean)
			for (T &x : out)
				x /= static_cast<T>(path.size());
		return out;
	}

	template void encode_path_into<float>(std::span<const RelationId>, const EmbeddingTable&, std::span<float>);
	template void encode_path_into<double>(std::span<const RelationId>, const EmbeddingTable&, std::span<double>);
	template std::vector<float> encode_path<float>(std::span<const RelationId>, const EmbeddingTable&);
	template std::vector<double> encode_path<double>(std::span<const RelationId>, const EmbeddingTable&);
	template std::vector<float> encode_path_pooled<float>(std::span<const RelationId>, const EmbeddingTable&, PathPooling);
	template std::vector<double> encode_path_pooled<double>(std::span<const RelationId>, const EmbeddingTable&, PathPooling);
}
