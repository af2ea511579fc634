// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/feature_space.hpp>
#include <hgfm/graph_store.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace hgfm
{
	/// One truncated walk from a target: hop m traverses `edges[m]` and lands on `nodes[m]`.
	struct MetaPathInstance
	{
			std::vector<RelationId> relation_ids;
			std::vector<EdgeId> edges;
			std::vector<NodeId> nodes;
			NodeId endpoint = 0;

			std::size_t length() const noexcept
			{
				return relation_ids.size();
			}
			friend bool operator==(const MetaPathInstance&, const MetaPathInstance&) = default;
	};

	struct ContextGraph
	{
			NodeId target = 0;
			std::vector<MetaPathInstance> neighbors;

			friend bool operator==(const ContextGraph&, const ContextGraph&) = default;
	};

	struct SamplerOptions
	{
			std::size_t n_walks = 50;
			std::size_t max_length = 4;
	};

	struct SamplerStats
	{
			std::uint64_t edge_traversals = 0;
			std::uint64_t walks = 0;
			std::uint64_t dropped_walks = 0;
	};

	/**
	 * N uniform random walks of at most `max_length` hops from `target`, each truncated to a
	 * length drawn uniformly from {1..hops actually taken}. A walk that cannot leave the
	 * target is dropped. Duplicates are kept.
	 */
	ContextGraph sample_context(const TextAttributedGraph &g, const MetaRelationVocab &vocab, NodeId target, const SamplerOptions &options,
			std::uint64_t seed, SamplerStats *stats = nullptr);

	/// Seed of the context sample for one node; independent of batch composition and order.
	std::uint64_t context_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t layer, NodeId node);

	/// Relation ids of a walk given by consecutive nodes. Uses the first matching edge when
	/// several connect the same pair; use the edge-id overload for multigraphs.
	std::vector<RelationId> path_relation_ids(const TextAttributedGraph &g, const MetaRelationVocab &vocab, std::span<const NodeId> walk);
	std::vector<RelationId> path_relation_ids(const TextAttributedGraph &g, const MetaRelationVocab &vocab, NodeId start,
			std::span<const EdgeId> traversed);

	/// Sorts neighbors by (endpoint, relation ids, length) so reductions are order independent.
	void canonicalize(ContextGraph &context);

	nlohmann::json context_to_json(const TextAttributedGraph &g, const ContextGraph &context);
}
