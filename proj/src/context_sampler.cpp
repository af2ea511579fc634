// SPDX-License-Identifier: Apache-2.0

#include <hgfm/context_sampler.hpp>
#include <hgfm/error.hpp>
#include <hgfm/seeding.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <random>

namespace hgfm
{
	ContextGraph sample_context(const TextAttributedGraph &g, const MetaRelationVocab &vocab, NodeId target, const SamplerOptions &options,
			std::uint64_t seed, SamplerStats *stats)
	{
		if (target >= g.num_nodes())
			throw ValidationError("target node " + std::to_string(target) + " out of range");
		if (options.max_length == 0)
			throw ValidationError("maximum path length must be at least 1");
		ContextGraph context;
		context.target = target;
		context.neighbors.reserve(options.n_walks);
		std::mt19937_64 rng(seed);
		std::vector<EdgeId> walk_edges;
		walk_edges.reserve(options.max_length);
		for (std::size_t w = 0; w < options.n_walks; w++)
		{
			walk_edges.clear();
			NodeId current = target;
			for (std::size_t step = 0; step < options.max_length; step++)
			{
				const auto out = g.out_edges(current);
				if (out.empty())
					break;
				std::uniform_int_distribution<std::size_t> pick(0, out.size() - 1);
				const EdgeId e = out[pick(rng)];
				walk_edges.push_back(e);
				current = g.edge(e).dst;
			}
			if (stats)
			{
				stats->walks++;
				stats->edge_traversals += walk_edges.size();
			}
			if (walk_edges.empty())
			{
				if (stats)
					stats->dropped_walks++;
				continue;
			}
			std::uniform_int_distribution<std::size_t> pick_length(1, walk_edges.size());
			const std::size_t length = pick_length(rng);
			MetaPathInstance path;
			path.edges.assign(walk_edges.begin(), walk_edges.begin() + static_cast<std::ptrdiff_t>(length));
			path.relation_ids.reserve(length);
			path.nodes.reserve(length);
			for (EdgeId e : path.edges)
			{
				path.relation_ids.push_back(vocab.relation_of(g, e));
				path.nodes.push_back(g.edge(e).dst);
			}
			path.endpoint = path.nodes.back();
			context.neighbors.push_back(std::move(path));
		}
		return context;
	}

	std::uint64_t context_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t layer, NodeId node)
	{
		return derive_seed(global_seed, { 0xC0 /* context */, epoch, layer, node });
	}

	std::vector<RelationId> path_relation_ids(const TextAttributedGraph &g, const MetaRelationVocab &vocab, std::span<const NodeId> walk)
	{
		std::vector<RelationId> ids;
		for (std::size_t i = 1; i < walk.size(); i++)
		{
			bool found = false;
			for (EdgeId e : g.out_edges(walk[i - 1]))
				if (g.edge(e).dst == walk[i])
				{
					ids.push_back(vocab.relation_of(g, e));
					found = true;
					break;
				}
			if (!found)
				throw InternalError("walk steps between non-adjacent nodes " + std::to_string(walk[i - 1]) + " and " + std::to_string(walk[i]));
		}
		return ids;
	}

	std::vector<RelationId> path_relation_ids(const TextAttributedGraph &g, const MetaRelationVocab &vocab, NodeId start,
			std::span<const EdgeId> traversed)
	{
		std::vector<RelationId> ids;
		NodeId current = start;
		for (EdgeId e : traversed)
		{
			if (g.edge(e).src != current)
				throw InternalError("edge " + std::to_string(e) + " does not leave node " + std::to_string(current));
			ids.push_back(vocab.relation_of(g, e));
			current = g.edge(e).dst;
		}
		return ids;
	}

	void canonicalize(ContextGraph &context)
	{
		std::stable_sort(context.neighbors.begin(), context.neighbors.end(), [](const MetaPathInstance &a, const MetaPathInstance &b)
		{
			if (a.endpoint != b.endpoint)
				return a.endpoint < b.endpoint;
			if (a.relation_ids != b.relation_ids)
				return a.relation_ids < b.relation_ids;
			return a.length() < b.length();
		});
	}

	nlohmann::json context_to_json(const TextAttributedGraph &g, const ContextGraph &context)
	{
		nlohmann::json neighbors = nlohmann::json::array();
		for (const MetaPathInstance &p : context.neighbors)
		{
			std::vector<std::string> hops;
			hops.reserve(p.nodes.size());
			for (NodeId n : p.nodes)
				hops.push_back(g.original_id(n));
			neighbors.push_back( { { "endpoint", g.original_id(p.endpoint) }, { "length", p.length() }, { "relation_ids", p.relation_ids }, { "hops",
					hops } });
		}
		return nlohmann::json { { "target", g.original_id(context.target) }, { "neighbors", neighbors } };
	}
}
