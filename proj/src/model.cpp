// SPDX-License-Identifier: Apache-2.0

#include <hgfm/model.hpp>
#include <hgfm/error.hpp>
#include <hgfm/seeding.hpp>

#include <algorithm>
#include <random>

namespace hgfm
{
	template<typename T>
	Model<T>::Model(const RunConfig &config) :
			m_config(config)
	{
		m_config.validate();
		std::mt19937_64 rng(derive_seed(config.seed, { 0x1417 /* init */}));
		for (std::size_t l = 0; l < config.layers; l++)
		{
			m_gates.push_back(GateParams<T>::init(config.layer_in(l), config.n_experts, config.top_k, rng));
			m_layers.push_back(ExpertSet<T>::init(config.n_experts, config.layer_in(l), config.layer_out(l), config.embed_dim, rng));
		}
		m_nc = NcHead<T>::init(config.out_dim, config.embed_dim, config.head_hidden, rng);
		m_lp = LpHead<T>::init(config.out_dim, config.head_hidden, rng);
		if (!config.path_conditioning())
			for (ExpertSet<T> &set : m_layers)
				for (CgtParams<T> &expert : set.experts)
					for (ad::NamedTensor<T> &p : expert.path_conditioning(""))
					{
						std::fill(p.tensor.values().begin(), p.tensor.values().end(), T(0));
						p.tensor.set_requires_grad(false);
					}
	}

	template<typename T>
	std::vector<ad::NamedTensor<T>> Model<T>::named_parameters() const
	{
		std::vector<ad::NamedTensor<T>> all;
		for (std::size_t l = 0; l < m_layers.size(); l++)
		{
			const std::string prefix = "layer" + std::to_string(l) + ".";
			auto g = m_gates[l].named(prefix + "gate.");
			auto e = m_layers[l].named(prefix);
			all.insert(all.end(), g.begin(), g.end());
			all.insert(all.end(), e.begin(), e.end());
		}
		auto nc = m_nc.named("nc_head.");
		auto lp = m_lp.named("lp_head.");
		all.insert(all.end(), nc.begin(), nc.end());
		all.insert(all.end(), lp.begin(), lp.end());
		return all;
	}

	template<typename T>
	std::vector<ad::NamedTensor<T>> Model<T>::trainable_parameters(bool head_only) const
	{
		std::vector<ad::NamedTensor<T>> result;
		for (ad::NamedTensor<T> &p : named_parameters())
		{
			if (!p.tensor.requires_grad())
				continue;
			if (head_only && !p.name.starts_with("nc_head.") && !p.name.starts_with("lp_head."))
				continue;
			result.push_back(std::move(p));
		}
		return result;
	}

	template<typename T>
	std::size_t Model<T>::parameter_count(bool trainable_only, bool head_only) const
	{
		std::size_t n = 0;
		for (const ad::NamedTensor<T> &p : trainable_only ? trainable_parameters(head_only) : named_parameters())
			n += p.tensor.size();
		return n;
	}

	template<typename T>
	ad::Tensor<T> table_tensor(const EmbeddingTable &table)
	{
		return ad::Tensor<T>::from( { table.count, table.dim }, std::vector<T>(table.values.begin(), table.values.end()));
	}

	template<typename T>
	std::vector<T> Model<T>::encode_context(const ContextGraph &context, const EmbeddingTable &relations) const
	{
		const std::size_t d = relations.dim;
		const auto pooling = parse_path_pooling(m_config.path_encoding);
		std::vector<T> out(context.neighbors.size() * d, T(0));
		for (std::size_t j = 0; j < context.neighbors.size(); j++)
		{
			const auto &ids = context.neighbors[j].relation_ids;
			if (!pooling)
				encode_path_into<T>(ids, relations, std::span<T>(out.data() + j * d, d));
			else
			{
				const std::vector<T> v = encode_path_pooled<T>(ids, relations, *pooling);
				std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(j * d));
			}
		}
		return out;
	}

	namespace
	{
		std::size_t index_of(const std::vector<NodeId> &sorted, NodeId node)
		{
			return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), node) - sorted.begin());
		}
	}

	template<typename T>
	ad::Tensor<T> Model<T>::embed(ad::Tape<T> &tape, const GraphInputs &inputs, std::span<const NodeId> nodes, const ForwardOptions &options,
			ForwardStats *stats) const
	{
		if (!inputs.graph || !inputs.vocab || !inputs.node_text || !inputs.relations)
			throw ValidationError("forward pass needs a graph, a vocabulary and embedding tables");
		if (inputs.node_text->dim != m_config.embed_dim || inputs.relations->dim != m_config.embed_dim)
			throw ValidationError(
					"embedding dimension " + std::to_string(inputs.node_text->dim) + " does not match embed_dim " + std::to_string(m_config.embed_dim));
		if (inputs.node_text->count != inputs.graph->num_nodes())
			throw ValidationError("node embedding table does not cover the graph");
		if (stats && stats->moe.size() < m_layers.size())
			stats->moe.resize(m_layers.size());
		std::vector<NodeId> unique(nodes.begin(), nodes.end());
		std::sort(unique.begin(), unique.end());
		unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
		if (unique.size() == nodes.size() && std::equal(unique.begin(), unique.end(), nodes.begin()))
			return embed_layer(tape, inputs, m_layers.size(), nodes, options, stats);
		const ad::Tensor<T> h = embed_layer(tape, inputs, m_layers.size(), unique, options, stats);
		std::vector<std::size_t> index(nodes.size());
		for (std::size_t i = 0; i < nodes.size(); i++)
			index[i] = index_of(unique, nodes[i]);
		return tape.gather_rows(h, index);
	}

	template<typename T>
	ad::Tensor<T> Model<T>::embed_layer(ad::Tape<T> &tape, const GraphInputs &inputs, std::size_t layer, std::span<const NodeId> nodes,
			const ForwardOptions &options, ForwardStats *stats) const
	{
		const std::size_t d = m_config.embed_dim;
		if (layer == 0)
		{
			std::vector<T> values;
			values.reserve(nodes.size() * d);
			for (NodeId u : nodes)
			{
				const auto row = inputs.node_text->row(u);
				values.insert(values.end(), row.begin(), row.end());
			}
			return ad::Tensor<T>::from( { nodes.size(), d }, std::move(values));
		}
		const std::size_t l = layer - 1;
		const SamplerOptions sampler { m_config.n_walks, m_config.max_path_length };

		// contexts, canonically ordered; neighbors of target b occupy rows offsets[b]..offsets[b+1]
		std::vector<std::size_t> offsets { 0 }, owner;
		std::vector<NodeId> endpoints;
		std::vector<T> paths;
		const bool tracing = stats && stats->trace && layer == m_layers.size() && nodes.size() == 1;
		for (std::size_t b = 0; b < nodes.size(); b++)
		{
			ContextGraph context = sample_context(*inputs.graph, *inputs.vocab, nodes[b],
					sampler, context_seed(options.seed, options.epoch, layer, nodes[b]), stats ? &stats->sampler : nullptr);
			canonicalize(context);
			const std::vector<T> hp = encode_context(context, *inputs.relations);
			paths.insert(paths.end(), hp.begin(), hp.end());
			for (const MetaPathInstance &p : context.neighbors)
			{
				endpoints.push_back(p.endpoint);
				owner.push_back(b);
			}
			offsets.push_back(owner.size());
			if (tracing)
				stats->trace->context = std::move(context);
		}
		const std::size_t M = owner.size();

		std::vector<NodeId> all(nodes.begin(), nodes.end());
		all.insert(all.end(), endpoints.begin(), endpoints.end());
		std::sort(all.begin(), all.end());
		all.erase(std::unique(all.begin(), all.end()), all.end());
		const ad::Tensor<T> below = embed_layer(tape, inputs, layer - 1, all, options, stats);
		std::vector<std::size_t> target_rows(nodes.size()), neighbor_rows(M);
		for (std::size_t b = 0; b < nodes.size(); b++)
			target_rows[b] = index_of(all, nodes[b]);
		for (std::size_t j = 0; j < M; j++)
			neighbor_rows[j] = index_of(all, endpoints[j]);
		const ad::Tensor<T> hu = tape.gather_rows(below, target_rows);
		const ad::Tensor<T> hv = tape.gather_rows(below, neighbor_rows);
		const ad::Tensor<T> hp = ad::Tensor<T>::from( { M, d }, std::move(paths));

		std::vector<std::uint64_t> keys(nodes.begin(), nodes.end());
		GateOptions gate_options;
		gate_options.train = options.train;
		gate_options.seed = derive_seed(options.step_seed, { 0x6a7e /* gate */, layer });
		gate_options.row_keys = keys;
		const GateResult<T> gating = gate(tape, m_gates[l], hu, gate_options);

		const ExpertFn<T> run_expert = [&](std::size_t i, std::span<const std::size_t> rows)
		{
			NeighborBlock<T> block;
			std::vector<std::size_t> picked;
			block.offsets.push_back(0);
			for (std::size_t r = 0; r < rows.size(); r++)
			{
				for (std::size_t k = offsets[rows[r]]; k < offsets[rows[r] + 1]; k++)
				{
					picked.push_back(k);
					block.owner.push_back(r);
				}
				block.offsets.push_back(block.owner.size());
			}
			block.node_features = tape.gather_rows(hv, picked);
			block.path_features = tape.gather_rows(hp, picked);
			CgtOptions cgt;
			cgt.slope = m_config.leaky_slope;
			cgt.dropout = m_config.dropout;
			cgt.train = options.train;
			cgt.seed = derive_seed(options.step_seed, { 0xc67 /* expert */, layer, i });
			std::vector<T> attention;
			const ad::Tensor<T> targets = tape.gather_rows(hu, rows);
			ad::Tensor<T> out = aggregate(tape, m_layers[l].experts[i], targets, block, cgt, stats ? &stats->cgt : nullptr,
					tracing ? &attention : nullptr);
			if (tracing)
				stats->trace->experts.push_back( { i, static_cast<double>(gating.weights.at(0, i)), std::vector<double>(attention.begin(), attention.end()) });
			return out;
		};
		return mixture_forward(tape, gating, nodes.size(), m_config.layer_out(l), run_expert, stats ? &stats->moe[l] : nullptr);
	}

	template class Model<float> ;
	template class Model<double> ;
	template ad::Tensor<float> table_tensor<float>(const EmbeddingTable&);
	template ad::Tensor<double> table_tensor<double>(const EmbeddingTable&);
}
