// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/context_sampler.hpp>
#include <hgfm/feature_space.hpp>
#include <hgfm/moe_gating.hpp>
#include <hgfm/run_config.hpp>
#include <hgfm/task_heads.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hgfm
{
	/// What a forward pass reads from one dataset. The walk graph may be a subgraph of the
	/// graph the vocabulary was built from (link prediction trains on its training edges only).
	struct GraphInputs
	{
			const TextAttributedGraph *graph = nullptr;
			const MetaRelationVocab *vocab = nullptr;
			const EmbeddingTable *node_text = nullptr;
			const EmbeddingTable *relations = nullptr;
	};

	struct ForwardOptions
	{
			bool train = false;
			std::uint64_t seed = 0;         // global seed; context samples derive from (seed, epoch, layer, node)
			std::uint64_t epoch = 0;
			std::uint64_t step_seed = 0;    // dropout and gate noise
	};

	struct ExpertTrace
	{
			std::size_t expert = 0;
			double weight = 0.0;
			std::vector<double> attention;
	};

	struct NodeTrace
	{
			ContextGraph context;
			std::vector<ExpertTrace> experts;
	};

	struct ForwardStats
	{
			SamplerStats sampler;
			CgtStats cgt;
			std::vector<MoeStats> moe;   // per layer
			/// When set and the top layer runs on a single node, receives its context and the attention of each selected expert.
			NodeTrace *trace = nullptr;
	};

	/// Stacked mixture-of-experts layers plus both task heads.
	template<typename T>
	class Model
	{
		public:
			explicit Model(const RunConfig &config);

			const RunConfig& config() const noexcept
			{
				return m_config;
			}
			const std::vector<GateParams<T>>& gates() const noexcept
			{
				return m_gates;
			}
			const std::vector<ExpertSet<T>>& layers() const noexcept
			{
				return m_layers;
			}
			const NcHead<T>& nc_head() const noexcept
			{
				return m_nc;
			}
			const LpHead<T>& lp_head() const noexcept
			{
				return m_lp;
			}

			/// Every parameter tensor, in a fixed order with stable names.
			std::vector<ad::NamedTensor<T>> named_parameters() const;
			/// Parameters the optimizer updates: frozen tensors are excluded, and with head_only
			/// everything except the task heads.
			std::vector<ad::NamedTensor<T>> trainable_parameters(bool head_only) const;
			std::size_t parameter_count(bool trainable_only, bool head_only = false) const;

			/// Output embeddings of `nodes`, [|nodes| x out_dim]. Duplicate nodes are computed once.
			ad::Tensor<T> embed(ad::Tape<T> &tape, const GraphInputs &inputs, std::span<const NodeId> nodes, const ForwardOptions &options,
					ForwardStats *stats = nullptr) const;

			/// Relation-encoded paths of a sampled context, one row per neighbor.
			std::vector<T> encode_context(const ContextGraph &context, const EmbeddingTable &relations) const;

		private:
			ad::Tensor<T> embed_layer(ad::Tape<T> &tape, const GraphInputs &inputs, std::size_t layer, std::span<const NodeId> nodes,
					const ForwardOptions &options, ForwardStats *stats) const;

			RunConfig m_config;
			std::vector<GateParams<T>> m_gates;
			std::vector<ExpertSet<T>> m_layers;
			NcHead<T> m_nc;
			LpHead<T> m_lp;
	};

	/// Label-text embeddings as a [C x d] constant.
	template<typename T>
	ad::Tensor<T> table_tensor(const EmbeddingTable &table);
}
