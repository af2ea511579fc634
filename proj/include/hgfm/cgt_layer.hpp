// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/autodiff.hpp>

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace hgfm
{
	/**
	 * Parameters of one context-adaptive graph transformer expert.
	 *
	 * Node projections map `in_dim` to `out_dim`; path projections read the static meta-path
	 * embedding of width `path_dim`. Weights are stored as [out x in] and applied as x W^T.
	 */
	template<typename T>
	struct CgtParams
	{
			ad::Tensor<T> w_query;   // target projection in attention
			ad::Tensor<T> w_key;     // neighbor projection in attention
			ad::Tensor<T> w_path;    // meta-path projection in attention
			ad::Tensor<T> w_attn;    // [1 x 3*out] scoring vector
			ad::Tensor<T> w_value;   // neighbor message projection
			ad::Tensor<T> w_self;    // residual projection of the target
			ad::Tensor<T> w_gamma, b_gamma;   // FiLM scale
			ad::Tensor<T> w_beta, b_beta;     // FiLM shift
			std::size_t in_dim = 0;
			std::size_t out_dim = 0;
			std::size_t path_dim = 0;

			/// Glorot-uniform projections; FiLM weights and every bias start at zero.
			static CgtParams init(std::size_t in_dim, std::size_t out_dim, std::size_t path_dim, std::mt19937_64 &rng);
			std::vector<ad::NamedTensor<T>> named(const std::string &prefix) const;
			/// The tensors that condition the layer on meta-paths: w_path and the FiLM generator.
			std::vector<ad::NamedTensor<T>> path_conditioning(const std::string &prefix) const;
	};

	/// Context neighbors of a batch of targets, flattened. Rows offsets[b]..offsets[b+1] belong to target b.
	template<typename T>
	struct NeighborBlock
	{
			ad::Tensor<T> node_features;   // [M x in]
			ad::Tensor<T> path_features;   // [M x path_dim]
			std::vector<std::size_t> offsets;
			std::vector<std::size_t> owner;   // target row of every neighbor row

			std::size_t targets() const
			{
				return offsets.empty() ? 0 : offsets.size() - 1;
			}
			std::size_t rows() const
			{
				return offsets.empty() ? 0 : offsets.back();
			}
	};

	/// Builds a block from per-target neighbor lists (row-major features).
	template<typename T>
	NeighborBlock<T> make_neighbor_block(const std::vector<std::vector<std::vector<T>>> &node_features,
			const std::vector<std::vector<std::vector<T>>> &path_features, std::size_t in_dim, std::size_t path_dim);

	struct CgtOptions
	{
			double slope = 0.01;
			double dropout = 0.0;
			bool train = false;
			std::uint64_t seed = 0;
	};

	struct CgtStats
	{
			std::uint64_t target_evaluations = 0;
			std::uint64_t neighbor_messages = 0;
	};

	/// Attention of every neighbor on its target, softmax-normalized within each target's neighbor set. [M x 1]
	template<typename T>
	ad::Tensor<T> attention_scores(ad::Tape<T> &tape, const CgtParams<T> &params, const ad::Tensor<T> &targets, const NeighborBlock<T> &block,
			double slope);

	/// FiLM-modulated messages (gamma + 1) * (W_v h_v) + eta, gamma and eta generated from the path. [M x out]
	template<typename T>
	ad::Tensor<T> film_message(ad::Tape<T> &tape, const CgtParams<T> &params, const ad::Tensor<T> &node_features,
			const ad::Tensor<T> &path_features, double slope);

	/// Attention-weighted message sum plus the residual projection of the target, then LeakyReLU and
	/// output dropout. Targets without neighbors reduce to LeakyReLU(W_self h_u). [B x out]
	/// `attention` (optional) receives the attention weights before dropout.
	template<typename T>
	ad::Tensor<T> aggregate(ad::Tape<T> &tape, const CgtParams<T> &params, const ad::Tensor<T> &targets, const NeighborBlock<T> &block,
			const CgtOptions &options, CgtStats *stats = nullptr, std::vector<T> *attention = nullptr);

	/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
	template<typename T>
	ad::Tensor<T> glorot_uniform(std::size_t rows, std::size_t cols, std::mt19937_64 &rng);
}
