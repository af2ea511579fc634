// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/cgt_layer.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hgfm
{
	template<typename T>
	struct GateParams
	{
			ad::Tensor<T> w_gate;    // [n x in]
			ad::Tensor<T> w_noise;   // [n x in]
			std::size_t n_experts = 0;
			std::size_t top_k = 0;

			static GateParams init(std::size_t in_dim, std::size_t n_experts, std::size_t top_k, std::mt19937_64 &rng);
			std::vector<ad::NamedTensor<T>> named(const std::string &prefix) const;
	};

	template<typename T>
	struct ExpertSet
	{
			std::vector<CgtParams<T>> experts;

			static ExpertSet init(std::size_t n_experts, std::size_t in_dim, std::size_t out_dim, std::size_t path_dim, std::mt19937_64 &rng);
			std::vector<ad::NamedTensor<T>> named(const std::string &prefix) const;
			std::size_t out_dim() const
			{
				return experts.empty() ? 0 : experts.front().out_dim;
			}
	};

	struct GateOptions
	{
			bool train = false;
			/// Noise for row b is drawn from a stream seeded by derive_seed(seed, {row_keys[b]})
			/// (or the row index when no keys are given), so it does not depend on batch layout.
			std::uint64_t seed = 0;
			std::span<const std::uint64_t> row_keys;
	};

	template<typename T>
	struct GateResult
	{
			ad::Tensor<T> weights;                              // [B x n], exactly k non-zeros per row
			std::vector<std::uint8_t> mask;                     // [B x n] selection
			std::vector<std::vector<std::size_t>> rows_of;      // per expert, selected batch rows in ascending order
	};

	/// Indices of the k largest values; ties go to the lower index.
	std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k);

	/// Noisy top-k gate: H = x W_g^T + eps * softplus(x W_eps^T) with eps ~ N(0,1) in training only;
	/// softmax over the selected entries. The selection is not differentiated.
	template<typename T>
	GateResult<T> gate(ad::Tape<T> &tape, const GateParams<T> &params, const ad::Tensor<T> &inputs, const GateOptions &options);

	struct MoeStats
	{
			std::uint64_t gatings = 0;
			std::uint64_t expert_evaluations = 0;   // rows pushed through some expert
			std::vector<std::uint64_t> load;        // selections per expert

			void merge(const MoeStats &other);
	};

	/// Runs expert i on the batch rows in `rows`, returning [|rows| x out].
	template<typename T>
	using ExpertFn = std::function<ad::Tensor<T>(std::size_t expert, std::span<const std::size_t> rows)>;

	/// Gated sum over selected experts. Only experts with at least one selected row execute,
	/// and each only on its rows.
	template<typename T>
	ad::Tensor<T> mixture_forward(ad::Tape<T> &tape, const GateResult<T> &gating, std::size_t batch_rows, std::size_t out_dim, const ExpertFn<T> &expert,
			MoeStats *stats = nullptr);
}
