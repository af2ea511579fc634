// SPDX-License-Identifier: Apache-2.0

#include <hgfm/moe_gating.hpp>
#include <hgfm/error.hpp>
#include <hgfm/seeding.hpp>

#include <algorithm>
#include <numeric>

namespace hgfm
{
	template<typename T>
	GateParams<T> GateParams<T>::init(std::size_t in_dim, std::size_t n_experts, std::size_t top_k, std::mt19937_64 &rng)
	{
		if (n_experts == 0 || top_k == 0 || top_k > n_experts)
			throw ValidationError("gate needs 1 <= k <= n (got n=" + std::to_string(n_experts) + ", k=" + std::to_string(top_k) + ")");
		GateParams p;
		p.n_experts = n_experts;
		p.top_k = top_k;
		p.w_gate = glorot_uniform<T>(n_experts, in_dim, rng);
		p.w_noise = glorot_uniform<T>(n_experts, in_dim, rng);
		return p;
	}
	template<typename T>
	std::vector<ad::NamedTensor<T>> GateParams<T>::named(const std::string &prefix) const
	{
		return { { prefix + "w_gate", w_gate }, { prefix + "w_noise", w_noise } };
	}

	template<typename T>
	ExpertSet<T> ExpertSet<T>::init(std::size_t n_experts, std::size_t in_dim, std::size_t out_dim, std::size_t path_dim, std::mt19937_64 &rng)
	{
		ExpertSet set;
		for (std::size_t i = 0; i < n_experts; i++)
			set.experts.push_back(CgtParams<T>::init(in_dim, out_dim, path_dim, rng));
		return set;
	}
	template<typename T>
	std::vector<ad::NamedTensor<T>> ExpertSet<T>::named(const std::string &prefix) const
	{
		std::vector<ad::NamedTensor<T>> all;
		for (std::size_t i = 0; i < experts.size(); i++)
		{
			auto part = experts[i].named(prefix + "expert" + std::to_string(i) + ".");
			all.insert(all.end(), part.begin(), part.end());
		}
		return all;
	}

	std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k)
	{
		if (k > values.size())
			throw ValidationError("top-k with k larger than the number of entries");
		std::vector<std::size_t> order(values.size());
		std::iota(order.begin(), order.end(), 0);
		std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b)
		{
			return values[a] > values[b];
		});
		order.resize(k);
		std::sort(order.begin(), order.end());
		return order;
	}

	template<typename T>
	GateResult<T> gate(ad::Tape<T> &tape, const GateParams<T> &params, const ad::Tensor<T> &inputs, const GateOptions &options)
	{
		if (inputs.cols() != params.w_gate.cols())
			throw ShapeError("gate input width " + std::to_string(inputs.cols()) + " does not match " + std::to_string(params.w_gate.cols()));
		if (!options.row_keys.empty() && options.row_keys.size() != inputs.rows())
			throw ShapeError("gate needs one noise key per row");
		const std::size_t B = inputs.rows(), n = params.n_experts;
		ad::Tensor<T> logits = tape.matmul(inputs, params.w_gate, true);
		if (options.train)
		{
			std::vector<T> eps(B * n);
			for (std::size_t b = 0; b < B; b++)
			{
				std::mt19937_64 rng(derive_seed(options.seed, { options.row_keys.empty() ? b : options.row_keys[b] }));
				std::normal_distribution<double> normal(0.0, 1.0);
				for (std::size_t i = 0; i < n; i++)
					eps[b * n + i] = static_cast<T>(normal(rng));
			}
			const ad::Tensor<T> noise_scale = tape.softplus(tape.matmul(inputs, params.w_noise, true));
			logits = tape.add(logits, tape.mul(ad::Tensor<T>::from( { B, n }, std::move(eps)), noise_scale));
		}
		GateResult<T> result;
		result.mask.assign(B * n, 0);
		result.rows_of.resize(n);
		std::vector<double> row(n);
		for (std::size_t b = 0; b < B; b++)
		{
			for (std::size_t i = 0; i < n; i++)
				row[i] = static_cast<double>(logits.at(b, i));
			for (std::size_t i : top_k_indices(row, params.top_k))
			{
				result.mask[b * n + i] = 1;
				result.rows_of[i].push_back(b);
			}
		}
		result.weights = tape.masked_softmax(logits, result.mask);
		return result;
	}

	void MoeStats::merge(const MoeStats &other)
	{
		gatings += other.gatings;
		expert_evaluations += other.expert_evaluations;
		if (load.size() < other.load.size())
			load.resize(other.load.size(), 0);
		for (std::size_t i = 0; i < other.load.size(); i++)
			load[i] += other.load[i];
	}

	template<typename T>
	ad::Tensor<T> mixture_forward(ad::Tape<T> &tape, const GateResult<T> &gating, std::size_t batch_rows, std::size_t out_dim, const ExpertFn<T> &expert,
			MoeStats *stats)
	{
		const std::size_t n = gating.rows_of.size();
		if (gating.weights.rows() != batch_rows || gating.weights.cols() != n)
			throw ShapeError("gate weights do not match the batch");
		if (stats)
		{
			stats->gatings += batch_rows;
			if (stats->load.size() < n)
				stats->load.resize(n, 0);
		}
		ad::Tensor<T> out;
		for (std::size_t i = 0; i < n; i++)
		{
			const std::vector<std::size_t> &rows = gating.rows_of[i];
			if (rows.empty())
				continue;
			const ad::Tensor<T> y = expert(i, rows);
			if (y.rows() != rows.size() || y.cols() != out_dim)
				throw ShapeError("expert " + std::to_string(i) + " returned " + ad::to_string(y.shape()));
			const ad::Tensor<T> w = tape.gather_rows(tape.slice(gating.weights, 1, i, i + 1), rows);
			const ad::Tensor<T> part = tape.scatter_rows(tape.mul(y, w), rows, batch_rows);
			out = out.defined() ? tape.add(out, part) : part;
			if (stats)
			{
				stats->expert_evaluations += rows.size();
				stats->load[i] += rows.size();
			}
		}
		if (!out.defined())
			out = ad::Tensor<T>::zeros( { batch_rows, out_dim });
		return out;
	}

#define HGFM_INSTANTIATE(T) \
	template struct GateParams<T>; \
	template struct ExpertSet<T>; \
	template GateResult<T> gate<T>(ad::Tape<T>&, const GateParams<T>&, const ad::Tensor<T>&, const GateOptions&); \
	template ad::Tensor<T> mixture_forward<T>(ad::Tape<T>&, const GateResult<T>&, std::size_t, std::size_t, const ExpertFn<T>&, MoeStats*);

	HGFM_INSTANTIATE(float)
	HGFM_INSTANTIATE(double)
#undef HGFM_INSTANTIATE
}
