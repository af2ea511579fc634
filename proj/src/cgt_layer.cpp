// SPDX-License-Identifier: Apache-2.0

#include <hgfm/cgt_layer.hpp>
#include <hgfm/error.hpp>
#include <hgfm/seeding.hpp>

#include <array>
#include <cmath>

namespace hgfm
{
	template<typename T>
	ad::Tensor<T> glorot_uniform(std::size_t rows, std::size_t cols, std::mt19937_64 &rng)
	{
		const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
		std::uniform_real_distribution<double> dist(-limit, limit);
		std::vector<T> values(rows * cols);
		for (T &v : values)
			v = static_cast<T>(dist(rng));
		return ad::Tensor<T>::from(ad::Shape { rows, cols }, std::move(values), true);
	}

	template<typename T>
	CgtParams<T> CgtParams<T>::init(std::size_t in_dim, std::size_t out_dim, std::size_t path_dim, std::mt19937_64 &rng)
	{
		CgtParams p;
		p.in_dim = in_dim;
		p.out_dim = out_dim;
		p.path_dim = path_dim;
		p.w_query = glorot_uniform<T>(out_dim, in_dim, rng);
		p.w_key = glorot_uniform<T>(out_dim, in_dim, rng);
		p.w_path = glorot_uniform<T>(out_dim, path_dim, rng);
		p.w_attn = glorot_uniform<T>(1, 3 * out_dim, rng);
		p.w_value = glorot_uniform<T>(out_dim, in_dim, rng);
		p.w_self = glorot_uniform<T>(out_dim, in_dim, rng);
		p.w_gamma = ad::Tensor<T>::zeros( { out_dim, path_dim }, true);
		p.b_gamma = ad::Tensor<T>::zeros( { 1, out_dim }, true);
		p.w_beta = ad::Tensor<T>::zeros( { out_dim, path_dim }, true);
		p.b_beta = ad::Tensor<T>::zeros( { 1, out_dim }, true);
		return p;
	}

	template<typename T>
	std::vector<ad::NamedTensor<T>> CgtParams<T>::named(const std::string &prefix) const
	{
		return { { prefix + "w_query", w_query }, { prefix + "w_key", w_key }, { prefix + "w_path", w_path }, { prefix + "w_attn", w_attn }, {
				prefix + "w_value", w_value }, { prefix + "w_self", w_self }, { prefix + "w_gamma", w_gamma }, { prefix + "b_gamma", b_gamma }, { prefix
				+ "w_beta", w_beta }, { prefix + "b_beta", b_beta } };
	}
	template<typename T>
	std::vector<ad::NamedTensor<T>> CgtParams<T>::path_conditioning(const std::string &prefix) const
	{
		return { { prefix + "w_path", w_path }, { prefix + "w_gamma", w_gamma }, { prefix + "b_gamma", b_gamma }, { prefix + "w_beta", w_beta }, {
				prefix + "b_beta", b_beta } };
	}

	template<typename T>
	NeighborBlock<T> make_neighbor_block(const std::vector<std::vector<std::vector<T>>> &node_features,
			const std::vector<std::vector<std::vector<T>>> &path_features, std::size_t in_dim, std::size_t path_dim)
	{
		if (node_features.size() != path_features.size())
			throw ShapeError("node and path neighbor lists disagree on the number of targets");
		NeighborBlock<T> block;
		block.offsets.push_back(0);
		std::vector<T> hv, hp;
		for (std::size_t b = 0; b < node_features.size(); b++)
		{
			if (node_features[b].size() != path_features[b].size())
				throw ShapeError("node and path neighbor lists disagree for target " + std::to_string(b));
			for (std::size_t j = 0; j < node_features[b].size(); j++)
			{
				if (node_features[b][j].size() != in_dim || path_features[b][j].size() != path_dim)
					throw ShapeError("neighbor feature dimension mismatch");
				hv.insert(hv.end(), node_features[b][j].begin(), node_features[b][j].end());
				hp.insert(hp.end(), path_features[b][j].begin(), path_features[b][j].end());
				block.owner.push_back(b);
			}
			block.offsets.push_back(block.owner.size());
		}
		block.node_features = ad::Tensor<T>::from( { block.owner.size(), in_dim }, std::move(hv));
		block.path_features = ad::Tensor<T>::from( { block.owner.size(), path_dim }, std::move(hp));
		return block;
	}

	namespace
	{
		template<typename T>
		void check_dims(const CgtParams<T> &params, const ad::Tensor<T> &targets, const NeighborBlock<T> &block)
		{
			if (targets.cols() != params.in_dim)
				throw ShapeError("target features have width " + std::to_string(targets.cols()) + ", layer expects " + std::to_string(params.in_dim));
			if (block.targets() != targets.rows())
				throw ShapeError("neighbor block covers " + std::to_string(block.targets()) + " targets, batch has " + std::to_string(targets.rows()));
			if (block.rows() > 0)
			{
				if (block.node_features.cols() != params.in_dim || block.path_features.cols() != params.path_dim)
					throw ShapeError("neighbor feature widths do not match the layer");
				if (block.node_features.rows() != block.rows() || block.path_features.rows() != block.rows() || block.owner.size() != block.rows())
					throw ShapeError("neighbor block row counts are inconsistent");
			}
		}
	}

	template<typename T>
	ad::Tensor<T> attention_scores(ad::Tape<T> &tape, const CgtParams<T> &params, const ad::Tensor<T> &targets, const NeighborBlock<T> &block,
			double slope)
	{
		check_dims(params, targets, block);
		const ad::Tensor<T> query = tape.matmul(targets, params.w_query, true);
		const std::array<ad::Tensor<T>, 3> parts { tape.gather_rows(query, block.owner), tape.matmul(block.node_features, params.w_key, true), tape.matmul(
				block.path_features, params.w_path, true) };
		const ad::Tensor<T> joint = tape.concat(parts, 1);
		const ad::Tensor<T> logits = tape.leaky_relu(tape.matmul(joint, params.w_attn, true), static_cast<T>(slope));
		return tape.segment_softmax(logits, block.offsets);
	}

	template<typename T>
	ad::Tensor<T> film_message(ad::Tape<T> &tape, const CgtParams<T> &params, const ad::Tensor<T> &node_features, const ad::Tensor<T> &path_features,
			double slope)
	{
		if (node_features.cols() != params.in_dim || path_features.cols() != params.path_dim || node_features.rows() != path_features.rows())
			throw ShapeError("FiLM inputs do not match the layer dimensions");
		const T s = static_cast<T>(slope);
		const ad::Tensor<T> gamma = tape.leaky_relu(tape.add(tape.matmul(path_features, params.w_gamma, true), params.b_gamma), s);
		const ad::Tensor<T> eta = tape.leaky_relu(tape.add(tape.matmul(path_features, params.w_beta, true), params.b_beta), s);
		const ad::Tensor<T> projected = tape.matmul(node_features, params.w_value, true);
		return tape.add(tape.mul(tape.add_scalar(gamma, T(1)), projected), eta);
	}

	template<typename T>
	ad::Tensor<T> aggregate(ad::Tape<T> &tape, const CgtParams<T> &params, const ad::Tensor<T> &targets, const NeighborBlock<T> &block,
			const CgtOptions &options, CgtStats *stats, std::vector<T> *attention)
	{
		check_dims(params, targets, block);
		if (stats)
		{
			stats->target_evaluations += targets.rows();
			stats->neighbor_messages += block.rows();
		}
		ad::Tensor<T> pre = tape.matmul(targets, params.w_self, true);
		if (block.rows() > 0)
		{
			ad::Tensor<T> alpha = attention_scores(tape, params, targets, block, options.slope);
			if (attention)
				attention->assign(alpha.values().begin(), alpha.values().end());
			alpha = tape.dropout(alpha, options.dropout, options.train, derive_seed(options.seed, { 1 }));
			const ad::Tensor<T> messages = film_message(tape, params, block.node_features, block.path_features, options.slope);
			pre = tape.add(tape.segment_weighted_sum(alpha, messages, block.offsets), pre);
		} else if (attention)
			attention->clear();
		const ad::Tensor<T> out = tape.leaky_relu(pre, static_cast<T>(options.slope));
		return tape.dropout(out, options.dropout, options.train, derive_seed(options.seed, { 2 }));
	}

#define HGFM_INSTANTIATE(T) \
	template ad::Tensor<T> glorot_uniform<T>(std::size_t, std::size_t, std::mt19937_64&); \
	template struct CgtParams<T>; \
	template NeighborBlock<T> make_neighbor_block<T>(const std::vector<std::vector<std::vector<T>>>&, \
			const std::vector<std::vector<std::vector<T>>>&, std::size_t, std::size_t); \
	template ad::Tensor<T> attention_scores<T>(ad::Tape<T>&, const CgtParams<T>&, const ad::Tensor<T>&, const NeighborBlock<T>&, double); \
	template ad::Tensor<T> film_message<T>(ad::Tape<T>&, const CgtParams<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, double); \
	template ad::Tensor<T> aggregate<T>(ad::Tape<T>&, const CgtParams<T>&, const ad::Tensor<T>&, const NeighborBlock<T>&, const CgtOptions&, \
			CgtStats*, std::vector<T>*);

	HGFM_INSTANTIATE(float)
	HGFM_INSTANTIATE(double)
#undef HGFM_INSTANTIATE
}
