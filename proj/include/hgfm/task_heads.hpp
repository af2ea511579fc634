// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/autodiff.hpp>

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hgfm
{
	/// Scores a (node, label text) pair: w2 . leaky(w1 [h_u || h_c] + b1) + b2.
	/// Shared across classes, so any number of candidate labels can be scored.
	template<typename T>
	struct NcHead
	{
			ad::Tensor<T> w1, b1, w2, b2;
			std::size_t node_dim = 0;
			std::size_t label_dim = 0;

			static NcHead init(std::size_t node_dim, std::size_t label_dim, std::size_t hidden, std::mt19937_64 &rng);
			std::vector<ad::NamedTensor<T>> named(const std::string &prefix) const;
	};

	/// Link logit w2 . leaky(w1 [h_u || h_v || h_u * h_v] + b1) + b2.
	template<typename T>
	struct LpHead
	{
			ad::Tensor<T> w1, b1, w2, b2;
			std::size_t node_dim = 0;

			static LpHead init(std::size_t node_dim, std::size_t hidden, std::mt19937_64 &rng);
			std::vector<ad::NamedTensor<T>> named(const std::string &prefix) const;
	};

	/// [B x C] logits of every node against every label row.
	template<typename T>
	ad::Tensor<T> nc_logits(ad::Tape<T> &tape, const NcHead<T> &head, const ad::Tensor<T> &nodes, const ad::Tensor<T> &labels, double slope);

	/// Row-wise softmax of nc_logits as plain values, [B x C].
	template<typename T>
	std::vector<T> nc_scores(const NcHead<T> &head, const ad::Tensor<T> &nodes, const ad::Tensor<T> &labels, double slope);

	/// Mean cross-entropy of [B x C] logits against class indices.
	template<typename T>
	ad::Tensor<T> nc_loss(ad::Tape<T> &tape, const ad::Tensor<T> &logits, std::span<const std::size_t> targets);

	/// [B x 1] link logits.
	template<typename T>
	ad::Tensor<T> lp_logits(ad::Tape<T> &tape, const LpHead<T> &head, const ad::Tensor<T> &u, const ad::Tensor<T> &v, double slope);

	/// Link probabilities sigmoid(lp_logits), one per row.
	template<typename T>
	std::vector<T> lp_scores(const LpHead<T> &head, const ad::Tensor<T> &u, const ad::Tensor<T> &v, double slope);

	/// Mean binary cross-entropy of [B x 1] logits against 0/1 labels.
	template<typename T>
	ad::Tensor<T> lp_loss(ad::Tape<T> &tape, const ad::Tensor<T> &logits, std::span<const std::uint8_t> labels);

	/// Area under the ROC curve from rank statistics; tied scores share their average rank.
	double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels);

	/// Fraction of rows of a [B x C] score matrix whose argmax (lowest index on ties) equals the target.
	double accuracy(std::span<const double> scores, std::size_t classes, std::span<const std::size_t> targets);
}
