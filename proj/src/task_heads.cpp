// SPDX-License-Identifier: Apache-2.0

#include <hgfm/task_heads.hpp>
#include <hgfm/cgt_layer.hpp>
#include <hgfm/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace hgfm
{
	template<typename T>
	NcHead<T> NcHead<T>::init(std::size_t node_dim, std::size_t label_dim, std::size_t hidden, std::mt19937_64 &rng)
	{
		NcHead h;
		h.node_dim = node_dim;
		h.label_dim = label_dim;
		h.w1 = glorot_uniform<T>(hidden, node_dim + label_dim, rng);
		h.b1 = ad::Tensor<T>::zeros( { 1, hidden }, true);
		h.w2 = glorot_uniform<T>(1, hidden, rng);
		h.b2 = ad::Tensor<T>::zeros( { 1, 1 }, true);
		return h;
	}
	template<typename T>
	std::vector<ad::NamedTensor<T>> NcHead<T>::named(const std::string &prefix) const
	{
		return { { prefix + "w1", w1 }, { prefix + "b1", b1 }, { prefix + "w2", w2 }, { prefix + "b2", b2 } };
	}

	template<typename T>
	LpHead<T> LpHead<T>::init(std::size_t node_dim, std::size_t hidden, std::mt19937_64 &rng)
	{
		LpHead h;
		h.node_dim = node_dim;
		h.w1 = glorot_uniform<T>(hidden, 3 * node_dim, rng);
		h.b1 = ad::Tensor<T>::zeros( { 1, hidden }, true);
		h.w2 = glorot_uniform<T>(1, hidden, rng);
		h.b2 = ad::Tensor<T>::zeros( { 1, 1 }, true);
		return h;
	}
	template<typename T>
	std::vector<ad::NamedTensor<T>> LpHead<T>::named(const std::string &prefix) const
	{
		return { { prefix + "w1", w1 }, { prefix + "b1", b1 }, { prefix + "w2", w2 }, { prefix + "b2", b2 } };
	}

	template<typename T>
	ad::Tensor<T> nc_logits(ad::Tape<T> &tape, const NcHead<T> &head, const ad::Tensor<T> &nodes, const ad::Tensor<T> &labels, double slope)
	{
		if (labels.rows() == 0)
			throw ValidationError("label table is empty");
		if (nodes.cols() != head.node_dim || labels.cols() != head.label_dim)
			throw ShapeError("NC head expects node width " + std::to_string(head.node_dim) + " and label width " + std::to_string(head.label_dim));
		const std::size_t B = nodes.rows(), C = labels.rows();
		// w1 [h_u || h_c] = w1_u h_u + w1_c h_c, so each side is projected once
		const ad::Tensor<T> pu = tape.matmul(nodes, tape.slice(head.w1, 1, 0, head.node_dim), true);
		const ad::Tensor<T> pc = tape.matmul(labels, tape.slice(head.w1, 1, head.node_dim, head.node_dim + head.label_dim), true);
		std::vector<std::size_t> bi(B * C), ci(B * C);
		for (std::size_t b = 0; b < B; b++)
			for (std::size_t c = 0; c < C; c++)
			{
				bi[b * C + c] = b;
				ci[b * C + c] = c;
			}
		const ad::Tensor<T> pre = tape.add(tape.add(tape.gather_rows(pu, bi), tape.gather_rows(pc, ci)), head.b1);
		const ad::Tensor<T> hidden = tape.leaky_relu(pre, static_cast<T>(slope));
		const ad::Tensor<T> logit = tape.add(tape.matmul(hidden, head.w2, true), head.b2);
		return tape.reshape(logit, { B, C });
	}

	template<typename T>
	std::vector<T> nc_scores(const NcHead<T> &head, const ad::Tensor<T> &nodes, const ad::Tensor<T> &labels, double slope)
	{
		ad::Tape<T> tape(false, false);
		const ad::Tensor<T> p = tape.softmax(nc_logits(tape, head, nodes, labels, slope), 1);
		return std::vector<T>(p.values().begin(), p.values().end());
	}

	template<typename T>
	ad::Tensor<T> nc_loss(ad::Tape<T> &tape, const ad::Tensor<T> &logits, std::span<const std::size_t> targets)
	{
		if (logits.rows() == 0)
			throw ValidationError("empty batch");
		if (targets.size() != logits.rows())
			throw ShapeError("one target per row required");
		return tape.scale(tape.mean(tape.pick(tape.log_softmax(logits, 1), targets)), T(-1));
	}

	template<typename T>
	ad::Tensor<T> lp_logits(ad::Tape<T> &tape, const LpHead<T> &head, const ad::Tensor<T> &u, const ad::Tensor<T> &v, double slope)
	{
		if (u.shape() != v.shape() || u.cols() != head.node_dim)
			throw ShapeError("LP head expects two [B x " + std::to_string(head.node_dim) + "] inputs, got " + ad::to_string(u.shape()) + " and "
					+ ad::to_string(v.shape()));
		const std::array<ad::Tensor<T>, 3> parts { u, v, tape.mul(u, v) };
		const ad::Tensor<T> pre = tape.add(tape.matmul(tape.concat(parts, 1), head.w1, true), head.b1);
		return tape.add(tape.matmul(tape.leaky_relu(pre, static_cast<T>(slope)), head.w2, true), head.b2);
	}

	template<typename T>
	std::vector<T> lp_scores(const LpHead<T> &head, const ad::Tensor<T> &u, const ad::Tensor<T> &v, double slope)
	{
		ad::Tape<T> tape(false, false);
		const ad::Tensor<T> p = tape.sigmoid(lp_logits(tape, head, u, v, slope));
		return std::vector<T>(p.values().begin(), p.values().end());
	}

	template<typename T>
	ad::Tensor<T> lp_loss(ad::Tape<T> &tape, const ad::Tensor<T> &logits, std::span<const std::uint8_t> labels)
	{
		if (logits.rows() == 0)
			throw ValidationError("empty batch");
		if (logits.cols() != 1 || labels.size() != logits.rows())
			throw ShapeError("one 0/1 label per logit row required");
		std::vector<T> pos(labels.size()), neg(labels.size());
		for (std::size_t i = 0; i < labels.size(); i++)
		{
			pos[i] = labels[i] ? T(1) : T(0);
			neg[i] = T(1) - pos[i];
		}
		const ad::Tensor<T> y = ad::Tensor<T>::from( { labels.size(), 1 }, std::move(pos));
		const ad::Tensor<T> ny = ad::Tensor<T>::from( { labels.size(), 1 }, std::move(neg));
		const ad::Tensor<T> ll = tape.add(tape.mul(tape.log_sigmoid(logits), y), tape.mul(tape.log_sigmoid(tape.scale(logits, T(-1))), ny));
		return tape.scale(tape.mean(ll), T(-1));
	}

	double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels)
	{
		if (scores.size() != labels.size())
			throw ShapeError("one label per score required");
		const std::size_t n = scores.size();
		std::size_t n_pos = 0;
		for (std::uint8_t l : labels)
			n_pos += l ? 1 : 0;
		const std::size_t n_neg = n - n_pos;
		if (n_pos == 0 || n_neg == 0)
			throw ValidationError("AUC needs at least one positive and one negative");
		std::vector<std::size_t> order(n);
		std::iota(order.begin(), order.end(), 0);
		std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b)
		{
			return scores[a] < scores[b];
		});
		double pos_rank_sum = 0.0;
		for (std::size_t i = 0; i < n;)
		{
			std::size_t j = i;
			while (j < n && scores[order[j]] == scores[order[i]])
				j++;
			const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);   // ranks i+1..j
			for (std::size_t t = i; t < j; t++)
				if (labels[order[t]])
					pos_rank_sum += avg_rank;
			i = j;
		}
		const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
		return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
	}

	double accuracy(std::span<const double> scores, std::size_t classes, std::span<const std::size_t> targets)
	{
		if (classes == 0 || scores.size() != classes * targets.size())
			throw ShapeError("score matrix does not match targets");
		if (targets.empty())
			throw ValidationError("accuracy of an empty set");
		std::size_t correct = 0;
		for (std::size_t b = 0; b < targets.size(); b++)
		{
			const auto row = scores.subspan(b * classes, classes);
			const std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
			correct += best == targets[b] ? 1 : 0;
		}
		return static_cast<double>(correct) / static_cast<double>(targets.size());
	}

#define HGFM_INSTANTIATE(T) \
	template struct NcHead<T>; \
	template struct LpHead<T>; \
	template ad::Tensor<T> nc_logits<T>(ad::Tape<T>&, const NcHead<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, double); \
	template std::vector<T> nc_scores<T>(const NcHead<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, double); \
	template ad::Tensor<T> nc_loss<T>(ad::Tape<T>&, const ad::Tensor<T>&, std::span<const std::size_t>); \
	template ad::Tensor<T> lp_logits<T>(ad::Tape<T>&, const LpHead<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, double); \
	template std::vector<T> lp_scores<T>(const LpHead<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, double); \
	template ad::Tensor<T> lp_loss<T>(ad::Tape<T>&, const ad::Tensor<T>&, std::span<const std::uint8_t>);

	HGFM_INSTANTIATE(float)
	HGFM_INSTANTIATE(double)
#undef HGFM_INSTANTIATE
}
