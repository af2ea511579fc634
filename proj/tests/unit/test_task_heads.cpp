// SPDX-License-Identifier: Apache-2.0

#include <hgfm/error.hpp>
#include <hgfm/task_heads.hpp>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace
{
	using namespace hgfm;
	using namespace hgfm::testing;
	using T = ad::Tensor<double>;
	using Tape = ad::Tape<double>;

	NcHead<double> random_nc(std::size_t node, std::size_t label, std::size_t hidden, std::mt19937_64 &rng)
	{
		NcHead<double> h = NcHead<double>::init(node, label, hidden, rng);
		randomize(h.b1, rng, 0.5);
		randomize(h.b2, rng, 0.5);
		return h;
	}

	LpHead<double> random_lp(std::size_t node, std::size_t hidden, std::mt19937_64 &rng)
	{
		LpHead<double> h = LpHead<double>::init(node, hidden, rng);
		randomize(h.b1, rng, 0.5);
		randomize(h.b2, rng, 0.5);
		return h;
	}
}

TEST(task_heads, single_class_has_probability_one)
{
	std::mt19937_64 rng(1);
	const NcHead<double> h = random_nc(4, 3, 5, rng);
	const std::vector<double> p = nc_scores(h, random_tensor(2, 4, rng), random_tensor(1, 3, rng), 0.01);
	ASSERT_EQ(p.size(), 2u);
	EXPECT_DOUBLE_EQ(p[0], 1.0);
	EXPECT_DOUBLE_EQ(p[1], 1.0);
}

TEST(task_heads, identical_labels_split_evenly)
{
	std::mt19937_64 rng(2);
	const NcHead<double> h = random_nc(4, 3, 5, rng);
	const T label = random_tensor(1, 3, rng);
	Tape tape;
	const std::vector<T> parts { label, label };
	const std::vector<double> p = nc_scores(h, random_tensor(1, 4, rng), tape.concat(parts, 0), 0.01);
	EXPECT_DOUBLE_EQ(p[0], 0.5);
	EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(task_heads, nc_probabilities_match_oracle)
{
	for (std::uint64_t seed = 3; seed < 6; seed++)
	{
		std::mt19937_64 rng(seed);
		const NcHead<double> h = random_nc(4, 3, 6, rng);
		const T nodes = random_tensor(2, 4, rng);
		const T labels = random_tensor(3, 3, rng);
		const std::vector<double> p = nc_scores(h, nodes, labels, 0.01);
		std::vector<Vec> label_rows;
		for (std::size_t c = 0; c < 3; c++)
			label_rows.push_back(row(labels, c));
		for (std::size_t b = 0; b < 2; b++)
		{
			const Vec want = oracle_nc_probabilities(h, row(nodes, b), label_rows, 0.01);
			double total = 0.0;
			for (std::size_t c = 0; c < 3; c++)
			{
				EXPECT_NEAR(p[b * 3 + c], want[c], 1e-12);
				total += p[b * 3 + c];
			}
			EXPECT_NEAR(total, 1.0, 1e-6);
		}
	}
}

TEST(task_heads, label_count_is_free)
{
	std::mt19937_64 rng(6);
	const NcHead<double> h = random_nc(4, 3, 5, rng);
	const T nodes = random_tensor(3, 4, rng);
	for (std::size_t classes : { 2u, 5u, 11u })
	{
		const std::vector<double> p = nc_scores(h, nodes, random_tensor(classes, 3, rng), 0.01);
		ASSERT_EQ(p.size(), 3 * classes);
		for (std::size_t b = 0; b < 3; b++)
		{
			double total = 0.0;
			for (std::size_t c = 0; c < classes; c++)
				total += p[b * classes + c];
			EXPECT_NEAR(total, 1.0, 1e-6);
		}
	}
}

TEST(task_heads, empty_label_table_rejected)
{
	std::mt19937_64 rng(7);
	const NcHead<double> h = random_nc(4, 3, 5, rng);
	EXPECT_THROW(nc_scores(h, random_tensor(1, 4, rng), T::zeros( { 0, 3 }), 0.01), ValidationError);
}

TEST(task_heads, zero_lp_head_scores_one_half)
{
	std::mt19937_64 rng(8);
	LpHead<double> h = LpHead<double>::init(4, 5, rng);
	for (T *t : { &h.w1, &h.b1, &h.w2, &h.b2 })
		std::fill(t->values().begin(), t->values().end(), 0.0);
	const std::vector<double> p = lp_scores(h, random_tensor(3, 4, rng), random_tensor(3, 4, rng), 0.01);
	for (double x : p)
		EXPECT_DOUBLE_EQ(x, 0.5);
}

TEST(task_heads, lp_probability_matches_oracle)
{
	for (std::uint64_t seed = 9; seed < 12; seed++)
	{
		std::mt19937_64 rng(seed);
		const LpHead<double> h = random_lp(4, 6, rng);
		const T u = random_tensor(5, 4, rng), v = random_tensor(5, 4, rng);
		const std::vector<double> p = lp_scores(h, u, v, 0.01);
		for (std::size_t b = 0; b < 5; b++)
		{
			EXPECT_GT(p[b], 0.0);
			EXPECT_LT(p[b], 1.0);
			EXPECT_NEAR(p[b], oracle_lp_probability(h, row(u, b), row(v, b), 0.01), 1e-12);
		}
	}
}

TEST(task_heads, losses_by_hand)
{
	Tape tape;
	// confident and correct
	const T sure = T::from( { 1, 2 }, { 0.0, 800.0 });
	EXPECT_NEAR(nc_loss(tape, sure, std::vector<std::size_t> { 1 }).item(), 0.0, 1e-12);
	// logit 0 on a positive pair
	const T half = T::from( { 1, 1 }, { 0.0 });
	EXPECT_NEAR(lp_loss(tape, half, std::vector<std::uint8_t> { 1 }).item(), std::log(2.0), 1e-12);
	EXPECT_NEAR(lp_loss(tape, half, std::vector<std::uint8_t> { 1 }).item(), 0.6931, 1e-4);
	// mean reduction over two samples
	const T two = T::from( { 2, 2 }, { 1.0, 0.0, 0.0, 2.0 });
	const double l0 = std::log(1.0 + std::exp(-1.0));
	const double l1 = std::log(1.0 + std::exp(2.0));
	EXPECT_NEAR(nc_loss(tape, two, std::vector<std::size_t> { 0, 0 }).item(), 0.5 * (l0 + l1), 1e-12);
	const T pair = T::from( { 2, 1 }, { 1.5, -0.5 });
	const double b0 = std::log(1.0 + std::exp(-1.5));
	const double b1 = std::log(1.0 + std::exp(-0.5));
	EXPECT_NEAR(lp_loss(tape, pair, std::vector<std::uint8_t> { 1, 0 }).item(), 0.5 * (b0 + b1), 1e-12);
}

TEST(task_heads, empty_batches_rejected)
{
	Tape tape;
	EXPECT_THROW(nc_loss(tape, T::zeros( { 0, 3 }), std::vector<std::size_t> { }), ValidationError);
	EXPECT_THROW(lp_loss(tape, T::zeros( { 0, 1 }), std::vector<std::uint8_t> { }), ValidationError);
}

TEST(task_heads, auc_extremes_and_oracle)
{
	const std::vector<std::uint8_t> labels { 1, 0, 1, 0, 0, 1 };
	EXPECT_DOUBLE_EQ(auc_roc(std::vector<double> { 0.9, 0.1, 0.8, 0.2, 0.3, 0.7 }, labels), 1.0);
	EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>(6, 0.4), labels), 0.5);
	EXPECT_THROW(auc_roc(std::vector<double> { 0.1, 0.2 }, std::vector<std::uint8_t> { 1, 1 }), ValidationError);
	std::mt19937_64 rng(12);
	std::uniform_int_distribution<int> coarse(0, 5);
	for (int trial = 0; trial < 20; trial++)
	{
		std::vector<double> s(40);
		std::vector<std::uint8_t> y(40);
		for (std::size_t i = 0; i < 40; i++)
		{
			s[i] = coarse(rng) / 5.0;   // many ties
			y[i] = static_cast<std::uint8_t>(i % 3 == 0);
		}
		EXPECT_NEAR(auc_roc(s, y), oracle_auc(s, y), 1e-12);
	}
}

TEST(task_heads, accuracy_argmax_ties_to_lower_index)
{
	const std::vector<double> scores { 0.5, 0.5, 0.2, 0.8, 0.3, 0.3 };
	EXPECT_DOUBLE_EQ(accuracy(scores, 2, std::vector<std::size_t> { 0, 1, 1 }), 2.0 / 3.0);
}

TEST(task_heads, gradcheck_heads)
{
	for (std::uint64_t seed = 13; seed < 16; seed++)
	{
		std::mt19937_64 rng(seed);
		const NcHead<double> nc = random_nc(4, 3, 5, rng);
		const LpHead<double> lp = random_lp(4, 5, rng);
		T nodes = random_tensor(3, 4, rng, true);
		T labels = random_tensor(4, 3, rng, true);
		T other = random_tensor(3, 4, rng, true);
		const std::vector<std::size_t> targets { 2, 0, 3 };
		const std::vector<std::uint8_t> links { 1, 0, 1 };

		std::vector<ad::NamedTensor<double>> nc_params = nc.named("nc.");
		nc_params.push_back( { "nodes", nodes });
		nc_params.push_back( { "labels", labels });
		const GradCheckResult a = gradcheck([&](Tape &t)
		{
			return nc_loss(t, nc_logits(t, nc, nodes, labels, 0.01), targets);
		}, nc_params);
		EXPECT_LT(a.max_rel_error, 1e-4) << a.worst;

		std::vector<ad::NamedTensor<double>> lp_params = lp.named("lp.");
		lp_params.push_back( { "u", nodes });
		lp_params.push_back( { "v", other });
		const GradCheckResult b = gradcheck([&](Tape &t)
		{
			return lp_loss(t, lp_logits(t, lp, nodes, other, 0.01), links);
		}, lp_params);
		EXPECT_LT(b.max_rel_error, 1e-4) << b.worst;
	}
}
