// SPDX-License-Identifier: Apache-2.0

#include <hgfm/error.hpp>
#include <hgfm/moe_gating.hpp>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

namespace
{
	using namespace hgfm;
	using namespace hgfm::testing;
	using T = ad::Tensor<double>;
	using Tape = ad::Tape<double>;

	GateParams<double> random_gate(std::size_t in, std::size_t n, std::size_t k, std::mt19937_64 &rng)
	{
		GateParams<double> g = GateParams<double>::init(in, n, k, rng);
		randomize(g.w_gate, rng, 1.0);
		randomize(g.w_noise, rng, 0.5);
		return g;
	}

	/// Expert i maps x to leaky(x W_i^T).
	ExpertFn<double> linear_experts(Tape &tape, const std::vector<T> &weights, const T &x)
	{
		return [&tape, &weights, x](std::size_t i, std::span<const std::size_t> rows)
		{
			return tape.leaky_relu(tape.matmul(tape.gather_rows(x, rows), weights[i], true), 0.01);
		};
	}
}

TEST(moe_gating, top_k_prefers_lower_index_on_ties)
{
	const std::vector<double> v { 1.0, 3.0, 3.0, 0.0, 3.0 };
	EXPECT_EQ(top_k_indices(v, 2), (std::vector<std::size_t> { 1, 2 }));
	EXPECT_EQ(top_k_indices(v, 4), (std::vector<std::size_t> { 0, 1, 2, 4 }));
}

TEST(moe_gating, init_validates_k)
{
	std::mt19937_64 rng(1);
	EXPECT_THROW(GateParams<double>::init(4, 3, 0, rng), ValidationError);
	EXPECT_THROW(GateParams<double>::init(4, 3, 4, rng), ValidationError);
	EXPECT_NO_THROW(GateParams<double>::init(4, 3, 3, rng));
}

TEST(moe_gating, default_shape_has_k_nonzeros)
{
	std::mt19937_64 rng(2);
	const GateParams<double> g = random_gate(6, 8, 4, rng);
	const T x = random_tensor(20, 6, rng);
	Tape tape;
	for (bool train : { false, true })
	{
		const GateResult<double> r = gate(tape, g, x, GateOptions { train, 3, { } });
		for (std::size_t b = 0; b < 20; b++)
		{
			std::size_t nz = 0;
			double total = 0.0;
			for (std::size_t i = 0; i < 8; i++)
			{
				const double w = r.weights.at(b, i);
				EXPECT_GE(w, 0.0);
				if (w > 0.0)
					nz++;
				EXPECT_EQ(w > 0.0, r.mask[b * 8 + i] != 0);
				total += w;
			}
			EXPECT_EQ(nz, 4u);
			EXPECT_NEAR(total, 1.0, 1e-6);
		}
	}
}

TEST(moe_gating, zero_gate_selects_first_experts_uniformly)
{
	std::mt19937_64 rng(3);
	GateParams<double> g = GateParams<double>::init(5, 8, 4, rng);
	std::fill(g.w_gate.values().begin(), g.w_gate.values().end(), 0.0);
	Tape tape;
	const GateResult<double> r = gate(tape, g, random_tensor(1, 5, rng), GateOptions { });
	for (std::size_t i = 0; i < 8; i++)
		EXPECT_DOUBLE_EQ(r.weights.at(0, i), i < 4 ? 0.25 : 0.0);
}

TEST(moe_gating, dense_gate_when_k_equals_n)
{
	std::mt19937_64 rng(4);
	const GateParams<double> g = random_gate(5, 4, 4, rng);
	const T x = random_tensor(3, 5, rng);
	Tape tape;
	const GateResult<double> r = gate(tape, g, x, GateOptions { });
	for (std::size_t b = 0; b < 3; b++)
	{
		const Vec logits = matvec(g.w_gate, row(x, b));
		double z = 0.0;
		for (double l : logits)
			z += std::exp(l);
		for (std::size_t i = 0; i < 4; i++)
			EXPECT_NEAR(r.weights.at(b, i), std::exp(logits[i]) / z, 1e-12);
	}
}

TEST(moe_gating, gate_matches_oracle)
{
	std::mt19937_64 rng(5);
	const GateParams<double> g = random_gate(6, 8, 3, rng);
	const T x = random_tensor(10, 6, rng);
	Tape tape;
	const GateResult<double> r = gate(tape, g, x, GateOptions { });
	for (std::size_t b = 0; b < 10; b++)
	{
		const Vec want = oracle_gate(g, row(x, b));
		for (std::size_t i = 0; i < 8; i++)
			EXPECT_NEAR(r.weights.at(b, i), want[i], 1e-12);
	}
}

TEST(moe_gating, single_active_expert_passes_through)
{
	std::mt19937_64 rng(6);
	const GateParams<double> g = random_gate(4, 3, 1, rng);
	const T x = random_tensor(5, 4, rng);
	const std::vector<T> w { random_tensor(2, 4, rng), random_tensor(2, 4, rng), random_tensor(2, 4, rng) };
	Tape tape;
	const GateResult<double> r = gate(tape, g, x, GateOptions { });
	const T y = mixture_forward<double>(tape, r, 5, 2, linear_experts(tape, w, x));
	for (std::size_t b = 0; b < 5; b++)
	{
		const std::size_t chosen = top_k_indices(matvec(g.w_gate, row(x, b)), 1)[0];
		const Vec e = matvec(w[chosen], row(x, b));
		for (std::size_t c = 0; c < 2; c++)
			EXPECT_NEAR(y.at(b, c), leaky(e[c], 0.01), 1e-12);
	}
}

TEST(moe_gating, identical_experts_give_that_output)
{
	std::mt19937_64 rng(7);
	const GateParams<double> g = random_gate(4, 2, 2, rng);
	const T x = random_tensor(3, 4, rng);
	const T shared = random_tensor(3, 4, rng);
	const std::vector<T> w { shared, shared };
	Tape tape;
	const T y = mixture_forward<double>(tape, gate(tape, g, x, GateOptions { }), 3, 3, linear_experts(tape, w, x));
	for (std::size_t b = 0; b < 3; b++)
	{
		const Vec e = matvec(shared, row(x, b));
		for (std::size_t c = 0; c < 3; c++)
			EXPECT_NEAR(y.at(b, c), leaky(e[c], 0.01), 1e-12);
	}
}

TEST(moe_gating, sparse_mixture_matches_dense_oracle)
{
	for (std::uint64_t seed = 8; seed < 11; seed++)
	{
		std::mt19937_64 rng(seed);
		const GateParams<double> g = random_gate(5, 4, 2, rng);
		const T x = random_tensor(6, 5, rng);
		std::vector<T> w;
		for (int i = 0; i < 4; i++)
			w.push_back(random_tensor(3, 5, rng));
		Tape tape;
		MoeStats stats;
		const T y = mixture_forward<double>(tape, gate(tape, g, x, GateOptions { }), 6, 3, linear_experts(tape, w, x), &stats);
		EXPECT_EQ(stats.expert_evaluations, 6u * 2u);
		for (std::size_t b = 0; b < 6; b++)
		{
			const Vec gw = oracle_gate(g, row(x, b));
			Vec want(3, 0.0);
			for (std::size_t i = 0; i < 4; i++)
			{
				const Vec e = matvec(w[i], row(x, b));   // every expert evaluated densely
				for (std::size_t c = 0; c < 3; c++)
					want[c] += gw[i] * leaky(e[c], 0.01);
			}
			for (std::size_t c = 0; c < 3; c++)
				EXPECT_NEAR(y.at(b, c), want[c], 1e-12);
		}
	}
}

TEST(moe_gating, unselected_experts_get_zero_gradient)
{
	std::mt19937_64 rng(11);
	const GateParams<double> g = random_gate(5, 8, 4, rng);
	const T x = random_tensor(1, 5, rng);
	std::vector<T> w;
	for (int i = 0; i < 8; i++)
		w.push_back(random_tensor(3, 5, rng, true));
	Tape tape;
	const GateResult<double> r = gate(tape, g, x, GateOptions { true, 2, { } });
	tape.backward(tape.sum(mixture_forward<double>(tape, r, 1, 3, linear_experts(tape, w, x))));
	std::size_t zero = 0;
	for (std::size_t i = 0; i < 8; i++)
	{
		double norm = 0.0;
		if (w[i].has_grad())
			for (double v : w[i].grad())
				norm += v * v;
		if (r.mask[i])
			EXPECT_GT(norm, 0.0);
		else
		{
			EXPECT_EQ(norm, 0.0);
			zero++;
		}
	}
	EXPECT_EQ(zero, 4u);
}

TEST(moe_gating, lazy_execution_counter)
{
	std::mt19937_64 rng(12);
	const GateParams<double> g = random_gate(5, 8, 4, rng);
	const T x = random_tensor(1, 5, rng);
	std::vector<T> w;
	for (int i = 0; i < 8; i++)
		w.push_back(random_tensor(3, 5, rng));
	Tape tape;
	std::size_t calls = 0;
	const ExpertFn<double> inner = linear_experts(tape, w, x);
	const ExpertFn<double> counted = [&](std::size_t i, std::span<const std::size_t> rows)
	{
		calls++;
		return inner(i, rows);
	};
	MoeStats stats;
	mixture_forward<double>(tape, gate(tape, g, x, GateOptions { }), 1, 3, counted, &stats);
	EXPECT_EQ(calls, 4u);
	EXPECT_EQ(stats.expert_evaluations, 4u);
	EXPECT_EQ(stats.gatings, 1u);
}

TEST(moe_gating, every_expert_used_over_many_gatings)
{
	std::mt19937_64 rng(13);
	const GateParams<double> g = random_gate(8, 8, 4, rng);
	const T x = random_tensor(1000, 8, rng);
	Tape tape(false, false);
	const GateResult<double> r = gate(tape, g, x, GateOptions { true, 5, { } });
	for (std::size_t i = 0; i < 8; i++)
		EXPECT_GT(r.rows_of[i].size(), 0u) << "expert " << i;
}

TEST(moe_gating, noise_only_in_training_and_keyed_by_row)
{
	std::mt19937_64 rng(14);
	const GateParams<double> g = random_gate(4, 6, 2, rng);
	const T x = random_tensor(4, 4, rng);
	Tape tape;
	const GateResult<double> a = gate(tape, g, x, GateOptions { false, 1, { } });
	const GateResult<double> b = gate(tape, g, x, GateOptions { false, 99, { } });
	EXPECT_TRUE(std::equal(a.weights.values().begin(), a.weights.values().end(), b.weights.values().begin()));

	const std::vector<std::uint64_t> keys { 10, 20, 30, 40 };
	const std::vector<std::uint64_t> swapped { 20, 10, 30, 40 };
	const std::vector<std::size_t> order { 1, 0, 2, 3 };
	const GateResult<double> n1 = gate(tape, g, x, GateOptions { true, 7, keys });
	const GateResult<double> n2 = gate(tape, g, tape.gather_rows(x, order), GateOptions { true, 7, swapped });
	for (std::size_t i = 0; i < 6; i++)
	{
		EXPECT_EQ(n1.weights.at(0, i), n2.weights.at(1, i));
		EXPECT_EQ(n1.weights.at(1, i), n2.weights.at(0, i));
	}
}

TEST(moe_gating, gradcheck_gate_and_mixture)
{
	for (std::uint64_t seed = 15; seed < 18; seed++)
	{
		std::mt19937_64 rng(seed);
		const GateParams<double> g = random_gate(5, 4, 2, rng);
		T x = random_tensor(3, 5, rng, true);
		std::vector<T> w;
		for (int i = 0; i < 4; i++)
			w.push_back(random_tensor(2, 5, rng, true));
		const T probe = random_tensor(3, 4, rng);
		const T probe_out = random_tensor(3, 2, rng);
		std::vector<ad::NamedTensor<double>> params = g.named("gate.");
		params.push_back( { "x", x });
		const GradCheckResult gr = gradcheck([&](Tape &t)
		{
			return t.sum(t.mul(gate(t, g, x, GateOptions { }).weights, probe));
		}, params);
		EXPECT_LT(gr.max_rel_error, 1e-4) << gr.worst;

		for (int i = 0; i < 4; i++)
			params.push_back( { "expert" + std::to_string(i), w[static_cast<std::size_t>(i)] });
		const GradCheckResult mr = gradcheck([&](Tape &t)
		{
			return t.sum(t.mul(mixture_forward<double>(t, gate(t, g, x, GateOptions { }), 3, 2, linear_experts(t, w, x)), probe_out));
		}, params);
		EXPECT_LT(mr.max_rel_error, 1e-4) << mr.worst;
	}
}
