// SPDX-License-Identifier: Apache-2.0

#include <hgfm/autodiff.hpp>
#include <hgfm/error.hpp>

#include "fixtures.hpp"
#include "gradcheck.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace
{
	using namespace hgfm;
	using namespace hgfm::testing;
	using T = ad::Tensor<double>;
	using Tape = ad::Tape<double>;

	void expect_gradcheck(const std::function<T(Tape&)> &loss, const std::vector<ad::NamedTensor<double>> &params)
	{
		const GradCheckResult r = gradcheck(loss, params);
		EXPECT_GT(r.entries, 0u);
		EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
	}
}

TEST(autodiff, softmax_of_singleton_is_one)
{
	Tape tape;
	const T x = T::from( { 1, 1 }, { 123.0 });
	EXPECT_DOUBLE_EQ(tape.softmax(x, 1).item(), 1.0);
	EXPECT_DOUBLE_EQ(tape.segment_softmax(x, std::vector<std::size_t> { 0, 1 }).item(), 1.0);
}

TEST(autodiff, leaky_relu_negative_side)
{
	Tape tape;
	const T x = T::from( { 1, 2 }, { -1.0, 2.0 });
	const T y = tape.leaky_relu(x, 0.01);
	EXPECT_DOUBLE_EQ(y.at(0, 0), -0.01);
	EXPECT_DOUBLE_EQ(y.at(0, 1), 2.0);
}

TEST(autodiff, gradient_of_sum_of_squares)
{
	Tape tape;
	T x = T::from( { 1, 2 }, { 1.0, 2.0 }, true);
	tape.backward(tape.sum(tape.mul(x, x)));
	EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
	EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(autodiff, constant_loss_leaves_no_gradient)
{
	Tape tape;
	T w = T::from( { 1, 1 }, { 3.0 }, true);
	const T c = T::scalar(5.0);
	tape.backward(tape.add_scalar(c, 1.0));
	EXPECT_FALSE(w.has_grad() && w.grad()[0] != 0.0);
	EXPECT_EQ(tape.recorded(), 0u);
}

TEST(autodiff, linear_gradient)
{
	Tape tape;
	T w = T::from( { 1, 1 }, { 2.0 }, true);
	tape.backward(tape.scale(w, 3.0));
	EXPECT_DOUBLE_EQ(w.grad()[0], 3.0);
}

TEST(autodiff, dropout_is_identity_outside_training)
{
	Tape tape;
	std::mt19937_64 rng(1);
	const T x = random_tensor(4, 5, rng, true);
	const T y = tape.dropout(x, 0.5, false, 9);
	for (std::size_t i = 0; i < x.size(); i++)
		EXPECT_EQ(y.values()[i], x.values()[i]);
	EXPECT_THROW(tape.dropout(x, 1.0, true, 9), ValidationError);
}

TEST(autodiff, dropout_mask_follows_seed)
{
	Tape tape;
	const T x = T::from( { 1, 200 }, std::vector<double>(200, 1.0));
	const T a = tape.dropout(x, 0.25, true, 4);
	const T b = tape.dropout(x, 0.25, true, 4);
	std::size_t zeros = 0;
	for (std::size_t i = 0; i < 200; i++)
	{
		EXPECT_EQ(a.values()[i], b.values()[i]);
		if (a.values()[i] == 0.0)
			zeros++;
		else
			EXPECT_DOUBLE_EQ(a.values()[i], 1.0 / 0.75);
	}
	EXPECT_GT(zeros, 20u);
	EXPECT_LT(zeros, 80u);
}

TEST(autodiff, first_adam_step_moves_by_learning_rate)
{
	Tape tape;
	T w = T::from( { 1, 3 }, { 1.0, -1.0, 0.5 }, true);
	const T target = T::from( { 1, 3 }, { 0.0, 0.0, 0.0 });
	const T d = tape.sub(w, target);
	tape.backward(tape.sum(tape.mul(d, d)));
	ad::AdamState<double> state;
	const std::vector<ad::NamedTensor<double>> params { { "w", w } };
	ad::adam_step<double>(state, params, ad::AdamOptions { 0.1 });
	EXPECT_NEAR(w.values()[0], 0.9, 1e-6);
	EXPECT_NEAR(w.values()[1], -0.9, 1e-6);
	EXPECT_NEAR(w.values()[2], 0.4, 1e-6);
	EXPECT_EQ(state.moments.at("w").steps, 1u);
}

TEST(autodiff, zero_gradient_keeps_parameter)
{
	T w = T::from( { 2, 2 }, { 1.0, 2.0, 3.0, 4.0 }, true);
	w.zero_grad();
	ad::AdamState<double> state;
	const std::vector<ad::NamedTensor<double>> params { { "w", w } };
	ad::adam_step<double>(state, params, ad::AdamOptions { 0.1 });
	EXPECT_EQ(w.values()[0], 1.0);
	EXPECT_EQ(w.values()[3], 4.0);
}

TEST(autodiff, checked_tape_rejects_log_of_zero)
{
	Tape checked(true);
	const T x = T::from( { 1, 2 }, { 1.0, 0.0 });
	EXPECT_THROW(checked.log(x), NumericError);
	Tape plain;
	EXPECT_NO_THROW(plain.log(x));
}

TEST(autodiff, backward_needs_scalar)
{
	Tape tape;
	T x = T::from( { 1, 2 }, { 1.0, 2.0 }, true);
	EXPECT_THROW(tape.backward(tape.scale(x, 2.0)), ShapeError);
}

TEST(autodiff, shape_mismatch_throws)
{
	Tape tape;
	const T a = T::zeros( { 2, 3 });
	const T b = T::zeros( { 2, 3 });
	EXPECT_THROW(tape.matmul(a, b), ShapeError);
	EXPECT_NO_THROW(tape.matmul(a, b, true));
	EXPECT_THROW(T::from( { 2, 2 }, { 1.0 }), ShapeError);
}

TEST(autodiff, inference_tape_records_nothing)
{
	Tape tape(false, false);
	T w = T::from( { 1, 1 }, { 2.0 }, true);
	const T y = tape.mul(w, w);
	EXPECT_FALSE(y.requires_grad());
	EXPECT_EQ(tape.recorded(), 0u);
	EXPECT_DOUBLE_EQ(y.item(), 4.0);
}

TEST(autodiff, segment_softmax_sums_to_one_per_segment)
{
	Tape tape;
	const T s = T::from( { 5, 1 }, { 0.3, -1.0, 2.0, 0.0, 0.0 });
	const std::vector<std::size_t> offsets { 0, 3, 3, 5 };
	const T a = tape.segment_softmax(s, offsets);
	EXPECT_NEAR(a.values()[0] + a.values()[1] + a.values()[2], 1.0, 1e-12);
	EXPECT_DOUBLE_EQ(a.values()[3], 0.5);
	EXPECT_DOUBLE_EQ(a.values()[4], 0.5);
}

TEST(autodiff, masked_softmax_zeroes_unselected)
{
	Tape tape;
	const T s = T::from( { 1, 4 }, { 1.0, 5.0, 2.0, 0.0 });
	const std::vector<std::uint8_t> mask { 1, 0, 1, 0 };
	const T a = tape.masked_softmax(s, mask);
	EXPECT_EQ(a.values()[1], 0.0);
	EXPECT_EQ(a.values()[3], 0.0);
	EXPECT_NEAR(a.values()[0], 1.0 / (1.0 + std::exp(1.0)), 1e-12);
}

TEST(autodiff, gradcheck_dense_ops)
{
	std::mt19937_64 rng(3);
	T a = random_tensor(3, 4, rng, true);
	T b = random_tensor(5, 4, rng, true);
	T c = random_tensor(3, 5, rng, true);
	expect_gradcheck([&](Tape &t)
	{
		const T m = t.matmul(a, b, true);
		const T z = t.add(t.mul(m, c), t.sigmoid(c));
		return t.mean(t.leaky_relu(t.add_scalar(z, 0.1), 0.2));
	}, { { "a", a }, { "b", b }, { "c", c } });
}

TEST(autodiff, gradcheck_softmax_family)
{
	std::mt19937_64 rng(4);
	T x = random_tensor(3, 5, rng, true);
	T w = random_tensor(3, 5, rng, true);
	const std::vector<std::size_t> picks { 1, 4, 0 };
	expect_gradcheck([&](Tape &t)
	{
		const T ls = t.log_softmax(x, 1);
		const T s0 = t.softmax(x, 0);
		const T sp = t.softplus(w);
		const T lsig = t.log_sigmoid(w);
		return t.add(t.add(t.sum(t.mul(s0, w)), t.mean(t.pick(ls, picks))), t.sum(t.add(sp, lsig)));
	}, { { "x", x }, { "w", w } });
}

TEST(autodiff, gradcheck_structure_ops)
{
	std::mt19937_64 rng(5);
	T x = random_tensor(4, 3, rng, true);
	T y = random_tensor(4, 2, rng, true);
	T s = random_tensor(6, 1, rng, true);
	T v = random_tensor(6, 3, rng, true);
	const std::vector<std::size_t> idx { 2, 0, 2 };
	const std::vector<std::size_t> offsets { 0, 2, 2, 6 };
	expect_gradcheck([&](Tape &t)
	{
		const std::vector<T> parts { x, y };
		const T cat = t.concat(parts, 1);
		const T sl = t.slice(cat, 1, 1, 4);
		const T g = t.gather_rows(sl, idx);
		const T sc = t.scatter_rows(g, idx, 5);
		const T r = t.reshape(sl, { 3, 4 });
		const T att = t.segment_softmax(s, offsets);
		const T agg = t.segment_weighted_sum(att, v, offsets);
		return t.add(t.add(t.sum(t.mul(sc, sc)), t.sum(t.mul(r, r))), t.sum(t.mul(agg, agg)));
	}, { { "x", x }, { "y", y }, { "s", s }, { "v", v } });
}

TEST(autodiff, gradcheck_masked_softmax_and_log)
{
	std::mt19937_64 rng(6);
	T x = random_tensor(2, 4, rng, true);
	T p = T::from( { 1, 3 }, { 0.5, 1.5, 2.0 }, true);
	const std::vector<std::uint8_t> mask { 1, 1, 0, 1, 0, 1, 1, 0 };
	const T w = random_tensor(2, 4, rng);
	expect_gradcheck([&](Tape &t)
	{
		return t.add(t.sum(t.mul(t.masked_softmax(x, mask), w)), t.sum(t.log(p)));
	}, { { "x", x }, { "p", p } });
}
