// SPDX-License-Identifier: Apache-2.0

#include <hgfm/autodiff.hpp>
#include <hgfm/error.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace
{
	using namespace hgfm;
	using namespace hgfm::ad;

	template<typename T>
	using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

	template<typename T>
	Eigen::Map<Matrix<T>> as_matrix(std::vector<T> &v, Shape s)
	{
		return Eigen::Map<Matrix<T>>(v.data(), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
	}
	template<typename T>
	Eigen::Map<const Matrix<T>> as_matrix(const std::vector<T> &v, Shape s)
	{
		return Eigen::Map<const Matrix<T>>(v.data(), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
	}

	template<typename T>
	std::vector<T>& grad_of(TensorNode<T> *node)
	{
		if (node->grad.empty())
			node->grad.assign(node->shape.size(), T(0));
		return node->grad;
	}

	void require(bool condition, const std::string &message)
	{
		if (!condition)
			throw ShapeError(message);
	}

	template<typename T>
	T stable_softplus(T x)
	{
		return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
	}
	template<typename T>
	T stable_sigmoid(T x)
	{
		if (x >= T(0))
			return T(1) / (T(1) + std::exp(-x));
		const T e = std::exp(x);
		return e / (T(1) + e);
	}

	/// Visits the lines of a matrix along `axis` (axis 1: rows, axis 0: columns).
	struct Lines
	{
			std::size_t count, length, line_stride, elem_stride;
	};
	Lines lines_of(Shape s, int axis)
	{
		if (axis == 1)
			return Lines { s.rows, s.cols, s.cols, 1 };
		if (axis == 0)
			return Lines { s.cols, s.rows, 1, s.cols };
		throw ShapeError("axis must be 0 or 1");
	}
}

namespace hgfm::ad
{
	std::string to_string(Shape s)
	{
		return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
	}

	template<typename T>
	Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad)
	{
		auto node = std::make_shared<TensorNode<T>>();
		node->shape = shape;
		node->value.assign(shape.size(), T(0));
		node->requires_grad = requires_grad;
		return Tensor(std::move(node));
	}
	template<typename T>
	Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad)
	{
		if (values.size() != shape.size())
			throw ShapeError("tensor payload of " + std::to_string(values.size()) + " values does not match shape " + ad::to_string(shape));
		auto node = std::make_shared<TensorNode<T>>();
		node->shape = shape;
		node->value = std::move(values);
		node->requires_grad = requires_grad;
		return Tensor(std::move(node));
	}
	template<typename T>
	Tensor<T> Tensor<T>::scalar(T value, bool requires_grad)
	{
		return from(Shape { 1, 1 }, { value }, requires_grad);
	}
	template<typename T>
	T Tensor<T>::item() const
	{
		if (size() != 1)
			throw ShapeError("item() on a tensor of shape " + ad::to_string(shape()));
		return m_node->value[0];
	}
	template<typename T>
	std::span<T> Tensor<T>::grad()
	{
		return grad_of(m_node.get());
	}
	template<typename T>
	std::span<const T> Tensor<T>::grad() const
	{
		return grad_of(m_node.get());
	}
	template<typename T>
	void Tensor<T>::zero_grad()
	{
		std::fill(m_node->grad.begin(), m_node->grad.end(), T(0));
	}
	template<typename T>
	Tensor<T> Tensor<T>::clone() const
	{
		return from(shape(), m_node->value, m_node->requires_grad);
	}

	template<typename T>
	Tensor<T> Tape<T>::make_output(Shape shape, std::vector<T> values, bool requires_grad)
	{
		Tensor<T> out = Tensor<T>::from(shape, std::move(values), requires_grad && m_recording);
		check_finite(out, "op");
		return out;
	}
	template<typename T>
	void Tape<T>::record(std::vector<std::shared_ptr<TensorNode<T>>> inputs, const Tensor<T> &output, std::function<void()> backward)
	{
		if (!m_recording)
			return;
		m_records.push_back(Record { std::move(inputs), output.shared(), std::move(backward) });
	}
	template<typename T>
	void Tape<T>::check_finite(const Tensor<T> &t, const char *op) const
	{
		if (!m_checked)
			return;
		for (T x : t.values())
			if (!std::isfinite(x))
				throw NumericError(std::string("non-finite value produced by ") + op);
	}

	template<typename T>
	Tensor<T> Tape<T>::matmul(const Tensor<T> &a, const Tensor<T> &b, bool transpose_b)
	{
		const std::size_t inner_b = transpose_b ? b.cols() : b.rows();
		require(a.cols() == inner_b, "matmul shape mismatch " + ad::to_string(a.shape()) + " x " + ad::to_string(b.shape()) + (transpose_b ? "^T" : ""));
		const Shape s { a.rows(), transpose_b ? b.rows() : b.cols() };
		std::vector<T> out(s.size());
		auto A = as_matrix(a.node()->value, a.shape());
		auto B = as_matrix(b.node()->value, b.shape());
		if (transpose_b)
			as_matrix(out, s).noalias() = A * B.transpose();
		else
			as_matrix(out, s).noalias() = A * B;
		const bool rg = a.requires_grad() || b.requires_grad();
		Tensor<T> y = make_output(s, std::move(out), rg);
		if (rg)
			record( { a.shared(), b.shared() }, y, [an = a.node(), bn = b.node(), yn = y.node(), transpose_b]()
			{
				auto dY = as_matrix(yn->grad, yn->shape);
				auto A = as_matrix(an->value, an->shape);
				auto B = as_matrix(bn->value, bn->shape);
				if (an->requires_grad)
				{
					auto dA = as_matrix(grad_of(an), an->shape);
					if (transpose_b)
						dA.noalias() += dY * B;
					else
						dA.noalias() += dY * B.transpose();
				}
				if (bn->requires_grad)
				{
					auto dB = as_matrix(grad_of(bn), bn->shape);
					if (transpose_b)
						dB.noalias() += dY.transpose() * A;
					else
						dB.noalias() += A.transpose() * dY;
				}
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::broadcast_binary(const Tensor<T> &a, const Tensor<T> &b, int kind)
	{
		const Shape sa = a.shape(), sb = b.shape();
		require((sb.rows == sa.rows || sb.rows == 1) && (sb.cols == sa.cols || sb.cols == 1),
				"elementwise shape mismatch " + ad::to_string(sa) + " vs " + ad::to_string(sb));
		const bool row_b = sb.rows == 1, col_b = sb.cols == 1;
		auto b_index = [=](std::size_t r, std::size_t c)
		{
			return (row_b ? 0 : r) * sb.cols + (col_b ? 0 : c);
		};
		std::vector<T> out(sa.size());
		const auto &av = a.node()->value;
		const auto &bv = b.node()->value;
		for (std::size_t r = 0; r < sa.rows; r++)
			for (std::size_t c = 0; c < sa.cols; c++)
			{
				const std::size_t i = r * sa.cols + c;
				const T x = av[i], z = bv[b_index(r, c)];
				out[i] = kind == 0 ? x + z : (kind == 1 ? x - z : x * z);
			}
		const bool rg = a.requires_grad() || b.requires_grad();
		Tensor<T> y = make_output(sa, std::move(out), rg);
		if (rg)
			record( { a.shared(), b.shared() }, y, [an = a.node(), bn = b.node(), yn = y.node(), kind, b_index]()
			{
				const Shape s = an->shape;
				const auto &dy = yn->grad;
				if (an->requires_grad)
				{
					auto &da = grad_of(an);
					for (std::size_t r = 0; r < s.rows; r++)
						for (std::size_t c = 0; c < s.cols; c++)
						{
							const std::size_t i = r * s.cols + c;
							da[i] += kind == 2 ? dy[i] * bn->value[b_index(r, c)] : dy[i];
						}
				}
				if (bn->requires_grad)
				{
					auto &db = grad_of(bn);
					for (std::size_t r = 0; r < s.rows; r++)
						for (std::size_t c = 0; c < s.cols; c++)
						{
							const std::size_t i = r * s.cols + c;
							db[b_index(r, c)] += kind == 0 ? dy[i] : (kind == 1 ? -dy[i] : dy[i] * an->value[i]);
						}
				}
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::add(const Tensor<T> &a, const Tensor<T> &b)
	{
		return broadcast_binary(a, b, 0);
	}
	template<typename T>
	Tensor<T> Tape<T>::sub(const Tensor<T> &a, const Tensor<T> &b)
	{
		return broadcast_binary(a, b, 1);
	}
	template<typename T>
	Tensor<T> Tape<T>::mul(const Tensor<T> &a, const Tensor<T> &b)
	{
		return broadcast_binary(a, b, 2);
	}

	template<typename T>
	Tensor<T> Tape<T>::scale(const Tensor<T> &a, T factor)
	{
		std::vector<T> out(a.values().begin(), a.values().end());
		for (T &x : out)
			x *= factor;
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), factor]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < da.size(); i++)
					da[i] += factor * yn->grad[i];
			});
		return y;
	}
	template<typename T>
	Tensor<T> Tape<T>::add_scalar(const Tensor<T> &a, T value)
	{
		std::vector<T> out(a.values().begin(), a.values().end());
		for (T &x : out)
			x += value;
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node()]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < da.size(); i++)
					da[i] += yn->grad[i];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::concat(std::span<const Tensor<T>> parts, int axis)
	{
		require(!parts.empty(), "concat of zero tensors");
		require(axis == 0 || axis == 1, "concat axis must be 0 or 1");
		Shape s = parts[0].shape();
		for (std::size_t i = 1; i < parts.size(); i++)
		{
			const Shape p = parts[i].shape();
			if (axis == 1)
			{
				require(p.rows == s.rows, "concat row mismatch " + ad::to_string(p) + " vs " + ad::to_string(s));
				s.cols += p.cols;
			} else
			{
				require(p.cols == s.cols, "concat column mismatch " + ad::to_string(p) + " vs " + ad::to_string(s));
				s.rows += p.rows;
			}
		}
		std::vector<T> out(s.size());
		std::vector<std::size_t> offsets;
		std::size_t offset = 0;
		for (const Tensor<T> &p : parts)
		{
			offsets.push_back(offset);
			if (axis == 1)
			{
				for (std::size_t r = 0; r < s.rows; r++)
					std::copy_n(p.values().data() + r * p.cols(), p.cols(), out.data() + r * s.cols + offset);
				offset += p.cols();
			} else
			{
				std::copy(p.values().begin(), p.values().end(), out.begin() + static_cast<std::ptrdiff_t>(offset * s.cols));
				offset += p.rows();
			}
		}
		bool rg = false;
		std::vector<std::shared_ptr<TensorNode<T>>> inputs;
		for (const Tensor<T> &p : parts)
		{
			rg = rg || p.requires_grad();
			inputs.push_back(p.shared());
		}
		Tensor<T> y = make_output(s, std::move(out), rg);
		if (rg)
		{
			std::vector<TensorNode<T>*> nodes;
			for (const Tensor<T> &p : parts)
				nodes.push_back(p.node());
			record(std::move(inputs), y, [nodes, offsets, axis, yn = y.node()]()
			{
				const Shape s = yn->shape;
				for (std::size_t k = 0; k < nodes.size(); k++)
				{
					TensorNode<T> *n = nodes[k];
					if (!n->requires_grad)
						continue;
					auto &dp = grad_of(n);
					if (axis == 1)
					{
						for (std::size_t r = 0; r < s.rows; r++)
							for (std::size_t c = 0; c < n->shape.cols; c++)
								dp[r * n->shape.cols + c] += yn->grad[r * s.cols + offsets[k] + c];
					} else
					{
						for (std::size_t i = 0; i < dp.size(); i++)
							dp[i] += yn->grad[offsets[k] * s.cols + i];
					}
				}
			});
		}
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::slice(const Tensor<T> &a, int axis, std::size_t begin, std::size_t end)
	{
		require(axis == 0 || axis == 1, "slice axis must be 0 or 1");
		const Shape sa = a.shape();
		require(begin <= end && end <= (axis == 0 ? sa.rows : sa.cols), "slice range out of bounds for " + ad::to_string(sa));
		const Shape s = axis == 0 ? Shape { end - begin, sa.cols } : Shape { sa.rows, end - begin };
		std::vector<T> out(s.size());
		for (std::size_t r = 0; r < s.rows; r++)
			for (std::size_t c = 0; c < s.cols; c++)
				out[r * s.cols + c] = axis == 0 ? a.at(r + begin, c) : a.at(r, c + begin);
		Tensor<T> y = make_output(s, std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), axis, begin]()
			{
				auto &da = grad_of(an);
				const Shape s = yn->shape;
				const std::size_t cols = an->shape.cols;
				for (std::size_t r = 0; r < s.rows; r++)
					for (std::size_t c = 0; c < s.cols; c++)
					{
						const std::size_t src = axis == 0 ? (r + begin) * cols + c : r * cols + c + begin;
						da[src] += yn->grad[r * s.cols + c];
					}
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::reshape(const Tensor<T> &a, Shape shape)
	{
		require(shape.size() == a.size(), "reshape " + ad::to_string(a.shape()) + " to " + ad::to_string(shape));
		std::vector<T> out(a.values().begin(), a.values().end());
		Tensor<T> y = make_output(shape, std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node()]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < da.size(); i++)
					da[i] += yn->grad[i];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::sum(const Tensor<T> &a)
	{
		T total = T(0);
		for (T x : a.values())
			total += x;
		Tensor<T> y = make_output(Shape { 1, 1 }, { total }, a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node()]()
			{
				auto &da = grad_of(an);
				for (T &g : da)
					g += yn->grad[0];
			});
		return y;
	}
	template<typename T>
	Tensor<T> Tape<T>::mean(const Tensor<T> &a)
	{
		require(a.size() > 0, "mean of an empty tensor");
		return scale(sum(a), T(1) / static_cast<T>(a.size()));
	}

	template<typename T>
	Tensor<T> Tape<T>::softmax(const Tensor<T> &a, int axis)
	{
		const Lines lines = lines_of(a.shape(), axis);
		std::vector<T> out(a.size());
		const auto &x = a.node()->value;
		for (std::size_t l = 0; l < lines.count; l++)
		{
			const std::size_t base = l * lines.line_stride;
			T m = -std::numeric_limits<T>::infinity();
			for (std::size_t i = 0; i < lines.length; i++)
				m = std::max(m, x[base + i * lines.elem_stride]);
			T z = T(0);
			for (std::size_t i = 0; i < lines.length; i++)
			{
				const std::size_t k = base + i * lines.elem_stride;
				out[k] = std::exp(x[k] - m);
				z += out[k];
			}
			for (std::size_t i = 0; i < lines.length; i++)
				out[base + i * lines.elem_stride] /= z;
		}
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), lines]()
			{
				auto &da = grad_of(an);
				const auto &yv = yn->value;
				const auto &dy = yn->grad;
				for (std::size_t l = 0; l < lines.count; l++)
				{
					const std::size_t base = l * lines.line_stride;
					T dot = T(0);
					for (std::size_t i = 0; i < lines.length; i++)
					{
						const std::size_t k = base + i * lines.elem_stride;
						dot += yv[k] * dy[k];
					}
					for (std::size_t i = 0; i < lines.length; i++)
					{
						const std::size_t k = base + i * lines.elem_stride;
						da[k] += yv[k] * (dy[k] - dot);
					}
				}
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::log_softmax(const Tensor<T> &a, int axis)
	{
		const Lines lines = lines_of(a.shape(), axis);
		std::vector<T> out(a.size());
		const auto &x = a.node()->value;
		for (std::size_t l = 0; l < lines.count; l++)
		{
			const std::size_t base = l * lines.line_stride;
			T m = -std::numeric_limits<T>::infinity();
			for (std::size_t i = 0; i < lines.length; i++)
				m = std::max(m, x[base + i * lines.elem_stride]);
			T z = T(0);
			for (std::size_t i = 0; i < lines.length; i++)
				z += std::exp(x[base + i * lines.elem_stride] - m);
			const T lse = m + std::log(z);
			for (std::size_t i = 0; i < lines.length; i++)
			{
				const std::size_t k = base + i * lines.elem_stride;
				out[k] = x[k] - lse;
			}
		}
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), lines]()
			{
				auto &da = grad_of(an);
				const auto &yv = yn->value;
				const auto &dy = yn->grad;
				for (std::size_t l = 0; l < lines.count; l++)
				{
					const std::size_t base = l * lines.line_stride;
					T total = T(0);
					for (std::size_t i = 0; i < lines.length; i++)
						total += dy[base + i * lines.elem_stride];
					for (std::size_t i = 0; i < lines.length; i++)
					{
						const std::size_t k = base + i * lines.elem_stride;
						da[k] += dy[k] - std::exp(yv[k]) * total;
					}
				}
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::leaky_relu(const Tensor<T> &a, T slope)
	{
		std::vector<T> out(a.values().begin(), a.values().end());
		for (T &x : out)
			if (x < T(0))
				x *= slope;
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), slope]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < da.size(); i++)
					da[i] += (an->value[i] < T(0) ? slope : T(1)) * yn->grad[i];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::sigmoid(const Tensor<T> &a)
	{
		std::vector<T> out(a.values().begin(), a.values().end());
		for (T &x : out)
			x = stable_sigmoid(x);
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node()]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < da.size(); i++)
				{
					const T s = yn->value[i];
					da[i] += s * (T(1) - s) * yn->grad[i];
				}
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::log_sigmoid(const Tensor<T> &a)
	{
		std::vector<T> out(a.values().begin(), a.values().end());
		for (T &x : out)
			x = -stable_softplus(-x);
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node()]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < da.size(); i++)
					da[i] += stable_sigmoid(-an->value[i]) * yn->grad[i];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::softplus(const Tensor<T> &a)
	{
		std::vector<T> out(a.values().begin(), a.values().end());
		for (T &x : out)
			x = stable_softplus(x);
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node()]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < da.size(); i++)
					da[i] += stable_sigmoid(an->value[i]) * yn->grad[i];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::log(const Tensor<T> &a)
	{
		std::vector<T> out(a.values().begin(), a.values().end());
		for (T &x : out)
		{
			if (m_checked && !(x > T(0)))
				throw NumericError("log of non-positive value " + std::to_string(static_cast<double>(x)));
			x = std::log(x);
		}
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node()]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < da.size(); i++)
					da[i] += yn->grad[i] / an->value[i];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::dropout(const Tensor<T> &a, double rate, bool train, std::uint64_t seed)
	{
		if (rate < 0.0 || rate >= 1.0)
			throw ValidationError("dropout rate must lie in [0, 1)");
		if (!train || rate == 0.0)
			return a;
		std::mt19937_64 rng(seed);
		std::uniform_real_distribution<double> uniform(0.0, 1.0);
		const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
		std::vector<T> mask(a.size());
		for (T &m : mask)
			m = uniform(rng) < rate ? T(0) : keep_scale;
		std::vector<T> out(a.values().begin(), a.values().end());
		for (std::size_t i = 0; i < out.size(); i++)
			out[i] *= mask[i];
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), mask = std::move(mask)]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < da.size(); i++)
					da[i] += mask[i] * yn->grad[i];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::gather_rows(const Tensor<T> &a, std::span<const std::size_t> index)
	{
		const std::size_t cols = a.cols();
		std::vector<T> out(index.size() * cols);
		for (std::size_t i = 0; i < index.size(); i++)
		{
			require(index[i] < a.rows(), "gather_rows index " + std::to_string(index[i]) + " out of range for " + ad::to_string(a.shape()));
			std::copy_n(a.values().data() + index[i] * cols, cols, out.data() + i * cols);
		}
		Tensor<T> y = make_output(Shape { index.size(), cols }, std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), idx = std::vector<std::size_t>(index.begin(), index.end())]()
			{
				auto &da = grad_of(an);
				const std::size_t cols = an->shape.cols;
				for (std::size_t i = 0; i < idx.size(); i++)
					for (std::size_t c = 0; c < cols; c++)
						da[idx[i] * cols + c] += yn->grad[i * cols + c];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::scatter_rows(const Tensor<T> &a, std::span<const std::size_t> index, std::size_t rows)
	{
		require(index.size() == a.rows(), "scatter_rows needs one index per row");
		const std::size_t cols = a.cols();
		std::vector<T> out(rows * cols, T(0));
		for (std::size_t i = 0; i < index.size(); i++)
		{
			require(index[i] < rows, "scatter_rows index out of range");
			for (std::size_t c = 0; c < cols; c++)
				out[index[i] * cols + c] += a.at(i, c);
		}
		Tensor<T> y = make_output(Shape { rows, cols }, std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), idx = std::vector<std::size_t>(index.begin(), index.end())]()
			{
				auto &da = grad_of(an);
				const std::size_t cols = an->shape.cols;
				for (std::size_t i = 0; i < idx.size(); i++)
					for (std::size_t c = 0; c < cols; c++)
						da[i * cols + c] += yn->grad[idx[i] * cols + c];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::pick(const Tensor<T> &a, std::span<const std::size_t> index)
	{
		require(index.size() == a.rows(), "pick needs one index per row");
		std::vector<T> out(index.size());
		for (std::size_t i = 0; i < index.size(); i++)
		{
			require(index[i] < a.cols(), "pick index out of range");
			out[i] = a.at(i, index[i]);
		}
		Tensor<T> y = make_output(Shape { index.size(), 1 }, std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), idx = std::vector<std::size_t>(index.begin(), index.end())]()
			{
				auto &da = grad_of(an);
				for (std::size_t i = 0; i < idx.size(); i++)
					da[i * an->shape.cols + idx[i]] += yn->grad[i];
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::segment_softmax(const Tensor<T> &scores, std::span<const std::size_t> offsets)
	{
		require(scores.cols() == 1, "segment_softmax expects a column");
		require(!offsets.empty() && offsets.front() == 0 && offsets.back() == scores.rows(), "segment offsets do not cover the scores");
		std::vector<T> out(scores.size());
		const auto &x = scores.node()->value;
		for (std::size_t s = 0; s + 1 < offsets.size(); s++)
		{
			const std::size_t begin = offsets[s], end = offsets[s + 1];
			require(begin <= end, "segment offsets must be non-decreasing");
			if (begin == end)
				continue;
			T m = -std::numeric_limits<T>::infinity();
			for (std::size_t i = begin; i < end; i++)
				m = std::max(m, x[i]);
			T z = T(0);
			for (std::size_t i = begin; i < end; i++)
			{
				out[i] = std::exp(x[i] - m);
				z += out[i];
			}
			for (std::size_t i = begin; i < end; i++)
				out[i] /= z;
		}
		Tensor<T> y = make_output(scores.shape(), std::move(out), scores.requires_grad());
		if (scores.requires_grad())
			record( { scores.shared() }, y, [an = scores.node(), yn = y.node(), off = std::vector<std::size_t>(offsets.begin(), offsets.end())]()
			{
				auto &da = grad_of(an);
				const auto &yv = yn->value;
				const auto &dy = yn->grad;
				for (std::size_t s = 0; s + 1 < off.size(); s++)
				{
					T dot = T(0);
					for (std::size_t i = off[s]; i < off[s + 1]; i++)
						dot += yv[i] * dy[i];
					for (std::size_t i = off[s]; i < off[s + 1]; i++)
						da[i] += yv[i] * (dy[i] - dot);
				}
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::segment_weighted_sum(const Tensor<T> &weights, const Tensor<T> &values, std::span<const std::size_t> offsets)
	{
		require(weights.cols() == 1 && weights.rows() == values.rows(), "segment_weighted_sum expects one weight per value row");
		require(!offsets.empty() && offsets.front() == 0 && offsets.back() == values.rows(), "segment offsets do not cover the values");
		const std::size_t segments = offsets.size() - 1;
		const std::size_t cols = values.cols();
		std::vector<T> out(segments * cols, T(0));
		const auto &w = weights.node()->value;
		const auto &v = values.node()->value;
		for (std::size_t s = 0; s < segments; s++)
			for (std::size_t i = offsets[s]; i < offsets[s + 1]; i++)
				for (std::size_t c = 0; c < cols; c++)
					out[s * cols + c] += w[i] * v[i * cols + c];
		const bool rg = weights.requires_grad() || values.requires_grad();
		Tensor<T> y = make_output(Shape { segments, cols }, std::move(out), rg);
		if (rg)
			record( { weights.shared(), values.shared() }, y, [wn = weights.node(), vn = values.node(), yn = y.node(),
					off = std::vector<std::size_t>(offsets.begin(), offsets.end())]()
			{
				const std::size_t cols = vn->shape.cols;
				const auto &dy = yn->grad;
				for (std::size_t s = 0; s + 1 < off.size(); s++)
					for (std::size_t i = off[s]; i < off[s + 1]; i++)
					{
						if (wn->requires_grad)
						{
							T dot = T(0);
							for (std::size_t c = 0; c < cols; c++)
								dot += vn->value[i * cols + c] * dy[s * cols + c];
							grad_of(wn)[i] += dot;
						}
						if (vn->requires_grad)
						{
							auto &dv = grad_of(vn);
							const T wi = wn->value[i];
							for (std::size_t c = 0; c < cols; c++)
								dv[i * cols + c] += wi * dy[s * cols + c];
						}
					}
			});
		return y;
	}

	template<typename T>
	Tensor<T> Tape<T>::masked_softmax(const Tensor<T> &a, std::span<const std::uint8_t> mask)
	{
		require(mask.size() == a.size(), "mask size does not match tensor");
		const std::size_t rows = a.rows(), cols = a.cols();
		std::vector<T> out(a.size(), T(0));
		const auto &x = a.node()->value;
		for (std::size_t r = 0; r < rows; r++)
		{
			T m = -std::numeric_limits<T>::infinity();
			for (std::size_t c = 0; c < cols; c++)
				if (mask[r * cols + c])
					m = std::max(m, x[r * cols + c]);
			T z = T(0);
			for (std::size_t c = 0; c < cols; c++)
				if (mask[r * cols + c])
				{
					out[r * cols + c] = std::exp(x[r * cols + c] - m);
					z += out[r * cols + c];
				}
			if (z > T(0))
				for (std::size_t c = 0; c < cols; c++)
					out[r * cols + c] /= z;
		}
		Tensor<T> y = make_output(a.shape(), std::move(out), a.requires_grad());
		if (a.requires_grad())
			record( { a.shared() }, y, [an = a.node(), yn = y.node(), m = std::vector<std::uint8_t>(mask.begin(), mask.end())]()
			{
				auto &da = grad_of(an);
				const std::size_t rows = an->shape.rows, cols = an->shape.cols;
				const auto &yv = yn->value;
				const auto &dy = yn->grad;
				for (std::size_t r = 0; r < rows; r++)
				{
					T dot = T(0);
					for (std::size_t c = 0; c < cols; c++)
						if (m[r * cols + c])
							dot += yv[r * cols + c] * dy[r * cols + c];
					for (std::size_t c = 0; c < cols; c++)
						if (m[r * cols + c])
							da[r * cols + c] += yv[r * cols + c] * (dy[r * cols + c] - dot);
				}
			});
		return y;
	}

	template<typename T>
	void Tape<T>::backward(const Tensor<T> &loss)
	{
		if (!loss.defined() || loss.size() != 1)
			throw ShapeError("backward() needs a scalar loss");
		if (!loss.requires_grad())
			return;
		for (Record &r : m_records)
			r.output->grad.assign(r.output->shape.size(), T(0));
		grad_of(loss.node())[0] += T(1);
		for (auto it = m_records.rbegin(); it != m_records.rend(); ++it)
			it->backward();
	}

	template<typename T>
	void adam_step(AdamState<T> &state, std::span<const NamedTensor<T>> params, const AdamOptions &options)
	{
		for (const NamedTensor<T> &p : params)
		{
			auto &mo = state.moments[p.name];
			Tensor<T> t = p.tensor;
			const std::size_t n = t.size();
			if (mo.m.size() != n)
			{
				mo.m.assign(n, T(0));
				mo.v.assign(n, T(0));
				mo.steps = 0;
			}
			mo.steps++;
			const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(mo.steps));
			const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(mo.steps));
			auto values = t.values();
			const bool has_grad = t.has_grad();
			for (std::size_t i = 0; i < n; i++)
			{
				const double g = has_grad ? static_cast<double>(t.grad()[i]) : 0.0;
				const double m = options.beta1 * static_cast<double>(mo.m[i]) + (1.0 - options.beta1) * g;
				const double v = options.beta2 * static_cast<double>(mo.v[i]) + (1.0 - options.beta2) * g * g;
				mo.m[i] = static_cast<T>(m);
				mo.v[i] = static_cast<T>(v);
				const double update = options.lr * (m / c1) / (std::sqrt(v / c2) + options.eps);
				values[i] = static_cast<T>(static_cast<double>(values[i]) - update);
			}
		}
	}

	template class Tensor<float> ;
	template class Tensor<double> ;
	template class Tape<float> ;
	template class Tape<double> ;
	template void adam_step<float>(AdamState<float>&, std::span<const NamedTensor<float>>, const AdamOptions&);
	template void adam_step<double>(AdamState<double>&, std::span<const NamedTensor<double>>, const AdamOptions&);
}
