// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hgfm::ad
{
	/// All tensors are matrices; vectors are 1 x n rows or n x 1 columns.
	struct Shape
	{
			std::size_t rows = 0;
			std::size_t cols = 0;

			std::size_t size() const noexcept
			{
				return rows * cols;
			}
			friend bool operator==(const Shape&, const Shape&) = default;
	};
	std::string to_string(Shape s);

	template<typename T>
	struct TensorNode
	{
			Shape shape;
			std::vector<T> value;
			std::vector<T> grad;
			bool requires_grad = false;
	};

	/// Shared handle to a value/gradient pair. Copies alias the same storage.
	template<typename T>
	class Tensor
	{
		public:
			Tensor() = default;

			static Tensor zeros(Shape shape, bool requires_grad = false);
			static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
			static Tensor scalar(T value, bool requires_grad = false);

			bool defined() const noexcept
			{
				return static_cast<bool>(m_node);
			}
			const Shape& shape() const
			{
				return m_node->shape;
			}
			std::size_t rows() const
			{
				return m_node->shape.rows;
			}
			std::size_t cols() const
			{
				return m_node->shape.cols;
			}
			std::size_t size() const
			{
				return m_node->shape.size();
			}
			std::span<T> values()
			{
				return m_node->value;
			}
			std::span<const T> values() const
			{
				return m_node->value;
			}
			T at(std::size_t r, std::size_t c) const
			{
				return m_node->value[r * cols() + c];
			}
			T item() const;
			/// Gradient storage; allocated (zeroed) on first access.
			std::span<T> grad();
			std::span<const T> grad() const;
			bool has_grad() const
			{
				return !m_node->grad.empty();
			}
			void zero_grad();
			bool requires_grad() const
			{
				return m_node && m_node->requires_grad;
			}
			void set_requires_grad(bool flag)
			{
				m_node->requires_grad = flag;
			}
			/// Deep copy without gradient.
			Tensor clone() const;

			TensorNode<T>* node() const noexcept
			{
				return m_node.get();
			}
			const std::shared_ptr<TensorNode<T>>& shared() const noexcept
			{
				return m_node;
			}

		private:
			explicit Tensor(std::shared_ptr<TensorNode<T>> node) :
					m_node(std::move(node))
			{
			}
			std::shared_ptr<TensorNode<T>> m_node;
	};

	/**
	 * Records executed operations and replays their backward rules in reverse order.
	 *
	 * An operation is recorded only when at least one input requires a gradient; constant
	 * subexpressions cost nothing on the tape. In checked mode every produced value must be
	 * finite and `log` rejects non-positive inputs.
	 */
	template<typename T>
	class Tape
	{
		public:
			/// A tape with `recording` off keeps nothing and marks no output as requiring gradients; for inference.
			explicit Tape(bool checked = false, bool recording = true) :
					m_checked(checked),
					m_recording(recording)
			{
			}
			Tape(const Tape&) = delete;
			Tape& operator=(const Tape&) = delete;

			/// a * b, or a * b^T when `transpose_b`.
			Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b, bool transpose_b = false);
			/// Elementwise; `b` may also be a 1 x cols row or a rows x 1 column broadcast over `a`.
			Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b);
			Tensor<T> sub(const Tensor<T> &a, const Tensor<T> &b);
			Tensor<T> mul(const Tensor<T> &a, const Tensor<T> &b);
			Tensor<T> scale(const Tensor<T> &a, T factor);
			Tensor<T> add_scalar(const Tensor<T> &a, T value);
			Tensor<T> concat(std::span<const Tensor<T>> parts, int axis);
			Tensor<T> slice(const Tensor<T> &a, int axis, std::size_t begin, std::size_t end);
			Tensor<T> reshape(const Tensor<T> &a, Shape shape);
			Tensor<T> sum(const Tensor<T> &a);
			Tensor<T> mean(const Tensor<T> &a);
			Tensor<T> softmax(const Tensor<T> &a, int axis);
			Tensor<T> log_softmax(const Tensor<T> &a, int axis);
			Tensor<T> leaky_relu(const Tensor<T> &a, T slope);
			Tensor<T> sigmoid(const Tensor<T> &a);
			Tensor<T> log_sigmoid(const Tensor<T> &a);
			Tensor<T> softplus(const Tensor<T> &a);
			Tensor<T> log(const Tensor<T> &a);
			/// Inverted dropout; identity when `rate == 0` or `!train`.
			Tensor<T> dropout(const Tensor<T> &a, double rate, bool train, std::uint64_t seed);

			/// out[i] = a[index[i]]
			Tensor<T> gather_rows(const Tensor<T> &a, std::span<const std::size_t> index);
			/// out[index[i]] += a[i], out has `rows` rows.
			Tensor<T> scatter_rows(const Tensor<T> &a, std::span<const std::size_t> index, std::size_t rows);
			/// out[i] = a[i, index[i]], a column.
			Tensor<T> pick(const Tensor<T> &a, std::span<const std::size_t> index);
			/// Softmax of a column within segments [offsets[s], offsets[s+1]).
			Tensor<T> segment_softmax(const Tensor<T> &scores, std::span<const std::size_t> offsets);
			/// out[s] = sum over rows i of segment s of weights[i] * values[i]; empty segments give zero rows.
			Tensor<T> segment_weighted_sum(const Tensor<T> &weights, const Tensor<T> &values, std::span<const std::size_t> offsets);
			/// Row softmax over entries with mask != 0; other entries are exactly zero and the mask is not differentiated.
			Tensor<T> masked_softmax(const Tensor<T> &a, std::span<const std::uint8_t> mask);

			/// Gradients of `loss` (1 x 1) into every tensor that requires them. Gradients of tape
			/// intermediates are recomputed on each call; leaf gradients accumulate.
			void backward(const Tensor<T> &loss);

			std::size_t recorded() const noexcept
			{
				return m_records.size();
			}
			bool checked() const noexcept
			{
				return m_checked;
			}
			bool recording() const noexcept
			{
				return m_recording;
			}
			void clear()
			{
				m_records.clear();
			}

		private:
			struct Record
			{
					std::vector<std::shared_ptr<TensorNode<T>>> inputs;
					std::shared_ptr<TensorNode<T>> output;
					std::function<void()> backward;
			};

			Tensor<T> make_output(Shape shape, std::vector<T> values, bool requires_grad);
			void record(std::vector<std::shared_ptr<TensorNode<T>>> inputs, const Tensor<T> &output, std::function<void()> backward);
			void check_finite(const Tensor<T> &t, const char *op) const;
			Tensor<T> broadcast_binary(const Tensor<T> &a, const Tensor<T> &b, int kind);

			std::vector<Record> m_records;
			bool m_checked = false;
			bool m_recording = true;
	};

	template<typename T>
	struct NamedTensor
	{
			std::string name;
			Tensor<T> tensor;
	};

	/// Per-parameter Adam moments, keyed by parameter name.
	template<typename T>
	struct AdamState
	{
			struct Moments
			{
					std::vector<T> m;
					std::vector<T> v;
					std::uint64_t steps = 0;
			};
			std::map<std::string, Moments> moments;
	};

	struct AdamOptions
	{
			double lr = 1e-3;
			double beta1 = 0.9;
			double beta2 = 0.999;
			double eps = 1e-8;
	};

	/// One bias-corrected Adam update of every listed parameter from its current gradient.
	template<typename T>
	void adam_step(AdamState<T> &state, std::span<const NamedTensor<T>> params, const AdamOptions &options);

	extern template class Tensor<float> ;
	extern template class Tensor<double> ;
	extern template class Tape<float> ;
	extern template class Tape<double> ;
}
