// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/cgt_layer.hpp>
#include <hgfm/feature_space.hpp>
#include <hgfm/graph_store.hpp>
#include <hgfm/run_config.hpp>

#include <filesystem>
#include <random>
#include <string>

namespace hgfm::testing
{
	/// Directory removed on destruction.
	class TempDir
	{
		public:
			explicit TempDir(const std::string &tag = "hgfm");
			~TempDir();
			TempDir(const TempDir&) = delete;
			TempDir& operator=(const TempDir&) = delete;

			const std::filesystem::path& path() const noexcept
			{
				return m_path;
			}
			std::filesystem::path operator/(const std::string &name) const
			{
				return m_path / name;
			}

		private:
			std::filesystem::path m_path;
	};

	ad::Tensor<double> random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64 &rng, bool requires_grad = false, double scale = 1.0);
	/// Overwrites every value with N(0, scale^2).
	void randomize(ad::Tensor<double> &t, std::mt19937_64 &rng, double scale);
	/// Glorot init with the zero-initialized FiLM tensors and biases made random as well.
	CgtParams<double> random_cgt(std::size_t in, std::size_t out, std::size_t path, std::mt19937_64 &rng);
	EmbeddingTable random_table(std::size_t count, std::size_t dim, std::mt19937_64 &rng, EmbeddingKind kind = EmbeddingKind::MetaRelation);

	/// a - b - c, undirected, one type.
	TextAttributedGraph path_graph_abc();
	/// Undirected star: center "u" plus `leaves` leaves, and one isolated node "z".
	TextAttributedGraph star_graph(std::size_t leaves);
	/// Node types {P, A}, edge types {writes, cites}; (A,writes,P) and (P,cites,P) records.
	TextAttributedGraph paper_author_graph();
	/// Undirected cycle of n nodes, one type.
	TextAttributedGraph cycle_graph(std::size_t n);

	/// Small config for fast trainer and CLI tests (tiny dims, few walks).
	RunConfig tiny_config(std::size_t embed_dim = 16);

	/// A small synthetic homogeneous dataset (graph files plus embeddings) in `dir`.
	void write_small_hotag(const std::filesystem::path &dir, std::size_t dim, std::uint64_t seed, std::size_t targets_per_class = 12,
			const std::string &prefix = "h");
	void write_small_hetag(const std::filesystem::path &dir, std::size_t dim, std::uint64_t seed, std::size_t papers_per_class = 12);
}
