// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <hgfm/synthetic.hpp>

#include <atomic>
#include <chrono>
#include <unistd.h>

namespace hgfm::testing
{
	TempDir::TempDir(const std::string &tag)
	{
		static std::atomic<unsigned> counter { 0 };
		const auto now = std::chrono::steady_clock::now().time_since_epoch().count();
		m_path = std::filesystem::temp_directory_path()
				/ (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(now) + "-" + std::to_string(counter++));
		std::filesystem::create_directories(m_path);
	}
	TempDir::~TempDir()
	{
		std::error_code ec;
		std::filesystem::remove_all(m_path, ec);
	}

	void randomize(ad::Tensor<double> &t, std::mt19937_64 &rng, double scale)
	{
		std::normal_distribution<double> normal(0.0, scale);
		for (double &v : t.values())
			v = normal(rng);
	}

	ad::Tensor<double> random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64 &rng, bool requires_grad, double scale)
	{
		ad::Tensor<double> t = ad::Tensor<double>::zeros( { rows, cols }, requires_grad);
		randomize(t, rng, scale);
		return t;
	}

	CgtParams<double> random_cgt(std::size_t in, std::size_t out, std::size_t path, std::mt19937_64 &rng)
	{
		CgtParams<double> p = CgtParams<double>::init(in, out, path, rng);
		randomize(p.w_gamma, rng, 0.5);
		randomize(p.b_gamma, rng, 0.5);
		randomize(p.w_beta, rng, 0.5);
		randomize(p.b_beta, rng, 0.5);
		return p;
	}

	EmbeddingTable random_table(std::size_t count, std::size_t dim, std::mt19937_64 &rng, EmbeddingKind kind)
	{
		EmbeddingTable t;
		t.count = count;
		t.dim = dim;
		t.kind = kind;
		std::normal_distribution<float> normal(0.0f, 1.0f);
		t.values.resize(count * dim);
		for (float &v : t.values)
			v = normal(rng);
		return t;
	}

	TextAttributedGraph path_graph_abc()
	{
		return TextAttributedGraph( { { 0, 0, "a", std::nullopt }, { 1, 0, "b", std::nullopt }, { 2, 0, "c", std::nullopt } }, { { 0, 1, 0, std::nullopt }, {
				1, 2, 0, std::nullopt } }, { "node" }, { "link" }, { }, true, { "a", "b", "c" });
	}

	TextAttributedGraph star_graph(std::size_t leaves)
	{
		std::vector<NodeRecord> nodes { { 0, 0, "center", std::nullopt } };
		std::vector<std::string> ids { "u" };
		std::vector<EdgeRecord> edges;
		for (std::size_t i = 1; i <= leaves; i++)
		{
			nodes.push_back( { static_cast<NodeId>(i), 0, "leaf", std::nullopt });
			ids.push_back("l" + std::to_string(i));
			edges.push_back( { 0, static_cast<NodeId>(i), 0, std::nullopt });
		}
		nodes.push_back( { static_cast<NodeId>(leaves + 1), 0, "alone", std::nullopt });
		ids.push_back("z");
		return TextAttributedGraph(nodes, edges, { "node" }, { "link" }, { }, true, ids);
	}

	TextAttributedGraph paper_author_graph()
	{
		// P0 P1 P2 A0 A1
		std::vector<NodeRecord> nodes { { 0, 0, "paper zero", std::nullopt }, { 1, 0, "paper one", std::nullopt }, { 2, 0, "paper two", std::nullopt }, { 3,
				1, "author zero", std::nullopt }, { 4, 1, "author one", std::nullopt } };
		std::vector<EdgeRecord> edges { { 3, 0, 0, std::nullopt }, { 3, 1, 0, std::nullopt }, { 4, 2, 0, std::nullopt }, { 1, 0, 1, std::nullopt }, { 2, 1,
				1, std::nullopt } };
		return TextAttributedGraph(nodes, edges, { "P", "A" }, { "writes", "cites" }, { }, false, { "P0", "P1", "P2", "A0", "A1" });
	}

	TextAttributedGraph cycle_graph(std::size_t n)
	{
		std::vector<NodeRecord> nodes;
		std::vector<EdgeRecord> edges;
		std::vector<std::string> ids;
		for (std::size_t i = 0; i < n; i++)
		{
			nodes.push_back( { static_cast<NodeId>(i), 0, "node " + std::to_string(i), std::nullopt });
			ids.push_back("n" + std::to_string(i));
			edges.push_back( { static_cast<NodeId>(i), static_cast<NodeId>((i + 1) % n), 0, std::nullopt });
		}
		return TextAttributedGraph(nodes, edges, { "node" }, { "link" }, { }, true, ids);
	}

	RunConfig tiny_config(std::size_t embed_dim)
	{
		RunConfig c;
		c.embed_dim = embed_dim;
		c.hidden_dim = 8;
		c.out_dim = 8;
		c.head_hidden = 8;
		c.n_walks = 6;
		c.max_path_length = 3;
		c.n_experts = 3;
		c.top_k = 2;
		c.batch_size = 16;
		c.epochs = 2;
		c.lr = 0.01;
		c.dropout = 0.1;
		c.seed = 5;
		return c;
	}

	void write_small_hotag(const std::filesystem::path &dir, std::size_t dim, std::uint64_t seed, std::size_t targets_per_class, const std::string &prefix)
	{
		HotagOptions o;
		o.targets_per_class = targets_per_class;
		o.seed = seed;
		o.id_prefix = prefix;
		write_dataset(make_hotag(o), dir, dim, 0);
	}

	void write_small_hetag(const std::filesystem::path &dir, std::size_t dim, std::uint64_t seed, std::size_t papers_per_class)
	{
		HetagOptions o;
		o.papers_per_class = papers_per_class;
		o.seed = seed;
		write_dataset(make_hetag(o), dir, dim, 0);
	}
}
