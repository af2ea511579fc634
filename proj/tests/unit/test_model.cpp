// SPDX-License-Identifier: Apache-2.0

#include <hgfm/error.hpp>
#include <hgfm/model.hpp>
#include <hgfm/synthetic.hpp>

#include "fixtures.hpp"
#include "gradcheck.hpp"

#include <gtest/gtest.h>

namespace
{
	using namespace hgfm;
	using namespace hgfm::testing;
	using T = ad::Tensor<double>;
	using Tape = ad::Tape<double>;

	struct Inputs
	{
			TextAttributedGraph graph;
			MetaRelationVocab vocab;
			EmbeddingTable nodes, relations;

			Inputs(TextAttributedGraph g, std::size_t dim, std::uint64_t seed) :
					graph(std::move(g)),
					vocab(build_meta_relation_texts(graph))
			{
				std::mt19937_64 rng(seed);
				nodes = random_table(graph.num_nodes(), dim, rng, EmbeddingKind::NodeText);
				relations = random_table(vocab.size(), dim, rng);
			}
			GraphInputs view() const
			{
				return { &graph, &vocab, &nodes, &relations };
			}
	};

	std::vector<double> values(const T &t)
	{
		return std::vector<double>(t.values().begin(), t.values().end());
	}
}

TEST(model, parameter_count_matches_shapes)
{
	const RunConfig c = tiny_config(16);
	const Model<double> m(c);
	const std::size_t in = 16, out = 8, path = 16, head = 8, n = 3;
	const std::size_t expert = 5 * out * in + 3 * out + 2 * (out * path + out);
	const std::size_t heads = 2 * (head * (out + 16) + head + head + 1);
	EXPECT_EQ(m.parameter_count(false), 2 * n * in + n * expert + heads);
	EXPECT_EQ(m.parameter_count(true), m.parameter_count(false));
	EXPECT_EQ(m.parameter_count(true, true), heads);
	EXPECT_EQ(Model<double>(c).parameter_count(false), m.parameter_count(false));

	const Model<double> frozen(ablation_config(c, Ablation::NoCgt));
	EXPECT_EQ(frozen.parameter_count(true), m.parameter_count(false) - n * (out * path + 2 * (out * path + out)));
}

TEST(model, initialization_depends_on_seed_only)
{
	RunConfig c = tiny_config(16);
	const Model<double> a(c), b(c);
	c.seed = 6;
	const Model<double> other(c);
	const auto pa = a.named_parameters(), pb = b.named_parameters(), po = other.named_parameters();
	ASSERT_EQ(pa.size(), pb.size());
	bool differs = false;
	for (std::size_t i = 0; i < pa.size(); i++)
	{
		EXPECT_EQ(pa[i].name, pb[i].name);
		EXPECT_EQ(values(pa[i].tensor), values(pb[i].tensor));
		differs = differs || values(pa[i].tensor) != values(po[i].tensor);
	}
	EXPECT_TRUE(differs);
}

TEST(model, parameter_names)
{
	RunConfig c = tiny_config(16);
	c.layers = 2;
	const Model<double> m(c);
	const auto p = m.named_parameters();
	EXPECT_EQ(p.front().name, "layer0.gate.w_gate");
	EXPECT_EQ(p.back().name, "lp_head.b2");
	bool found = false;
	for (const auto &t : p)
		found = found || t.name == "layer1.expert2.w_gamma";
	EXPECT_TRUE(found);
}

TEST(model, no_moe_has_one_expert)
{
	const Model<double> m(ablation_config(tiny_config(16), Ablation::NoMoe));
	for (const auto &layer : m.layers())
		EXPECT_EQ(layer.experts.size(), 1u);
	for (const auto &g : m.gates())
		EXPECT_EQ(g.top_k, 1u);
}

TEST(model, no_context_graph_samples_single_hops)
{
	const Inputs in(cycle_graph(9), 16, 1);
	const Model<double> m(ablation_config(tiny_config(16), Ablation::NoContextGraph));
	Tape tape(false, false);
	NodeTrace trace;
	ForwardStats stats;
	stats.trace = &trace;
	const std::vector<NodeId> node { 4 };
	m.embed(tape, in.view(), node, ForwardOptions { }, &stats);
	ASSERT_FALSE(trace.context.neighbors.empty());
	for (const auto &p : trace.context.neighbors)
		EXPECT_EQ(p.length(), 1u);
	EXPECT_EQ(trace.experts.size(), 2u);
}

TEST(model, no_cgt_ignores_paths)
{
	Inputs in(paper_author_graph(), 16, 2);
	Inputs shuffled(paper_author_graph(), 16, 2);
	std::mt19937_64 rng(3);
	shuffled.relations = random_table(in.vocab.size(), 16, rng);
	const std::vector<NodeId> nodes { 0, 1, 2, 3, 4 };

	const Model<double> plain(ablation_config(tiny_config(16), Ablation::NoCgt));
	Tape tape(false, false);
	EXPECT_EQ(values(plain.embed(tape, in.view(), nodes, ForwardOptions { })), values(plain.embed(tape, shuffled.view(), nodes, ForwardOptions { })));

	const Model<double> full(tiny_config(16));
	EXPECT_NE(values(full.embed(tape, in.view(), nodes, ForwardOptions { })), values(full.embed(tape, shuffled.view(), nodes, ForwardOptions { })));
}

TEST(model, batch_order_and_duplicates_do_not_matter)
{
	HetagOptions o;
	o.papers_per_class = 6;
	const Inputs in(make_hetag(o), 16, 4);
	RunConfig c = tiny_config(16);
	c.layers = 2;
	const Model<double> m(c);
	Tape tape(false, false);
	const std::vector<NodeId> a { 3, 9, 17 };
	const std::vector<NodeId> b { 17, 3, 9, 3 };
	const T ya = m.embed(tape, in.view(), a, ForwardOptions { false, 11, 2, 0 });
	const T yb = m.embed(tape, in.view(), b, ForwardOptions { false, 11, 2, 0 });
	for (std::size_t col = 0; col < ya.cols(); col++)
	{
		EXPECT_EQ(ya.at(0, col), yb.at(1, col));
		EXPECT_EQ(ya.at(0, col), yb.at(3, col));
		EXPECT_EQ(ya.at(1, col), yb.at(2, col));
		EXPECT_EQ(ya.at(2, col), yb.at(0, col));
	}
}

TEST(model, epoch_changes_contexts)
{
	const Inputs in(cycle_graph(30), 16, 5);
	const Model<double> m(tiny_config(16));
	Tape tape(false, false);
	const std::vector<NodeId> nodes { 0, 7 };
	EXPECT_NE(values(m.embed(tape, in.view(), nodes, ForwardOptions { false, 1, 0, 0 })),
			values(m.embed(tape, in.view(), nodes, ForwardOptions { false, 1, 1, 0 })));
}

TEST(model, rejects_mismatched_inputs)
{
	const Inputs in(cycle_graph(4), 12, 6);
	const Model<double> m(tiny_config(16));
	Tape tape(false, false);
	const std::vector<NodeId> nodes { 0 };
	EXPECT_THROW(m.embed(tape, in.view(), nodes, ForwardOptions { }), ValidationError);
}

TEST(model, layer_operation_counts)
{
	const Inputs in(cycle_graph(12), 16, 7);
	RunConfig c = tiny_config(16);
	c.n_walks = 10;
	const Model<double> m(c);
	Tape tape(false, false);
	ForwardStats stats;
	const std::vector<NodeId> nodes { 0, 3, 6 };
	m.embed(tape, in.view(), nodes, ForwardOptions { }, &stats);
	EXPECT_EQ(stats.sampler.walks, 30u);
	EXPECT_EQ(stats.moe[0].gatings, 3u);
	EXPECT_EQ(stats.moe[0].expert_evaluations, 3u * 2u);
	EXPECT_EQ(stats.cgt.neighbor_messages, 30u * 2u);
}

TEST(model, gradcheck_full_pipeline)
{
	for (std::size_t layers : { 1u, 2u })
		for (std::uint64_t seed = 20; seed < 23; seed++)
		{
			HetagOptions o;
			o.papers_per_class = 2;
			o.seed = seed;
			const Inputs in(make_hetag(o), 6, seed);
			RunConfig c = tiny_config(6);
			c.hidden_dim = 5;
			c.out_dim = 4;
			c.head_hidden = 4;
			c.layers = layers;
			c.n_walks = 4;
			c.seed = seed;
			const Model<double> m(c);
			std::mt19937_64 rng(seed);
			auto params = m.named_parameters();
			for (auto &p : params)
				randomize(p.tensor, rng, 0.5);
			const T labels = T::from( { 3, 6 }, std::vector<double>(in.nodes.values.begin(), in.nodes.values.begin() + 18));
			const std::vector<NodeId> nodes { 3, 1, 4 };
			const std::vector<std::size_t> targets { 0, 2, 1 };
			const std::vector<std::uint8_t> links { 1, 0 };
			const std::vector<std::size_t> u { 0, 1 }, v { 1, 2 };
			// scaled so that finite-difference roundoff on zero-gradient entries stays under the 1e-8 floor
			const GradCheckResult r = gradcheck([&](Tape &t)
			{
				const T h = m.embed(t, in.view(), nodes, ForwardOptions { false, seed, 0, 0 });
				const T nc = nc_loss(t, nc_logits(t, m.nc_head(), h, labels, c.leaky_slope), targets);
				const T lp = lp_loss(t, lp_logits(t, m.lp_head(), t.gather_rows(h, u), t.gather_rows(h, v), c.leaky_slope), links);
				return t.scale(t.add(nc, lp), 1e-3);
			}, params);
			EXPECT_GT(r.entries, 500u);
			EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
		}
}
