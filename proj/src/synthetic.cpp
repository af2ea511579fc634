// SPDX-License-Identifier: Apache-2.0

#include <hgfm/synthetic.hpp>
#include <hgfm/error.hpp>
#include <hgfm/feature_space.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace hgfm
{
	const std::vector<SyntheticClass>& synthetic_classes()
	{
		static const std::vector<SyntheticClass> classes {
				{ "genomics", "research on gene dna genome sequencing protein", { "gene", "dna", "genome", "sequencing", "protein" }, { "chromosome",
						"allele", "mutation", "heredity", "rna" } },
				{ "astronomy", "research on galaxy star telescope orbit planet", { "galaxy", "star", "telescope", "orbit", "planet" }, { "nebula", "comet",
						"quasar", "cosmos", "meteor" } },
				{ "cryptography", "research on cipher encryption key hash protocol", { "cipher", "encryption", "key", "hash", "protocol" }, { "signature",
						"decryption", "plaintext", "ciphertext", "nonce" } },
				{ "linguistics", "research on syntax grammar phonology lexicon morphology", { "syntax", "grammar", "phonology", "lexicon", "morphology" }, {
						"dialect", "semantics", "vocabulary", "pronunciation", "etymology" } } };
		return classes;
	}

	namespace
	{
		std::vector<LabelInfo> label_infos()
		{
			std::vector<LabelInfo> labels;
			for (const SyntheticClass &c : synthetic_classes())
				labels.push_back( { c.name, c.label_text });
			return labels;
		}

		std::string words(const std::vector<std::string> &pool, std::size_t count, std::mt19937_64 &rng)
		{
			std::vector<std::string> chosen;
			std::sample(pool.begin(), pool.end(), std::back_inserter(chosen), std::min(count, pool.size()), rng);
			std::shuffle(chosen.begin(), chosen.end(), rng);
			std::string text;
			for (const std::string &w : chosen)
				text += (text.empty() ? "" : " ") + w;
			return text;
		}

		struct Builder
		{
				std::vector<NodeRecord> nodes;
				std::vector<std::string> ids;
				std::vector<EdgeRecord> edges;

				NodeId add(const std::string &id, TypeId type, std::string text, std::optional<LabelId> label = {})
				{
					const NodeId n = static_cast<NodeId>(nodes.size());
					nodes.push_back( { n, type, std::move(text), label });
					ids.push_back(id);
					return n;
				}
				void link(NodeId a, NodeId b, TypeId etype)
				{
					edges.push_back( { a, b, etype, std::nullopt });
				}
		};

		/// `count` distinct picks from [0, n).
		std::vector<std::size_t> distinct(std::size_t n, std::size_t count, std::mt19937_64 &rng)
		{
			std::vector<std::size_t> all(n);
			for (std::size_t i = 0; i < n; i++)
				all[i] = i;
			std::vector<std::size_t> out;
			std::sample(all.begin(), all.end(), std::back_inserter(out), std::min(count, n), rng);
			return out;
		}
	}

	TextAttributedGraph make_hotag(const HotagOptions &o)
	{
		if (o.targets_per_class == 0 || o.hubs_per_target == 0 || o.targets_per_hub == 0)
			throw ValidationError("synthetic graph needs targets and hubs");
		if (o.synonym_fraction < 0.0 || o.synonym_fraction > 1.0)
			throw ValidationError("synonym fraction must be in [0, 1]");
		const auto &classes = synthetic_classes();
		std::mt19937_64 rng(o.seed);
		Builder b;
		std::size_t counter = 0;
		auto next_id = [&](const char *kind)
		{
			return o.id_prefix + kind + std::to_string(counter++);
		};
		for (std::size_t c = 0; c < classes.size(); c++)
		{
			const std::size_t n_syn = static_cast<std::size_t>(std::llround(o.synonym_fraction * static_cast<double>(o.targets_per_class)));
			for (int flavor = 0; flavor < 2; flavor++)
			{
				const std::size_t n_targets = flavor == 0 ? o.targets_per_class - n_syn : n_syn;
				if (n_targets == 0)
					continue;
				const std::size_t n_hubs = std::max(o.hubs_per_target, (n_targets * o.hubs_per_target + o.targets_per_hub - 1) / o.targets_per_hub);
				std::vector<NodeId> hubs;
				for (std::size_t h = 0; h < n_hubs; h++)
				{
					const NodeId hub = b.add(next_id("hub"), 0, "hub");
					hubs.push_back(hub);
					for (std::size_t s = 0; s < o.signals_per_hub; s++)
					{
						const auto &pool = flavor == 0 ? classes[c].keywords : classes[c].synonyms;
						b.link(hub, b.add(next_id("sig"), 0, words(pool, o.words_per_signal, rng)), 0);
					}
				}
				for (std::size_t t = 0; t < n_targets; t++)
				{
					const NodeId target = b.add(next_id("item"), 0, "item", static_cast<LabelId>(c));
					for (std::size_t h : distinct(hubs.size(), o.hubs_per_target, rng))
						b.link(target, hubs[h], 0);
				}
			}
		}
		return TextAttributedGraph(std::move(b.nodes), std::move(b.edges), { "node" }, { "link" }, label_infos(), true, std::move(b.ids));
	}

	TextAttributedGraph make_hetag(const HetagOptions &o)
	{
		if (o.papers_per_class == 0 || o.authors_per_paper == 0 || o.papers_per_author == 0 || o.topics_per_class == 0 || o.venues == 0)
			throw ValidationError("synthetic graph needs papers, authors, topics and venues");
		enum : TypeId
		{
			Paper, Author, Topic, Venue
		};
		enum : TypeId
		{
			Authored, Studies, Mentions, PublishedIn
		};
		const auto &classes = synthetic_classes();
		const std::size_t C = classes.size();
		std::mt19937_64 rng(o.seed);
		Builder b;
		std::vector<NodeId> venues;
		for (std::size_t v = 0; v < o.venues; v++)
			venues.push_back(b.add(o.id_prefix + "venue" + std::to_string(v), Venue, "venue proceedings"));
		std::vector<std::vector<NodeId>> topics(C);
		for (std::size_t c = 0; c < C; c++)
			for (std::size_t t = 0; t < o.topics_per_class; t++)
				topics[c].push_back(
						b.add(o.id_prefix + "topic" + std::to_string(c) + "_" + std::to_string(t), Topic, words(classes[c].keywords, o.words_per_topic, rng)));
		const std::size_t authors_per_class = std::max(o.authors_per_paper,
				(o.papers_per_class * o.authors_per_paper + o.papers_per_author - 1) / o.papers_per_author);
		std::vector<std::vector<NodeId>> authors(C);
		for (std::size_t c = 0; c < C; c++)
			for (std::size_t a = 0; a < authors_per_class; a++)
			{
				const NodeId author = b.add(o.id_prefix + "author" + std::to_string(c) + "_" + std::to_string(a), Author, "author");
				authors[c].push_back(author);
				for (std::size_t t : distinct(topics[c].size(), o.topics_per_author, rng))
					b.link(author, topics[c][t], Studies);
			}
		std::uniform_int_distribution<std::size_t> pick_class(0, C - 1), pick_topic(0, o.topics_per_class - 1), pick_venue(0, o.venues - 1);
		for (std::size_t c = 0; c < C; c++)
			for (std::size_t p = 0; p < o.papers_per_class; p++)
			{
				const NodeId paper = b.add(o.id_prefix + "paper" + std::to_string(c) + "_" + std::to_string(p), Paper, "paper", static_cast<LabelId>(c));
				for (std::size_t a : distinct(authors[c].size(), o.authors_per_paper, rng))
					b.link(paper, authors[c][a], Authored);
				if (o.distractors)
				{
					const std::size_t dc = pick_class(rng);
					b.link(paper, topics[dc][pick_topic(rng)], Mentions);
				}
				b.link(paper, venues[pick_venue(rng)], PublishedIn);
			}
		return TextAttributedGraph(std::move(b.nodes), std::move(b.edges), { "paper", "author", "topic", "venue" }, { "authored", "studies", "mentions",
				"published_in" }, label_infos(), true, std::move(b.ids));
	}

	void write_dataset(const TextAttributedGraph &g, const std::filesystem::path &dir, std::size_t dim, std::uint64_t embed_seed)
	{
		std::filesystem::create_directories(dir);
		export_graph(g, GraphFiles::in_directory(dir));
		write_fallback_embeddings(g, dir, dim, embed_seed);
	}
}
