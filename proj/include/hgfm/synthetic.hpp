// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/graph_store.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hgfm
{
	/// One planted class: its label text and the two disjoint word sets its signal nodes draw from.
	struct SyntheticClass
	{
			std::string name;
			std::string label_text;
			std::vector<std::string> keywords;   // share tokens with the label text
			std::vector<std::string> synonyms;   // share none
	};

	/// The four built-in classes shared by every generated graph.
	const std::vector<SyntheticClass>& synthetic_classes();

	/**
	 * Homogeneous graph where the label of a target is visible only two hops away:
	 * target - hub - signal. Targets and hubs carry generic text; signals carry words of
	 * their class. Each target links to `hubs_per_target` hubs of its class.
	 */
	struct HotagOptions
	{
			std::size_t targets_per_class = 100;
			std::size_t hubs_per_target = 2;
			std::size_t targets_per_hub = 5;
			std::size_t signals_per_hub = 3;
			std::size_t words_per_signal = 2;
			/// Fraction of targets whose hubs carry synonym signals instead of keyword signals.
			double synonym_fraction = 0.0;
			std::uint64_t seed = 1;
			std::string id_prefix = "h";
	};
	TextAttributedGraph make_hotag(const HotagOptions &options);

	/**
	 * Heterogeneous paper/author/topic/venue graph. A paper's label is the class of the
	 * topics its authors study (paper - author - topic). With distractors, every paper also
	 * mentions one topic of a random class directly.
	 */
	struct HetagOptions
	{
			std::size_t papers_per_class = 150;
			std::size_t authors_per_paper = 2;
			std::size_t papers_per_author = 4;
			std::size_t topics_per_class = 6;
			std::size_t topics_per_author = 2;
			std::size_t words_per_topic = 3;
			std::size_t venues = 8;
			bool distractors = true;
			std::uint64_t seed = 2;
			std::string id_prefix = "p";
	};
	TextAttributedGraph make_hetag(const HetagOptions &options);

	/// Writes graph files and fallback embeddings of width `dim` into `dir` (created if needed).
	void write_dataset(const TextAttributedGraph &g, const std::filesystem::path &dir, std::size_t dim, std::uint64_t embed_seed);
}
