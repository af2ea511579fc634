// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/graph_store.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hgfm
{
	using RelationId = std::uint32_t;

	enum class EmbeddingKind
	{
		NodeText,
		MetaRelation,
		LabelText
	};

	/// Row-major count x dim table of 32-bit vectors.
	struct EmbeddingTable
	{
			std::size_t dim = 0;
			std::size_t count = 0;
			std::vector<float> values;
			EmbeddingKind kind = EmbeddingKind::NodeText;

			std::span<const float> row(std::size_t i) const;
	};

	struct MetaRelation
	{
			TypeId src_type = 0;
			TypeId etype = 0;
			TypeId dst_type = 0;
			std::string text;
	};

	/**
	 * Distinct (source type, edge type, destination type) tuples of a graph, numbered in order
	 * of first appearance in the directed edge list. Lookup is a dense table, so it also
	 * resolves edges of any subgraph sharing the same type vocabularies.
	 */
	class MetaRelationVocab
	{
		public:
			MetaRelationVocab() = default;
			MetaRelationVocab(std::size_t num_node_types, std::size_t num_edge_types);

			std::size_t size() const noexcept
			{
				return m_entries.size();
			}
			const MetaRelation& entry(RelationId id) const
			{
				return m_entries.at(id);
			}
			const std::vector<MetaRelation>& entries() const noexcept
			{
				return m_entries;
			}
			std::optional<RelationId> find(TypeId src_type, TypeId etype, TypeId dst_type) const;
			RelationId relation_of(const TextAttributedGraph &g, EdgeId edge) const;
			std::vector<std::string> texts() const;

			/// Returns the id of the tuple, inserting it when new.
			RelationId insert(TypeId src_type, TypeId etype, TypeId dst_type, std::string text);

		private:
			std::size_t slot(TypeId src_type, TypeId etype, TypeId dst_type) const;

			std::size_t m_node_types = 0;
			std::size_t m_edge_types = 0;
			std::vector<std::int64_t> m_lookup;
			std::vector<MetaRelation> m_entries;
	};

	/// "src || etype || dst", with " || edge text" appended when the edge type carries shared text.
	std::string meta_relation_text(std::string_view src_type, std::string_view etype, std::string_view dst_type,
			const std::optional<std::string> &edge_text = {});
	MetaRelationVocab build_meta_relation_texts(const TextAttributedGraph &g);

	/// Binary vector file: "H2GV", u32 version = 1, u32 dim, u64 count, count*dim little-endian f32.
	EmbeddingTable load_embeddings(const std::filesystem::path &path, std::size_t expected_count, std::size_t expected_dim,
			EmbeddingKind kind = EmbeddingKind::NodeText);
	void save_embeddings(const EmbeddingTable &table, const std::filesystem::path &path);

	/// Deterministic bag-of-tokens hash embedding, L2-normalized; zero vector for text without tokens.
	std::vector<float> fallback_embed(std::string_view text, std::size_t dim, std::uint64_t seed);
	EmbeddingTable embed_texts(std::span<const std::string> texts, std::size_t dim, std::uint64_t seed, EmbeddingKind kind);

	/// Canonical file names inside a dataset directory.
	struct EmbeddingFiles
	{
			std::filesystem::path nodes;
			std::filesystem::path relations;
			std::filesystem::path labels;

			static EmbeddingFiles in_directory(const std::filesystem::path &dir);
	};

	/// Fails unless every table has the same dimension.
	void require_common_dim(std::span<const EmbeddingTable *const> tables);

	/// Embeds node, meta-relation and label texts of `g` with `fallback_embed` and writes the three vector files into `dir`.
	void write_fallback_embeddings(const TextAttributedGraph &g, const std::filesystem::path &dir, std::size_t dim, std::uint64_t seed);
}
