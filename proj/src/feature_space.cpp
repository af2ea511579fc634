// SPDX-License-Identifier: Apache-2.0

#include <hgfm/feature_space.hpp>
#include <hgfm/error.hpp>
#include <hgfm/seeding.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace
{
	using namespace hgfm;

	constexpr char kMagic[4] = { 'H', '2', 'G', 'V' };
	constexpr std::uint32_t kVersion = 1;

	static_assert(std::endian::native == std::endian::little, "vector files are read and written as native little-endian");

	template<typename T>
	void write_pod(std::ostream &out, const T &value)
	{
		out.write(reinterpret_cast<const char*>(&value), sizeof(T));
	}
	template<typename T>
	bool read_pod(std::istream &in, T &value)
	{
		return static_cast<bool>(in.read(reinterpret_cast<char*>(&value), sizeof(T)));
	}

	bool is_space(char c)
	{
		return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
	}
}

namespace hgfm
{
	std::span<const float> EmbeddingTable::row(std::size_t i) const
	{
		if (i >= count)
			throw ValidationError("embedding row " + std::to_string(i) + " out of range (count " + std::to_string(count) + ")");
		return std::span<const float>(values.data() + i * dim, dim);
	}

	MetaRelationVocab::MetaRelationVocab(std::size_t num_node_types, std::size_t num_edge_types) :
			m_node_types(num_node_types),
			m_edge_types(num_edge_types),
			m_lookup(num_node_types * num_edge_types * num_node_types, -1)
	{
	}
	std::size_t MetaRelationVocab::slot(TypeId src_type, TypeId etype, TypeId dst_type) const
	{
		if (src_type >= m_node_types || dst_type >= m_node_types || etype >= m_edge_types)
			throw ValidationError("meta-relation type ids out of range");
		return (static_cast<std::size_t>(src_type) * m_edge_types + etype) * m_node_types + dst_type;
	}
	std::optional<RelationId> MetaRelationVocab::find(TypeId src_type, TypeId etype, TypeId dst_type) const
	{
		const std::int64_t id = m_lookup[slot(src_type, etype, dst_type)];
		if (id < 0)
			return std::nullopt;
		return static_cast<RelationId>(id);
	}
	RelationId MetaRelationVocab::relation_of(const TextAttributedGraph &g, EdgeId edge) const
	{
		const EdgeRecord &e = g.edge(edge);
		auto id = find(g.node(e.src).type, e.etype, g.node(e.dst).type);
		if (!id)
			throw InternalError("edge " + std::to_string(edge) + " has no meta-relation entry");
		return *id;
	}
	RelationId MetaRelationVocab::insert(TypeId src_type, TypeId etype, TypeId dst_type, std::string text)
	{
		const std::size_t s = slot(src_type, etype, dst_type);
		if (m_lookup[s] >= 0)
			return static_cast<RelationId>(m_lookup[s]);
		m_lookup[s] = static_cast<std::int64_t>(m_entries.size());
		m_entries.push_back( { src_type, etype, dst_type, std::move(text) });
		return static_cast<RelationId>(m_entries.size() - 1);
	}
	std::vector<std::string> MetaRelationVocab::texts() const
	{
		std::vector<std::string> result;
		result.reserve(m_entries.size());
		for (const MetaRelation &m : m_entries)
			result.push_back(m.text);
		return result;
	}

	std::string meta_relation_text(std::string_view src_type, std::string_view etype, std::string_view dst_type,
			const std::optional<std::string> &edge_text)
	{
		std::string text;
		text.append(src_type).append(" || ").append(etype).append(" || ").append(dst_type);
		if (edge_text)
			text.append(" || ").append(*edge_text);
		return text;
	}

	MetaRelationVocab build_meta_relation_texts(const TextAttributedGraph &g)
	{
		// edge free text must be shared by all edges of one type
		std::vector<std::optional<std::string>> type_text(g.edge_type_names().size());
		std::vector<bool> seen(g.edge_type_names().size(), false);
		for (const EdgeRecord &e : g.records())
		{
			if (!seen[e.etype])
			{
				seen[e.etype] = true;
				type_text[e.etype] = e.text;
			} else if (type_text[e.etype] != e.text)
				throw ValidationError("edge text must be shared by every edge of type '" + g.edge_type_names()[e.etype] + "'");
		}
		MetaRelationVocab vocab(g.node_type_names().size(), g.edge_type_names().size());
		for (const EdgeRecord &e : g.edges())
		{
			const TypeId src_type = g.node(e.src).type;
			const TypeId dst_type = g.node(e.dst).type;
			if (vocab.find(src_type, e.etype, dst_type))
				continue;
			vocab.insert(src_type, e.etype, dst_type,
					meta_relation_text(g.node_type_names()[src_type], g.edge_type_names()[e.etype], g.node_type_names()[dst_type], type_text[e.etype]));
		}
		return vocab;
	}

	EmbeddingTable load_embeddings(const std::filesystem::path &path, std::size_t expected_count, std::size_t expected_dim, EmbeddingKind kind)
	{
		std::ifstream in(path, std::ios::binary);
		if (!in)
			throw ValidationError("cannot open " + path.string());
		char magic[4];
		std::uint32_t version = 0, dim = 0;
		std::uint64_t count = 0;
		if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
			throw ValidationError(path.filename().string() + ": magic mismatch (expected H2GV)");
		if (!read_pod(in, version) || !read_pod(in, dim) || !read_pod(in, count))
			throw ValidationError(path.filename().string() + ": truncated header");
		if (version != kVersion)
			throw ValidationError(path.filename().string() + ": unsupported version " + std::to_string(version));
		if (dim != expected_dim)
			throw ValidationError(
					path.filename().string() + ": dimension mismatch (file " + std::to_string(dim) + ", expected " + std::to_string(expected_dim) + ")");
		if (count != expected_count)
			throw ValidationError(
					path.filename().string() + ": count mismatch (file " + std::to_string(count) + ", expected " + std::to_string(expected_count) + ")");
		EmbeddingTable table;
		table.dim = dim;
		table.count = count;
		table.kind = kind;
		table.values.resize(count * dim);
		if (!in.read(reinterpret_cast<char*>(table.values.data()), static_cast<std::streamsize>(table.values.size() * sizeof(float))))
			throw ValidationError(path.filename().string() + ": truncated payload");
		if (in.peek() != std::ifstream::traits_type::eof())
			throw ValidationError(path.filename().string() + ": trailing bytes after payload");
		for (std::size_t r = 0; r < count; r++)
			for (std::size_t c = 0; c < dim; c++)
				if (!std::isfinite(table.values[r * dim + c]))
					throw ValidationError(path.filename().string() + ": non-finite value in row " + std::to_string(r));
		return table;
	}

	void save_embeddings(const EmbeddingTable &table, const std::filesystem::path &path)
	{
		if (table.values.size() != table.count * table.dim)
			throw ValidationError("embedding table payload does not match count x dim");
		std::ofstream out(path, std::ios::binary);
		if (!out)
			throw ValidationError("cannot write " + path.string());
		out.write(kMagic, 4);
		write_pod(out, kVersion);
		write_pod(out, static_cast<std::uint32_t>(table.dim));
		write_pod(out, static_cast<std::uint64_t>(table.count));
		out.write(reinterpret_cast<const char*>(table.values.data()), static_cast<std::streamsize>(table.values.size() * sizeof(float)));
	}

	std::vector<float> fallback_embed(std::string_view text, std::size_t dim, std::uint64_t seed)
	{
		if (dim == 0)
			throw ValidationError("embedding dimension must be positive");
		std::vector<double> acc(dim, 0.0);
		std::vector<double> token_vec(dim);
		std::size_t tokens = 0;
		std::size_t i = 0;
		while (i < text.size())
		{
			while (i < text.size() && is_space(text[i]))
				i++;
			const std::size_t start = i;
			while (i < text.size() && !is_space(text[i]))
				i++;
			if (i == start)
				break;
			const std::string_view token = text.substr(start, i - start);
			std::mt19937_64 rng(derive_seed(seed, { fnv1a64(token) }));
			std::normal_distribution<double> normal(0.0, 1.0);
			double norm = 0.0;
			for (double &x : token_vec)
			{
				x = normal(rng);
				norm += x * x;
			}
			norm = std::sqrt(norm);
			for (std::size_t j = 0; j < dim; j++)
				acc[j] += token_vec[j] / norm;
			tokens++;
		}
		std::vector<float> result(dim, 0.0f);
		if (tokens == 0)
			return result;
		double norm = 0.0;
		for (double x : acc)
			norm += x * x;
		norm = std::sqrt(norm);
		if (norm == 0.0)
			return result;
		for (std::size_t j = 0; j < dim; j++)
			result[j] = static_cast<float>(acc[j] / norm);
		return result;
	}

	EmbeddingTable embed_texts(std::span<const std::string> texts, std::size_t dim, std::uint64_t seed, EmbeddingKind kind)
	{
		EmbeddingTable table;
		table.dim = dim;
		table.count = texts.size();
		table.kind = kind;
		table.values.reserve(texts.size() * dim);
		for (const std::string &t : texts)
		{
			const auto v = fallback_embed(t, dim, seed);
			table.values.insert(table.values.end(), v.begin(), v.end());
		}
		return table;
	}

	EmbeddingFiles EmbeddingFiles::in_directory(const std::filesystem::path &dir)
	{
		return EmbeddingFiles { dir / "node_text.h2gv", dir / "meta_relation.h2gv", dir / "label_text.h2gv" };
	}

	void require_common_dim(std::span<const EmbeddingTable *const> tables)
	{
		if (tables.empty())
			return;
		const std::size_t dim = tables.front()->dim;
		for (const EmbeddingTable *t : tables)
			if (t->dim != dim)
				throw ValidationError("embedding tables disagree on dimension (" + std::to_string(dim) + " vs " + std::to_string(t->dim) + ")");
	}

	void write_fallback_embeddings(const TextAttributedGraph &g, const std::filesystem::path &dir, std::size_t dim, std::uint64_t seed)
	{
		const EmbeddingFiles files = EmbeddingFiles::in_directory(dir);
		std::vector<std::string> texts;
		for (const NodeRecord &n : g.nodes())
			texts.push_back(n.text);
		save_embeddings(embed_texts(texts, dim, seed, EmbeddingKind::NodeText), files.nodes);
		texts = build_meta_relation_texts(g).texts();
		save_embeddings(embed_texts(texts, dim, seed, EmbeddingKind::MetaRelation), files.relations);
		texts.clear();
		for (const LabelInfo &l : g.labels())
			texts.push_back(l.text);
		save_embeddings(embed_texts(texts, dim, seed, EmbeddingKind::LabelText), files.labels);
	}
}
