// SPDX-License-Identifier: Apache-2.0

#include <hgfm/graph_store.hpp>
#include <hgfm/error.hpp>
#include <hgfm/seeding.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

namespace
{
	using namespace hgfm;
	using nlohmann::json;

	std::string normalize_text(const std::string &text)
	{
		std::string result;
		result.reserve(text.size());
		bool pending_space = false;
		for (char c : text)
		{
			if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v')
			{
				pending_space = !result.empty();
				continue;
			}
			if (pending_space)
				result.push_back(' ');
			pending_space = false;
			result.push_back(c);
		}
		return result;
	}

	template<typename Fn>
	void for_each_json_line(const std::filesystem::path &path, Fn &&fn)
	{
		std::ifstream in(path);
		if (!in)
			throw ValidationError("cannot open " + path.string());
		std::string line;
		std::size_t line_no = 0;
		while (std::getline(in, line))
		{
			++line_no;
			if (normalize_text(line).empty())
				continue;
			json record;
			try
			{
				record = json::parse(line);
				if (!record.is_object())
					throw ValidationError("expected a JSON object");
				fn(record, line_no);
			} catch (const json::exception &e)
			{
				throw ValidationError(path.filename().string() + ":" + std::to_string(line_no) + ": malformed line: " + e.what());
			} catch (const ValidationError &e)
			{
				throw ValidationError(path.filename().string() + ":" + std::to_string(line_no) + ": " + e.what());
			}
		}
	}

	std::optional<std::string> optional_string(const json &record, const char *key)
	{
		auto it = record.find(key);
		if (it == record.end() || it->is_null())
			return std::nullopt;
		return it->get<std::string>();
	}

	std::unordered_map<std::string, std::uint32_t> index_names(const std::vector<std::string> &names, const std::string &what)
	{
		std::unordered_map<std::string, std::uint32_t> result;
		for (std::size_t i = 0; i < names.size(); i++)
			if (!result.emplace(names[i], static_cast<std::uint32_t>(i)).second)
				throw ValidationError("duplicate " + what + " '" + names[i] + "'");
		return result;
	}

	/// Undirected neighbor sets, sorted.
	std::vector<std::vector<NodeId>> neighbor_sets(const TextAttributedGraph &g)
	{
		std::vector<std::vector<NodeId>> result(g.num_nodes());
		for (const EdgeRecord &e : g.edges())
		{
			result[e.src].push_back(e.dst);
			result[e.dst].push_back(e.src);
		}
		for (auto &list : result)
		{
			std::sort(list.begin(), list.end());
			list.erase(std::unique(list.begin(), list.end()), list.end());
		}
		return result;
	}

	bool contains_sorted(const std::vector<NodeId> &list, NodeId x)
	{
		return std::binary_search(list.begin(), list.end(), x);
	}

	json part_to_json(const SplitPart &part)
	{
		json pos = json::array();
		for (const NodePair &p : part.positives)
			pos.push_back( { p.u, p.v });
		json neg = json::array();
		for (const NodePair &p : part.negatives)
			neg.push_back( { p.u, p.v });
		return json { { "nodes", part.nodes }, { "positives", pos }, { "negatives", neg } };
	}

	SplitPart part_from_json(const json &j)
	{
		SplitPart part;
		part.nodes = j.at("nodes").get<std::vector<NodeId>>();
		for (const auto &p : j.at("positives"))
			part.positives.push_back( { p.at(0).get<NodeId>(), p.at(1).get<NodeId>() });
		for (const auto &p : j.at("negatives"))
			part.negatives.push_back( { p.at(0).get<NodeId>(), p.at(1).get<NodeId>() });
		return part;
	}
}

namespace hgfm
{
	TextAttributedGraph::TextAttributedGraph(std::vector<NodeRecord> nodes, std::vector<EdgeRecord> records, std::vector<std::string> node_type_names,
			std::vector<std::string> edge_type_names, std::vector<LabelInfo> labels, bool undirected, std::vector<std::string> original_ids) :
			m_nodes(std::move(nodes)),
			m_records(std::move(records)),
			m_node_types(std::move(node_type_names)),
			m_edge_types(std::move(edge_type_names)),
			m_labels(std::move(labels)),
			m_original_ids(std::move(original_ids)),
			m_undirected(undirected)
	{
		if (m_original_ids.empty())
		{
			m_original_ids.reserve(m_nodes.size());
			for (std::size_t i = 0; i < m_nodes.size(); i++)
				m_original_ids.push_back(std::to_string(i));
		}
		if (m_original_ids.size() != m_nodes.size())
			throw ValidationError("original id map size does not match node count");
		for (std::size_t i = 0; i < m_nodes.size(); i++)
		{
			const NodeRecord &n = m_nodes[i];
			if (n.id != i)
				throw ValidationError("node ids must be dense and ordered, found " + std::to_string(n.id) + " at position " + std::to_string(i));
			if (n.type >= m_node_types.size())
				throw ValidationError("node " + std::to_string(i) + " has unknown type id " + std::to_string(n.type));
			if (n.text.empty())
				throw ValidationError("node " + std::to_string(i) + " has empty text");
			if (n.label && *n.label >= m_labels.size())
				throw ValidationError("node " + std::to_string(i) + " has unknown label id " + std::to_string(*n.label));
		}
		m_edges.reserve(m_undirected ? 2 * m_records.size() : m_records.size());
		for (const EdgeRecord &e : m_records)
		{
			if (e.src >= m_nodes.size() || e.dst >= m_nodes.size())
				throw ValidationError("dangling endpoint in edge " + std::to_string(e.src) + " -> " + std::to_string(e.dst));
			if (e.etype >= m_edge_types.size())
				throw ValidationError("edge has unknown type id " + std::to_string(e.etype));
			m_edges.push_back(e);
			if (m_undirected)
				m_edges.push_back(EdgeRecord { e.dst, e.src, e.etype, e.text });
		}

		m_offsets.assign(m_nodes.size() + 1, 0);
		for (const EdgeRecord &e : m_edges)
			m_offsets[e.src + 1]++;
		std::partial_sum(m_offsets.begin(), m_offsets.end(), m_offsets.begin());
		m_adjacency.resize(m_edges.size());
		std::vector<std::size_t> cursor(m_offsets.begin(), m_offsets.end() - 1);
		for (std::size_t i = 0; i < m_edges.size(); i++)
			m_adjacency[cursor[m_edges[i].src]++] = static_cast<EdgeId>(i);
	}

	std::span<const EdgeId> TextAttributedGraph::out_edges(NodeId u) const
	{
		if (u >= m_nodes.size())
			throw ValidationError("node id " + std::to_string(u) + " out of range");
		return std::span<const EdgeId>(m_adjacency.data() + m_offsets[u], m_offsets[u + 1] - m_offsets[u]);
	}
	bool TextAttributedGraph::has_edge(NodeId u, NodeId v) const
	{
		for (EdgeId e : out_edges(u))
			if (m_edges[e].dst == v)
				return true;
		return false;
	}
	GraphKind TextAttributedGraph::kind() const noexcept
	{
		return (m_node_types.size() == 1 && m_edge_types.size() == 1) ? GraphKind::Homogeneous : GraphKind::Heterogeneous;
	}
	const std::string& TextAttributedGraph::original_id(NodeId id) const
	{
		return m_original_ids.at(id);
	}
	TextAttributedGraph TextAttributedGraph::with_records(std::span<const std::size_t> record_indices) const
	{
		std::vector<EdgeRecord> subset;
		subset.reserve(record_indices.size());
		for (std::size_t i : record_indices)
			subset.push_back(m_records.at(i));
		return TextAttributedGraph(m_nodes, std::move(subset), m_node_types, m_edge_types, m_labels, m_undirected, m_original_ids);
	}
	bool operator==(const TextAttributedGraph &lhs, const TextAttributedGraph &rhs)
	{
		return lhs.m_nodes == rhs.m_nodes && lhs.m_records == rhs.m_records && lhs.m_node_types == rhs.m_node_types
				&& lhs.m_edge_types == rhs.m_edge_types && lhs.m_labels == rhs.m_labels && lhs.m_original_ids == rhs.m_original_ids
				&& lhs.m_undirected == rhs.m_undirected;
	}

	GraphFiles GraphFiles::in_directory(const std::filesystem::path &dir)
	{
		return GraphFiles { dir / "nodes.jsonl", dir / "edges.jsonl", dir / "meta.json" };
	}

	TextAttributedGraph ingest_graph(const GraphFiles &files)
	{
		return ingest_graph(files.nodes, files.edges, files.meta);
	}

	TextAttributedGraph ingest_graph(const std::filesystem::path &nodes_path, const std::filesystem::path &edges_path,
			const std::filesystem::path &meta_path)
	{
		json meta;
		{
			std::ifstream in(meta_path);
			if (!in)
				throw ValidationError("cannot open " + meta_path.string());
			try
			{
				meta = json::parse(in);
			} catch (const json::exception &e)
			{
				throw ValidationError(meta_path.filename().string() + ": malformed JSON: " + e.what());
			}
		}
		std::vector<std::string> node_types, edge_types;
		std::vector<LabelInfo> labels;
		bool undirected = false;
		try
		{
			node_types = meta.at("node_types").get<std::vector<std::string>>();
			edge_types = meta.at("edge_types").get<std::vector<std::string>>();
			for (const auto &l : meta.value("labels", json::array()))
				labels.push_back( { l.at("name").get<std::string>(), normalize_text(l.at("text").get<std::string>()) });
			undirected = meta.value("undirected", false);
		} catch (const json::exception &e)
		{
			throw ValidationError(meta_path.filename().string() + ": " + e.what());
		}
		if (node_types.empty() || edge_types.empty())
			throw ValidationError("meta.json must declare at least one node type and one edge type");
		const auto node_type_index = index_names(node_types, "node type");
		const auto edge_type_index = index_names(edge_types, "edge type");
		std::vector<std::string> label_names;
		for (const LabelInfo &l : labels)
			label_names.push_back(l.name);
		const auto label_index = index_names(label_names, "label");

		std::vector<NodeRecord> nodes;
		std::vector<std::string> original_ids;
		std::unordered_map<std::string, NodeId> id_map;
		for_each_json_line(nodes_path, [&](const json &record, std::size_t)
		{
			const std::string id = record.at("id").get<std::string>();
			const std::string type = record.at("type").get<std::string>();
			const std::string text = normalize_text(record.at("text").get<std::string>());
			const std::optional<std::string> label = optional_string(record, "label");
			auto type_it = node_type_index.find(type);
			if (type_it == node_type_index.end())
				throw ValidationError("unknown node type '" + type + "'");
			if (text.empty())
				throw ValidationError("node '" + id + "' has empty text");
			std::optional<LabelId> label_id;
			if (label)
			{
				auto label_it = label_index.find(*label);
				if (label_it == label_index.end())
					throw ValidationError("unknown label '" + *label + "'");
				label_id = label_it->second;
			}
			const NodeId dense = static_cast<NodeId>(nodes.size());
			if (!id_map.emplace(id, dense).second)
				throw ValidationError("duplicate node id '" + id + "'");
			nodes.push_back(NodeRecord { dense, type_it->second, text, label_id });
			original_ids.push_back(id);
		});

		std::vector<EdgeRecord> records;
		for_each_json_line(edges_path, [&](const json &record, std::size_t)
		{
			const std::string src = record.at("src").get<std::string>();
			const std::string dst = record.at("dst").get<std::string>();
			const std::string type = record.at("type").get<std::string>();
			std::optional<std::string> text = optional_string(record, "text");
			if (text)
			{
				text = normalize_text(*text);
				if (text->empty())
					text.reset();
			}
			auto src_it = id_map.find(src);
			auto dst_it = id_map.find(dst);
			if (src_it == id_map.end() || dst_it == id_map.end())
				throw ValidationError("dangling endpoint '" + (src_it == id_map.end() ? src : dst) + "'");
			auto type_it = edge_type_index.find(type);
			if (type_it == edge_type_index.end())
				throw ValidationError("unknown edge type '" + type + "'");
			records.push_back(EdgeRecord { src_it->second, dst_it->second, type_it->second, text });
		});

		return TextAttributedGraph(std::move(nodes), std::move(records), std::move(node_types), std::move(edge_types), std::move(labels), undirected,
				std::move(original_ids));
	}

	void export_graph(const TextAttributedGraph &g, const GraphFiles &files)
	{
		{
			std::ofstream out(files.nodes);
			if (!out)
				throw ValidationError("cannot write " + files.nodes.string());
			for (const NodeRecord &n : g.nodes())
			{
				json record { { "id", g.original_id(n.id) }, { "type", g.node_type_names()[n.type] }, { "text", n.text }, { "label", nullptr } };
				if (n.label)
					record["label"] = g.labels()[*n.label].name;
				out << record.dump() << '\n';
			}
		}
		{
			std::ofstream out(files.edges);
			if (!out)
				throw ValidationError("cannot write " + files.edges.string());
			for (const EdgeRecord &e : g.records())
			{
				json record { { "src", g.original_id(e.src) }, { "dst", g.original_id(e.dst) }, { "type", g.edge_type_names()[e.etype] }, { "text",
						nullptr } };
				if (e.text)
					record["text"] = *e.text;
				out << record.dump() << '\n';
			}
		}
		json labels = json::array();
		for (const LabelInfo &l : g.labels())
			labels.push_back( { { "name", l.name }, { "text", l.text } });
		json meta { { "node_types", g.node_type_names() }, { "edge_types", g.edge_type_names() }, { "labels", labels }, { "undirected", g.undirected() } };
		std::ofstream out(files.meta);
		if (!out)
			throw ValidationError("cannot write " + files.meta.string());
		out << meta.dump(2) << '\n';
	}

	std::string to_string(Task task)
	{
		return task == Task::NodeClassification ? "nc" : "lp";
	}
	Task parse_task(const std::string &text)
	{
		if (text == "nc" || text == "NC")
			return Task::NodeClassification;
		if (text == "lp" || text == "LP")
			return Task::LinkPrediction;
		throw ValidationError("unknown task '" + text + "' (expected nc or lp)");
	}

	std::vector<NodePair> sample_lp_negatives(const TextAttributedGraph &g, std::span<const NodePair> positives, std::uint64_t seed)
	{
		if (g.num_nodes() < 2)
			throw ValidationError("cannot sample negative: graph has fewer than two nodes");
		const auto neighbors = neighbor_sets(g);
		const std::size_t n = g.num_nodes();
		std::mt19937_64 rng(seed);
		std::vector<NodePair> result;
		result.reserve(positives.size());
		std::vector<NodeId> candidates;
		for (const NodePair &pos : positives)
		{
			const NodeId u = pos.u;
			const NodeId v = pos.v;
			if (u >= n || v >= n)
				throw ValidationError("positive pair references an unknown node");
			const auto &near = neighbors[u];
			auto eligible = [&](NodeId w)
			{
				return w != u && w != v && !contains_sorted(near, w);
			};
			candidates.clear();
			for (EdgeId e1 : g.out_edges(u))
				for (EdgeId e2 : g.out_edges(g.edge(e1).dst))
				{
					const NodeId w = g.edge(e2).dst;
					if (eligible(w))
						candidates.push_back(w);
				}
			std::sort(candidates.begin(), candidates.end());
			candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
			if (!candidates.empty())
			{
				std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
				result.push_back( { u, candidates[pick(rng)] });
				continue;
			}
			// no 2-hop candidate: uniform non-neighbor
			std::uniform_int_distribution<std::size_t> pick_any(0, n - 1);
			std::optional<NodeId> chosen;
			for (int attempt = 0; attempt < 64 && !chosen; attempt++)
			{
				const NodeId w = static_cast<NodeId>(pick_any(rng));
				if (eligible(w))
					chosen = w;
			}
			if (!chosen)
			{
				for (NodeId w = 0; w < n; w++)
					if (eligible(w))
						candidates.push_back(w);
				if (candidates.empty())
					throw ValidationError("cannot sample negative for node " + std::to_string(u) + ": every other node is a neighbor");
				std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
				chosen = candidates[pick(rng)];
			}
			result.push_back( { u, *chosen });
		}
		return result;
	}

	SplitSet build_lp_splits(const TextAttributedGraph &g, SplitRatios ratios, std::uint64_t seed, std::optional<std::size_t> cap_train,
			std::optional<std::size_t> cap_eval)
	{
		const std::size_t n = g.records().size();
		if (n < 10)
			throw ValidationError("link prediction splits need at least 10 edges, graph has " + std::to_string(n));
		if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 || std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
			throw ValidationError("split ratios must be non-negative and sum to 1");

		std::vector<std::size_t> order(n);
		std::iota(order.begin(), order.end(), 0);
		std::mt19937_64 rng(derive_seed(seed, { 0x5b1 }));
		std::shuffle(order.begin(), order.end(), rng);

		const std::size_t n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.valid));
		const std::size_t n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
		const std::size_t n_train = n - n_valid - n_test;

		SplitSet split;
		split.task = Task::LinkPrediction;
		split.seed = seed;
		split.train_graph_records.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
		std::sort(split.train_graph_records.begin(), split.train_graph_records.end());

		auto fill = [&](SplitPart &part, std::size_t begin, std::size_t count, std::optional<std::size_t> cap, std::uint64_t salt)
		{
			const std::size_t take = cap ? std::min(*cap, count) : count;
			for (std::size_t i = 0; i < take; i++)
			{
				const EdgeRecord &e = g.records()[order[begin + i]];
				part.positives.push_back( { e.src, e.dst });
			}
			part.negatives = sample_lp_negatives(g, part.positives, derive_seed(seed, { salt }));
		};
		fill(split.train, 0, n_train, cap_train, 1);
		fill(split.valid, n_train, n_valid, cap_eval, 2);
		fill(split.test, n_train + n_valid, n_test, cap_eval, 3);
		return split;
	}

	SplitSet build_nc_splits(const TextAttributedGraph &g, SplitRatios ratios, std::uint64_t seed)
	{
		std::vector<NodeId> labeled;
		for (const NodeRecord &n : g.nodes())
			if (n.label)
				labeled.push_back(n.id);
		if (labeled.empty())
			throw ValidationError("node classification splits need labeled nodes");
		std::mt19937_64 rng(derive_seed(seed, { 0x9c }));
		std::shuffle(labeled.begin(), labeled.end(), rng);
		const std::size_t n = labeled.size();
		const std::size_t n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.valid));
		const std::size_t n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
		const std::size_t n_train = n - n_valid - n_test;
		SplitSet split;
		split.task = Task::NodeClassification;
		split.seed = seed;
		split.train.nodes.assign(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(n_train));
		split.valid.nodes.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_train), labeled.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
		split.test.nodes.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), labeled.end());
		return split;
	}

	TextAttributedGraph lp_training_graph(const TextAttributedGraph &g, const SplitSet &split)
	{
		if (split.task != Task::LinkPrediction)
			throw ValidationError("training subgraph is only defined for link prediction splits");
		return g.with_records(split.train_graph_records);
	}

	json split_to_json(const SplitSet &split)
	{
		return json { { "task", to_string(split.task) }, { "seed", split.seed }, { "train", part_to_json(split.train) }, { "valid", part_to_json(
				split.valid) }, { "test", part_to_json(split.test) }, { "train_graph_records", split.train_graph_records } };
	}
	SplitSet split_from_json(const json &j)
	{
		try
		{
			SplitSet split;
			split.task = parse_task(j.at("task").get<std::string>());
			split.seed = j.at("seed").get<std::uint64_t>();
			split.train = part_from_json(j.at("train"));
			split.valid = part_from_json(j.at("valid"));
			split.test = part_from_json(j.at("test"));
			split.train_graph_records = j.value("train_graph_records", std::vector<std::size_t> { });
			return split;
		} catch (const json::exception &e)
		{
			throw ValidationError(std::string("malformed splits file: ") + e.what());
		}
	}
	void save_split(const SplitSet &split, const std::filesystem::path &path)
	{
		std::ofstream out(path);
		if (!out)
			throw ValidationError("cannot write " + path.string());
		out << split_to_json(split).dump() << '\n';
	}
	SplitSet load_split(const std::filesystem::path &path)
	{
		std::ifstream in(path);
		if (!in)
			throw ValidationError("cannot open " + path.string());
		try
		{
			return split_from_json(json::parse(in));
		} catch (const json::exception &e)
		{
			throw ValidationError(path.filename().string() + ": " + e.what());
		}
	}
}
