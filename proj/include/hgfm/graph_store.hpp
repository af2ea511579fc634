// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace hgfm
{
	using NodeId = std::uint32_t;
	using EdgeId = std::uint32_t;
	using TypeId = std::uint32_t;
	using LabelId = std::uint32_t;

	struct NodeRecord
	{
			NodeId id = 0;
			TypeId type = 0;
			std::string text;
			std::optional<LabelId> label;

			friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
	};

	struct EdgeRecord
	{
			NodeId src = 0;
			NodeId dst = 0;
			TypeId etype = 0;
			std::optional<std::string> text;

			friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
	};

	struct LabelInfo
	{
			std::string name;
			std::string text;

			friend bool operator==(const LabelInfo&, const LabelInfo&) = default;
	};

	enum class GraphKind
	{
		Homogeneous,
		Heterogeneous
	};

	/**
	 * Typed text-attributed graph. Immutable after construction.
	 *
	 * `records()` are the edges as ingested. When the graph is undirected every record is
	 * materialized as two directed edges (forward first, then reverse) in `edges()`; random
	 * walks only follow the directed out-adjacency.
	 */
	class TextAttributedGraph
	{
		public:
			TextAttributedGraph() = default;
			TextAttributedGraph(std::vector<NodeRecord> nodes, std::vector<EdgeRecord> records, std::vector<std::string> node_type_names,
					std::vector<std::string> edge_type_names, std::vector<LabelInfo> labels, bool undirected,
					std::vector<std::string> original_ids = {});

			std::size_t num_nodes() const noexcept
			{
				return m_nodes.size();
			}
			std::size_t num_edges() const noexcept
			{
				return m_edges.size();
			}
			const std::vector<NodeRecord>& nodes() const noexcept
			{
				return m_nodes;
			}
			const NodeRecord& node(NodeId id) const
			{
				return m_nodes.at(id);
			}
			const std::vector<EdgeRecord>& records() const noexcept
			{
				return m_records;
			}
			const std::vector<EdgeRecord>& edges() const noexcept
			{
				return m_edges;
			}
			const EdgeRecord& edge(EdgeId id) const
			{
				return m_edges.at(id);
			}
			/// Directed edge ids leaving `u`, in ingestion order.
			std::span<const EdgeId> out_edges(NodeId u) const;
			std::size_t out_degree(NodeId u) const
			{
				return out_edges(u).size();
			}
			bool has_edge(NodeId u, NodeId v) const;

			const std::vector<std::string>& node_type_names() const noexcept
			{
				return m_node_types;
			}
			const std::vector<std::string>& edge_type_names() const noexcept
			{
				return m_edge_types;
			}
			const std::vector<LabelInfo>& labels() const noexcept
			{
				return m_labels;
			}
			std::size_t num_classes() const noexcept
			{
				return m_labels.size();
			}
			bool undirected() const noexcept
			{
				return m_undirected;
			}
			GraphKind kind() const noexcept;
			/// External string id of a dense node id (sidecar map kept from ingestion).
			const std::string& original_id(NodeId id) const;
			const std::vector<std::string>& original_ids() const noexcept
			{
				return m_original_ids;
			}

			/// Same nodes and vocabularies, restricted to the given subset of records.
			TextAttributedGraph with_records(std::span<const std::size_t> record_indices) const;

			friend bool operator==(const TextAttributedGraph&, const TextAttributedGraph&);

		private:
			std::vector<NodeRecord> m_nodes;
			std::vector<EdgeRecord> m_records;
			std::vector<EdgeRecord> m_edges;
			std::vector<std::string> m_node_types;
			std::vector<std::string> m_edge_types;
			std::vector<LabelInfo> m_labels;
			std::vector<std::string> m_original_ids;
			std::vector<std::size_t> m_offsets;
			std::vector<EdgeId> m_adjacency;
			bool m_undirected = false;
	};

	/// Paths of the three files that make up a dataset on disk.
	struct GraphFiles
	{
			std::filesystem::path nodes;
			std::filesystem::path edges;
			std::filesystem::path meta;

			static GraphFiles in_directory(const std::filesystem::path &dir);
	};

	TextAttributedGraph ingest_graph(const std::filesystem::path &nodes_path, const std::filesystem::path &edges_path,
			const std::filesystem::path &meta_path);
	TextAttributedGraph ingest_graph(const GraphFiles &files);
	/// Writes the three JSON-lines/JSON files; ingesting them again yields an equal graph.
	void export_graph(const TextAttributedGraph &g, const GraphFiles &files);

	enum class Task
	{
		NodeClassification,
		LinkPrediction
	};
	std::string to_string(Task task);
	Task parse_task(const std::string &text);

	struct NodePair
	{
			NodeId u = 0;
			NodeId v = 0;

			friend bool operator==(const NodePair&, const NodePair&) = default;
			friend auto operator<=>(const NodePair&, const NodePair&) = default;
	};

	struct SplitPart
	{
			std::vector<NodeId> nodes;           // NC
			std::vector<NodePair> positives;     // LP
			std::vector<NodePair> negatives;     // LP, one per positive

			friend bool operator==(const SplitPart&, const SplitPart&) = default;
	};

	struct SplitSet
	{
			Task task = Task::NodeClassification;
			std::uint64_t seed = 0;
			SplitPart train;
			SplitPart valid;
			SplitPart test;
			/// LP only: indices into `records()` that form the training subgraph.
			std::vector<std::size_t> train_graph_records;

			friend bool operator==(const SplitSet&, const SplitSet&) = default;
	};

	struct SplitRatios
	{
			double train = 0.8;
			double valid = 0.1;
			double test = 0.1;
	};

	SplitSet build_lp_splits(const TextAttributedGraph &g, SplitRatios ratios, std::uint64_t seed, std::optional<std::size_t> cap_train = {},
			std::optional<std::size_t> cap_eval = {});
	/// Labeled nodes shuffled by seed and partitioned by the ratios (default 60/20/20).
	SplitSet build_nc_splits(const TextAttributedGraph &g, SplitRatios ratios, std::uint64_t seed);
	std::vector<NodePair> sample_lp_negatives(const TextAttributedGraph &g, std::span<const NodePair> positives, std::uint64_t seed);
	/// The subgraph LP training is allowed to see.
	TextAttributedGraph lp_training_graph(const TextAttributedGraph &g, const SplitSet &split);

	nlohmann::json split_to_json(const SplitSet &split);
	SplitSet split_from_json(const nlohmann::json &j);
	void save_split(const SplitSet &split, const std::filesystem::path &path);
	SplitSet load_split(const std::filesystem::path &path);
}
