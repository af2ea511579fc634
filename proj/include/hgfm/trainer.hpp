// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/archive.hpp>
#include <hgfm/model.hpp>
#include <hgfm/run_config.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hgfm
{
	/// A dataset directory loaded into memory: graph, vocabulary, embeddings and splits.
	struct Dataset
	{
			std::string name;
			std::filesystem::path dir;
			std::shared_ptr<const TextAttributedGraph> graph;
			std::shared_ptr<const MetaRelationVocab> vocab;
			EmbeddingTable node_text;
			EmbeddingTable relations;
			EmbeddingTable labels;
			std::optional<SplitSet> nc_split;
			std::optional<SplitSet> lp_split;
			/// Graph LP walks run on: the full graph minus validation and test edges.
			std::shared_ptr<const TextAttributedGraph> lp_graph;

			GraphInputs inputs(Task task) const;
	};

	/// Reads a dataset directory. Embedding files are required; splits are read from
	/// splits_nc.json / splits_lp.json when present and built from `config.seed` otherwise.
	std::shared_ptr<Dataset> load_dataset(const std::filesystem::path &dir, const std::string &name, const RunConfig &config, bool need_nc,
			bool need_lp);

	struct TrainingJob
	{
			JobSpec spec;
			std::shared_ptr<const Dataset> data;

			std::string key() const
			{
				return spec.name + "/" + to_string(spec.task);
			}
			/// Number of training samples (labeled nodes, or positive plus negative pairs).
			std::size_t train_size() const;
	};

	/// Loads every dataset the config's jobs reference, once per directory.
	std::vector<TrainingJob> prepare_jobs(const RunConfig &config);
	TrainingJob prepare_job(const JobSpec &spec, const RunConfig &config);

	template<typename T>
	struct ModelState
	{
			RunConfig config;
			Model<T> model;
			ad::AdamState<T> adam;
			std::uint64_t step = 0;
			std::uint64_t epoch = 0;   // completed epochs
			double best_val = -std::numeric_limits<double>::infinity();
			std::uint64_t bad_epochs = 0;
			bool stopped = false;
			std::vector<std::string> trained;   // dataset names seen in training

			explicit ModelState(const RunConfig &c) :
					config(c),
					model(c)
			{
			}
	};

	template<typename T>
	void save_checkpoint(const ModelState<T> &state, const std::filesystem::path &path);
	/// Refuses checkpoints whose architecture hash or precision differ from `config`. The
	/// returned state carries `config` (so lr, epochs and jobs may change between runs).
	template<typename T>
	ModelState<T> load_checkpoint(const std::filesystem::path &path, const RunConfig &config);
	/// Metadata of a checkpoint file as JSON.
	nlohmann::json checkpoint_metadata(const std::filesystem::path &path);

	struct TrainHooks
	{
			std::function<void(const nlohmann::json&)> on_epoch;
			/// Stop after this many epochs in this call (checkpoint/resume tests); 0 = no limit.
			std::size_t max_epochs = 0;
			/// Record the job key of every optimizer step.
			std::vector<std::string> *schedule = nullptr;
	};

	struct TrainReport
	{
			std::vector<nlohmann::json> epochs;
			std::size_t steps = 0;
			bool early_stopped = false;
	};

	/**
	 * Multi-job training. Each epoch shuffles every job's training samples and visits the jobs
	 * round-robin one mini-batch at a time until the largest job is exhausted; smaller jobs
	 * cycle. Stops after `config.epochs` completed epochs or when the mean validation metric
	 * has not improved for `config.patience` epochs. Resumable from a checkpointed state.
	 */
	template<typename T>
	TrainReport cotrain(ModelState<T> &state, std::span<const TrainingJob> jobs, const TrainHooks &hooks = {});

	/// Continues training on one job with fresh optimizer moments and epoch counters. With
	/// `config.head_only` only the task heads move.
	template<typename T>
	TrainReport finetune(ModelState<T> &state, const TrainingJob &job, const TrainHooks &hooks = {});

	enum class SplitPartName
	{
		Train, Valid, Test
	};

	struct EvalResult
	{
			std::string dataset;
			Task task = Task::NodeClassification;
			std::string metric;   // "acc" or "auc"
			double value = 0.0;
			std::size_t count = 0;
	};

	/// Accuracy (NC) or AUC (LP) on one split part. Never updates parameters.
	template<typename T>
	EvalResult evaluate(const Model<T> &model, const TrainingJob &job, SplitPartName part);

	enum class EvalMode
	{
		Test, ZeroShot
	};
	/// `evaluate` on the test part; zero-shot refuses datasets the state was trained on.
	template<typename T>
	EvalResult evaluate_mode(const ModelState<T> &state, const TrainingJob &job, EvalMode mode);

	nlohmann::json to_json(const EvalResult &r);

	/// Options used for all evaluation forward passes.
	ForwardOptions evaluation_forward(const RunConfig &config);
}
