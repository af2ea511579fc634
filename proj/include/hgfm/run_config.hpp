// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <hgfm/context_encoding.hpp>
#include <hgfm/graph_store.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace hgfm
{
	enum class Precision
	{
		F32, F64
	};
	std::string to_string(Precision p);
	Precision parse_precision(const std::string &text);

	enum class Ablation
	{
		None, NoContextGraph, NoCgt, NoMoe
	};
	std::string to_string(Ablation a);
	Ablation parse_ablation(const std::string &text);

	struct JobSpec
	{
			std::filesystem::path dataset;   // directory holding the dataset files
			std::string name;                 // dataset identity, used to refuse zero-shot on trained data
			Task task = Task::NodeClassification;

			friend bool operator==(const JobSpec&, const JobSpec&) = default;
	};

	/// Every tunable of a run. Serialized as a flat JSON object; `jobs` is the only nested key.
	struct RunConfig
	{
			// model
			std::size_t embed_dim = 384;
			std::size_t hidden_dim = 768;
			std::size_t out_dim = 384;
			std::size_t layers = 1;
			std::size_t n_walks = 50;
			std::size_t max_path_length = 4;
			std::size_t n_experts = 8;
			std::size_t top_k = 4;
			std::size_t head_hidden = 384;
			double leaky_slope = 0.01;
			std::string path_encoding = "harmonic";   // harmonic | mean | max | sum

			// optimization
			double lr = 0.001;
			double dropout = 0.15;
			std::size_t batch_size = 512;
			std::size_t epochs = 100;
			std::size_t patience = 10;
			Precision precision = Precision::F32;

			// run
			std::uint64_t seed = 0;
			Ablation ablation = Ablation::None;
			bool frozen_sampling = false;
			bool head_only = false;
			std::size_t lp_cap_train = 0;   // 0 = no cap
			std::size_t lp_cap_eval = 0;
			std::size_t eval_cap = 0;       // cap on evaluated NC nodes per split, 0 = all
			std::vector<JobSpec> jobs;

			/// Width of the input of layer l and of its output.
			std::size_t layer_in(std::size_t l) const;
			std::size_t layer_out(std::size_t l) const;
			/// Neighbors are path-conditioned unless the no_cgt ablation is active.
			bool path_conditioning() const
			{
				return ablation != Ablation::NoCgt;
			}

			/// Throws ValidationError on the first violated constraint.
			void validate() const;

			friend bool operator==(const RunConfig&, const RunConfig&) = default;
	};

	nlohmann::json to_json(const RunConfig &config);
	/// Unknown keys are rejected; missing keys keep their defaults. Relative dataset paths
	/// resolve against `base_dir`.
	RunConfig config_from_json(const nlohmann::json &j, const std::filesystem::path &base_dir = {});
	RunConfig load_config(const std::filesystem::path &path);
	void save_config(const RunConfig &config, const std::filesystem::path &path);

	/// Overrides one flat key from its textual value, e.g. ("lr", "0.01").
	void set_config_value(RunConfig &config, const std::string &key, const std::string &value);

	/// FNV-1a of the canonical JSON form, as 16 hex digits.
	std::string config_hash(const RunConfig &config);
	/// Hash of the keys that fix parameter shapes and frozen sets; checkpoints must match it.
	std::string architecture_hash(const RunConfig &config);

	/// Returns `config` with the named ablation applied.
	RunConfig ablation_config(const RunConfig &config, Ablation ablation);

	/// std::nullopt selects the harmonic encoding.
	std::optional<PathPooling> parse_path_pooling(const std::string &text);
}
