// SPDX-License-Identifier: Apache-2.0

#include <hgfm/run_config.hpp>
#include <hgfm/error.hpp>
#include <hgfm/seeding.hpp>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <set>

namespace hgfm
{
	std::string to_string(Precision p)
	{
		return p == Precision::F64 ? "f64" : "f32";
	}
	Precision parse_precision(const std::string &text)
	{
		if (text == "f32")
			return Precision::F32;
		if (text == "f64")
			return Precision::F64;
		throw ValidationError("unknown precision '" + text + "' (expected f32 or f64)");
	}

	std::string to_string(Ablation a)
	{
		switch (a)
		{
			case Ablation::None:
				return "none";
			case Ablation::NoContextGraph:
				return "no_context_graph";
			case Ablation::NoCgt:
				return "no_cgt";
			case Ablation::NoMoe:
				return "no_moe";
		}
		throw InternalError("bad ablation value");
	}
	Ablation parse_ablation(const std::string &text)
	{
		for (Ablation a : { Ablation::None, Ablation::NoContextGraph, Ablation::NoCgt, Ablation::NoMoe })
			if (to_string(a) == text)
				return a;
		throw ValidationError("unknown ablation '" + text + "' (expected no_context_graph, no_cgt or no_moe)");
	}

	std::optional<PathPooling> parse_path_pooling(const std::string &text)
	{
		if (text == "harmonic")
			return std::nullopt;
		if (text == "mean")
			return PathPooling::Mean;
		if (text == "max")
			return PathPooling::Max;
		if (text == "sum")
			return PathPooling::Sum;
		throw ValidationError("unknown path encoding '" + text + "'");
	}

	std::size_t RunConfig::layer_in(std::size_t l) const
	{
		return l == 0 ? embed_dim : hidden_dim;
	}
	std::size_t RunConfig::layer_out(std::size_t l) const
	{
		return l + 1 == layers ? out_dim : hidden_dim;
	}

	void RunConfig::validate() const
	{
		auto require = [](bool ok, const std::string &message)
		{
			if (!ok)
				throw ValidationError(message);
		};
		require(embed_dim > 0 && hidden_dim > 0 && out_dim > 0 && head_hidden > 0, "dimensions must be positive");
		require(layers >= 1, "layers must be at least 1");
		require(max_path_length >= 1, "max_path_length must be at least 1");
		require(n_experts >= 1 && top_k >= 1 && top_k <= n_experts, "need 1 <= top_k <= n_experts");
		require(leaky_slope >= 0.0 && leaky_slope < 1.0, "leaky_slope must be in [0, 1)");
		require(lr >= 0.0, "lr must be non-negative");
		require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
		require(batch_size >= 1, "batch_size must be at least 1");
		require(patience >= 1, "patience must be at least 1");
		parse_path_pooling(path_encoding);
		if (ablation == Ablation::NoMoe)
			require(n_experts == 1 && top_k == 1, "no_moe requires n_experts = top_k = 1");
		if (ablation == Ablation::NoContextGraph)
			require(max_path_length == 1, "no_context_graph requires max_path_length = 1");
		std::set<std::pair<std::string, Task>> seen;
		for (const JobSpec &job : jobs)
		{
			require(!job.name.empty(), "every job needs a dataset name");
			require(seen.insert( { job.name, job.task }).second, "duplicate job " + job.name + "/" + hgfm::to_string(job.task));
		}
	}

	nlohmann::json to_json(const RunConfig &c)
	{
		nlohmann::json jobs = nlohmann::json::array();
		for (const JobSpec &job : c.jobs)
			jobs.push_back( { { "dataset", job.dataset.string() }, { "name", job.name }, { "task", to_string(job.task) } });
		return nlohmann::json { { "embed_dim", c.embed_dim }, { "hidden_dim", c.hidden_dim }, { "out_dim", c.out_dim }, { "layers", c.layers }, {
				"n_walks", c.n_walks }, { "max_path_length", c.max_path_length }, { "n_experts", c.n_experts }, { "top_k", c.top_k }, { "head_hidden",
				c.head_hidden }, { "leaky_slope", c.leaky_slope }, { "path_encoding", c.path_encoding }, { "lr", c.lr }, { "dropout", c.dropout }, {
				"batch_size", c.batch_size }, { "epochs", c.epochs }, { "patience", c.patience }, { "precision", to_string(c.precision) }, { "seed",
				c.seed }, { "ablation", to_string(c.ablation) }, { "frozen_sampling", c.frozen_sampling }, { "head_only", c.head_only }, {
				"lp_cap_train", c.lp_cap_train }, { "lp_cap_eval", c.lp_cap_eval }, { "eval_cap", c.eval_cap }, { "jobs", jobs } };
	}

	namespace
	{
		template<typename V>
		V read_value(const nlohmann::json &j, const std::string &key)
		{
			try
			{
				return j.get<V>();
			} catch (const nlohmann::json::exception&)
			{
				throw ValidationError("config key '" + key + "' has the wrong type");
			}
		}

		void apply_key(RunConfig &c, const std::string &key, const nlohmann::json &v, const std::filesystem::path &base_dir)
		{
			auto size = [&]
			{
				if (v.is_number_integer() && v.get<std::int64_t>() < 0)
					throw ValidationError("config key '" + key + "' must be non-negative");
				if (!v.is_number_unsigned() && !v.is_number_integer())
					throw ValidationError("config key '" + key + "' must be an integer");
				return static_cast<std::size_t>(v.get<std::uint64_t>());
			};
			if (key == "embed_dim")
				c.embed_dim = size();
			else if (key == "hidden_dim")
				c.hidden_dim = size();
			else if (key == "out_dim")
				c.out_dim = size();
			else if (key == "layers")
				c.layers = size();
			else if (key == "n_walks")
				c.n_walks = size();
			else if (key == "max_path_length")
				c.max_path_length = size();
			else if (key == "n_experts")
				c.n_experts = size();
			else if (key == "top_k")
				c.top_k = size();
			else if (key == "head_hidden")
				c.head_hidden = size();
			else if (key == "leaky_slope")
				c.leaky_slope = read_value<double>(v, key);
			else if (key == "path_encoding")
				c.path_encoding = read_value<std::string>(v, key);
			else if (key == "lr")
				c.lr = read_value<double>(v, key);
			else if (key == "dropout")
				c.dropout = read_value<double>(v, key);
			else if (key == "batch_size")
				c.batch_size = size();
			else if (key == "epochs")
				c.epochs = size();
			else if (key == "patience")
				c.patience = size();
			else if (key == "precision")
				c.precision = parse_precision(read_value<std::string>(v, key));
			else if (key == "seed")
				c.seed = size();
			else if (key == "ablation")
				c.ablation = parse_ablation(read_value<std::string>(v, key));
			else if (key == "frozen_sampling")
				c.frozen_sampling = read_value<bool>(v, key);
			else if (key == "head_only")
				c.head_only = read_value<bool>(v, key);
			else if (key == "lp_cap_train")
				c.lp_cap_train = size();
			else if (key == "lp_cap_eval")
				c.lp_cap_eval = size();
			else if (key == "eval_cap")
				c.eval_cap = size();
			else if (key == "jobs")
			{
				if (!v.is_array())
					throw ValidationError("config key 'jobs' must be an array");
				c.jobs.clear();
				for (const nlohmann::json &j : v)
				{
					if (!j.is_object() || !j.contains("dataset") || !j.contains("task"))
						throw ValidationError("every job needs 'dataset' and 'task'");
					JobSpec job;
					std::filesystem::path dir = read_value<std::string>(j["dataset"], "jobs.dataset");
					if (dir.is_relative() && !base_dir.empty())
						dir = base_dir / dir;
					job.dataset = dir.lexically_normal();
					job.name = j.contains("name") ? read_value<std::string>(j["name"], "jobs.name") : job.dataset.filename().string();
					job.task = parse_task(read_value<std::string>(j["task"], "jobs.task"));
					c.jobs.push_back(std::move(job));
				}
			} else
				throw ValidationError("unknown config key '" + key + "'");
		}
	}

	RunConfig config_from_json(const nlohmann::json &j, const std::filesystem::path &base_dir)
	{
		if (!j.is_object())
			throw ValidationError("config must be a JSON object");
		RunConfig c;
		for (auto it = j.begin(); it != j.end(); ++it)
			apply_key(c, it.key(), it.value(), base_dir);
		return c;
	}

	RunConfig load_config(const std::filesystem::path &path)
	{
		std::ifstream in(path);
		if (!in)
			throw ValidationError("cannot open config " + path.string());
		nlohmann::json j;
		try
		{
			in >> j;
		} catch (const nlohmann::json::parse_error &e)
		{
			throw ValidationError(path.filename().string() + ": malformed JSON");
		}
		return config_from_json(j, path.parent_path());
	}

	void save_config(const RunConfig &config, const std::filesystem::path &path)
	{
		std::ofstream out(path);
		if (!out)
			throw ValidationError("cannot write " + path.string());
		out << to_json(config).dump(2) << '\n';
	}

	void set_config_value(RunConfig &config, const std::string &key, const std::string &value)
	{
		nlohmann::json v;
		try
		{
			v = nlohmann::json::parse(value);
		} catch (const nlohmann::json::parse_error&)
		{
			v = value;   // bare strings
		}
		apply_key(config, key, v, {});
	}

	namespace
	{
		std::string hex64(std::uint64_t h)
		{
			char buf[17];
			std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
			return buf;
		}
	}

	std::string config_hash(const RunConfig &config)
	{
		return hex64(fnv1a64(to_json(config).dump()));
	}

	std::string architecture_hash(const RunConfig &c)
	{
		const nlohmann::json j { { "embed_dim", c.embed_dim }, { "hidden_dim", c.hidden_dim }, { "out_dim", c.out_dim }, { "layers", c.layers }, {
				"n_experts", c.n_experts }, { "top_k", c.top_k }, { "head_hidden", c.head_hidden }, { "precision", to_string(c.precision) }, {
				"path_conditioning", c.path_conditioning() } };
		return hex64(fnv1a64(j.dump()));
	}

	RunConfig ablation_config(const RunConfig &config, Ablation ablation)
	{
		RunConfig c = config;
		c.ablation = ablation;
		switch (ablation)
		{
			case Ablation::None:
				break;
			case Ablation::NoContextGraph:
				c.max_path_length = 1;
				break;
			case Ablation::NoCgt:
				break;
			case Ablation::NoMoe:
				c.n_experts = 1;
				c.top_k = 1;
				break;
		}
		return c;
	}
}
