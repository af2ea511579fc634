// SPDX-License-Identifier: Apache-2.0

#include <hgfm/cli.hpp>
#include <hgfm/context_sampler.hpp>
#include <hgfm/error.hpp>
#include <hgfm/synthetic.hpp>
#include <hgfm/trainer.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace hgfm
{
	namespace
	{
		namespace fs = std::filesystem;
		using nlohmann::json;

		/// Flags shared by every command that builds a RunConfig.
		struct ConfigFlags
		{
				std::string config_path;
				std::optional<std::uint64_t> seed;
				std::optional<std::string> precision;
				std::vector<std::string> overrides;   // key=value

				void attach(CLI::App *cmd, bool config_required)
				{
					auto *opt = cmd->add_option("--config", config_path, "run configuration (JSON)");
					if (config_required)
						opt->required();
					cmd->add_option("--seed", seed, "global seed");
					cmd->add_option("--precision", precision, "f32 or f64");
					cmd->add_option("--set", overrides, "override a config key, key=value")->allow_extra_args(false);
				}

				RunConfig build(const std::optional<RunConfig> &fallback = {}) const
				{
					RunConfig c = !config_path.empty() ? load_config(config_path) : fallback ? *fallback : RunConfig { };
					for (const std::string &kv : overrides)
					{
						const auto eq = kv.find('=');
						if (eq == std::string::npos)
							throw ValidationError("--set expects key=value, got '" + kv + "'");
						set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
					}
					if (seed)
						c.seed = *seed;
					if (precision)
						c.precision = parse_precision(*precision);
					c.validate();
					return c;
				}
		};

		struct JobFlags
		{
				std::string dataset;
				std::string name;
				std::string task = "nc";

				void attach(CLI::App *cmd, bool required)
				{
					auto *opt = cmd->add_option("--dataset", dataset, "dataset directory");
					if (required)
						opt->required();
					cmd->add_option("--name", name, "dataset name (defaults to the directory name)");
					cmd->add_option("--task", task, "nc or lp");
				}
				JobSpec spec() const
				{
					JobSpec s;
					s.dataset = fs::path(dataset).lexically_normal();
					s.name = name.empty() ? fs::path(dataset).lexically_normal().filename().string() : name;
					if (s.name.empty())
						s.name = fs::path(dataset).lexically_normal().parent_path().filename().string();
					s.task = parse_task(task);
					return s;
				}
		};

		void write_json(const json &j, const fs::path &path)
		{
			std::ofstream f(path);
			if (!f)
				throw ValidationError("cannot write " + path.string());
			f << j.dump(2) << '\n';
		}

		RunConfig config_of_checkpoint(const fs::path &checkpoint)
		{
			return config_from_json(checkpoint_metadata(checkpoint).at("config"));
		}

		json parameter_manifest(const RunConfig &config)
		{
			auto manifest = [&](auto tag) -> json
			{
				using T = decltype(tag);
				const Model<T> model(config);
				json params = json::array();
				for (const ad::NamedTensor<T> &p : model.named_parameters())
					params.push_back( { { "name", p.name }, { "shape", { p.tensor.rows(), p.tensor.cols() } }, { "trainable", p.tensor.requires_grad() } });
				json experts = json::array();
				for (const auto &layer : model.layers())
					experts.push_back(layer.experts.size());
				return json { { "config_hash", config_hash(config) }, { "architecture_hash", architecture_hash(config) }, { "ablation", to_string(
						config.ablation) }, { "experts_per_layer", experts }, { "parameters", params }, { "total", model.parameter_count(false) }, {
						"trainable", model.parameter_count(true, config.head_only) } };
			};
			return config.precision == Precision::F64 ? manifest(double { }) : manifest(float { });
		}

		struct TrainArgs
		{
				fs::path out_dir;
				std::string resume;
				std::size_t max_epochs = 0;
		};

		template<typename T>
		void run_train(const RunConfig &config, const TrainArgs &args, std::ostream &out)
		{
			fs::create_directories(args.out_dir);
			const std::vector<TrainingJob> jobs = prepare_jobs(config);
			ModelState<T> state = args.resume.empty() ? ModelState<T>(config) : load_checkpoint<T>(args.resume, config);
			out << json { { "event", "start" }, { "config_hash", config_hash(config) }, { "parameters", state.model.parameter_count(true,
					config.head_only) }, { "resumed_at_epoch", state.epoch } }.dump() << '\n';
			save_config(config, args.out_dir / "config.json");
			std::ofstream metrics(args.out_dir / "metrics.jsonl", args.resume.empty() ? std::ios::trunc : std::ios::app);
			const fs::path checkpoint = args.out_dir / "checkpoint.h2gc";
			TrainHooks hooks;
			hooks.max_epochs = args.max_epochs;
			hooks.on_epoch = [&](const json &line)
			{
				metrics << line.dump() << '\n';
				metrics.flush();
				save_checkpoint(state, checkpoint);
			};
			const TrainReport report = cotrain(state, jobs, hooks);
			save_checkpoint(state, checkpoint);
			json results = json::array();
			for (const TrainingJob &job : jobs)
				results.push_back(to_json(evaluate(state.model, job, SplitPartName::Test)));
			const json summary { { "mode", "test" }, { "seed", config.seed }, { "config_hash", config_hash(config) }, { "epochs", state.epoch }, { "steps",
					state.step }, { "early_stopped", report.early_stopped }, { "results", results } };
			write_json(summary, args.out_dir / "report.json");
			out << summary.dump() << '\n';
		}

		template<typename T>
		json run_eval(const RunConfig &config, const fs::path &checkpoint, const std::vector<JobSpec> &specs, EvalMode mode)
		{
			const ModelState<T> state = load_checkpoint<T>(checkpoint, config);
			json results = json::array();
			for (const JobSpec &spec : specs)
			{
				if (mode == EvalMode::ZeroShot && std::find(state.trained.begin(), state.trained.end(), spec.name) != state.trained.end())
					throw ValidationError("dataset '" + spec.name + "' was seen in training; zero-shot evaluation needs an unseen dataset");
				results.push_back(to_json(evaluate_mode(state, prepare_job(spec, config), mode)));
			}
			return json { { "mode", mode == EvalMode::Test ? "test" : "zero-shot" }, { "seed", config.seed }, { "config_hash", config_hash(config) }, {
					"checkpoint_manifest", archive_manifest_hash(checkpoint) }, { "results", results } };
		}

		template<typename T>
		void run_finetune(const RunConfig &config, const fs::path &checkpoint, const JobSpec &spec, const fs::path &out_dir, std::ostream &out)
		{
			fs::create_directories(out_dir);
			ModelState<T> state = load_checkpoint<T>(checkpoint, config);
			const TrainingJob job = prepare_job(spec, config);
			const EvalResult before = evaluate(state.model, job, SplitPartName::Test);
			std::ofstream metrics(out_dir / "metrics.jsonl");
			TrainHooks hooks;
			hooks.on_epoch = [&](const json &line)
			{
				metrics << line.dump() << '\n';
			};
			finetune(state, job, hooks);
			save_checkpoint(state, out_dir / "checkpoint.h2gc");
			save_config(config, out_dir / "config.json");
			const EvalResult after = evaluate(state.model, job, SplitPartName::Test);
			const json summary { { "mode", "finetune" }, { "seed", config.seed }, { "config_hash", config_hash(config) }, { "before", to_json(before) }, {
					"after", to_json(after) } };
			write_json(summary, out_dir / "report.json");
			out << summary.dump() << '\n';
		}

		template<typename T>
		json run_trace(const RunConfig &config, const fs::path &checkpoint, const Dataset &data, NodeId node)
		{
			const ModelState<T> state = load_checkpoint<T>(checkpoint, config);
			NodeTrace trace;
			ForwardStats stats;
			stats.trace = &trace;
			ad::Tape<T> tape(false, false);
			const std::vector<NodeId> nodes { node };
			state.model.embed(tape, data.inputs(Task::NodeClassification), nodes, evaluation_forward(config), &stats);
			json experts = json::array();
			for (const ExpertTrace &e : trace.experts)
				experts.push_back( { { "expert", e.expert }, { "gate_weight", e.weight }, { "attention", e.attention } });
			json j = context_to_json(*data.graph, trace.context);
			j["experts"] = experts;
			return j;
		}

		NodeId find_node(const TextAttributedGraph &g, const std::string &id)
		{
			const auto &ids = g.original_ids();
			const auto it = std::find(ids.begin(), ids.end(), id);
			if (it == ids.end())
				throw ValidationError("unknown node id '" + id + "'");
			return static_cast<NodeId>(it - ids.begin());
		}

		int fail(std::ostream &err, const char *kind, const std::string &message, int code)
		{
			err << json { { "error", kind }, { "message", message } }.dump() << std::endl;
			return code;
		}
	}

	int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
	{
		CLI::App app { "graph foundation model toolkit" };
		app.require_subcommand(1);

		// ingest
		auto *ingest = app.add_subcommand("ingest", "validate graph files and write a normalized dataset directory");
		std::string in_nodes, in_edges, in_meta, out_dir;
		ingest->add_option("--nodes", in_nodes)->required();
		ingest->add_option("--edges", in_edges)->required();
		ingest->add_option("--meta", in_meta)->required();
		ingest->add_option("--out", out_dir, "dataset directory")->required();

		// embed-fallback
		auto *embed = app.add_subcommand("embed-fallback", "write hash-embedder vector files for a dataset");
		std::string dataset_dir;
		std::size_t dim = 384;
		std::uint64_t embed_seed = 0;
		embed->add_option("--dataset", dataset_dir)->required();
		embed->add_option("--dim", dim);
		embed->add_option("--seed", embed_seed);

		// split
		auto *split = app.add_subcommand("split", "build train/valid/test splits");
		std::string split_task = "nc", split_out;
		std::uint64_t split_seed = 0;
		std::size_t cap_train = 0, cap_eval = 0;
		split->add_option("--dataset", dataset_dir)->required();
		split->add_option("--task", split_task);
		split->add_option("--seed", split_seed);
		split->add_option("--cap-train", cap_train);
		split->add_option("--cap-eval", cap_eval);
		split->add_option("--out", split_out, "defaults to <dataset>/splits_<task>.json");

		// train
		auto *train = app.add_subcommand("train", "co-train on the jobs of a config");
		ConfigFlags train_flags;
		TrainArgs train_args;
		std::string train_out;
		train_flags.attach(train, true);
		train->add_option("--out", train_out, "run directory")->required();
		train->add_option("--resume", train_args.resume, "checkpoint to continue from");
		train->add_option("--max-epochs", train_args.max_epochs, "stop after this many epochs in this invocation");

		// ablate
		auto *ablate = app.add_subcommand("ablate", "train with an ablation applied");
		std::string ablation_name;
		ConfigFlags ablate_flags;
		std::string ablate_out;
		ablate->add_option("name", ablation_name, "no_context_graph, no_cgt or no_moe")->required();
		ablate_flags.attach(ablate, true);
		ablate->add_option("--out", ablate_out, "run directory")->required();

		// eval
		auto *eval = app.add_subcommand("eval", "evaluate a checkpoint");
		ConfigFlags eval_flags;
		JobFlags eval_job;
		std::string eval_checkpoint, eval_mode = "test", eval_out;
		eval_flags.attach(eval, false);
		eval_job.attach(eval, false);
		eval->add_option("--checkpoint", eval_checkpoint)->required();
		eval->add_option("--mode", eval_mode, "test or zero-shot");
		eval->add_option("--out", eval_out, "report path");

		// finetune
		auto *tune = app.add_subcommand("finetune", "adapt a checkpoint to one dataset");
		ConfigFlags tune_flags;
		JobFlags tune_job;
		std::string tune_checkpoint, tune_out;
		bool head_only = false;
		tune_flags.attach(tune, false);
		tune_job.attach(tune, true);
		tune->add_option("--checkpoint", tune_checkpoint)->required();
		tune->add_option("--out", tune_out)->required();
		tune->add_flag("--head-only", head_only, "train only the task heads");

		// inspect
		auto *inspect = app.add_subcommand("inspect", "print the parameter manifest");
		ConfigFlags inspect_flags;
		std::string inspect_checkpoint;
		inspect_flags.attach(inspect, false);
		inspect->add_option("--checkpoint", inspect_checkpoint);

		// inspect-context
		auto *context = app.add_subcommand("inspect-context", "dump sampled context graphs");
		ConfigFlags context_flags;
		std::vector<std::string> context_nodes;
		std::string context_checkpoint;
		bool context_trace = false;
		context_flags.attach(context, false);
		context->add_option("--dataset", dataset_dir)->required();
		context->add_option("--node", context_nodes, "original node id")->required();
		context->add_option("--checkpoint", context_checkpoint);
		context->add_flag("--trace", context_trace, "include gate weights and attention (needs --checkpoint)");

		// synth
		auto *synth = app.add_subcommand("synth", "generate a synthetic dataset");
		std::string synth_kind;
		HotagOptions hotag;
		HetagOptions hetag;
		std::uint64_t synth_seed = 1;
		synth->add_option("kind", synth_kind, "hotag or hetag")->required();
		synth->add_option("--out", out_dir)->required();
		synth->add_option("--dim", dim);
		synth->add_option("--seed", synth_seed);
		synth->add_option("--embed-seed", embed_seed);
		synth->add_option("--targets-per-class", hotag.targets_per_class);
		synth->add_option("--synonym-fraction", hotag.synonym_fraction);
		synth->add_option("--papers-per-class", hetag.papers_per_class);
		synth->add_option("--prefix", hotag.id_prefix);

		std::vector<const char*> argv { "hgfm" };
		for (const std::string &a : args)
			argv.push_back(a.c_str());
		try
		{
			app.parse(static_cast<int>(argv.size()), argv.data());
		} catch (const CLI::ParseError &e)
		{
			if (e.get_exit_code() == 0)
			{
				out << app.help();
				return 0;
			}
			return fail(err, "validation", e.what(), 1);
		}

		try
		{
			if (*ingest)
			{
				const TextAttributedGraph g = ingest_graph(in_nodes, in_edges, in_meta);
				fs::create_directories(out_dir);
				export_graph(g, GraphFiles::in_directory(out_dir));
				out << json { { "nodes", g.num_nodes() }, { "edges", g.num_edges() }, { "kind", g.kind() == GraphKind::Homogeneous ? "hotag" : "hetag" }, {
						"node_types", g.node_type_names() }, { "edge_types", g.edge_type_names() }, { "meta_relations", build_meta_relation_texts(g).size() }, {
						"classes", g.num_classes() } }.dump() << '\n';
			} else if (*embed)
			{
				const TextAttributedGraph g = ingest_graph(GraphFiles::in_directory(dataset_dir));
				write_fallback_embeddings(g, dataset_dir, dim, embed_seed);
				out << json { { "dim", dim }, { "nodes", g.num_nodes() }, { "meta_relations", build_meta_relation_texts(g).size() }, { "labels",
						g.num_classes() } }.dump() << '\n';
			} else if (*split)
			{
				const TextAttributedGraph g = ingest_graph(GraphFiles::in_directory(dataset_dir));
				const Task task = parse_task(split_task);
				const SplitSet s = task == Task::NodeClassification ?
						build_nc_splits(g, SplitRatios { 0.6, 0.2, 0.2 }, split_seed) :
						build_lp_splits(g, SplitRatios { }, split_seed, cap_train ? std::optional<std::size_t>(cap_train) : std::nullopt,
								cap_eval ? std::optional<std::size_t>(cap_eval) : std::nullopt);
				const fs::path path = split_out.empty() ? fs::path(dataset_dir) / ("splits_" + to_string(task) + ".json") : fs::path(split_out);
				save_split(s, path);
				out << json { { "path", path.string() }, { "train", task == Task::NodeClassification ? s.train.nodes.size() : s.train.positives.size() }, {
						"valid", task == Task::NodeClassification ? s.valid.nodes.size() : s.valid.positives.size() }, { "test",
						task == Task::NodeClassification ? s.test.nodes.size() : s.test.positives.size() } }.dump() << '\n';
			} else if (*train || *ablate)
			{
				RunConfig config = *train ? train_flags.build() : ablation_config(ablate_flags.build(), parse_ablation(ablation_name));
				config.validate();
				train_args.out_dir = *train ? train_out : ablate_out;
				if (config.precision == Precision::F64)
					run_train<double>(config, train_args, out);
				else
					run_train<float>(config, train_args, out);
			} else if (*eval)
			{
				const RunConfig config = eval_flags.build(config_of_checkpoint(eval_checkpoint));
				const EvalMode mode = eval_mode == "test" ? EvalMode::Test : eval_mode == "zero-shot" ? EvalMode::ZeroShot : throw ValidationError(
																										"unknown eval mode '" + eval_mode + "'");
				std::vector<JobSpec> specs;
				if (!eval_job.dataset.empty())
					specs.push_back(eval_job.spec());
				else if (mode == EvalMode::Test)
					specs = config.jobs;
				else
					throw ValidationError("zero-shot evaluation needs --dataset");
				const json report = config.precision == Precision::F64 ?
						run_eval<double>(config, eval_checkpoint, specs, mode) : run_eval<float>(config, eval_checkpoint, specs, mode);
				if (!eval_out.empty())
					write_json(report, eval_out);
				out << report.dump() << '\n';
			} else if (*tune)
			{
				RunConfig config = tune_flags.build(config_of_checkpoint(tune_checkpoint));
				if (head_only)
					config.head_only = true;
				if (config.precision == Precision::F64)
					run_finetune<double>(config, tune_checkpoint, tune_job.spec(), tune_out, out);
				else
					run_finetune<float>(config, tune_checkpoint, tune_job.spec(), tune_out, out);
			} else if (*inspect)
			{
				const RunConfig config = inspect_checkpoint.empty() ? inspect_flags.build() : inspect_flags.build(config_of_checkpoint(inspect_checkpoint));
				out << parameter_manifest(config).dump() << '\n';
			} else if (*context)
			{
				const RunConfig config = context_checkpoint.empty() ? context_flags.build() : context_flags.build(config_of_checkpoint(context_checkpoint));
				if (context_trace)
				{
					if (context_checkpoint.empty())
						throw ValidationError("--trace needs --checkpoint");
					const auto data = load_dataset(dataset_dir, fs::path(dataset_dir).filename().string(), config, false, false);
					for (const std::string &id : context_nodes)
					{
						const NodeId node = find_node(*data->graph, id);
						out << (config.precision == Precision::F64 ?
								run_trace<double>(config, context_checkpoint, *data, node) : run_trace<float>(config, context_checkpoint, *data, node)).dump()
								<< '\n';
					}
				} else
				{
					const TextAttributedGraph g = ingest_graph(GraphFiles::in_directory(dataset_dir));
					const MetaRelationVocab vocab = build_meta_relation_texts(g);
					const SamplerOptions options { config.n_walks, config.max_path_length };
					for (const std::string &id : context_nodes)
					{
						const NodeId node = find_node(g, id);
						ContextGraph c = sample_context(g, vocab, node, options, context_seed(config.seed, evaluation_forward(config).epoch, 1, node));
						canonicalize(c);
						out << context_to_json(g, c).dump() << '\n';
					}
				}
			} else if (*synth)
			{
				TextAttributedGraph g;
				if (synth_kind == "hotag")
				{
					hotag.seed = synth_seed;
					g = make_hotag(hotag);
				} else if (synth_kind == "hetag")
				{
					hetag.seed = synth_seed;
					g = make_hetag(hetag);
				} else
					throw ValidationError("unknown synthetic kind '" + synth_kind + "' (expected hotag or hetag)");
				write_dataset(g, out_dir, dim, embed_seed);
				out << json { { "nodes", g.num_nodes() }, { "edges", g.num_edges() }, { "classes", g.num_classes() } }.dump() << '\n';
			}
			return 0;
		} catch (const ValidationError &e)
		{
			return fail(err, "validation", e.what(), 1);
		} catch (const std::exception &e)
		{
			return fail(err, "runtime", e.what(), 2);
		}
	}
}
