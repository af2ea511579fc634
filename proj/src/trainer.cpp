// SPDX-License-Identifier: Apache-2.0

#include <hgfm/trainer.hpp>
#include <hgfm/error.hpp>
#include <hgfm/seeding.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace hgfm
{
	namespace
	{
		constexpr std::uint64_t kEvalEpoch = 0xE7A1;
		const SplitRatios kNcRatios { 0.6, 0.2, 0.2 };

		std::optional<std::size_t> cap(std::size_t value)
		{
			if (value == 0)
				return std::nullopt;
			return value;
		}

		struct Sample
		{
				NodeId u = 0;
				NodeId v = 0;
				std::uint32_t label = 0;
		};

		const SplitPart& part_of(const SplitSet &split, SplitPartName part)
		{
			switch (part)
			{
				case SplitPartName::Train:
					return split.train;
				case SplitPartName::Valid:
					return split.valid;
				case SplitPartName::Test:
					return split.test;
			}
			throw InternalError("bad split part");
		}

		std::vector<Sample> samples_of(const TrainingJob &job, SplitPartName part)
		{
			std::vector<Sample> out;
			const Dataset &d = *job.data;
			if (job.spec.task == Task::NodeClassification)
			{
				for (NodeId u : part_of(*d.nc_split, part).nodes)
				{
					const auto &label = d.graph->node(u).label;
					if (!label)
						throw ValidationError(d.name + ": split node " + d.graph->original_id(u) + " has no label");
					out.push_back( { u, u, *label });
				}
			} else
			{
				const SplitPart &p = part_of(*d.lp_split, part);
				for (const NodePair &e : p.positives)
					out.push_back( { e.u, e.v, 1 });
				for (const NodePair &e : p.negatives)
					out.push_back( { e.u, e.v, 0 });
			}
			return out;
		}

		template<typename T>
		ad::Tensor<T> batch_loss(ad::Tape<T> &tape, const Model<T> &model, const TrainingJob &job, const ad::Tensor<T> &labels,
				std::span<const Sample> batch, const ForwardOptions &options, ForwardStats *stats)
		{
			const Dataset &d = *job.data;
			const double slope = model.config().leaky_slope;
			if (job.spec.task == Task::NodeClassification)
			{
				std::vector<NodeId> nodes;
				std::vector<std::size_t> targets;
				for (const Sample &s : batch)
				{
					nodes.push_back(s.u);
					targets.push_back(s.label);
				}
				const ad::Tensor<T> h = model.embed(tape, d.inputs(Task::NodeClassification), nodes, options, stats);
				return nc_loss(tape, nc_logits(tape, model.nc_head(), h, labels, slope), targets);
			}
			std::vector<NodeId> nodes(2 * batch.size());
			std::vector<std::uint8_t> targets;
			for (std::size_t i = 0; i < batch.size(); i++)
			{
				nodes[i] = batch[i].u;
				nodes[batch.size() + i] = batch[i].v;
				targets.push_back(batch[i].label ? 1 : 0);
			}
			const ad::Tensor<T> h = model.embed(tape, d.inputs(Task::LinkPrediction), nodes, options, stats);
			const ad::Tensor<T> hu = tape.slice(h, 0, 0, batch.size());
			const ad::Tensor<T> hv = tape.slice(h, 0, batch.size(), 2 * batch.size());
			return lp_loss(tape, lp_logits(tape, model.lp_head(), hu, hv, slope), targets);
		}

		template<typename T>
		ad::Tensor<T> label_tensor(const TrainingJob &job)
		{
			if (job.spec.task != Task::NodeClassification)
				return {};
			if (job.data->labels.count == 0)
				throw ValidationError(job.data->name + ": node classification needs label texts");
			return table_tensor<T>(job.data->labels);
		}
	}

	GraphInputs Dataset::inputs(Task task) const
	{
		const TextAttributedGraph *walk = graph.get();
		if (task == Task::LinkPrediction)
		{
			if (!lp_graph)
				throw ValidationError(name + ": no link prediction split loaded");
			walk = lp_graph.get();
		}
		return GraphInputs { walk, vocab.get(), &node_text, &relations };
	}

	std::shared_ptr<Dataset> load_dataset(const std::filesystem::path &dir, const std::string &name, const RunConfig &config, bool need_nc,
			bool need_lp)
	{
		auto d = std::make_shared<Dataset>();
		d->name = name;
		d->dir = dir;
		d->graph = std::make_shared<const TextAttributedGraph>(ingest_graph(GraphFiles::in_directory(dir)));
		d->vocab = std::make_shared<const MetaRelationVocab>(build_meta_relation_texts(*d->graph));
		const EmbeddingFiles files = EmbeddingFiles::in_directory(dir);
		for (const auto &f : { files.nodes, files.relations })
			if (!std::filesystem::exists(f))
				throw ValidationError(name + ": missing embeddings " + f.filename().string() + " (run embed-fallback or the exporter)");
		d->node_text = load_embeddings(files.nodes, d->graph->num_nodes(), config.embed_dim, EmbeddingKind::NodeText);
		d->relations = load_embeddings(files.relations, d->vocab->size(), config.embed_dim, EmbeddingKind::MetaRelation);
		if (d->graph->num_classes() > 0)
		{
			if (!std::filesystem::exists(files.labels))
				throw ValidationError(name + ": missing embeddings " + files.labels.filename().string());
			d->labels = load_embeddings(files.labels, d->graph->num_classes(), config.embed_dim, EmbeddingKind::LabelText);
		}
		if (need_nc)
		{
			if (d->graph->num_classes() == 0)
				throw ValidationError(name + ": node classification requested but the graph has no labels");
			const auto path = dir / "splits_nc.json";
			d->nc_split = std::filesystem::exists(path) ? load_split(path) : build_nc_splits(*d->graph, kNcRatios, config.seed);
			if (d->nc_split->task != Task::NodeClassification)
				throw ValidationError(path.string() + ": not a node classification split");
		}
		if (need_lp)
		{
			const auto path = dir / "splits_lp.json";
			d->lp_split = std::filesystem::exists(path) ?
					load_split(path) : build_lp_splits(*d->graph, SplitRatios { }, config.seed, cap(config.lp_cap_train), cap(config.lp_cap_eval));
			if (d->lp_split->task != Task::LinkPrediction)
				throw ValidationError(path.string() + ": not a link prediction split");
			d->lp_graph = std::make_shared<const TextAttributedGraph>(lp_training_graph(*d->graph, *d->lp_split));
		}
		return d;
	}

	std::size_t TrainingJob::train_size() const
	{
		if (spec.task == Task::NodeClassification)
			return data->nc_split ? data->nc_split->train.nodes.size() : 0;
		return data->lp_split ? data->lp_split->train.positives.size() + data->lp_split->train.negatives.size() : 0;
	}

	TrainingJob prepare_job(const JobSpec &spec, const RunConfig &config)
	{
		return TrainingJob { spec, load_dataset(spec.dataset, spec.name, config, spec.task == Task::NodeClassification, spec.task == Task::LinkPrediction) };
	}

	std::vector<TrainingJob> prepare_jobs(const RunConfig &config)
	{
		if (config.jobs.empty())
			throw ValidationError("config lists no jobs");
		std::map<std::filesystem::path, std::pair<bool, bool>> needs;
		std::map<std::filesystem::path, std::string> names;
		for (const JobSpec &j : config.jobs)
		{
			auto &n = needs[j.dataset];
			(j.task == Task::NodeClassification ? n.first : n.second) = true;
			names.emplace(j.dataset, j.name);
		}
		std::map<std::filesystem::path, std::shared_ptr<const Dataset>> loaded;
		for (const auto &[dir, need] : needs)
			loaded[dir] = load_dataset(dir, names[dir], config, need.first, need.second);
		std::vector<TrainingJob> jobs;
		for (const JobSpec &j : config.jobs)
			jobs.push_back( { j, loaded[j.dataset] });
		return jobs;
	}

	template<typename T>
	void save_checkpoint(const ModelState<T> &state, const std::filesystem::path &path)
	{
		Archive archive;
		nlohmann::json steps = nlohmann::json::object();
		for (const ad::NamedTensor<T> &p : state.model.named_parameters())
		{
			archive.entries.push_back(ArchiveEntry::from_values<T>(p.name, p.tensor.shape(), p.tensor.values()));
			auto it = state.adam.moments.find(p.name);
			if (it == state.adam.moments.end())
				continue;
			archive.entries.push_back(ArchiveEntry::from_values<T>("adam.m." + p.name, p.tensor.shape(), it->second.m));
			archive.entries.push_back(ArchiveEntry::from_values<T>("adam.v." + p.name, p.tensor.shape(), it->second.v));
			steps[p.name] = it->second.steps;
		}
		const nlohmann::json meta { { "config", to_json(state.config) }, { "config_hash", config_hash(state.config) }, { "architecture_hash",
				architecture_hash(state.config) }, { "precision", to_string(state.config.precision) }, { "step", state.step }, { "epoch", state.epoch }, {
				"best_val", std::isfinite(state.best_val) ? nlohmann::json(state.best_val) : nlohmann::json(nullptr) }, { "bad_epochs", state.bad_epochs }, {
				"stopped", state.stopped }, { "trained", state.trained }, { "adam_steps", steps } };
		archive.metadata = meta.dump();
		save_archive(archive, path);
	}

	nlohmann::json checkpoint_metadata(const std::filesystem::path &path)
	{
		try
		{
			return nlohmann::json::parse(load_archive(path).metadata);
		} catch (const nlohmann::json::parse_error&)
		{
			throw ValidationError(path.filename().string() + ": checkpoint metadata is not JSON");
		}
	}

	template<typename T>
	ModelState<T> load_checkpoint(const std::filesystem::path &path, const RunConfig &config)
	{
		const Archive archive = load_archive(path);
		nlohmann::json meta;
		try
		{
			meta = nlohmann::json::parse(archive.metadata);
		} catch (const nlohmann::json::parse_error&)
		{
			throw ValidationError(path.filename().string() + ": checkpoint metadata is not JSON");
		}
		const std::string expected = architecture_hash(config);
		if (meta.value("architecture_hash", std::string()) != expected)
			throw ValidationError(
					"checkpoint " + path.filename().string() + " does not match the config (architecture hash " + meta.value("architecture_hash",
							std::string("?")) + ", config " + expected + ")");
		if (meta.value("precision", std::string()) != to_string(config.precision))
			throw ValidationError("checkpoint precision differs from the config");
		ModelState<T> state(config);
		for (ad::NamedTensor<T> &p : state.model.named_parameters())
		{
			const ArchiveEntry *e = archive.find(p.name);
			if (!e || e->shape != p.tensor.shape())
				throw ValidationError("checkpoint lacks parameter " + p.name + " or its shape differs");
			const std::vector<T> v = e->values<T>();
			std::copy(v.begin(), v.end(), p.tensor.values().begin());
			const ArchiveEntry *m = archive.find("adam.m." + p.name);
			const ArchiveEntry *s = archive.find("adam.v." + p.name);
			if (m && s)
			{
				auto &moments = state.adam.moments[p.name];
				moments.m = m->values<T>();
				moments.v = s->values<T>();
				moments.steps = meta.at("adam_steps").at(p.name).template get<std::uint64_t>();
			}
		}
		state.step = meta.at("step").get<std::uint64_t>();
		state.epoch = meta.at("epoch").get<std::uint64_t>();
		state.best_val = meta.at("best_val").is_null() ? -std::numeric_limits<double>::infinity() : meta.at("best_val").get<double>();
		state.bad_epochs = meta.at("bad_epochs").get<std::uint64_t>();
		state.stopped = meta.at("stopped").get<bool>();
		state.trained = meta.at("trained").get<std::vector<std::string>>();
		return state;
	}

	ForwardOptions evaluation_forward(const RunConfig &config)
	{
		ForwardOptions o;
		o.train = false;
		o.seed = config.seed;
		o.epoch = kEvalEpoch;
		return o;
	}

	template<typename T>
	EvalResult evaluate(const Model<T> &model, const TrainingJob &job, SplitPartName part)
	{
		const RunConfig &config = model.config();
		std::vector<Sample> samples = samples_of(job, part);
		if (job.spec.task == Task::NodeClassification && config.eval_cap > 0 && samples.size() > config.eval_cap)
			samples.resize(config.eval_cap);
		if (samples.empty())
			throw ValidationError(job.key() + ": evaluation split is empty");
		const ForwardOptions options = evaluation_forward(config);
		const ad::Tensor<T> labels = label_tensor<T>(job);
		EvalResult r;
		r.dataset = job.spec.name;
		r.task = job.spec.task;
		r.count = samples.size();
		const std::size_t B = config.batch_size;
		std::vector<double> scores;
		for (std::size_t begin = 0; begin < samples.size(); begin += B)
		{
			const std::span<const Sample> batch(samples.data() + begin, std::min(B, samples.size() - begin));
			ad::Tape<T> tape(false, false);
			if (job.spec.task == Task::NodeClassification)
			{
				std::vector<NodeId> nodes;
				for (const Sample &s : batch)
					nodes.push_back(s.u);
				const ad::Tensor<T> h = model.embed(tape, job.data->inputs(Task::NodeClassification), nodes, options);
				const ad::Tensor<T> logits = nc_logits(tape, model.nc_head(), h, labels, config.leaky_slope);
				scores.insert(scores.end(), logits.values().begin(), logits.values().end());
			} else
			{
				std::vector<NodeId> nodes(2 * batch.size());
				for (std::size_t i = 0; i < batch.size(); i++)
				{
					nodes[i] = batch[i].u;
					nodes[batch.size() + i] = batch[i].v;
				}
				const ad::Tensor<T> h = model.embed(tape, job.data->inputs(Task::LinkPrediction), nodes, options);
				const ad::Tensor<T> logits = lp_logits(tape, model.lp_head(), tape.slice(h, 0, 0, batch.size()),
						tape.slice(h, 0, batch.size(), 2 * batch.size()), config.leaky_slope);
				scores.insert(scores.end(), logits.values().begin(), logits.values().end());
			}
		}
		if (job.spec.task == Task::NodeClassification)
		{
			std::vector<std::size_t> targets;
			for (const Sample &s : samples)
				targets.push_back(s.label);
			r.metric = "acc";
			r.value = accuracy(scores, labels.rows(), targets);
		} else
		{
			std::vector<std::uint8_t> truth;
			for (const Sample &s : samples)
				truth.push_back(s.label ? 1 : 0);
			r.metric = "auc";
			r.value = auc_roc(scores, truth);
		}
		return r;
	}

	template<typename T>
	EvalResult evaluate_mode(const ModelState<T> &state, const TrainingJob &job, EvalMode mode)
	{
		if (mode == EvalMode::ZeroShot && std::find(state.trained.begin(), state.trained.end(), job.spec.name) != state.trained.end())
			throw ValidationError("dataset '" + job.spec.name + "' was seen in training; zero-shot evaluation needs an unseen dataset");
		return evaluate(state.model, job, SplitPartName::Test);
	}

	nlohmann::json to_json(const EvalResult &r)
	{
		return nlohmann::json { { "dataset", r.dataset }, { "task", to_string(r.task) }, { r.metric, r.value }, { "count", r.count } };
	}

	template<typename T>
	TrainReport cotrain(ModelState<T> &state, std::span<const TrainingJob> jobs, const TrainHooks &hooks)
	{
		const RunConfig &config = state.config;
		if (jobs.empty())
			throw ValidationError("no training jobs");
		std::vector<std::vector<Sample>> train(jobs.size());
		std::vector<ad::Tensor<T>> labels(jobs.size());
		for (std::size_t j = 0; j < jobs.size(); j++)
		{
			train[j] = samples_of(jobs[j], SplitPartName::Train);
			if (train[j].empty())
				throw ValidationError(jobs[j].key() + ": empty train split");
			labels[j] = label_tensor<T>(jobs[j]);
			if (std::find(state.trained.begin(), state.trained.end(), jobs[j].spec.name) == state.trained.end())
				state.trained.push_back(jobs[j].spec.name);
		}
		const std::vector<ad::NamedTensor<T>> params = state.model.trainable_parameters(config.head_only);
		const ad::AdamOptions adam { config.lr, 0.9, 0.999, 1e-8 };
		const std::string hash = config_hash(config);
		const std::size_t B = config.batch_size;

		TrainReport report;
		std::size_t epochs_run = 0;
		while (state.epoch < config.epochs && !state.stopped && (hooks.max_epochs == 0 || epochs_run < hooks.max_epochs))
		{
			const auto started = std::chrono::steady_clock::now();
			const std::uint64_t e = state.epoch;
			std::vector<std::vector<std::size_t>> order(jobs.size());
			std::size_t rounds = 0;
			for (std::size_t j = 0; j < jobs.size(); j++)
			{
				order[j].resize(train[j].size());
				std::iota(order[j].begin(), order[j].end(), 0);
				std::mt19937_64 rng(derive_seed(config.seed, { 0x5f1e /* shuffle */, e, j }));
				std::shuffle(order[j].begin(), order[j].end(), rng);
				rounds = std::max(rounds, (train[j].size() + B - 1) / B);
			}
			std::vector<double> loss_sum(jobs.size(), 0.0);
			std::vector<std::size_t> loss_count(jobs.size(), 0);
			ForwardStats stats;
			for (std::size_t t = 0; t < rounds; t++)
				for (std::size_t j = 0; j < jobs.size(); j++)
				{
					const std::size_t n_batches = (train[j].size() + B - 1) / B;
					const std::size_t b = t % n_batches;
					std::vector<Sample> batch;
					for (std::size_t i = b * B; i < std::min(train[j].size(), (b + 1) * B); i++)
						batch.push_back(train[j][order[j][i]]);
					ForwardOptions options;
					options.train = true;
					options.seed = config.seed;
					options.epoch = config.frozen_sampling ? 0 : e;
					options.step_seed = derive_seed(config.seed, { 0x57e9 /* step */, state.step });
					ad::Tape<T> tape;
					const ad::Tensor<T> loss = batch_loss(tape, state.model, jobs[j], labels[j], batch, options, &stats);
					for (const ad::NamedTensor<T> &p : params)
						p.tensor.node()->grad.assign(p.tensor.size(), T(0));
					tape.backward(loss);
					ad::adam_step<T>(state.adam, params, adam);
					state.step++;
					report.steps++;
					loss_sum[j] += static_cast<double>(loss.item());
					loss_count[j]++;
					if (hooks.schedule)
						hooks.schedule->push_back(jobs[j].key());
				}

			nlohmann::json loss_json = nlohmann::json::object(), val_json = nlohmann::json::object();
			double val_mean = 0.0;
			for (std::size_t j = 0; j < jobs.size(); j++)
			{
				loss_json[jobs[j].key()] = loss_sum[j] / static_cast<double>(loss_count[j]);
				const double v = evaluate(state.model, jobs[j], SplitPartName::Valid).value;
				val_json[jobs[j].key()] = v;
				val_mean += v;
			}
			val_mean /= static_cast<double>(jobs.size());
			if (val_mean > state.best_val)
			{
				state.best_val = val_mean;
				state.bad_epochs = 0;
			} else if (++state.bad_epochs >= config.patience)
			{
				state.stopped = true;
				report.early_stopped = true;
			}
			state.epoch = e + 1;
			epochs_run++;
			nlohmann::json gate_load = nlohmann::json::array();
			for (const MoeStats &m : stats.moe)
				gate_load.push_back(m.load);
			const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
			nlohmann::json line { { "epoch", state.epoch }, { "step", state.step }, { "config_hash", hash }, { "loss", loss_json }, { "val", val_json }, {
					"val_mean", val_mean }, { "gate_load", gate_load }, { "seconds", seconds } };
			if (hooks.on_epoch)
				hooks.on_epoch(line);
			report.epochs.push_back(std::move(line));
		}
		return report;
	}

	template<typename T>
	TrainReport finetune(ModelState<T> &state, const TrainingJob &job, const TrainHooks &hooks)
	{
		state.adam = { };
		state.epoch = 0;
		state.best_val = -std::numeric_limits<double>::infinity();
		state.bad_epochs = 0;
		state.stopped = false;
		return cotrain(state, std::span<const TrainingJob>(&job, 1), hooks);
	}

#define HGFM_INSTANTIATE(T) \
	template void save_checkpoint<T>(const ModelState<T>&, const std::filesystem::path&); \
	template ModelState<T> load_checkpoint<T>(const std::filesystem::path&, const RunConfig&); \
	template TrainReport cotrain<T>(ModelState<T>&, std::span<const TrainingJob>, const TrainHooks&); \
	template TrainReport finetune<T>(ModelState<T>&, const TrainingJob&, const TrainHooks&); \
	template EvalResult evaluate<T>(const Model<T>&, const TrainingJob&, SplitPartName); \
	template EvalResult evaluate_mode<T>(const ModelState<T>&, const TrainingJob&, EvalMode);

	HGFM_INSTANTIATE(float)
	HGFM_INSTANTIATE(double)
#undef HGFM_INSTANTIATE
}
