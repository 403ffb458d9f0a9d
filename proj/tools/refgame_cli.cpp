#include <csignal>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "refgame/downstream.hpp"
#include "refgame/error.hpp"
#include "refgame/experiments.hpp"
#include "refgame/games.hpp"
#include "refgame/listener.hpp"
#include "refgame/pragmatics.hpp"
#include "refgame/refgame_eval.hpp"
#include "refgame/service.hpp"
#include "refgame/session.hpp"
#include "refgame/speaker.hpp"
#include "refgame/synthworld.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace refgame;

namespace {

const std::vector<std::string> kCommands = {"synth-gen", "train-speaker", "train-listener", "eval-rg",
                                            "rerank",    "embed",         "classify",       "retrieve",
                                            "explain",   "export-emb",    "serve"};

struct Common {
  std::uint64_t seed = 0;
  std::string out;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

fs::path out_dir(const Common& common) {
  if (common.out.empty()) throw Error(ErrorCode::ConfigError, "--out is required");
  fs::create_directories(common.out);
  return common.out;
}

/// Every option of the command and the seed, as resolved after parsing. The
/// output directory itself is left out so that reruns elsewhere compare equal.
void write_config_snapshot(const fs::path& dir, const CLI::App& app, const CLI::App& command) {
  json options;
  for (const CLI::App* scope : {&app, &command}) {
    for (const CLI::Option* opt : scope->get_options()) {
      if (opt->get_lnames().empty()) continue;
      const auto& name = opt->get_lnames().front();
      if (name == "help" || name == "config" || name == "out") continue;
      if (opt->get_expected_max() == 0) {
        options[name] = opt->count() > 0;
      } else if (opt->count() == 0) {
        options[name] = opt->get_default_str();
      } else if (opt->get_expected_max() > 1) {
        options[name] = opt->results();
      } else {
        options[name] = opt->results().back();
      }
    }
  }
  json j{{"command", command.get_name()}, {"options", options}};
  write_text(dir / "config.json", j.dump(2) + "\n");
}

std::vector<AnnotationRecord> all_records(const synth::SynthDataset& ds) {
  std::vector<AnnotationRecord> out;
  for (const auto& split : ds.splits) out.insert(out.end(), split.records.begin(), split.records.end());
  return out;
}

std::vector<AnnotationRecord> first_records(const synth::SynthDataset& ds, const std::string& split, std::size_t max) {
  auto records = ds.split(split).records;
  if (max > 0 && records.size() > max) records.resize(max);
  return records;
}

Profile resolve_profile(const std::string& name, std::size_t epochs, std::size_t batch, double lr, bool speaker) {
  Profile p = Profile::by_name(name);
  if (epochs > 0) {
    (speaker ? p.speaker_epochs : p.listener_epochs) = epochs;
    (speaker ? p.speaker_steps : p.listener_steps) = 0;
    p.listener_random_negative_steps = 0;
  }
  if (batch > 0) (speaker ? p.speaker_batch : p.listener_batch) = batch;
  if (lr > 0) p.adam.learning_rate = lr;
  return p;
}

json log_json(const TrainLog& log) {
  return {{"initial_loss", log.initial_loss}, {"final_loss", log.final_loss}, {"epoch_loss", log.epoch_loss},
          {"steps", log.steps}};
}

void write_report(const fs::path& dir, const EvalReport& report) {
  write_text(dir / "report.json", report_json(report));
  write_text(dir / "report.txt", report_table(report));
}

HttpServer* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1 && argv[1][0] != '-' &&
      std::find(kCommands.begin(), kCommands.end(), std::string(argv[1])) == kCommands.end()) {
    std::cerr << "error: " << error_name(ErrorCode::UnknownCommand) << ": " << argv[1] << "\n";
    return 2;
  }

  CLI::App app{"Reference-game speakers, listeners and attribute-phrase tools"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with option values, one section per command");
  Common common;
  app.add_option("--seed", common.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--out", common.out, "Output directory");

  // synth-gen
  auto* gen = app.add_subcommand("synth-gen", "Generate a synthetic world and annotated image pairs");
  synth::SplitSizes sizes;
  auto spec = synth::WorldSpec::default_spec();
  synth::WriteOptions write_options;
  bool no_images = false;
  gen->add_option("--train", sizes.train)->capture_default_str();
  gen->add_option("--val", sizes.val)->capture_default_str();
  gen->add_option("--test", sizes.test)->capture_default_str();
  gen->add_option("--feature-dim", spec.feature_dim)->capture_default_str();
  gen->add_option("--noise", spec.noise_sigma)->capture_default_str();
  gen->add_flag("--saliency-difficulty", spec.saliency_difficulty, "Blur later-listed slots more");
  gen->add_option("--difficulty-step", spec.difficulty_step)->capture_default_str();
  gen->add_option("--drop-rate", spec.phrase_drop_rate, "Fraction of phrase pairs dropped per record")
      ->capture_default_str();
  gen->add_flag("--no-images", no_images);
  gen->add_option("--image-size", write_options.image_size)->capture_default_str();

  // train-speaker / train-listener
  std::string data;
  std::string profile_name = "desk";
  std::string kind_name = "simple";
  std::string regime_name = "contrastive";
  std::size_t epochs = 0;
  std::size_t batch = 0;
  double lr = 0.0;
  auto* tspk = app.add_subcommand("train-speaker", "Train a simple or discerning speaker");
  auto* tlis = app.add_subcommand("train-listener", "Train a simple or discerning listener");
  for (auto* cmd : {tspk, tlis}) {
    cmd->add_option("--data", data, "Dataset directory")->required();
    cmd->add_option("--profile", profile_name)->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();
    cmd->add_option("--kind", kind_name)->check(CLI::IsMember({"simple", "discerning"}))->capture_default_str();
    cmd->add_option("--epochs", epochs, "Override the profile's epoch count");
    cmd->add_option("--batch", batch, "Override the profile's batch size");
    cmd->add_option("--lr", lr, "Override the learning rate");
  }
  tlis->add_option("--regime", regime_name)
      ->check(CLI::IsMember({"contrastive", "random-negative"}))
      ->capture_default_str();

  // eval-rg
  auto* eval = app.add_subcommand("eval-rg", "Reference-game accuracy of a listener");
  std::string split = "test";
  std::string listener_dir;
  std::string speaker_dir;
  std::string decoded_file;
  std::string session_dir;
  std::size_t beam_width = kDefaultBeamWidth;
  std::size_t max_len = kDefaultMaxPhraseLen;
  std::size_t max_pairs = 0;
  std::vector<std::size_t> ks = {1, 5, 10};
  eval->add_option("--data", data, "Dataset directory");
  eval->add_option("--split", split)->capture_default_str();
  eval->add_option("--listener", listener_dir, "Listener checkpoint; the grammar oracle when omitted");
  eval->add_option("--speaker", speaker_dir, "Decode phrases with this speaker instead of using annotations");
  eval->add_option("--decoded", decoded_file, "Previously decoded phrases");
  eval->add_option("--session", session_dir, "Recompute the human summary of a session directory");
  eval->add_option("--beam-width", beam_width)->capture_default_str();
  eval->add_option("--max-len", max_len)->capture_default_str();
  eval->add_option("--max-pairs", max_pairs, "Use only the first N pairs of the split")->capture_default_str();
  eval->add_option("--k", ks, "Top-k cutoffs")->capture_default_str();

  // rerank
  auto* rr = app.add_subcommand("rerank", "Rerank decoded beams with a listener");
  double lambda = -1.0;
  std::string select_file;
  std::size_t select_k = 5;
  rr->add_option("--data", data)->required();
  rr->add_option("--decoded", decoded_file)->required();
  rr->add_option("--listener", listener_dir)->required();
  rr->add_option("--lambda", lambda, "Fixed weight of the speaker probability");
  rr->add_option("--select-decoded", select_file, "Decoded validation phrases for choosing the weight");
  rr->add_option("--select-k", select_k)->capture_default_str();
  rr->add_option("--k", ks)->capture_default_str();

  // embed
  auto* emb = app.add_subcommand("embed", "Embed images in the space of the K most frequent phrases");
  std::size_t k_lexicon = 50;
  bool opponent = false;
  emb->add_option("--data", data)->required();
  emb->add_option("--listener", listener_dir)->required();
  emb->add_option("--lexicon-size", k_lexicon)->capture_default_str();
  emb->add_flag("--opponent", opponent, "Index dimensions by phrase pairs");

  // classify
  auto* cls = app.add_subcommand("classify", "Linear classification on phrase-space embeddings");
  std::vector<std::size_t> lexicon_sizes = {10, 50};
  std::size_t categories = 10;
  std::size_t train_per = 30;
  std::size_t test_per = 30;
  cls->add_option("--data", data)->required();
  cls->add_option("--listener", listener_dir)->required();
  cls->add_option("--lexicon-size", lexicon_sizes)->capture_default_str();
  cls->add_option("--categories", categories)->capture_default_str();
  cls->add_option("--train-per-category", train_per)->capture_default_str();
  cls->add_option("--test-per-category", test_per)->capture_default_str();
  cls->add_flag("--opponent", opponent);

  // retrieve
  auto* ret = app.add_subcommand("retrieve", "Rank images by a phrase query");
  std::vector<std::string> queries;
  std::size_t top_n = 20;
  std::size_t slot_queries = 10;
  bool sum_scores = false;
  ret->add_option("--data", data)->required();
  ret->add_option("--listener", listener_dir)->required();
  ret->add_option("--split", split)->capture_default_str();
  ret->add_option("--query", queries, "Query phrase; repeat for several");
  ret->add_option("--top-n", top_n)->capture_default_str();
  ret->add_option("--slot-queries", slot_queries, "Without --query: score this many single-slot queries")
      ->capture_default_str();
  ret->add_flag("--sum-scores", sum_scores, "Sum per-phrase scores instead of concatenating");

  // explain
  auto* exp = app.add_subcommand("explain", "Contrastive explanations between synthetic categories");
  std::size_t slots_differing = 2;
  std::size_t trials = 20;
  std::size_t per_category = 10;
  ExplainOptions explain_options;
  exp->add_option("--data", data)->required();
  exp->add_option("--speaker", speaker_dir, "Discerning speaker checkpoint")->required();
  exp->add_option("--slots", slots_differing, "Slots that differ between the categories")->capture_default_str();
  exp->add_option("--trials", trials)->capture_default_str();
  exp->add_option("--per-category", per_category)->capture_default_str();
  exp->add_option("--top-n", explain_options.top_n)->capture_default_str();
  exp->add_option("--beam-width", explain_options.beam_width)->capture_default_str();

  // export-emb
  auto* exe = app.add_subcommand("export-emb", "Write listener image and phrase embeddings");
  exe->add_option("--data", data)->required();
  exe->add_option("--listener", listener_dir)->required();

  // serve
  auto* srv = app.add_subcommand("serve", "Run the human-listener session service");
  std::string root = ".";
  std::string host = "127.0.0.1";
  int port = 8080;
  srv->add_option("--root", root, "Directory that dataset and run paths resolve under")->capture_default_str();
  srv->add_option("--host", host)->capture_default_str();
  srv->add_option("--port", port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << error_name(ErrorCode::ConfigError) << ": " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen) {
      const auto dir = out_dir(common);
      spec.seed = common.seed;
      write_options.images = !no_images;
      const synth::World world(spec);
      const auto dataset = world.generate_dataset(sizes);
      synth::write_dataset(dir, world, dataset, write_options);
      write_config_snapshot(dir, app, *gen);
      std::cout << "wrote " << dataset.features.size() << " images to " << dir.string() << "\n";
    } else if (*tspk) {
      const auto dir = out_dir(common);
      const auto loaded = synth::load_dataset(data);
      const auto& records = loaded.dataset.split("train").records;
      const auto profile = resolve_profile(profile_name, epochs, batch, lr, true);
      TrainLog log;
      const auto model = train_speaker(records, loaded.dataset.features, speaker_kind_from_string(kind_name),
                                       profile, build_vocabulary(records), common.seed, &log);
      model.save(dir / "model", {{"meta.profile", profile.name}, {"meta.seed", std::to_string(common.seed)}});
      write_text(dir / "train_log.json", log_json(log).dump(2) + "\n");
      write_config_snapshot(dir, app, *tspk);
      std::cout << "speaker loss " << log.initial_loss << " -> " << log.final_loss << "\n";
    } else if (*tlis) {
      const auto dir = out_dir(common);
      const auto loaded = synth::load_dataset(data);
      const auto& records = loaded.dataset.split("train").records;
      const auto profile = resolve_profile(profile_name, epochs, batch, lr, false);
      const auto regime = regime_from_string(regime_name);
      TrainLog log;
      const auto model = train_listener(records, loaded.dataset.features, regime, listener_kind_from_string(kind_name),
                                        profile, build_vocabulary(records), common.seed, &log);
      model.save(dir / "model", {{"meta.profile", profile.name}, {"meta.seed", std::to_string(common.seed)}});
      write_text(dir / "train_log.json", log_json(log).dump(2) + "\n");
      write_config_snapshot(dir, app, *tlis);
      std::cout << "listener loss " << log.initial_loss << " -> " << log.final_loss << "\n";
    } else if (*eval) {
      const auto dir = out_dir(common);
      if (!session_dir.empty()) {
        const auto summary = summarize_session_dir(session_dir);
        write_text(dir / "summary.json", summary_json(summary) + "\n");
        write_config_snapshot(dir, app, *eval);
        std::cout << summary_json(summary) << "\n";
        return 0;
      }
      if (data.empty()) throw Error(ErrorCode::ConfigError, "--data is required");
      const auto loaded = synth::load_dataset(data);
      const auto records = first_records(loaded.dataset, split, max_pairs);
      std::vector<GameTask> tasks;
      if (!speaker_dir.empty() || !decoded_file.empty()) {
        std::vector<DecodedPhrase> decoded;
        if (!decoded_file.empty()) {
          decoded = read_decoded(decoded_file);
        } else {
          const auto speaker = SpeakerModel::load(fs::path(speaker_dir) / "model");
          decoded = decode_pairs(speaker, records, loaded.dataset.features, beam_width, max_len);
          write_decoded(dir / "decoded.jsonl", decoded);
        }
        tasks = decoded_tasks(decoded, all_records(loaded.dataset));
      } else {
        tasks = annotation_tasks(records);
      }
      std::optional<ListenerModel> model;
      PairListener listener;
      if (listener_dir.empty()) {
        listener = oracle_listener(loaded.world, loaded.dataset);
      } else {
        model = ListenerModel::load(fs::path(listener_dir) / "model");
        listener = model_listener(*model, loaded.dataset.features);
      }
      const auto report = evaluate_rg(tasks, listener, ks);
      write_report(dir, report);
      write_config_snapshot(dir, app, *eval);
      std::cout << report_table(report);
    } else if (*rr) {
      const auto dir = out_dir(common);
      const auto loaded = synth::load_dataset(data);
      const auto records = all_records(loaded.dataset);
      const auto model = ListenerModel::load(fs::path(listener_dir) / "model");
      const auto listener = model_listener(model, loaded.dataset.features);
      const auto judge = oracle_listener(loaded.world, loaded.dataset);
      json info;
      if (lambda < 0.0) {
        if (select_file.empty()) throw Error(ErrorCode::ConfigError, "give --lambda or --select-decoded");
        const auto cases = rerank_cases(read_decoded(select_file), records, listener, judge);
        const auto grid = default_lambda_grid();
        lambda = select_lambda(cases, grid, select_k);
        info["grid"] = json::array();
        for (const double l : grid) info["grid"].push_back({{"lambda", l}, {"accuracy", reranked_accuracy(cases, l, select_k)}});
      } else if (lambda > 1.0) {
        throw Error(ErrorCode::ConfigError, "--lambda must be in [0, 1]");
      }
      info["lambda"] = lambda;
      const auto reranked = rerank_decoded(read_decoded(decoded_file), records, listener, lambda);
      write_decoded(dir / "decoded.jsonl", reranked);
      write_text(dir / "rerank.json", info.dump(2) + "\n");
      const auto report = evaluate_rg(decoded_tasks(reranked, records), judge, ks);
      write_report(dir, report);
      write_config_snapshot(dir, app, *rr);
      std::cout << "lambda " << lambda << "\n" << report_table(report);
    } else if (*emb) {
      const auto dir = out_dir(common);
      const auto loaded = synth::load_dataset(data);
      const auto model = ListenerModel::load(fs::path(listener_dir) / "model");
      const auto lexicon = build_lexicon(loaded.dataset.split("train").records, k_lexicon, opponent);
      std::ostringstream lex;
      for (std::size_t i = 0; i < lexicon.size(); ++i) lex << join_tokens(lexicon.entries[i]) << "\t" << lexicon.counts[i] << "\n";
      write_text(dir / "lexicon.tsv", lex.str());
      const LexiconEmbedder embedder(model, lexicon);
      FeatureStore out(lexicon.size());
      const auto& images = loaded.dataset.features;
      for (const auto& id : images.ids()) {
        const nn::Vector e = embedder.embed(nn::to_vector(images.row(id)));
        std::vector<float> row(e.size());
        for (long i = 0; i < e.size(); ++i) row[static_cast<std::size_t>(i)] = static_cast<float>(e[i]);
        out.add(id, row);
      }
      out.save(dir / "embeddings.apfv");
      write_config_snapshot(dir, app, *emb);
      std::cout << "embedded " << out.size() << " images in " << lexicon.size() << " dimensions\n";
    } else if (*cls) {
      const auto dir = out_dir(common);
      const auto loaded = synth::load_dataset(data);
      const auto model = ListenerModel::load(fs::path(listener_dir) / "model");
      const auto cats = classification_categories(loaded.world, categories, common.seed);
      auto rng = make_stream(common.seed, 32);
      const auto train = sample_labeled(loaded.world, cats, train_per, rng);
      const auto test = sample_labeled(loaded.world, cats, test_per, rng);
      json results = json::array();
      for (const auto k : lexicon_sizes) {
        const auto r = classification_run(model, loaded.dataset.split("train").records, k, train, test, {}, opponent);
        results.push_back({{"lexicon_size", r.k}, {"train_accuracy", r.train_accuracy}, {"test_accuracy", r.test_accuracy}});
        std::cout << "K=" << r.k << " test accuracy " << r.test_accuracy << "\n";
      }
      write_text(dir / "classification.json", json{{"categories", categories}, {"results", results}}.dump(2) + "\n");
      write_config_snapshot(dir, app, *cls);
    } else if (*ret) {
      const auto dir = out_dir(common);
      const auto loaded = synth::load_dataset(data);
      const auto model = ListenerModel::load(fs::path(listener_dir) / "model");
      const auto& objects = loaded.dataset.split(split).objects;
      if (!queries.empty()) {
        FeatureStore pool(loaded.dataset.features.dim());
        for (const auto& o : objects) pool.add(o.object_id, o.feature);
        std::vector<std::vector<std::string>> query;
        for (const auto& q : queries) query.push_back(tokenize_phrase(q).tokens);
        const auto hits = retrieve(model, query, pool, top_n,
                                   sum_scores ? QueryStrategy::SumScores : QueryStrategy::Concatenate);
        std::ostringstream lines;
        for (std::size_t i = 0; i < hits.size(); ++i) {
          lines << json{{"rank", i + 1}, {"image_id", hits[i].image_id}, {"score", hits[i].score}}.dump() << "\n";
          std::cout << i + 1 << "\t" << hits[i].image_id << "\t" << hits[i].score << "\n";
        }
        write_text(dir / "hits.jsonl", lines.str());
      } else {
        const auto qs = single_slot_queries(loaded.world, slot_queries);
        const auto ap = retrieval_average_precision(model, qs, objects);
        json per = json::array();
        double total = 0.0;
        for (std::size_t i = 0; i < qs.size(); ++i) {
          per.push_back({{"query", join_tokens(qs[i].phrase)}, {"average_precision", ap[i]}});
          total += ap[i];
        }
        const double map = qs.empty() ? 0.0 : total / static_cast<double>(qs.size());
        write_text(dir / "retrieval.json", json{{"mean_average_precision", map}, {"queries", per}}.dump(2) + "\n");
        std::cout << "mAP " << map << "\n";
      }
      write_config_snapshot(dir, app, *ret);
    } else if (*exp) {
      const auto dir = out_dir(common);
      const auto loaded = synth::load_dataset(data);
      const auto speaker = SpeakerModel::load(fs::path(speaker_dir) / "model");
      auto rng = make_stream(common.seed, 33);
      const auto& slots = loaded.world.spec().slots;
      json out = json::array();
      std::size_t covered = 0;
      for (std::size_t t = 0; t < trials; ++t) {
        const auto trial = explanation_trial(loaded.world, speaker, slots_differing, per_category, rng, explain_options);
        const auto side = [](const std::vector<Explanation>& list) {
          json a = json::array();
          for (const auto& e : list) {
            a.push_back({{"phrase", join_tokens(e.phrase)}, {"image_frequency", e.image_frequency},
                         {"phrase_frequency", e.phrase_frequency}});
          }
          return a;
        };
        json differing = json::array();
        for (const auto s : trial.differing_slots) differing.push_back(slots[s].name);
        const bool ok = trial.first_covered && trial.second_covered;
        covered += ok ? 1 : 0;
        out.push_back({{"differing_slots", differing}, {"first", side(trial.report.first)},
                       {"second", side(trial.report.second)}, {"covered", ok}});
      }
      const double rate = trials ? static_cast<double>(covered) / static_cast<double>(trials) : 0.0;
      write_text(dir / "explanations.json", json{{"covered_fraction", rate}, {"trials", out}}.dump(2) + "\n");
      write_config_snapshot(dir, app, *exp);
      std::cout << covered << "/" << trials << " category pairs covered\n";
    } else if (*exe) {
      const auto dir = out_dir(common);
      const auto loaded = synth::load_dataset(data);
      const auto model = ListenerModel::load(fs::path(listener_dir) / "model");
      std::set<std::string> seen;
      std::vector<std::vector<std::string>> phrases;
      for (const auto& r : loaded.dataset.split("train").records) {
        for (const auto& pp : r.phrase_pairs) {
          for (const auto* p : {&pp.left, &pp.right}) {
            if (seen.insert(p->text()).second) phrases.push_back(p->tokens);
          }
        }
      }
      export_image_embeddings(model, loaded.dataset.features).save(dir / "image_embeddings.apfv");
      export_phrase_embeddings(model, phrases).save(dir / "phrase_embeddings.apfv");
      write_config_snapshot(dir, app, *exe);
      std::cout << "exported " << loaded.dataset.features.size() << " images and " << phrases.size() << " phrases\n";
    } else if (*srv) {
      ServiceConfig config;
      config.root = root;
      if (!common.out.empty()) config.sessions = common.out;
      SessionService service(config);
      HttpServer server(service);
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      server.run();
      g_server = nullptr;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
