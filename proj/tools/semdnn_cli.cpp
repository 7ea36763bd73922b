// Command-line front end for the ternary early-exit crossbar simulator.
//
//   semdnn synth-data --out data/ --train-n 10000 --test-n 2000
//   semdnn train --train data/train --out model.txt
//   semdnn build-centers --model model.txt --train data/train --out centers.txt
//   semdnn eval-static --model model.txt --data data/test
//   semdnn eval-dynamic --model model.txt --centers centers.txt --data data/test
//   semdnn tune-tpe ... | grid ... | noise-sweep ... | energy-report ...
//   semdnn export-embeddings ... | calibrate-noise ...
//
// All artifacts embed the driving seed and a hash of the effective config.

#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "semdnn/semdnn.hpp"

using nlohmann::json;
using namespace semdnn;

namespace {

Dataset load_pair(const std::string& prefix) {
  return load_mnist(prefix + "-images-idx3-ubyte", prefix + "-labels-idx1-ubyte");
}

void save_pair(const Dataset& d, const std::string& prefix) {
  save_idx(d, prefix + "-images-idx3-ubyte", prefix + "-labels-idx1-ubyte");
}

ExitPolicy load_policy(const std::string& path, int n_exits) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open policy");
  json j;
  in >> j;
  ExitPolicy p{j.at("thresholds").get<std::vector<double>>()};
  if (static_cast<int>(p.thresholds.size()) != n_exits)
    throw std::runtime_error(path + ": policy has " + std::to_string(p.thresholds.size()) +
                             " thresholds, model has " + std::to_string(n_exits) + " exits");
  return p;
}

void save_policy(const ExitPolicy& p, const json& meta, const std::string& path) {
  json j = meta;
  j["thresholds"] = p.thresholds;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

struct Loaded {
  ModelFile mf;
  RunConfig cfg;
};

// Evaluation backends share PipelineOptions; noise-free crossbar and software
// paths are therefore bit-identical.
MappedNetwork make_net(const Loaded& L, const std::string& backend, double sigma_write,
                       std::uint64_t seed, const Dataset* calib) {
  DeviceStats ds = L.cfg.device;
  ds.sigma_write = sigma_write;
  Rng rng(Rng::derive(seed, 0xC0DE));
  MappedNetwork net;
  if (backend == "software")
    net = map_software(L.mf.quant);
  else if (backend == "crossbar")
    net = map_crossbar(L.mf.quant, ds, rng, sigma_write > 0);
  else if (backend == "fp")
    net = map_fullprecision(L.mf.model, &ds, &rng, sigma_write > 0);
  else
    throw std::runtime_error("unknown backend '" + backend + "'");
  if (L.cfg.pipeline.adc_bits > 0 && calib && calib->size() > 0) {
    calibrate_adc(net, *calib, L.cfg.pipeline.input_bits);
    std::vector<MappedConv*> ls{&net.stem, &net.fc};
    for (auto& b : net.blocks) {
      for (auto& c : b.convs) ls.push_back(&c);
      if (b.shortcut) ls.push_back(&*b.shortcut);
    }
    for (auto* l : ls) l->adc_range *= L.cfg.adc_headroom;
  }
  return net;
}

json report_json(const EvalReport& r) {
  json j;
  j["accuracy"] = r.accuracy;
  j["dcb"] = r.dcb;
  j["dcb_with_cam"] = r.dcb_with_cam;
  j["mean_macs"] = r.mean_macs;
  j["static_macs"] = r.static_macs;
  j["n_samples"] = r.n_samples;
  j["exit_histogram"] = r.exit_histogram;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ternary early-exit crossbar simulation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_path = "out.json";
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "JSON config; defaults apply for missing keys");
  app.add_option("--seed", seed_override, "override config seed")->each([&](const std::string&) {
    seed_set = true;
  });

  auto load_cfg = [&]() {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed_set) c.seed = seed_override;
    return c;
  };
  auto load_all = [&](const std::string& model_path) {
    Loaded L{load_model(model_path), load_cfg()};
    return L;
  };

  // ---- synth-data ----
  auto* c_synth = app.add_subcommand("synth-data", "generate a procedural digit dataset (IDX)");
  std::string synth_out = "data/digits";
  int train_n = 10000, test_n = 2000;
  c_synth->add_option("--out", synth_out, "output path prefix");
  c_synth->add_option("--train-n", train_n);
  c_synth->add_option("--test-n", test_n);

  // ---- train ----
  auto* c_train = app.add_subcommand("train", "quantization-aware training");
  std::string train_prefix, model_out = "model.txt", history_out;
  c_train->add_option("--train", train_prefix, "IDX path prefix")->required();
  c_train->add_option("--out", model_out);
  c_train->add_option("--history", history_out, "per-epoch loss CSV");

  // ---- build-centers ----
  auto* c_cent = app.add_subcommand("build-centers", "class semantic centers per exit");
  std::string bc_model, bc_train, bc_out = "centers.txt";
  c_cent->add_option("--model", bc_model)->required();
  c_cent->add_option("--train", bc_train)->required();
  c_cent->add_option("--out", bc_out);

  // ---- eval-static ----
  auto* c_es = app.add_subcommand("eval-static", "full-depth classifier accuracy");
  std::string es_model, es_data, es_backend = "software", es_calib, es_centers,
              es_classifier = "head";
  double es_sigma = 0.0;
  c_es->add_option("--model", es_model)->required();
  c_es->add_option("--data", es_data)->required();
  c_es->add_option("--backend", es_backend, "software | crossbar | fp");
  c_es->add_option("--classifier", es_classifier, "head | semantic");
  c_es->add_option("--centers", es_centers, "required for --classifier semantic");
  c_es->add_option("--sigma-write", es_sigma);
  c_es->add_option("--calib", es_calib, "IDX prefix for ADC range calibration");

  // ---- eval-dynamic ----
  auto* c_ed = app.add_subcommand("eval-dynamic", "early-exit accuracy and compute benefit");
  std::string ed_model, ed_centers, ed_data, ed_policy, ed_backend = "software", ed_calib;
  double ed_theta = 0.9, ed_sigma = 0.0;
  c_ed->add_option("--model", ed_model)->required();
  c_ed->add_option("--centers", ed_centers)->required();
  c_ed->add_option("--data", ed_data)->required();
  c_ed->add_option("--policy", ed_policy, "threshold JSON; omit for uniform --theta");
  c_ed->add_option("--theta", ed_theta, "uniform threshold when no policy file");
  c_ed->add_option("--backend", ed_backend);
  c_ed->add_option("--sigma-write", ed_sigma);
  c_ed->add_option("--calib", ed_calib);

  // ---- tune-tpe ----
  auto* c_tpe = app.add_subcommand("tune-tpe", "optimize exit thresholds");
  std::string tp_model, tp_centers, tp_data, tp_history;
  c_tpe->add_option("--model", tp_model)->required();
  c_tpe->add_option("--centers", tp_centers)->required();
  c_tpe->add_option("--data", tp_data, "tuning split")->required();
  c_tpe->add_option("--history", tp_history, "per-iteration CSV");

  // ---- grid ----
  auto* c_grid = app.add_subcommand("grid", "shared-threshold accuracy/DCB frontier");
  std::string gr_model, gr_centers, gr_data;
  int gr_points = 41;
  c_grid->add_option("--model", gr_model)->required();
  c_grid->add_option("--centers", gr_centers)->required();
  c_grid->add_option("--data", gr_data)->required();
  c_grid->add_option("--points", gr_points);

  // ---- noise-sweep ----
  auto* c_sw = app.add_subcommand("noise-sweep", "write-noise robustness, ternary vs direct FP");
  std::string sw_model, sw_centers, sw_fp_centers, sw_data, sw_policy;
  std::vector<double> sw_sigmas{0.05, 0.10, 0.15, 0.20, 0.30};
  int sw_seeds = 5;
  bool sw_read = false;
  double sw_theta = 0.9;
  c_sw->add_option("--model", sw_model)->required();
  c_sw->add_option("--centers", sw_centers, "ternary center bank")->required();
  c_sw->add_option("--data", sw_data)->required();
  c_sw->add_option("--policy", sw_policy);
  c_sw->add_option("--theta", sw_theta);
  c_sw->add_option("--sigmas", sw_sigmas);
  c_sw->add_option("--seeds", sw_seeds);
  c_sw->add_flag("--read-noise", sw_read, "also draw fresh read noise");

  // ---- energy-report ----
  auto* c_en = app.add_subcommand("energy-report", "component energies for a dynamic run");
  std::string en_model, en_centers, en_data, en_policy;
  double en_theta = 0.9;
  c_en->add_option("--model", en_model)->required();
  c_en->add_option("--centers", en_centers)->required();
  c_en->add_option("--data", en_data)->required();
  c_en->add_option("--policy", en_policy);
  c_en->add_option("--theta", en_theta);

  // ---- export-embeddings ----
  auto* c_emb = app.add_subcommand("export-embeddings", "GAP features + centers as CSV");
  std::string em_model, em_centers, em_data;
  std::vector<int> em_exits;
  c_emb->add_option("--model", em_model)->required();
  c_emb->add_option("--centers", em_centers)->required();
  c_emb->add_option("--data", em_data)->required();
  c_emb->add_option("--exits", em_exits, "exit indices (default: all)");

  // ---- calibrate-noise ----
  auto* c_cal = app.add_subcommand("calibrate-noise", "fit read-noise model from CSV");
  std::string cal_csv;
  c_cal->add_option("--measurements", cal_csv, "CSV of conductance mean,std rows")->required();

  app.add_option("--out", out_path, "output artifact path");
  // allow --config/--seed/--out after the subcommand name
  for (auto* sc : app.get_subcommands([](const CLI::App*) { return true; })) sc->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_cfg();
    const std::string chash = config_hash(cfg);
    json meta{{"seed", cfg.seed}, {"config_hash", chash}};

    if (*c_synth) {
      Dataset train = synth_digits(train_n, cfg.seed);
      Dataset test = synth_digits(test_n, Rng::derive(cfg.seed, 1));
      save_pair(train, synth_out + "-train");
      save_pair(test, synth_out + "-test");
      std::cout << "wrote " << train.size() << " train / " << test.size() << " test samples to "
                << synth_out << "-{train,test}-*\n";
    } else if (*c_train) {
      Dataset train = load_pair(train_prefix);
      Rng rng(cfg.seed);
      Model m = init_model(cfg.model, rng, cfg.train.init_scale);
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      TrainResult tr = train_model(m, train, tc, &std::cout);
      ModelFile mf{std::move(m), {}, cfg.seed, chash};
      mf.quant = quantize_model(mf.model);
      save_model(mf, model_out);
      if (!history_out.empty()) {
        std::ofstream h(history_out);
        h << "epoch,loss\n" << std::setprecision(12);
        for (size_t e = 0; e < tr.epoch_loss.size(); ++e)
          h << e << "," << tr.epoch_loss[e] << "\n";
      }
      std::cout << "saved " << model_out << " (" << mf.model.spec.param_count()
                << " weights)\n";
    } else if (*c_cent) {
      Loaded L = load_all(bc_model);
      Dataset train = load_pair(bc_train);
      MappedNetwork net = map_software(L.mf.quant);
      CenterBank bank = compute_semantic_centers(train, net, L.cfg.pipeline);
      save_centers({std::move(bank), L.cfg.seed, chash}, bc_out);
      std::cout << "saved " << bc_out << "\n";
    } else if (*c_es) {
      Loaded L = load_all(es_model);
      Dataset data = load_pair(es_data);
      Dataset calib;
      if (!es_calib.empty()) calib = load_pair(es_calib);
      MappedNetwork net = make_net(L, es_backend, es_sigma, L.cfg.seed,
                                   es_calib.empty() ? nullptr : &calib);
      double acc;
      if (es_classifier == "semantic") {
        if (es_centers.empty())
          throw std::runtime_error("eval-static --classifier semantic requires --centers");
        CenterBank bank = load_centers(es_centers).bank;
        acc = evaluate_semantic_static(net, bank, data, L.cfg.pipeline, L.cfg.seed);
      } else {
        acc = evaluate_static(net, data, L.cfg.pipeline, L.cfg.seed);
      }
      json j = meta;
      j["classifier"] = es_classifier;
      j["backend"] = es_backend;
      j["sigma_write"] = es_sigma;
      j["accuracy"] = acc;
      j["n_samples"] = data.size();
      std::ofstream(out_path) << j.dump(2) << "\n";
      std::cout << "static accuracy " << acc << " (" << es_backend << ")\n";
    } else if (*c_ed) {
      Loaded L = load_all(ed_model);
      Dataset data = load_pair(ed_data);
      Dataset calib;
      if (!ed_calib.empty()) calib = load_pair(ed_calib);
      MappedNetwork net = make_net(L, ed_backend, ed_sigma, L.cfg.seed,
                                   ed_calib.empty() ? nullptr : &calib);
      CenterBank bank = load_centers(ed_centers).bank;
      if (ed_sigma > 0 || L.cfg.pipeline.read_noise) {
        DeviceStats ds = L.cfg.device;
        ds.sigma_write = ed_sigma;
        Rng rng(Rng::derive(L.cfg.seed, 0xCA11));
        bank = program_bank(bank, ds, rng, ed_sigma > 0);
      }
      const int n_exits = net.spec.n_exits();
      ExitPolicy pol = ed_policy.empty() ? ExitPolicy::uniform(n_exits, ed_theta)
                                         : load_policy(ed_policy, n_exits);
      OpsProfile prof = ops_profile(net.spec, L.cfg.pipeline.tile);
      auto table = build_similarity_table(data, net, bank, L.cfg.pipeline, L.cfg.seed);
      EvalReport r = evaluate_policy(table, prof, pol);
      json j = meta;
      j["backend"] = ed_backend;
      j["report"] = report_json(r);
      std::ofstream(out_path) << j.dump(2) << "\n";
      std::cout << "dynamic accuracy " << r.accuracy << ", DCB " << r.dcb << "\n";
    } else if (*c_tpe) {
      Loaded L = load_all(tp_model);
      Dataset data = load_pair(tp_data);
      MappedNetwork net = map_software(L.mf.quant);
      CenterBank bank = load_centers(tp_centers).bank;
      OpsProfile prof = ops_profile(net.spec, L.cfg.pipeline.tile);
      auto table = build_similarity_table(data, net, bank, L.cfg.pipeline, L.cfg.seed);
      tpe::TPEConfig tc = L.cfg.tpe;
      tc.seed = L.cfg.seed;
      auto eval = [&](const std::vector<double>& x) {
        EvalReport r = evaluate_policy(table, prof, ExitPolicy{x});
        return std::make_pair(r.accuracy, r.dcb);
      };
      auto res = tpe::optimize(eval, net.spec.n_exits(), tc);
      json j = meta;
      j["best_score"] = res.best.score;
      j["best_accuracy"] = res.best.accuracy;
      j["best_dcb"] = res.best.dcb;
      save_policy(ExitPolicy{res.best.x}, j, out_path);
      if (!tp_history.empty()) {
        std::ofstream h(tp_history);
        h << "iteration,score,accuracy,dcb\n" << std::setprecision(12);
        for (size_t i = 0; i < res.history.size(); ++i)
          h << i << "," << res.history[i].score << "," << res.history[i].accuracy << ","
            << res.history[i].dcb << "\n";
      }
      std::cout << "best score " << res.best.score << " (acc " << res.best.accuracy << ", dcb "
                << res.best.dcb << ")\n";
    } else if (*c_grid) {
      Loaded L = load_all(gr_model);
      Dataset data = load_pair(gr_data);
      MappedNetwork net = map_software(L.mf.quant);
      CenterBank bank = load_centers(gr_centers).bank;
      OpsProfile prof = ops_profile(net.spec, L.cfg.pipeline.tile);
      auto table = build_similarity_table(data, net, bank, L.cfg.pipeline, L.cfg.seed);
      auto eval = [&](const std::vector<double>& x) {
        EvalReport r = evaluate_policy(table, prof, ExitPolicy{x});
        return std::make_pair(r.accuracy, r.dcb);
      };
      auto rows =
          tpe::grid_search(eval, L.cfg.tpe.low, L.cfg.tpe.high, gr_points, net.spec.n_exits());
      std::ofstream o(out_path);
      o << "theta,accuracy,dcb\n" << std::setprecision(12);
      for (auto& r : rows) o << r.theta << "," << r.accuracy << "," << r.dcb << "\n";
      std::cout << "wrote " << rows.size() << " frontier points to " << out_path << "\n";
    } else if (*c_sw) {
      Loaded L = load_all(sw_model);
      Dataset data = load_pair(sw_data);
      CenterBank tern = load_centers(sw_centers).bank;
      MappedNetwork fp_net = map_fullprecision(L.mf.model);
      CenterBank fpb = sw_fp_centers.empty()
                           ? compute_fullprecision_centers(data, fp_net, L.cfg.pipeline)
                           : load_centers(sw_fp_centers).bank;
      const int n_exits = L.mf.quant.spec.n_exits();
      ExitPolicy pol = sw_policy.empty() ? ExitPolicy::uniform(n_exits, sw_theta)
                                         : load_policy(sw_policy, n_exits);
      SweepConfig sc;
      sc.sigma_grid = sw_sigmas;
      sc.n_seeds = sw_seeds;
      sc.base_seed = L.cfg.seed;
      sc.read_noise = sw_read;
      auto rows = noise_sweep(L.mf.quant, L.mf.model, tern, fpb, data, pol, L.cfg.device,
                              L.cfg.pipeline, sc);
      std::ofstream o(out_path);
      o << "sigma,ternary_mean,ternary_std,fp_mean,fp_std,n_seeds\n" << std::setprecision(12);
      for (auto& r : rows)
        o << r.sigma << "," << r.ternary_mean << "," << r.ternary_std << "," << r.fp_mean << ","
          << r.fp_std << "," << r.n_seeds << "\n";
      std::cout << "wrote sweep (" << rows.size() << " sigmas) to " << out_path << "\n";
    } else if (*c_en) {
      Loaded L = load_all(en_model);
      Dataset data = load_pair(en_data);
      MappedNetwork net = map_software(L.mf.quant);
      CenterBank bank = load_centers(en_centers).bank;
      OpsProfile prof = ops_profile(net.spec, L.cfg.pipeline.tile);
      const int n_exits = net.spec.n_exits();
      ExitPolicy pol = en_policy.empty() ? ExitPolicy::uniform(n_exits, en_theta)
                                         : load_policy(en_policy, n_exits);
      auto table = build_similarity_table(data, net, bank, L.cfg.pipeline, L.cfg.seed);
      EvalReport r = evaluate_policy(table, prof, pol);
      const long long dyn_macs = static_cast<long long>(r.mean_macs * r.n_samples);
      const long long stat_macs = r.static_macs * r.n_samples;
      EnergyConstants k = calibrate_constants(r.total_ops, dyn_macs, stat_macs);
      EnergyReport er = accumulate(r.total_ops, dyn_macs, stat_macs, k);
      json j = meta;
      j["note"] = "per-op constants calibrated to published component totals";
      j["report"] = report_json(r);
      j["energy_pj"] = {{"cim_mac", er.cim_mac},   {"cam_compare", er.cam_compare},
                        {"cim_adc", er.cim_adc},   {"cam_adc", er.cam_adc},
                        {"digital", er.digital},   {"sort", er.sort},
                        {"total", er.total},       {"baseline_static", er.baseline_static},
                        {"baseline_dynamic", er.baseline_dynamic}};
      j["reduction_vs_static"] = er.reduction_vs_static;
      j["reduction_vs_dynamic"] = er.reduction_vs_dynamic;
      std::ofstream(out_path) << j.dump(2) << "\n";
      std::cout << "total " << er.total << " pJ, vs static baseline "
                << er.reduction_vs_static * 100 << "% lower\n";
    } else if (*c_emb) {
      Loaded L = load_all(em_model);
      Dataset data = load_pair(em_data);
      MappedNetwork net = map_software(L.mf.quant);
      CenterBank bank = load_centers(em_centers).bank;
      std::vector<int> exits = em_exits;
      if (exits.empty())
        for (int e = 0; e < bank.n_exits(); ++e) exits.push_back(e);
      export_embeddings(data, net, bank, exits, L.cfg.pipeline, out_path);
      std::cout << "wrote embeddings for " << data.size() << " samples to " << out_path << "\n";
    } else if (*c_cal) {
      std::ifstream in(cal_csv);
      if (!in) throw std::runtime_error(cal_csv + ": cannot open");
      std::vector<std::pair<double, double>> pts;
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || !(std::isdigit(line[0]) || line[0] == '-' || line[0] == '.'))
          continue;  // header or blank
        double m, s;
        char comma;
        std::istringstream ls(line);
        if (ls >> m >> comma >> s) pts.emplace_back(m, s);
      }
      auto [a, b] = fit_read_model(pts);
      json j = meta;
      j["read_a"] = a;
      j["read_b"] = b;
      j["n_points"] = pts.size();
      std::ofstream(out_path) << j.dump(2) << "\n";
      std::cout << "sigma_read(G) = " << a << " * G + " << b << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
