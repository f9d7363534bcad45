#include "depro/harness.hpp"

#include "depro/independence.hpp"
#include "depro/netcore.hpp"
#include "depro/reweight.hpp"
#include "depro/rff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

namespace depro::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::vector<int> range_ids(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

json RunConfig::to_json() const {
  json j;
  j["kslots"] = task.kslots;
  j["n_classes"] = task.n_classes;
  j["vocab"] = task.vocab;
  j["signal_slots"] = task.signal_slots;
  j["bias_slot"] = task.bias_slot;
  j["align_train"] = task.align_train;
  j["align_ood"] = task.align_ood;
  j["noise_flip"] = task.noise_flip;
  j["n_train"] = task.n_train;
  j["n_dev"] = task.n_dev;
  j["n_ood"] = task.n_ood;
  j["data_seed"] = task.seed;
  j["d_emb"] = d_emb;
  j["m_z"] = m_z;
  j["rff_multiplier"] = rff_multiplier;
  j["weight_lr"] = weight_lr;
  j["weight_lr_decay"] = weight_lr_decay;
  j["k_w"] = k_w;
  j["weight_buffer"] = weight_buffer;
  j["alpha"] = alpha;
  j["purify_ratio"] = purify_ratio;
  j["use_decorrelation"] = use_decorrelation;
  j["use_purification"] = use_purification;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["model_lr"] = model_lr;
  j["seeds"] = seeds;
  j["out_dir"] = out_dir;
  j["data_dir"] = data_dir;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  const json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    require(defaults.contains(key), "config: unknown key '" + key + "'");
    (void)value;
  }
  const auto get = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    return j.contains(key) ? j.at(key).get<T>() : fallback;
  };
  c.task.kslots = get("kslots", c.task.kslots);
  c.task.n_classes = get("n_classes", c.task.n_classes);
  c.task.vocab = get("vocab", c.task.vocab);
  c.task.signal_slots = get("signal_slots", c.task.signal_slots);
  c.task.bias_slot = get("bias_slot", c.task.bias_slot);
  c.task.align_train = get("align_train", c.task.align_train);
  c.task.align_ood = get("align_ood", c.task.align_ood);
  c.task.noise_flip = get("noise_flip", c.task.noise_flip);
  c.task.n_train = get("n_train", c.task.n_train);
  c.task.n_dev = get("n_dev", c.task.n_dev);
  c.task.n_ood = get("n_ood", c.task.n_ood);
  c.task.seed = get("data_seed", c.task.seed);
  c.d_emb = get("d_emb", c.d_emb);
  c.m_z = get("m_z", c.m_z);
  c.rff_multiplier = get("rff_multiplier", c.rff_multiplier);
  c.weight_lr = get("weight_lr", c.weight_lr);
  c.weight_lr_decay = get("weight_lr_decay", c.weight_lr_decay);
  c.k_w = get("k_w", c.k_w);
  c.weight_buffer = get("weight_buffer", c.weight_buffer);
  c.alpha = get("alpha", c.alpha);
  c.purify_ratio = get("purify_ratio", c.purify_ratio);
  c.use_decorrelation = get("use_decorrelation", c.use_decorrelation);
  c.use_purification = get("use_purification", c.use_purification);
  c.epochs = get("epochs", c.epochs);
  c.batch_size = get("batch_size", c.batch_size);
  c.model_lr = get("model_lr", c.model_lr);
  c.seeds = get("seeds", c.seeds);
  c.out_dir = get("out_dir", c.out_dir);
  c.data_dir = get("data_dir", c.data_dir);
  require(!c.seeds.empty(), "config: seed list must be non-empty");
  require(c.epochs >= 1 && c.batch_size >= 1, "config: bad epochs/batch_size");
  return c;
}

bool RunMetrics::any_failed() const {
  return std::any_of(seeds.begin(), seeds.end(), [](const SeedRun& s) { return s.failed; });
}

double evaluate(const model::DeproModel& m, const data::Dataset& dataset) {
  require(dataset.size() >= 1, "harness::evaluate: empty dataset");
  constexpr int kChunk = 512;
  long correct = 0;
  for (int start = 0; start < dataset.size(); start += kChunk) {
    const int len = std::min(kChunk, dataset.size() - start);
    std::vector<int> rows(static_cast<std::size_t>(len));
    std::iota(rows.begin(), rows.end(), start);
    const data::Batch batch = data::slice(dataset, rows);
    model::ForwardPass fp = model::encode(m, batch);
    const Mat& logits = fp.tape.value(fp.logits);
    for (int i = 0; i < len; ++i) {
      Eigen::Index pred = 0;
      logits.row(i).maxCoeff(&pred);
      if (static_cast<int>(pred) == batch.labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / dataset.size();
}

data::TaskData load_task(const RunConfig& config) {
  if (config.data_dir.empty()) return data::generate(config.task);
  data::TaskData td;
  td.spec = config.task;
  const data::CsvSchema schema{config.task.kslots, config.task.n_classes};
  td.train = data::load_csv(config.data_dir + "/train.csv", schema);
  td.dev = data::load_csv(config.data_dir + "/dev.csv", schema);
  td.ood = data::load_csv(config.data_dir + "/ood.csv", schema);
  return td;
}

namespace {

SeedRun train_one_seed(const RunConfig& cfg, const data::TaskData& task, std::uint64_t seed,
                       const fs::path& seed_dir) {
  fs::create_directories(seed_dir);
  SeedRun run;
  run.seed = seed;

  std::ofstream metrics(seed_dir / "metrics.jsonl");
  std::ofstream epochs_csv(seed_dir / "epochs.csv");
  std::ofstream weights_csv(seed_dir / "weights.csv");
  std::ofstream selection_csv(seed_dir / "selection.csv");
  std::ofstream pairs_csv(seed_dir / "pairs.csv");
  epochs_csv << "epoch,dev_acc,ood_acc\n";
  weights_csv << "epoch,bin_lo,bin_hi,count\n";
  selection_csv << "epoch,slot,fraction\n";
  pairs_csv << "iteration,i,j,frob_sq\n";

  model::ModelConfig mc;
  mc.vocab = cfg.task.vocab;
  mc.d_emb = cfg.d_emb;
  mc.kslots = cfg.task.kslots;
  mc.m_z = cfg.m_z;
  mc.n_classes = cfg.task.n_classes;
  mc.seed = derive_seed(seed, "model");
  model::DeproModel net = model::make_model(mc);

  const rff::RffBank bank =
      rff::sample_bank(cfg.m_z, cfg.rff_multiplier, derive_seed(seed, "bank"));
  rff::save_bank(bank, (seed_dir / "bank.json").string());

  reweight::WeightTable table =
      reweight::make_table(task.train.size(), cfg.weight_lr, cfg.weight_lr_decay);

  model::LossConfig loss_cfg;
  loss_cfg.alpha = cfg.alpha;
  loss_cfg.purify_ratio = cfg.purify_ratio;
  loss_cfg.use_decorrelation = cfg.use_decorrelation;
  loss_cfg.use_purification = cfg.use_purification;

  std::mt19937_64 shuffle_rng(derive_seed(seed, "shuffle"));
  std::vector<int> order = range_ids(task.train.size());

  // Rolling buffer of detached reconstructions for the weight phase, newest
  // row per sample id.
  const int buffer_cap = std::max(cfg.weight_buffer, cfg.batch_size);
  Mat buf_rows(buffer_cap, bank.output_dim());
  std::vector<int> buf_ids;
  buf_ids.reserve(static_cast<std::size_t>(buffer_cap));
  std::size_t buf_next = 0;

  long iteration = 0;
  try {
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      std::vector<long> selection_counts(static_cast<std::size_t>(cfg.task.kslots), 0);
      long selection_samples = 0;
      bool pairs_dumped = false;

      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t len =
            std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
        const std::vector<int> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(start + len));
        const data::Batch batch = data::slice(task.train, rows);
        const auto n = static_cast<Eigen::Index>(batch.size());

        model::ForwardPass fp = model::encode(net, batch);

        // Reconstructed representation; detached from the network for the
        // weight phase.
        const Mat recon = rff::apply(bank, rff::standardize(fp.tape.value(fp.z)));

        if (cfg.use_decorrelation && n >= 2) {
          for (Eigen::Index r = 0; r < n; ++r) {
            if (buf_ids.size() < static_cast<std::size_t>(buffer_cap)) {
              buf_ids.push_back(batch.sample_ids[static_cast<std::size_t>(r)]);
              buf_rows.row(static_cast<Eigen::Index>(buf_ids.size()) - 1) = recon.row(r);
            } else {
              buf_ids[buf_next] = batch.sample_ids[static_cast<std::size_t>(r)];
              buf_rows.row(static_cast<Eigen::Index>(buf_next)) = recon.row(r);
              buf_next = (buf_next + 1) % static_cast<std::size_t>(buffer_cap);
            }
          }
          // Newest row wins when a sample appears twice in the ring.
          std::vector<int> keep;
          keep.reserve(buf_ids.size());
          {
            std::vector<char> seen;
            const auto newest_first = [&](std::size_t count) {
              for (std::size_t back = 0; back < count; ++back) {
                std::size_t pos;
                if (buf_ids.size() < static_cast<std::size_t>(buffer_cap)) {
                  pos = buf_ids.size() - 1 - back;
                } else {
                  pos = (buf_next + buf_ids.size() - 1 - back) % buf_ids.size();
                }
                keep.push_back(static_cast<int>(pos));
              }
            };
            newest_first(buf_ids.size());
            seen.assign(static_cast<std::size_t>(task.train.size()), 0);
            std::vector<int> uniq;
            uniq.reserve(keep.size());
            for (int pos : keep) {
              const int sid = buf_ids[static_cast<std::size_t>(pos)];
              if (!seen[static_cast<std::size_t>(sid)]) {
                seen[static_cast<std::size_t>(sid)] = 1;
                uniq.push_back(pos);
              }
            }
            keep = std::move(uniq);
          }
          Mat wk_rows(static_cast<Eigen::Index>(keep.size()), bank.output_dim());
          std::vector<int> wk_ids(keep.size());
          for (std::size_t i = 0; i < keep.size(); ++i) {
            wk_rows.row(static_cast<Eigen::Index>(i)) = buf_rows.row(keep[i]);
            wk_ids[i] = buf_ids[static_cast<std::size_t>(keep[i])];
          }
          if (wk_ids.size() >= 2) {
            for (int s = 0; s < cfg.k_w; ++s) {
              reweight::weight_step(table, wk_rows, wk_ids, cfg.rff_multiplier);
            }
          }
        }
        const Vec w = cfg.use_decorrelation ? reweight::realize(table, batch.sample_ids)
                                            : Vec::Ones(n);

        IterRecord rec;
        rec.iteration = iteration;
        rec.epoch = epoch;
        if (n >= 2) {
          const indep::DecorrObjective dec =
              indep::importance_decorr_objective(recon, w, cfg.rff_multiplier);
          rec.decorr_mean = indep::mean_pair_norm(dec);
          if (!pairs_dumped) {
            indep::write_pair_rows(pairs_csv, iteration, dec);
            pairs_dumped = true;
          }
        }

        model::LossBreakdown loss = model::depro_loss(fp, net, batch, w, loss_cfg);
        rec.ce = loss.ce_term;
        rec.infonce = loss.infonce_mean;

        fp.tape.backward(loss.loss);
        net::sgd_step(net.params, model::param_grads(fp), cfg.model_lr);

        if (cfg.use_purification) {
          for (const auto& sel : loss.saliency.selected) {
            for (int j : sel) ++selection_counts[static_cast<std::size_t>(j)];
          }
          selection_samples += batch.size();
        }

        json j;
        j["iteration"] = rec.iteration;
        j["epoch"] = rec.epoch;
        j["ce"] = rec.ce;
        j["decorr_mean"] = rec.decorr_mean;
        j["infonce"] = rec.infonce;
        metrics << j.dump() << "\n";
        run.iters.push_back(rec);
        ++iteration;
      }

      EpochRecord er;
      er.epoch = epoch;
      er.dev_acc = evaluate(net, task.dev);
      er.ood_acc = evaluate(net, task.ood);
      run.epochs.push_back(er);
      epochs_csv << epoch << ',' << fmt(er.dev_acc) << ',' << fmt(er.ood_acc) << '\n';

      reweight::write_weight_histogram(weights_csv, epoch, reweight::realize_all(table));
      if (cfg.use_purification && selection_samples > 0) {
        std::vector<double> fractions(static_cast<std::size_t>(cfg.task.kslots), 0.0);
        for (std::size_t j = 0; j < fractions.size(); ++j) {
          fractions[j] =
              static_cast<double>(selection_counts[j]) / static_cast<double>(selection_samples);
        }
        purify::write_selection_rows(selection_csv, epoch, fractions);
      }
    }

    run.dev_acc = run.epochs.back().dev_acc;
    run.ood_acc = run.epochs.back().ood_acc;
    model::save_model(net, (seed_dir / "model").string());
    reweight::save_table(table, (seed_dir / "weight_table.txt").string());
  } catch (const std::exception& e) {
    run.failed = true;
    run.error = e.what();
  }
  return run;
}

void aggregate(RunMetrics& rm) {
  std::vector<double> dev;
  std::vector<double> ood;
  for (const SeedRun& s : rm.seeds) {
    if (s.failed) continue;
    dev.push_back(s.dev_acc);
    ood.push_back(s.ood_acc);
  }
  const auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  const auto stdev = [&](const std::vector<double>& v, double m) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / (static_cast<double>(v.size()) - 1.0));
  };
  rm.mean_dev = mean(dev);
  rm.mean_ood = mean(ood);
  rm.stdev_dev = stdev(dev, rm.mean_dev);
  rm.stdev_ood = stdev(ood, rm.mean_ood);
}

void write_results_csv(const fs::path& path, const RunMetrics& rm) {
  std::ofstream out(path);
  out << "seed,dev_acc,ood_acc,failed\n";
  for (const SeedRun& s : rm.seeds) {
    out << s.seed << ',' << fmt(s.dev_acc) << ',' << fmt(s.ood_acc) << ','
        << (s.failed ? 1 : 0) << '\n';
  }
  out << "mean," << fmt(rm.mean_dev) << ',' << fmt(rm.mean_ood) << ",0\n";
  out << "stdev," << fmt(rm.stdev_dev) << ',' << fmt(rm.stdev_ood) << ",0\n";
}

}  // namespace

RunMetrics train(const RunConfig& config) {
  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir);
  {
    std::ofstream cfg_out(out_dir / "config.json");
    cfg_out << config.to_json().dump(2) << "\n";
  }
  const data::TaskData task = load_task(config);

  RunMetrics rm;
  for (std::uint64_t seed : config.seeds) {
    rm.seeds.push_back(
        train_one_seed(config, task, seed, out_dir / ("seed_" + std::to_string(seed))));
  }
  aggregate(rm);
  write_results_csv(out_dir / "results.csv", rm);
  return rm;
}

std::vector<SweepRow> sweep(const RunConfig& config, const std::string& axis,
                            const std::vector<double>& values) {
  require(axis == "rff_multiplier" || axis == "purify_ratio",
          "harness::sweep: axis must be rff_multiplier or purify_ratio");
  require(!values.empty(), "harness::sweep: values must be non-empty");

  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir);
  std::vector<SweepRow> rows;

  for (double v : values) {
    RunConfig sub = config;
    if (axis == "rff_multiplier") {
      sub.rff_multiplier = static_cast<int>(std::lround(v));
      require(sub.rff_multiplier >= 1, "harness::sweep: rff_multiplier values must be >= 1");
    } else {
      sub.purify_ratio = v;
    }
    std::string tag = axis + "_" + fmt(v);
    std::replace(tag.begin(), tag.end(), '.', 'p');
    sub.out_dir = (out_dir / tag).string();

    const RunMetrics rm = train(sub);
    for (const SeedRun& s : rm.seeds) {
      rows.push_back({v, s.seed, false, s.dev_acc, s.ood_acc, s.failed});
    }
    rows.push_back({v, 0, true, rm.mean_dev, rm.mean_ood, false});
  }

  std::ofstream out(out_dir / "sweep.csv");
  out << "axis,value,seed,dev_acc,ood_acc,failed\n";
  for (const SweepRow& r : rows) {
    out << axis << ',' << fmt(r.value) << ','
        << (r.aggregate ? std::string("mean") : std::to_string(r.seed)) << ','
        << fmt(r.dev_acc) << ',' << fmt(r.ood_acc) << ',' << (r.failed ? 1 : 0) << '\n';
  }
  return rows;
}

namespace {

std::vector<double> epoch_means(const RunMetrics& rm, int epochs) {
  std::vector<double> sums(static_cast<std::size_t>(epochs), 0.0);
  std::vector<long> counts(static_cast<std::size_t>(epochs), 0);
  for (const SeedRun& s : rm.seeds) {
    if (s.failed) continue;
    for (const IterRecord& r : s.iters) {
      sums[static_cast<std::size_t>(r.epoch - 1)] += r.decorr_mean;
      counts[static_cast<std::size_t>(r.epoch - 1)] += 1;
    }
  }
  for (std::size_t e = 0; e < sums.size(); ++e) {
    if (counts[e] > 0) sums[e] /= static_cast<double>(counts[e]);
  }
  return sums;
}

void append_pairs(std::ofstream& out, const std::string& arm, const RunMetrics& rm,
                  const fs::path& arm_dir) {
  for (const SeedRun& s : rm.seeds) {
    std::ifstream in(arm_dir / ("seed_" + std::to_string(s.seed)) / "pairs.csv");
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (!line.empty()) out << arm << ',' << s.seed << ',' << line << '\n';
    }
  }
}

}  // namespace

StudyResult decorr_study(const RunConfig& config) {
  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir);

  RunConfig depro_cfg = config;
  depro_cfg.use_decorrelation = true;
  depro_cfg.out_dir = (out_dir / "depro").string();

  // Control: weights frozen at uniform; the reconstructed features are still
  // measured every iteration but never optimize anything.
  RunConfig control_cfg = config;
  control_cfg.use_decorrelation = false;
  control_cfg.out_dir = (out_dir / "control").string();

  StudyResult res;
  res.depro = train(depro_cfg);
  res.control = train(control_cfg);
  res.depro_epoch_mean = epoch_means(res.depro, config.epochs);
  res.control_epoch_mean = epoch_means(res.control, config.epochs);

  std::ofstream study(out_dir / "study.csv");
  study << "arm,seed,epoch,decorr_mean\n";
  const auto write_arm = [&](const char* arm, const RunMetrics& rm) {
    for (const SeedRun& s : rm.seeds) {
      if (s.failed) continue;
      std::vector<double> sums(static_cast<std::size_t>(config.epochs), 0.0);
      std::vector<long> counts(static_cast<std::size_t>(config.epochs), 0);
      for (const IterRecord& r : s.iters) {
        sums[static_cast<std::size_t>(r.epoch - 1)] += r.decorr_mean;
        counts[static_cast<std::size_t>(r.epoch - 1)] += 1;
      }
      for (int e = 0; e < config.epochs; ++e) {
        const double m = counts[static_cast<std::size_t>(e)] > 0
                             ? sums[static_cast<std::size_t>(e)] /
                                   static_cast<double>(counts[static_cast<std::size_t>(e)])
                             : 0.0;
        study << arm << ',' << s.seed << ',' << (e + 1) << ',' << fmt(m) << '\n';
      }
    }
  };
  write_arm("depro", res.depro);
  write_arm("control", res.control);

  std::ofstream pairs(out_dir / "pairs.csv");
  pairs << "arm,seed,iteration,i,j,frob_sq\n";
  append_pairs(pairs, "depro", res.depro, out_dir / "depro");
  append_pairs(pairs, "control", res.control, out_dir / "control");
  return res;
}

}  // namespace depro::harness
