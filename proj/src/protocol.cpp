#include "cdsl/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cdsl/memory.hpp"
#include "cdsl/nets.hpp"
#include "cdsl/randmix.hpp"
#include "cdsl/rng.hpp"
#include "json.hpp"

namespace cdsl::protocol {

// ---------------------------------------------------------------------------
// Metrics

namespace {

std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& xs) {
  std::vector<double> v;
  for (const auto& x : xs) {
    if (x) v.push_back(*x);
  }
  return mean_of(v);
}

}  // namespace

MetricsReport compute_metrics(const AccuracyMatrix& matrix, std::vector<std::string> domains) {
  const std::size_t n = matrix.size();
  for (const auto& row : matrix) {
    if (row.size() != n) throw Error("compute_metrics: matrix must have T+1 rows of T+1 entries");
    for (double v : row) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error("compute_metrics: entry outside [0, 1]");
    }
  }
  if (domains.empty()) {
    for (std::size_t j = 0; j < n; ++j) domains.push_back("D" + std::to_string(j));
  }
  if (domains.size() != n) throw Error("compute_metrics: one domain name per column required");

  MetricsReport r;
  r.domains = std::move(domains);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> before, after;
    for (std::size_t row = 0; row < n; ++row) {
      if (row < j) before.push_back(matrix[row][j]);
      if (row > j) after.push_back(matrix[row][j]);
    }
    r.tdg.push_back(mean_of(before));
    r.tda.push_back(matrix[j][j]);
    r.fa.push_back(mean_of(after));
  }
  r.avg_tdg = mean_defined(r.tdg);
  r.avg_tda = mean_defined(r.tda);
  r.avg_fa = mean_defined(r.fa);
  return r;
}

// ---------------------------------------------------------------------------
// Runner

synthdata::DomainSequence resolve_sequence(const RunConfig& cfg) {
  auto seq = synthdata::standard_sequence(cfg.sequence);
  if (!cfg.order.empty()) seq = synthdata::reorder(seq, cfg.order);
  if (cfg.samples_per_domain) {
    for (auto& d : seq.domains) d.num_samples = cfg.samples_per_domain;
  }
  seq.validate();
  return seq;
}

RunConfig stationary_removals(RunConfig cfg) {
  cfg.stationary = true;
  cfg.disable_memory = true;
  cfg.disable_distill = true;
  cfg.pca_source_form = true;
  return cfg;
}

namespace {

Tensor softmax_rows(const Tensor& z) {
  Tensor out = z;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = out.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (auto& v : row) {
      v = std::exp(v - m);
      s += v;
    }
    for (auto& v : row) v /= s;
  }
  return out;
}

Tensor rows_from(const std::vector<memory::Exemplar>& ex) {
  if (ex.empty()) return {};
  const std::size_t d = ex.front().input.size();
  std::vector<double> values;
  values.reserve(ex.size() * d);
  for (const auto& e : ex) values.insert(values.end(), e.input.begin(), e.input.end());
  return Tensor::matrix(ex.size(), d, std::move(values));
}

/// Endless sequence of shuffled passes over 0..n-1.
class BatchCursor {
 public:
  BatchCursor(std::size_t n, Rng& rng) : order_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }
  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  Rng& rng_;
  std::size_t pos_ = 0;
};

std::string stage_context(std::size_t stage, std::size_t epoch, std::size_t step) {
  return "stage " + std::to_string(stage) + ", epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
}

}  // namespace

RunResult run_cdsl(const RunConfig& cfg) { return run_cdsl(cfg, resolve_sequence(cfg)); }

RunResult run_cdsl(const RunConfig& cfg, const synthdata::DomainSequence& sequence) {
  cfg.validate();
  sequence.validate();
  const bool use_memory = !cfg.disable_memory && !cfg.stationary;
  const bool use_distill = !cfg.disable_distill && !cfg.stationary;
  const bool source_form = cfg.pca_source_form || cfg.stationary;

  const std::size_t T = sequence.domains.size();
  const auto geometry = sequence.geometry();

  std::vector<synthdata::Dataset> data;
  for (const auto& spec : sequence.domains) data.push_back(synthdata::generate(spec, synthdata::domain_seed(cfg.seed, spec.name)));
  const auto split =
      synthdata::split_source(data[0], cfg.source_fraction, synthdata::domain_seed(cfg.seed, "split/" + sequence.domains[0].name));

  // Evaluation sets: the source test split, every target in full.
  std::vector<const synthdata::Dataset*> eval{&split.test};
  for (std::size_t j = 1; j < T; ++j) eval.push_back(&data[j]);

  Rng init_rng = make_stream(cfg.seed, "init");
  Rng batch_rng = make_stream(cfg.seed, "batching");
  Rng mix_rng = make_stream(cfg.seed, "randmix");
  Rng replay_rng = make_stream(cfg.seed, "replay");

  nets::ModelSpec mspec;
  mspec.input_dim = sequence.input_dim();
  mspec.num_classes = sequence.num_classes();
  mspec.extractor_widths = cfg.extractor_widths;
  mspec.bottleneck_widths = cfg.bottleneck_widths;
  nets::ModelPair pair(nets::Model::initialize(mspec, init_rng));
  memory::ExemplarMemory mem(cfg.memory_capacity);

  RunResult result;
  for (const auto& d : sequence.domains) result.domains.push_back(d.name);

  auto evaluate_row = [&]() {
    std::vector<double> row;
    for (const auto* set : eval) row.push_back(nets::accuracy(pair.current(), set->inputs, set->labels));
    return row;
  };
  if (cfg.record_initial_row) result.initial_row = evaluate_row();

  objective::LossOptions loss_opts;
  loss_opts.disable_pca = cfg.disable_pca;
  loss_opts.pca_source_form = source_form;
  loss_opts.disable_distill = !use_distill;

  std::size_t refreshes = 0;
  for (std::size_t stage = 0; stage < T; ++stage) {
    const auto kind = stage == 0 ? randmix::StageKind::source : randmix::StageKind::target;
    const synthdata::Dataset& train = stage == 0 ? split.train : data[stage];
    std::vector<int> labels = train.labels;  // replaced by pseudo labels on targets

    StageTrace trace;
    trace.stage = stage;
    diffcore::SgdState sgd_state;
    BatchCursor cursor(train.size(), batch_rng);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      if (kind == randmix::StageKind::target) {
        labeler::PseudoLabelSet set;
        try {
          set = labeler::label(pair.current(), train.inputs, cfg.labeler, static_cast<int>(stage));
        } catch (const Error& e) {
          throw Error("stage " + std::to_string(stage) + ", epoch " + std::to_string(epoch) + " labeling: " + e.what());
        }
        if (epoch == 0) {
          trace.label_accuracy = set.accuracy(train.labels);
          if (cfg.probe_labelers) {
            trace.probe = std::array<double, 3>{
                labeler::t2pl(pair.current(), train.inputs, cfg.labeler).accuracy(train.labels),
                labeler::softmax_labels(pair.current(), train.inputs).accuracy(train.labels),
                labeler::shot_style_labels(pair.current(), train.inputs).accuracy(train.labels)};
          }
        }
        labels = std::move(set.labels);
      }

      for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
        try {
          const bool replay = use_memory && !mem.empty();
          const std::size_t n_current = replay ? cfg.batch_size - cfg.replay_n : cfg.batch_size;
          const auto idx = cursor.next(n_current);
          Tensor x = train.inputs.gather_rows(idx);
          std::vector<int> y;
          for (auto i : idx) y.push_back(labels[i]);
          if (replay) {
            const auto ex = mem.replay_batch(cfg.replay_n, replay_rng);
            x = Tensor::stack_rows(x, rows_from(ex));
            for (const auto& e : ex) y.push_back(e.label);
          }
          if (!cfg.disable_randmix) {
            auto aug = randmix::augment_batch(pair.current(), x, y, cfg.randmix, kind, geometry, mix_rng);
            if (!aug.labels.empty()) {
              x = Tensor::stack_rows(x, aug.inputs);
              y.insert(y.end(), aug.labels.begin(), aug.labels.end());
            }
          }

          diffcore::Tape tape;
          auto vars = pair.current().forward(tape, tape.constant(x), true);
          objective::BatchContext ctx;
          ctx.tape = &tape;
          ctx.features = vars.features;
          ctx.logits = vars.logits;
          ctx.labels = y;
          if (kind == randmix::StageKind::target) {
            const nets::Model& prev = pair.previous();
            if (!source_form && !cfg.disable_pca) ctx.previous_prototypes = prev.prototypes();
            if (use_distill) {
              if (cfg.distill_on == DistillOn::logits) {
                ctx.distill_input = vars.logits;
                ctx.distill_target = softmax_rows(nets::logits(prev, x));
              } else {
                ctx.distill_input = vars.features;
                ctx.distill_target = softmax_rows(nets::features(prev, x));
              }
            }
          }
          auto loss = objective::total_loss(ctx, kind, loss_opts);
          tape.backward(loss.total);
          pair.current().collect_gradients(tape, vars);
          diffcore::sgd_step(pair.current().parameters(), cfg.sgd, sgd_state);
          result.train_log.push_back(TrainLogRow{stage, epoch, step, loss.breakdown});
        } catch (const Error& e) {
          throw Error(stage_context(stage, epoch, step) + ": " + e.what());
        }
      }
    }

    try {
      if (kind == randmix::StageKind::target) {
        auto final_labels = labeler::label(pair.current(), train.inputs, cfg.labeler, static_cast<int>(stage));
        if (use_memory) mem.admit_domain(pair.current(), train.inputs, final_labels.labels, static_cast<int>(stage));
        result.pseudo_labels.push_back(std::move(final_labels));
      } else if (use_memory) {
        mem.admit_domain(pair.current(), train.inputs, train.labels, 0);
      }
    } catch (const Error& e) {
      throw Error("stage " + std::to_string(stage) + " memory admission: " + e.what());
    }
    pair.refresh_previous();
    ++refreshes;

    trace.memory_size = mem.size();
    for (const auto& [id, bucket] : mem.buckets()) trace.bucket_sizes.push_back(bucket.size());
    trace.previous_refreshes = refreshes;
    result.stages.push_back(std::move(trace));
    result.matrix.push_back(evaluate_row());
  }

  result.metrics = compute_metrics(result.matrix, result.domains);
  result.final_parameter_hash = nets::parameter_hash(pair.current());
  return result;
}

double run_stationary(const RunConfig& cfg, const synthdata::DomainSpec& source, const synthdata::DomainSpec& target) {
  synthdata::DomainSequence seq;
  seq.name = "stationary";
  seq.domains = {source, target};
  const auto r = run_cdsl(stationary_removals(cfg), seq);
  return r.matrix[1][1];
}

// ---------------------------------------------------------------------------
// Ablations

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::no_randmix: return "no_randmix";
    case Variant::labeler_softmax: return "labeler=softmax";
    case Variant::labeler_shot_style: return "labeler=shot_style";
    case Variant::no_pca: return "no_pca";
  }
  return "?";
}

std::vector<std::string> variant_names() { return {"no_randmix", "labeler=softmax", "labeler=shot_style", "no_pca"}; }

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::no_randmix, Variant::labeler_softmax, Variant::labeler_shot_style, Variant::no_pca}) {
    if (to_string(v) == name) return v;
  }
  std::string known;
  for (const auto& n : variant_names()) known += (known.empty() ? "" : ", ") + n;
  throw Error("unknown ablation variant '" + std::string(name) + "' (known: " + known + ")");
}

RunConfig apply_variant(RunConfig cfg, Variant v) {
  switch (v) {
    case Variant::no_randmix: cfg.disable_randmix = true; break;
    case Variant::labeler_softmax: cfg.labeler.method = labeler::Method::softmax; break;
    case Variant::labeler_shot_style: cfg.labeler.method = labeler::Method::shot_style; break;
    case Variant::no_pca: cfg.disable_pca = true; break;
  }
  return cfg;
}

MetricsReport ablate(const RunConfig& cfg, Variant v) { return run_cdsl(apply_variant(cfg, v)).metrics; }

// ---------------------------------------------------------------------------
// Results layout

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::ordered_json opt_array(const std::vector<std::optional<double>>& xs) {
  auto a = nlohmann::ordered_json::array();
  for (const auto& x : xs) a.push_back(x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr));
  return a;
}

nlohmann::ordered_json opt_value(const std::optional<double>& x) {
  return x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr);
}

std::optional<double> read_opt(const nlohmann::json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

void write_matrix_csv(const AccuracyMatrix& matrix, const std::vector<std::string>& domains, std::ostream& out) {
  out << "stage";
  for (const auto& d : domains) out << ',' << d;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < matrix.size(); ++r) {
    out << r;
    for (double v : matrix[r]) {
      std::snprintf(buf, sizeof buf, "%.6f", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

std::string metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json doc;
  doc["domains"] = r.domains;
  doc["tdg"] = opt_array(r.tdg);
  doc["tda"] = opt_array(r.tda);
  doc["fa"] = opt_array(r.fa);
  doc["average"] = {{"tdg", opt_value(r.avg_tdg)}, {"tda", opt_value(r.avg_tda)}, {"fa", opt_value(r.avg_fa)}};
  return doc.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto doc = nlohmann::json::parse(text);
    r.domains = doc.at("domains").get<std::vector<std::string>>();
    for (const auto& v : doc.at("tdg")) r.tdg.push_back(read_opt(v));
    for (const auto& v : doc.at("tda")) r.tda.push_back(read_opt(v));
    for (const auto& v : doc.at("fa")) r.fa.push_back(read_opt(v));
    const auto& avg = doc.at("average");
    r.avg_tdg = read_opt(avg.at("tdg"));
    r.avg_tda = read_opt(avg.at("tda"));
    r.avg_fa = read_opt(avg.at("fa"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("metrics.json: ") + e.what());
  }
  const std::size_t n = r.domains.size();
  if (r.tdg.size() != n || r.tda.size() != n || r.fa.size() != n) throw Error("metrics.json: inconsistent lengths");
  return r;
}

MetricsReport load_metrics(const std::filesystem::path& results_dir) {
  const auto path = results_dir / "metrics.json";
  std::ifstream in(path);
  if (!in) throw Error("missing " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return metrics_from_json(ss.str());
}

void write_metrics_csv(const MetricsReport& r, std::ostream& out) {
  out << "metric";
  for (const auto& d : r.domains) out << ',' << d;
  out << ",average\n";
  auto line = [&](const char* name, const std::vector<std::optional<double>>& xs, const std::optional<double>& avg) {
    out << name;
    for (const auto& x : xs) out << ',' << (x ? g17(*x) : "");
    out << ',' << (avg ? g17(*avg) : "") << '\n';
  };
  line("tdg", r.tdg, r.avg_tdg);
  line("tda", r.tda, r.avg_tda);
  line("fa", r.fa, r.avg_fa);
}

MetricsReport read_metrics_csv(std::istream& in) {
  auto cells = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  std::string line;
  if (!std::getline(in, line)) throw Error("metrics csv: empty input");
  auto header = cells(line);
  if (header.size() < 2 || header.front() != "metric" || header.back() != "average") {
    throw Error("metrics csv: bad header");
  }
  MetricsReport r;
  r.domains.assign(header.begin() + 1, header.end() - 1);
  const std::size_t n = r.domains.size();
  for (const char* name : {"tdg", "tda", "fa"}) {
    if (!std::getline(in, line)) throw Error(std::string("metrics csv: missing row ") + name);
    auto c = cells(line);
    if (c.size() != n + 2 || c.front() != name) throw Error(std::string("metrics csv: bad row ") + name);
    std::vector<std::optional<double>> xs;
    for (std::size_t j = 1; j <= n; ++j) xs.push_back(c[j].empty() ? std::nullopt : std::optional(std::stod(c[j])));
    std::optional<double> avg = c.back().empty() ? std::nullopt : std::optional(std::stod(c.back()));
    if (std::string(name) == "tdg") {
      r.tdg = xs;
      r.avg_tdg = avg;
    } else if (std::string(name) == "tda") {
      r.tda = xs;
      r.avg_tda = avg;
    } else {
      r.fa = xs;
      r.avg_fa = avg;
    }
  }
  return r;
}

void write_results(const std::filesystem::path& dir, const RunConfig& cfg, const RunResult& result) {
  std::filesystem::create_directories(dir);

  std::ostringstream matrix;
  write_matrix_csv(result.matrix, result.domains, matrix);
  write_file(dir / "matrix.csv", matrix.str());

  write_file(dir / "metrics.json", metrics_json(result.metrics));

  std::ostringstream log;
  log << "stage,epoch,step,ce,pca,dis,total\n";
  for (const auto& row : result.train_log) {
    log << row.stage << ',' << row.epoch << ',' << row.step << ',' << g17(row.loss.ce) << ',' << g17(row.loss.pca)
        << ',' << g17(row.loss.dis) << ',' << g17(row.loss.total) << '\n';
  }
  write_file(dir / "train_log.csv", log.str());

  write_file(dir / "config.resolved.json", to_json(cfg) + "\n");

  std::ostringstream labels;
  labels << "sample_index,label,method,stage\n";
  for (const auto& set : result.pseudo_labels) {
    for (std::size_t i = 0; i < set.labels.size(); ++i) {
      labels << i << ',' << set.labels[i] << ',' << labeler::to_string(set.method) << ',' << set.stage << '\n';
    }
  }
  write_file(dir / "pseudo_labels.csv", labels.str());

  std::ostringstream stages;
  stages << "stage,memory_size,bucket_sizes,label_accuracy,t2pl_accuracy,softmax_accuracy,shot_style_accuracy\n";
  for (const auto& st : result.stages) {
    std::string buckets;
    for (auto b : st.bucket_sizes) buckets += (buckets.empty() ? "" : " ") + std::to_string(b);
    stages << st.stage << ',' << st.memory_size << ',' << buckets << ','
           << (st.label_accuracy ? g17(*st.label_accuracy) : "");
    for (std::size_t m = 0; m < 3; ++m) stages << ',' << (st.probe ? g17((*st.probe)[m]) : "");
    stages << '\n';
  }
  write_file(dir / "stages.csv", stages.str());

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[64];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(result.final_parameter_hash));
  write_file(dir / "run.meta", std::string("finished_at=") + stamp + "\nfinal_parameter_hash=" + hash + "\n");
}

}  // namespace cdsl::protocol
