#include "depro/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

namespace depro::data {

namespace {

void check_spec(const TaskSpec& spec) {
  require(spec.kslots >= 1, "data: kslots must be >= 1");
  require(spec.n_classes >= 2, "data: need at least two classes");
  require(!spec.signal_slots.empty(), "data: need at least one signal slot");
  require(spec.align_train >= 0.0 && spec.align_train <= 1.0, "data: align_train out of [0,1]");
  require(spec.align_ood >= 0.0 && spec.align_ood <= 1.0, "data: align_ood out of [0,1]");
  require(spec.noise_flip >= 0.0 && spec.noise_flip <= 1.0, "data: noise_flip out of [0,1]");
  require(spec.n_train >= 1 && spec.n_dev >= 0 && spec.n_ood >= 0, "data: bad split sizes");
  require(spec.bias_slot >= 0 && spec.bias_slot < spec.kslots, "data: bias_slot out of range");
  for (int s : spec.signal_slots) {
    require(s >= 0 && s < spec.kslots, "data: signal slot out of range");
    require(s != spec.bias_slot, "data: signal slot collides with bias slot");
  }
}

int draw_other_class(std::mt19937_64& rng, int n_classes, int cls) {
  std::uniform_int_distribution<int> d(0, n_classes - 2);
  int o = d(rng);
  return o >= cls ? o + 1 : o;
}


Dataset draw_split(const TaskSpec& spec, const VocabLayout& lay, int n, double align,
                   int id_offset, std::mt19937_64& rng) {
  Dataset out;
  out.tokens = IntMat(n, spec.kslots);
  out.labels.resize(static_cast<std::size_t>(n));
  out.sample_ids.resize(static_cast<std::size_t>(n));

  std::uniform_int_distribution<int> label_dist(0, spec.n_classes - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> signal_pick(0, lay.signal_per_class - 1);
  std::uniform_int_distribution<int> noise_pick(0, lay.noise_count() - 1);
  const double q = slot_flip_rate(spec);

  std::vector<bool> is_signal(static_cast<std::size_t>(spec.kslots), false);
  for (int s : spec.signal_slots) is_signal[static_cast<std::size_t>(s)] = true;

  for (int i = 0; i < n; ++i) {
    const int y = label_dist(rng);
    int y_bias = y;
    if (coin(rng) >= align) {
      y_bias = draw_other_class(rng, spec.n_classes, y);
    }
    for (int s = 0; s < spec.kslots; ++s) {
      int tok;
      if (is_signal[static_cast<std::size_t>(s)]) {
        int y_sig = y;
        if (q > 0.0 && coin(rng) < q) {
          y_sig = draw_other_class(rng, spec.n_classes, y);
        }
        tok = lay.signal_begin(y_sig) + signal_pick(rng);
      } else if (s == spec.bias_slot) {
        tok = lay.bias_token(y_bias);
      } else {
        tok = lay.noise_begin + noise_pick(rng);
      }
      out.tokens(i, s) = tok;
    }
    out.labels[static_cast<std::size_t>(i)] = y;
    out.sample_ids[static_cast<std::size_t>(i)] = id_offset + i;
  }
  return out;
}

}  // namespace

double majority_accuracy(int slots, double q) {
  double acc = 0.0;
  for (int flips = 0; 2 * flips <= slots; ++flips) {
    double p = 1.0;
    for (int i = 0; i < flips; ++i) {
      p *= q * static_cast<double>(slots - i) / static_cast<double>(i + 1);
    }
    for (int i = 0; i < slots - flips; ++i) p *= 1.0 - q;
    acc += (2 * flips == slots) ? 0.5 * p : p;
  }
  return acc;
}

double slot_flip_rate(const TaskSpec& spec) {
  if (spec.noise_flip <= 0.0) return 0.0;
  const int s = static_cast<int>(spec.signal_slots.size());
  const double target = 1.0 - spec.noise_flip;
  // majority_accuracy is monotone decreasing in q on [0, 0.5].
  double lo = 0.0;
  double hi = 0.5;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (majority_accuracy(s, mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

VocabLayout vocab_layout(const TaskSpec& spec) {
  check_spec(spec);
  VocabLayout lay;
  lay.n_classes = spec.n_classes;
  lay.vocab = spec.vocab;
  // Large signal pools make individual signal tokens rare, so the bias token
  // (one per class, seen in every sample) is the faster cue to learn.
  lay.signal_per_class = std::max(1, (3 * spec.vocab) / (8 * spec.n_classes));
  lay.noise_begin = spec.n_classes + spec.n_classes * lay.signal_per_class;
  require(lay.noise_begin < spec.vocab,
          "data: vocab too small for bias/signal/noise layout");
  return lay;
}

TaskData generate(const TaskSpec& spec) {
  const VocabLayout lay = vocab_layout(spec);
  TaskData td;
  td.spec = spec;
  std::mt19937_64 rng(spec.seed);
  td.train = draw_split(spec, lay, spec.n_train, spec.align_train, 0, rng);
  td.dev = draw_split(spec, lay, spec.n_dev, spec.align_train, spec.n_train, rng);
  td.ood = draw_split(spec, lay, spec.n_ood, spec.align_ood, spec.n_train + spec.n_dev, rng);
  return td;
}

Batch slice(const Dataset& d, const std::vector<int>& rows) {
  Batch b;
  b.tokens = IntMat(static_cast<Eigen::Index>(rows.size()), d.tokens.cols());
  b.labels.resize(rows.size());
  b.sample_ids.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < d.size(), "data::slice: row out of range");
    b.tokens.row(static_cast<Eigen::Index>(i)) = d.tokens.row(rows[i]);
    b.labels[i] = d.labels[static_cast<std::size_t>(rows[i])];
    b.sample_ids[i] = d.sample_ids[static_cast<std::size_t>(rows[i])];
  }
  return b;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  require(schema.kslots >= 1 && schema.n_classes >= 2, "data::load_csv: bad schema");
  std::ifstream in(path);
  require(in.good(), "data::load_csv: cannot open " + path);

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "data::load_csv: empty file " + path);
  {
    std::ostringstream expect;
    for (int s = 0; s < schema.kslots; ++s) expect << "slot" << s << ',';
    expect << "label";
    require(line == expect.str(),
            "data::load_csv: unexpected header at line 1 of " + path + ": " + line);
  }

  std::vector<std::vector<int>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<int> cells;
    cells.reserve(static_cast<std::size_t>(schema.kslots) + 1);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      int v = 0;
      auto res = std::from_chars(p, comma, v);
      require(res.ec == std::errc() && res.ptr == comma,
              "data::load_csv: non-integer cell at line " + std::to_string(line_no) +
                  " of " + path);
      cells.push_back(v);
      if (comma == end) break;
      p = comma + 1;
    }
    require(static_cast<int>(cells.size()) == schema.kslots + 1,
            "data::load_csv: wrong cell count at line " + std::to_string(line_no) + " of " +
                path);
    const int label = cells.back();
    require(label >= 0 && label < schema.n_classes,
            "data::load_csv: label out of range at line " + std::to_string(line_no) + " of " +
                path);
    rows.push_back(std::move(cells));
  }
  require(!rows.empty(), "data::load_csv: no data rows in " + path);

  Dataset d;
  d.tokens = IntMat(static_cast<Eigen::Index>(rows.size()), schema.kslots);
  d.labels.resize(rows.size());
  d.sample_ids.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int s = 0; s < schema.kslots; ++s) {
      d.tokens(static_cast<Eigen::Index>(i), s) = rows[i][static_cast<std::size_t>(s)];
    }
    d.labels[i] = rows[i].back();
    d.sample_ids[i] = static_cast<int>(i);
  }
  return d;
}

void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "data::save_csv: cannot open " + path);
  for (int s = 0; s < d.kslots(); ++s) out << "slot" << s << ',';
  out << "label\n";
  for (int i = 0; i < d.size(); ++i) {
    for (int s = 0; s < d.kslots(); ++s) out << d.tokens(i, s) << ',';
    out << d.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

}  // namespace depro::data
