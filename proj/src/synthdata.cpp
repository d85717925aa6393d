#include "cdsl/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cdsl/rng.hpp"

namespace cdsl::synthdata {

namespace {

constexpr double kCircleRadius = 1.0;
constexpr std::size_t kBitmapSide = 8;

// 8x8 class templates for bitmap8, '#' = 1.
constexpr std::array<std::array<const char*, 8>, 10> kGlyphs{{
    {"..####..", ".#....#.", "#......#", "#......#", "#......#", "#......#", ".#....#.", "..####.."},
    {"...##...", "..###...", ".#.##...", "...##...", "...##...", "...##...", "...##...", ".######."},
    {"..####..", ".#....#.", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".######."},
    {"########", "#.......", "#.......", "######..", "#.......", "#.......", "#.......", "########"},
    {"#......#", "#......#", "#......#", "########", "#......#", "#......#", "#......#", "#......#"},
    {"########", "...##...", "...##...", "...##...", "...##...", "...##...", "...##...", "...##..."},
    {"#......#", ".#....#.", "..#..#..", "...##...", "...##...", "..#..#..", ".#....#.", "#......#"},
    {"#.......", "#.......", "#.......", "#.......", "#.......", "#.......", "#.......", "########"},
    {"########", "#......#", "#......#", "#......#", "#......#", "#......#", "#......#", "########"},
    {"...#....", "..###...", ".#####..", "#######.", "...#....", "...#....", "...#....", "...#...."},
}};

double reduced_radians(double degrees) {
  double d = std::fmod(degrees, 360.0);
  if (d < 0) d += 360.0;
  return d * std::numbers::pi / 180.0;
}

std::array<double, 2> rotate(std::array<double, 2> p, double c, double s) {
  return {c * p[0] - s * p[1], s * p[0] + c * p[1]};
}

/// Balanced labels 0,1,..,K-1,0,1,.. in a seed-determined order.
std::vector<int> balanced_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % k);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

Dataset gen_points(const DomainSpec& spec, Rng& rng) {
  const double theta = reduced_radians(spec.rotation_deg);
  const double c = std::cos(theta), s = std::sin(theta);
  Dataset out{Tensor::zeros(spec.num_samples, 2), balanced_labels(spec.num_samples, spec.num_classes, rng)};
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    const int k = out.labels[i];
    std::array<double, 2> p{};
    if (spec.kind == GeneratorKind::gauss_mix) {
      const double a = 2.0 * std::numbers::pi * k / static_cast<double>(spec.num_classes);
      p = {kCircleRadius * std::cos(a), kCircleRadius * std::sin(a)};
    } else {
      // Interleaved half circles, centred on the origin.
      const double t = uniform(rng, 0.0, std::numbers::pi);
      p = k == 0 ? std::array<double, 2>{std::cos(t), std::sin(t)}
                 : std::array<double, 2>{1.0 - std::cos(t), 0.5 - std::sin(t)};
      p[0] -= 0.5;
      p[1] -= 0.25;
    }
    double nx = 0.0, ny = 0.0;
    if (spec.noise_sigma > 0.0) {
      nx = spec.noise_sigma * standard_normal(rng);
      ny = spec.noise_sigma * standard_normal(rng);
    }
    auto q = rotate({p[0] + nx, p[1] + ny}, c, s);
    out.inputs(i, 0) = q[0] + spec.translation[0];
    out.inputs(i, 1) = q[1] + spec.translation[1];
  }
  return out;
}

Dataset gen_bitmaps(const DomainSpec& spec, Rng& rng) {
  const double theta = reduced_radians(spec.rotation_deg);
  const double c = std::cos(theta), s = std::sin(theta);
  const std::size_t side = kBitmapSide;
  const double centre = (static_cast<double>(side) - 1.0) / 2.0;
  Dataset out{Tensor::zeros(spec.num_samples, side * side),
              balanced_labels(spec.num_samples, spec.num_classes, rng)};
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    const auto& glyph = kGlyphs[static_cast<std::size_t>(out.labels[i])];
    auto row = out.inputs.row(i);
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t col = 0; col < side; ++col) {
        // Inverse-map the destination pixel into the template (nearest neighbour),
        // then apply the translation as a pixel offset.
        const double y = static_cast<double>(r) - centre - spec.translation[1];
        const double x = static_cast<double>(col) - centre - spec.translation[0];
        const double sx = c * x + s * y + centre;
        const double sy = -s * x + c * y + centre;
        const long ix = std::lround(sx);
        const long iy = std::lround(sy);
        double v = 0.0;
        if (ix >= 0 && iy >= 0 && ix < static_cast<long>(side) && iy < static_cast<long>(side)) {
          v = glyph[static_cast<std::size_t>(iy)][static_cast<std::size_t>(ix)] == '#' ? 1.0 : 0.0;
        }
        if (spec.noise_sigma > 0.0) v = std::clamp(v + spec.noise_sigma * standard_normal(rng), 0.0, 1.0);
        row[r * side + col] = v;
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::gauss_mix: return "gauss_mix";
    case GeneratorKind::two_moons: return "two_moons";
    case GeneratorKind::bitmap8: return "bitmap8";
  }
  return "unknown";
}

GeneratorKind parse_generator_kind(std::string_view name) {
  if (name == "gauss_mix") return GeneratorKind::gauss_mix;
  if (name == "two_moons") return GeneratorKind::two_moons;
  if (name == "bitmap8") return GeneratorKind::bitmap8;
  throw Error("unknown generator kind '" + std::string(name) + "' (gauss_mix, two_moons, bitmap8)");
}

void DomainSpec::validate() const {
  if (num_classes == 0) throw Error("domain " + name + ": num_classes must be positive");
  if (num_samples < 4 * num_classes) {
    throw Error("domain " + name + ": needs at least 4*K = " + std::to_string(4 * num_classes) + " samples");
  }
  if (!(noise_sigma >= 0.0)) throw Error("domain " + name + ": noise_sigma must be >= 0");
  if (kind == GeneratorKind::two_moons && num_classes != 2) {
    throw Error("domain " + name + ": two_moons has exactly 2 classes");
  }
  if (kind == GeneratorKind::bitmap8 && num_classes > kGlyphs.size()) {
    throw Error("domain " + name + ": bitmap8 supports at most " + std::to_string(kGlyphs.size()) + " classes");
  }
}

std::size_t DomainSpec::input_dim() const { return kind == GeneratorKind::bitmap8 ? kBitmapSide * kBitmapSide : 2; }

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out{inputs.gather_rows(indices), {}};
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(labels.at(i));
  return out;
}

std::size_t DomainSequence::num_classes() const { return domains.at(0).num_classes; }
std::size_t DomainSequence::input_dim() const { return domains.at(0).input_dim(); }

std::optional<ImageGeometry> DomainSequence::geometry() const {
  if (domains.at(0).kind == GeneratorKind::bitmap8) return ImageGeometry{kBitmapSide, kBitmapSide};
  return std::nullopt;
}

void DomainSequence::validate() const {
  if (domains.empty()) throw Error("sequence " + name + " has no domains");
  for (const auto& d : domains) {
    d.validate();
    if (d.num_classes != domains[0].num_classes) {
      throw Error("sequence " + name + ": all domains must share the label space");
    }
    if (d.input_dim() != domains[0].input_dim()) {
      throw Error("sequence " + name + ": all domains must share the input dimension");
    }
  }
}

Dataset generate(const DomainSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_stream(seed, "synthdata");
  return spec.kind == GeneratorKind::bitmap8 ? gen_bitmaps(spec, rng) : gen_points(spec, rng);
}

std::uint64_t domain_seed(std::uint64_t root_seed, std::string_view domain_name) {
  Rng rng = make_stream(root_seed, std::string("data/") + std::string(domain_name));
  return rng();
}

// ---------------------------------------------------------------------------
// Presets

namespace {

DomainSequence rotation_sequence(std::string name, GeneratorKind kind, std::size_t classes, std::size_t samples,
                                 double sigma, std::vector<double> angles, std::array<double, 2> centre = {0.0, 0.0}) {
  DomainSequence seq{name, {}};
  for (std::size_t i = 0; i < angles.size(); ++i) {
    DomainSpec d;
    d.name = name + "/d" + std::to_string(i);
    d.kind = kind;
    d.rotation_deg = angles[i];
    d.translation = centre;
    d.noise_sigma = sigma;
    d.num_classes = classes;
    d.num_samples = samples;
    seq.domains.push_back(d);
  }
  return seq;
}

}  // namespace

std::vector<std::string> preset_names() { return {"rot5", "moons4", "bitmap5"}; }

DomainSequence standard_sequence(std::string_view name) {
  if (name == "rot5") {
    return rotation_sequence("rot5", GeneratorKind::gauss_mix, 2, 300, 0.35, {0, 20, 40, 60, 80},
                             {kSigmoidFixedPoint, kSigmoidFixedPoint});
  }
  if (name == "moons4") {
    return rotation_sequence("moons4", GeneratorKind::two_moons, 2, 300, 0.12, {0, 30, 60, 90},
                             {kSigmoidFixedPoint, kSigmoidFixedPoint});
  }
  if (name == "bitmap5") {
    return rotation_sequence("bitmap5", GeneratorKind::bitmap8, 4, 300, 0.25, {0, 15, 30, 45, 60});
  }
  std::string list;
  for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
  throw Error("unknown sequence preset '" + std::string(name) + "'; available: " + list);
}

std::vector<DomainSequence> standard_sequences() {
  std::vector<DomainSequence> out;
  for (const auto& n : preset_names()) out.push_back(standard_sequence(n));
  return out;
}

DomainSequence reorder(const DomainSequence& seq, std::span<const std::size_t> order) {
  std::vector<std::size_t> sorted(order.begin(), order.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i || sorted.size() != seq.domains.size()) {
      throw Error("domain order must be a permutation of 0.." + std::to_string(seq.domains.size() - 1));
    }
  }
  DomainSequence out{seq.name, {}};
  for (auto i : order) out.domains.push_back(seq.domains[i]);
  return out;
}

std::vector<std::vector<std::size_t>> domain_orders(std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> out;
  do {
    out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

Split split_source(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("split fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_stream(seed, "split");
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  Split s;
  s.train_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(s.train_indices.begin(), s.train_indices.end());
  std::sort(s.test_indices.begin(), s.test_indices.end());
  s.train = data.subset(s.train_indices);
  s.test = data.subset(s.test_indices);
  return s;
}

// ---------------------------------------------------------------------------
// IO

void write_csv(const Dataset& data, std::ostream& out) {
  const std::size_t d = data.inputs.cols();
  out << "label";
  for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (double v : data.inputs.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("dataset csv: missing header");
  const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    labels.push_back(std::stoi(cell));
    std::size_t count = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++count;
    }
    if (count != cols) throw Error("dataset csv: row " + std::to_string(labels.size()) + " has wrong width");
  }
  if (labels.empty()) return Dataset{};
  return Dataset{Tensor::matrix(labels.size(), cols, std::move(values)), std::move(labels)};
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (double v : data.inputs.values()) mix(&v, sizeof v);
  for (int l : data.labels) mix(&l, sizeof l);
  return h;
}

}  // namespace cdsl::synthdata
