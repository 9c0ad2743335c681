#include "odgn/data.hpp"
#include "odgn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace odgn {

namespace fs = std::filesystem;

namespace {

constexpr double kKmPerDegree = 111.32;
constexpr double kOriginLon = -87.65;
constexpr double kOriginLat = 41.85;
constexpr double kDistanceFloor = 1e-6;

std::vector<std::string> split_csv(const std::string& line)
{
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(const fs::path& file)
{
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (t.header.empty() && lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF)
      line = line.substr(3);  // UTF-8 BOM
    auto fields = split_csv(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError(file.filename().string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw DataError(file.filename().string() + ": missing header");
  return t;
}

double parse_real(const std::string& s, const fs::path& file, std::size_t lineno)
{
  if (s.empty()) throw DataError(file.filename().string() + ":" + std::to_string(lineno) + ": empty number");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v))
    throw DataError(file.filename().string() + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
  return v;
}

void expect_header(const CsvTable& t, const std::vector<std::string>& cols, const fs::path& file)
{
  if (t.header != cols) {
    std::string want;
    for (const auto& c : cols) want += (want.empty() ? "" : ",") + c;
    throw DataError(file.filename().string() + ": expected header '" + want + "'");
  }
}

std::string fmt_real(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using IdIndex = std::unordered_map<std::string, std::size_t>;

IdIndex index_ids(const City& city)
{
  IdIndex idx;
  for (std::size_t i = 0; i < city.regions.size(); ++i) idx.emplace(city.regions[i].id, i);
  return idx;
}

std::size_t lookup(const IdIndex& idx, const std::string& id, const fs::path& file, std::size_t lineno)
{
  auto it = idx.find(id);
  if (it == idx.end())
    throw DataError("unknown region id '" + id + "' in " + file.filename().string() + " line " +
                    std::to_string(lineno));
  return it->second;
}

BoolMatrix load_edges(const fs::path& file, const IdIndex& idx, std::size_t n)
{
  const CsvTable t = read_csv(file);
  expect_header(t, {"src", "dst"}, file);
  BoolMatrix a = BoolMatrix::Constant(n, n, false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto i = lookup(idx, t.rows[r][0], file, t.line_numbers[r]);
    const auto j = lookup(idx, t.rows[r][1], file, t.line_numbers[r]);
    a(i, j) = true;
  }
  return a;
}

void save_edges(const BoolMatrix& a, const City& city, const fs::path& file)
{
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << "src,dst\n";
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j)
      if (a(i, j)) out << city.regions[i].id << ',' << city.regions[j].id << '\n';
  if (!out) throw DataError("failed writing " + file.string());
}

// Region k sits at grid cell (k % side, k / side).
std::pair<std::size_t, std::size_t> cell_of(std::size_t k, std::size_t side) { return {k % side, k / side}; }

void add_line(BoolMatrix& adj, const std::vector<std::size_t>& stops)
{
  // Every pair of stops on one line is reachable without a transfer.
  for (std::size_t a = 0; a < stops.size(); ++a)
    for (std::size_t b = a + 1; b < stops.size(); ++b) {
      adj(stops[a], stops[b]) = true;
      adj(stops[b], stops[a]) = true;
    }
}

std::vector<std::size_t> random_line(Rng& rng, std::size_t n, std::size_t side, double turn_prob)
{
  static constexpr int dx[4] = {1, 0, -1, 0};
  static constexpr int dy[4] = {0, 1, 0, -1};
  std::vector<std::size_t> stops;
  std::size_t k = rng.index(n);
  auto [x, y] = cell_of(k, side);
  int dir = static_cast<int>(rng.index(4));
  stops.push_back(k);
  for (std::size_t step = 0; step + 1 < side + side / 2; ++step) {
    if (rng.uniform() < turn_prob) dir = (dir + (rng.uniform() < 0.5 ? 1 : 3)) % 4;
    const long nx = static_cast<long>(x) + dx[dir];
    const long ny = static_cast<long>(y) + dy[dir];
    if (nx < 0 || ny < 0 || nx >= static_cast<long>(side) || ny >= static_cast<long>(side)) break;
    const std::size_t nk = static_cast<std::size_t>(ny) * side + static_cast<std::size_t>(nx);
    if (nk >= n) break;
    x = static_cast<std::size_t>(nx);
    y = static_cast<std::size_t>(ny);
    if (std::find(stops.begin(), stops.end(), nk) != stops.end()) break;
    stops.push_back(nk);
  }
  return stops;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::size_t SynthConfig::grid_side() const
{
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_regions))));
}

void SynthConfig::validate() const
{
  if (n_regions < 2) throw UsageError("n_regions must be at least 2");
  if (attr_dim < 1) throw UsageError("attr_dim must be at least 1 (attribute 0 is the population)");
  if (!(gravity_g > 0.0)) throw UsageError("gravity_g must be positive");
  if (!(cell_km > 0.0)) throw UsageError("cell_km must be positive");
  if (!(pop_log_sd >= 0.0)) throw UsageError("pop_log_sd must be non-negative");
  for (double v : {lambda1, lambda2, lambda3, interaction, pop_log_mean})
    if (!std::isfinite(v)) throw UsageError("synth parameters must be finite");
}

City load_city(const fs::path& dir)
{
  if (!fs::is_directory(dir)) throw DataError("not a city directory: " + dir.string());
  City city;
  city.name = dir.filename().string();
  if (city.name.empty()) city.name = dir.parent_path().filename().string();

  const fs::path regions_file = dir / "regions.csv";
  const CsvTable t = read_csv(regions_file);
  if (t.header.size() < 3 || t.header[0] != "id" || t.header[1] != "lon" || t.header[2] != "lat")
    throw DataError("regions.csv: header must start with 'id,lon,lat'");
  const std::size_t a = t.header.size() - 3;
  IdIndex idx;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    Region reg;
    reg.id = row[0];
    if (reg.id.empty()) throw DataError("regions.csv line " + std::to_string(t.line_numbers[r]) + ": empty id");
    reg.lon = parse_real(row[1], regions_file, t.line_numbers[r]);
    reg.lat = parse_real(row[2], regions_file, t.line_numbers[r]);
    reg.attributes.reserve(a);
    for (std::size_t c = 3; c < row.size(); ++c) reg.attributes.push_back(parse_real(row[c], regions_file, t.line_numbers[r]));
    if (!idx.emplace(reg.id, city.regions.size()).second)
      throw DataError("duplicate region id '" + reg.id + "' in regions.csv");
    city.regions.push_back(std::move(reg));
  }
  if (city.regions.empty()) throw DataError("regions.csv: no regions");
  const std::size_t n = city.regions.size();

  city.transport = TransportGraphSet::from_raw(load_edges(dir / "transport_ngb.csv", idx, n),
                                               load_edges(dir / "transport_bus.csv", idx, n),
                                               load_edges(dir / "transport_rail.csv", idx, n));
  if (fs::exists(dir / "od.csv")) city.od = load_od(dir / "od.csv", city);
  city.validate();
  return city;
}

ODNetwork load_od(const fs::path& file, const City& city)
{
  const CsvTable t = read_csv(file);
  expect_header(t, {"origin", "dest", "flow"}, file);
  const IdIndex idx = index_ids(city);
  const std::size_t n = city.size();
  Matrix flows = Matrix::Zero(n, n);
  BoolMatrix seen = BoolMatrix::Constant(n, n, false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto ln = t.line_numbers[r];
    const auto i = lookup(idx, t.rows[r][0], file, ln);
    const auto j = lookup(idx, t.rows[r][1], file, ln);
    const double f = parse_real(t.rows[r][2], file, ln);
    if (f < 0.0)
      throw DataError("negative flow " + t.rows[r][2] + " in " + file.filename().string() + " line " + std::to_string(ln));
    if (seen(i, j))
      throw DataError("duplicate pair (" + t.rows[r][0] + "," + t.rows[r][1] + ") in " + file.filename().string());
    seen(i, j) = true;
    flows(i, j) = f;
  }
  return ODNetwork(std::move(flows));
}

void save_od(const ODNetwork& net, const City& city, const fs::path& file, bool round_flows)
{
  if (net.size() != city.size()) throw DataError("OD network size does not match city");
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << "origin,dest,flow\n";
  for (std::size_t i = 0; i < net.size(); ++i)
    for (std::size_t j = 0; j < net.size(); ++j) {
      double f = net(i, j);
      if (round_flows) f = std::round(f);
      if (f > 0.0) out << city.regions[i].id << ',' << city.regions[j].id << ',' << fmt_real(f) << '\n';
    }
  if (!out) throw DataError("failed writing " + file.string());
}

void save_city(const City& city, const fs::path& dir)
{
  city.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream out(dir / "regions.csv");
    if (!out) throw DataError("cannot write " + (dir / "regions.csv").string());
    out << "id,lon,lat";
    for (std::size_t a = 0; a < city.attr_dim(); ++a) out << ",attr_" << a;
    out << '\n';
    for (const auto& r : city.regions) {
      out << r.id << ',' << fmt_real(r.lon) << ',' << fmt_real(r.lat);
      for (double v : r.attributes) out << ',' << fmt_real(v);
      out << '\n';
    }
    if (!out) throw DataError("failed writing regions.csv");
  }
  save_edges(city.transport.ngb, city, dir / "transport_ngb.csv");
  save_edges(city.transport.bus, city, dir / "transport_bus.csv");
  save_edges(city.transport.rail, city, dir / "transport_rail.csv");
  if (city.od)
    save_od(*city.od, city, dir / "od.csv");
  else
    fs::remove(dir / "od.csv", ec);
}

Matrix gravity_means(const Vector& populations, const Matrix& coords, double g, double l1, double l2, double l3,
                     const Matrix& interaction, double strength)
{
  const auto n = populations.size();
  if (coords.rows() != n) throw std::invalid_argument("gravity_means: coords/populations size mismatch");
  const bool use_interaction = strength != 0.0;
  if (use_interaction && (interaction.rows() != n || interaction.cols() != n))
    throw std::invalid_argument("gravity_means: interaction matrix has the wrong shape");
  Matrix t = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = std::max((coords.row(i) - coords.row(j)).norm(), kDistanceFloor);
      double v = g * std::pow(populations(i), l1) * std::pow(populations(j), l2) / std::pow(d, l3);
      if (use_interaction) v *= std::exp(strength * interaction(i, j));
      t(i, j) = v;
    }
  return t;
}

Matrix attribute_similarity(const Matrix& attributes)
{
  Matrix z = attributes.unaryExpr([](double v) { return std::copysign(std::log1p(std::abs(v)), v); });
  const double n = static_cast<double>(z.rows());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double mu = z.col(c).mean();
    const double sd = std::sqrt((z.col(c).array() - mu).square().sum() / n);
    if (sd > 1e-12)
      z.col(c) = (z.col(c).array() - mu) / sd;
    else
      z.col(c).setZero();
  }
  Matrix s = Matrix::Zero(z.rows(), z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.rows(); ++j) {
      const double ni = z.row(i).norm();
      const double nj = z.row(j).norm();
      if (ni > 0.0 && nj > 0.0) s(i, j) = z.row(i).dot(z.row(j)) / (ni * nj);
    }
  return s;
}

Matrix synth_coordinates(const SynthConfig& cfg)
{
  const std::size_t side = cfg.grid_side();
  Matrix xy(cfg.n_regions, 2);
  for (std::size_t k = 0; k < cfg.n_regions; ++k) {
    auto [x, y] = cell_of(k, side);
    xy(k, 0) = static_cast<double>(x) * cfg.cell_km;
    xy(k, 1) = static_cast<double>(y) * cfg.cell_km;
  }
  return xy;
}

City synth_city(const SynthConfig& cfg)
{
  cfg.validate();
  const std::size_t n = cfg.n_regions;
  const std::size_t side = cfg.grid_side();
  const std::size_t a_dim = cfg.attr_dim;
  constexpr std::size_t kFactors = 4;
  constexpr std::size_t kDemographic = 24;

  Rng rng(cfg.seed);
  Rng world(cfg.attribute_seed);

  // Attribute-generating weights shared by every city built with the same attribute_seed.
  Matrix w = world.normal_matrix(static_cast<Eigen::Index>(a_dim), kFactors);
  Vector bias(a_dim);
  for (std::size_t a = 0; a < a_dim; ++a) bias(a) = 0.5 * world.normal();

  const Matrix xy = synth_coordinates(cfg);

  // Latent land-use factors: radial distance from the centre plus three smooth random fields.
  const double centre = 0.5 * static_cast<double>(side - 1) * cfg.cell_km;
  const double rho_max = std::max(std::sqrt(2.0) * centre, 1e-9);
  Matrix freq(kFactors, 3);
  for (std::size_t f = 1; f < kFactors; ++f) {
    freq(f, 0) = rng.uniform() * 2.0 - 1.0;
    freq(f, 1) = rng.uniform() * 2.0 - 1.0;
    freq(f, 2) = rng.uniform() * 2.0 * std::numbers::pi;
  }
  const double span = static_cast<double>(side) * cfg.cell_km;
  Matrix latent(n, kFactors);
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = xy(k, 0) - centre;
    const double dy = xy(k, 1) - centre;
    latent(k, 0) = 2.0 * std::sqrt(dx * dx + dy * dy) / rho_max - 1.0;
    for (std::size_t f = 1; f < kFactors; ++f)
      latent(k, f) = std::cos(2.0 * std::numbers::pi * (freq(f, 0) * xy(k, 0) + freq(f, 1) * xy(k, 1)) / span + freq(f, 2));
    for (std::size_t f = 0; f < kFactors; ++f) latent(k, f) += 0.2 * rng.normal();
  }

  City city;
  city.name = "synth_" + std::to_string(cfg.seed);
  Vector population(n);
  for (std::size_t k = 0; k < n; ++k) {
    Region r;
    char id[32];
    std::snprintf(id, sizeof id, "r%04zu", k);
    r.id = id;
    r.lon = kOriginLon + xy(k, 0) / (kKmPerDegree * std::cos(kOriginLat * std::numbers::pi / 180.0));
    r.lat = kOriginLat + xy(k, 1) / kKmPerDegree;
    const double pop = std::round(std::exp(cfg.pop_log_mean + cfg.pop_log_sd * rng.normal()));
    population(k) = std::max(pop, 1.0);
    r.attributes.assign(a_dim, 0.0);
    r.attributes[0] = population(k);
    for (std::size_t a = 1; a < a_dim; ++a) {
      const double score = w.row(a).dot(latent.row(k)) + bias(a);
      if (a < kDemographic) {
        const double share = sigmoid(score) * std::exp(0.1 * rng.normal());
        r.attributes[a] = std::round(population(k) * std::min(share, 1.0));
      } else {
        const double rate = 3.0 * std::exp(0.5 * score) * std::sqrt(population(k) / 1100.0);
        r.attributes[a] = static_cast<double>(rng.poisson(rate));
      }
    }
    city.regions.push_back(std::move(r));
  }

  BoolMatrix ngb = BoolMatrix::Constant(n, n, false);
  for (std::size_t k = 0; k < n; ++k) {
    auto [x, y] = cell_of(k, side);
    if (x + 1 < side && k + 1 < n) ngb(k, k + 1) = true;
    if (k + side < n) ngb(k, k + side) = true;
    (void)y;
  }
  BoolMatrix bus = BoolMatrix::Constant(n, n, false);
  for (std::size_t l = 0; l < cfg.bus_lines; ++l) add_line(bus, random_line(rng, n, side, 0.3));
  BoolMatrix rail = BoolMatrix::Constant(n, n, false);
  for (std::size_t l = 0; l < cfg.rail_lines; ++l) add_line(rail, random_line(rng, n, side, 0.0));
  city.transport = TransportGraphSet::from_raw(std::move(ngb), std::move(bus), std::move(rail));

  const Matrix attrs = city.attribute_matrix();
  const Matrix sim = cfg.interaction != 0.0 ? attribute_similarity(attrs) : Matrix();
  Matrix flows = gravity_means(population, xy, cfg.gravity_g, cfg.lambda1, cfg.lambda2, cfg.lambda3, sim,
                               cfg.interaction);
  if (cfg.poisson_noise)
    for (Eigen::Index i = 0; i < flows.size(); ++i) flows.data()[i] = static_cast<double>(rng.poisson(flows.data()[i]));
  city.od = ODNetwork(std::move(flows));
  city.validate();
  return city;
}

}  // namespace odgn
