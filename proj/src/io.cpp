#include "lkemu/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lkemu/error.hpp"
#include "lkemu/format.hpp"

namespace lkemu {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::kIo, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::kIo, "cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorCategory::kIo, "write to '" + path + "' failed");
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return s;
}

// Spacing that reproduces every coordinate as origin + i * step exactly when
// one exists within a few ulps of the candidates; otherwise the closest.
double fit_step(const std::vector<double>& coords, std::string_view axis) {
  const std::size_t n = coords.size();
  if (n < 2) return 1.0;
  const double first = coords.front();
  auto error = [&](double step) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(first + static_cast<double>(i) * step - coords[i]));
    }
    return worst;
  };
  const double candidates[] = {(coords.back() - first) / static_cast<double>(n - 1), coords[1] - first};
  double best = candidates[0];
  double best_error = error(best);
  for (double c : candidates) {
    double step = c;
    for (int k = 0; k < 8 && best_error > 0; ++k) step = std::nextafter(step, -INFINITY);
    for (int k = 0; k < 17 && best_error > 0; ++k) {
      const double e = error(step);
      if (e < best_error) {
        best = step;
        best_error = e;
      }
      step = std::nextafter(step, INFINITY);
    }
  }
  if (!(best > 0) || best_error > 1e-6 * best) {
    fail(ErrorCategory::kIo, "grid " + std::string(axis) + " coordinates are not equally spaced and increasing");
  }
  return best;
}

}  // namespace

std::string format_grid_csv(const GridGeometry& grid, const Eigen::MatrixXd& values,
                            std::string_view column_prefix) {
  if (values.rows() != static_cast<Eigen::Index>(grid.size())) {
    fail(ErrorCategory::kConfiguration, "values do not match the grid size");
  }
  std::string out = "lon,lat";
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    out += ",";
    out += column_prefix;
    out += std::to_string(c + 1);
  }
  out += "\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point p = grid.point(i);
    out += format_number(p.x);
    out += ",";
    out += format_number(p.y);
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      out += ",";
      out += format_number(values(static_cast<Eigen::Index>(i), c));
    }
    out += "\n";
  }
  return out;
}

GridData parse_grid_csv(std::string_view text, std::string_view column_prefix) {
  const auto lines = lines_of(text);
  if (lines.empty()) fail(ErrorCategory::kIo, "empty grid file");
  const auto header = split(lines[0], ',');
  if (header.size() < 3 || trim(header[0]) != "lon" || trim(header[1]) != "lat") {
    fail(ErrorCategory::kIo, "grid file header must start with lon,lat and name at least one column");
  }
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (trim(header[c]) != std::string(column_prefix) + std::to_string(c - 1)) {
      fail(ErrorCategory::kIo, "grid file column " + std::to_string(c + 1) + " should be " +
                                   std::string(column_prefix) + std::to_string(c - 1));
    }
  }
  const std::size_t n = lines.size() - 1;
  const auto m = static_cast<Eigen::Index>(header.size() - 2);
  if (n == 0) fail(ErrorCategory::kIo, "grid file has no data rows");
  std::vector<double> lon(n), lat(n);
  GridData out;
  out.values.resize(static_cast<Eigen::Index>(n), m);
  for (std::size_t r = 0; r < n; ++r) {
    const auto cols = split(lines[r + 1], ',');
    if (cols.size() != header.size()) {
      fail(ErrorCategory::kIo, "grid file line " + std::to_string(r + 2) + " has " + std::to_string(cols.size()) +
                                   " columns, expected " + std::to_string(header.size()));
    }
    lon[r] = parse_number(cols[0], "lon");
    lat[r] = parse_number(cols[1], "lat");
    for (Eigen::Index c = 0; c < m; ++c) {
      out.values(static_cast<Eigen::Index>(r), c) = parse_number(cols[static_cast<std::size_t>(c) + 2], "value");
    }
  }
  std::size_t nx = 1;
  while (nx < n && lat[nx] == lat[0]) ++nx;
  if (n % nx != 0) fail(ErrorCategory::kIo, "grid file rows do not form a complete grid (x varying fastest)");
  const std::size_t ny = n / nx;
  std::vector<double> xs(lon.begin(), lon.begin() + static_cast<std::ptrdiff_t>(nx));
  std::vector<double> ys(ny);
  for (std::size_t j = 0; j < ny; ++j) ys[j] = lat[j * nx];
  GridGeometry& g = out.grid;
  g.nx = nx;
  g.ny = ny;
  g.x0 = xs[0];
  g.y0 = ys[0];
  g.dx = fit_step(xs, "x");
  g.dy = fit_step(ys, "y");
  for (std::size_t i = 0; i < n; ++i) {
    const Point p = g.point(i);
    if (std::abs(p.x - lon[i]) > 1e-6 * g.dx || std::abs(p.y - lat[i]) > 1e-6 * g.dy) {
      fail(ErrorCategory::kIo, "grid file row " + std::to_string(i + 2) + " is out of grid order");
    }
  }
  return out;
}

void write_replicates_csv(const std::string& path, const ReplicateField& data) {
  write_grid_file(path, data.grid, data.values, "rep_");
}

ReplicateField read_replicates_csv(const std::string& path) {
  GridData d = read_grid_file(path, "rep_");
  ReplicateField out{d.grid, std::move(d.values), {}};
  out.validate();
  return out;
}

namespace {

constexpr char kMagic[8] = {'L', 'K', 'G', 'R', 'I', 'D', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "binary grid format assumes little endian");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorCategory::kIo, "'" + path + "' is truncated");
  return v;
}

bool is_binary_path(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0;
}

}  // namespace

void write_grid_binary(const std::string& path, const GridGeometry& grid,
                       const Eigen::MatrixXd& values) {
  if (values.rows() != static_cast<Eigen::Index>(grid.size())) {
    fail(ErrorCategory::kConfiguration, "values do not match the grid size");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::kIo, "cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, grid.nx);
  put<std::uint64_t>(out, grid.ny);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(values.cols()));
  for (double v : {grid.x0, grid.y0, grid.dx, grid.dy}) put(out, v);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(values.size())));
  if (!out) fail(ErrorCategory::kIo, "write to '" + path + "' failed");
}

GridData read_grid_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::kIo, "cannot open '" + path + "' for reading");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCategory::kIo, "'" + path + "' is not an LKGRID01 file");
  }
  GridData d;
  d.grid.nx = get<std::uint64_t>(in, path);
  d.grid.ny = get<std::uint64_t>(in, path);
  const auto cols = get<std::uint64_t>(in, path);
  d.grid.x0 = get<double>(in, path);
  d.grid.y0 = get<double>(in, path);
  d.grid.dx = get<double>(in, path);
  d.grid.dy = get<double>(in, path);
  if (d.grid.nx == 0 || d.grid.ny == 0 || d.grid.size() > (std::size_t{1} << 32) || cols > (1u << 24)) {
    fail(ErrorCategory::kIo, "'" + path + "' has implausible dimensions");
  }
  d.values.resize(static_cast<Eigen::Index>(d.grid.size()), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(d.values.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(d.values.size())));
  if (!in) fail(ErrorCategory::kIo, "'" + path + "' is truncated");
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorCategory::kIo, "'" + path + "' has trailing bytes");
  return d;
}

GridData read_grid_file(const std::string& path, std::string_view column_prefix) {
  if (is_binary_path(path)) return read_grid_binary(path);
  return parse_grid_csv(read_text_file(path), column_prefix);
}

void write_grid_file(const std::string& path, const GridGeometry& grid,
                     const Eigen::MatrixXd& values, std::string_view column_prefix) {
  if (is_binary_path(path)) {
    write_grid_binary(path, grid, values);
  } else {
    write_text_file(path, format_grid_csv(grid, values, column_prefix));
  }
}

namespace {
constexpr const char* kEstimateHeader =
    "lon,lat,theta,sigma,tau,sigma_obs,loglik,converged,degenerate,source";
}

std::string format_estimates_csv(const LocalEstimates& est) {
  std::string out = kEstimateHeader;
  out += "\n";
  for (std::size_t i = 0; i < est.size(); ++i) {
    const Point p = est.grid.point(i);
    for (double v : {p.x, p.y, est.theta[i], est.sigma[i], est.tau[i], est.sigma_obs[i], est.log_likelihood[i]}) {
      out += format_number(v);
      out += ",";
    }
    out += est.converged[i] ? "1," : "0,";
    out += est.degenerate[i] ? "1," : "0,";
    out += std::to_string(est.source[i]);
    out += "\n";
  }
  return out;
}

LocalEstimates parse_estimates_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kEstimateHeader) {
    fail(ErrorCategory::kIo, std::string("estimate file header must be ") + kEstimateHeader);
  }
  // Reuse the grid parser on the coordinate columns.
  std::string coords = "lon,lat,c1\n";
  LocalEstimates est;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cols = split(lines[r], ',');
    if (cols.size() != 10) fail(ErrorCategory::kIo, "estimate file line " + std::to_string(r + 1) + " needs 10 columns");
    coords.append(cols[0]).append(",").append(cols[1]).append(",0\n");
    est.theta.push_back(parse_number(cols[2], "theta"));
    est.sigma.push_back(parse_number(cols[3], "sigma"));
    est.tau.push_back(parse_number(cols[4], "tau"));
    est.sigma_obs.push_back(parse_number(cols[5], "sigma_obs"));
    est.log_likelihood.push_back(parse_number(cols[6], "loglik"));
    for (auto [col, dest] : {std::pair{cols[7], &est.converged}, std::pair{cols[8], &est.degenerate}}) {
      if (col != "0" && col != "1") fail(ErrorCategory::kIo, "flag columns must be 0 or 1");
      dest->push_back(col == "1" ? 1 : 0);
    }
    const double src = parse_number(cols[9], "source");
    if (!(src >= 0) || src != std::floor(src)) fail(ErrorCategory::kIo, "source must be a box index");
    est.source.push_back(static_cast<std::size_t>(src));
  }
  est.grid = parse_grid_csv(coords, "c").grid;
  for (std::size_t s : est.source) {
    if (s >= est.grid.size()) fail(ErrorCategory::kIo, "source index outside the grid");
  }
  est.task_seconds.assign(est.size(), 0.0);
  return est;
}

std::string format_timing_table(std::span<const SweepTiming> rows) {
  std::string out = "workers,setup_seconds,compute_seconds,windows\n";
  for (const SweepTiming& t : rows) {
    out += std::to_string(t.workers) + "," + format_number(t.setup_seconds) + "," +
           format_number(t.compute_seconds) + "," + std::to_string(t.windows) + "\n";
  }
  return out;
}

namespace {

using nlohmann::json;

json grid_json(const GridGeometry& g) {
  return {{"nx", g.nx}, {"ny", g.ny}, {"x0", g.x0}, {"y0", g.y0}, {"dx", g.dx}, {"dy", g.dy}};
}

GridGeometry grid_from(const json& j) {
  return {j.at("nx").get<std::size_t>(), j.at("ny").get<std::size_t>(), j.at("x0").get<double>(),
          j.at("y0").get<double>(), j.at("dx").get<double>(), j.at("dy").get<double>()};
}

json surface_json(const Surface& s) {
  if (s.is_constant()) return {{"constant", s.constant_value()}};
  return {{"grid", grid_json(s.grid())}, {"values", s.values()}};
}

Surface surface_from(const json& j) {
  if (j.contains("constant")) return Surface::constant(j.at("constant").get<double>());
  return Surface(grid_from(j.at("grid")), j.at("values").get<std::vector<double>>());
}

}  // namespace

std::string model_to_json(const LKModel& model) {
  const LatticeConfig& c = model.lattice().config;
  json j;
  j["format"] = "lkemu-model";
  j["version"] = 1;
  j["lattice"] = {{"domain", {c.domain.xmin, c.domain.xmax, c.domain.ymin, c.domain.ymax}},
                  {"coarse_spacing", c.coarse_spacing},
                  {"levels", c.levels},
                  {"delta", c.delta},
                  {"buffer", c.buffer}};
  json a = json::array(), sigma = json::array();
  for (int l = 0; l < model.levels(); ++l) {
    a.push_back(model.a_field(l));
    sigma.push_back(surface_json(model.sigma_level(l)));
  }
  j["a"] = std::move(a);
  j["sigma_levels"] = std::move(sigma);
  j["tau"] = surface_json(model.tau());
  return j.dump() + "\n";
}

LKModel model_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "lkemu-model") fail(ErrorCategory::kIo, "not an lkemu model descriptor");
    const json& l = j.at("lattice");
    const auto dom = l.at("domain").get<std::vector<double>>();
    if (dom.size() != 4) fail(ErrorCategory::kIo, "model domain needs four values");
    LatticeConfig c;
    c.domain = {dom[0], dom[1], dom[2], dom[3]};
    c.coarse_spacing = l.at("coarse_spacing").get<double>();
    c.levels = l.at("levels").get<int>();
    c.delta = l.at("delta").get<double>();
    c.buffer = l.at("buffer").get<int>();
    std::vector<std::vector<double>> a = j.at("a").get<std::vector<std::vector<double>>>();
    std::vector<Surface> sigma;
    for (const json& s : j.at("sigma_levels")) sigma.push_back(surface_from(s));
    return LKModel(build_lattice(c), std::move(a), std::move(sigma), surface_from(j.at("tau")));
  } catch (const json::exception& e) {
    fail(ErrorCategory::kIo, std::string("malformed model descriptor: ") + e.what());
  }
}

}  // namespace lkemu
