#include "dfgmvi/io.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>

#include <nlohmann/json.hpp>

namespace dfgmvi {

namespace {
void check_stream(const std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw std::runtime_error("cannot write " + path.string());
}
}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  check_stream(out, path);
  const Eigen::Index K = rows.empty() ? 0 : rows.front().weights.size();
  out << "iteration";
  for (Eigen::Index k = 0; k < K; ++k) out << ",w_" << k;
  out << ",grad_residual,hess_residual,level_spread,tv\r\n";
  auto field = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  for (const auto& r : rows) {
    out << r.iteration;
    for (Eigen::Index k = 0; k < K; ++k) out << ',' << format_double(r.weights[k]);
    out << ',' << field(r.grad_residual) << ',' << field(r.hess_residual) << ','
        << field(r.spread) << ',' << field(r.tv) << "\r\n";
  }
}

void write_mixture_json(const std::filesystem::path& path, const GaussianMixture& mix) {
  std::ofstream out(path, std::ios::binary);
  check_stream(out, path);
  out << mixture_to_json(mix);
}

GaussianMixture read_mixture_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return mixture_from_json(text);
}

void write_grid_csv(const std::filesystem::path& path, const GridDensity& g) {
  std::ofstream out(path, std::ios::binary);
  check_stream(out, path);
  if (g.dim() == 1) {
    out << "x,value\r\n";
    for (int i = 0; i < g.axes[0].n; ++i) {
      out << format_double(g.axes[0].point(i)) << ',' << format_double(g.values[i])
          << "\r\n";
    }
  } else {
    out << "x,y,value\r\n";
    for (int i = 0; i < g.axes[0].n; ++i) {
      for (int j = 0; j < g.axes[1].n; ++j) {
        out << format_double(g.axes[0].point(i)) << ','
            << format_double(g.axes[1].point(j)) << ',' << format_double(g.at2(i, j))
            << "\r\n";
      }
    }
  }
}

namespace {

void write_doubles(const std::filesystem::path& path, const Vector& v) {
  static_assert(sizeof(double) == 8);
  std::ofstream out(path, std::ios::binary);
  check_stream(out, path);
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void write_json_header(const std::filesystem::path& data_path, nlohmann::json j) {
  std::filesystem::path header = data_path;
  header.replace_extension(".json");
  std::ofstream out(header, std::ios::binary);
  check_stream(out, header);
  out << j.dump(2);
}

}  // namespace

void write_grid_binary(const std::filesystem::path& data_path, const GridDensity& g) {
  write_doubles(data_path, g.values);
  nlohmann::json j;
  j["kind"] = "grid_density";
  j["dtype"] = "float64_le";
  j["layout"] = "row_major";
  auto axes = nlohmann::json::array();
  for (const auto& ax : g.axes) {
    axes.push_back({{"lo", ax.lo}, {"hi", ax.hi}, {"n", ax.n}});
  }
  j["axes"] = axes;
  write_json_header(data_path, j);
}

void write_field_binary(const std::filesystem::path& data_path, const Vector& field,
                        int grid_n) {
  write_doubles(data_path, field);
  nlohmann::json j;
  j["kind"] = "vorticity_field";
  j["dtype"] = "float64_le";
  j["layout"] = "row_major";
  j["grid_n"] = grid_n;
  j["domain"] = "[0,2pi)^2";
  write_json_header(data_path, j);
}

}  // namespace dfgmvi
