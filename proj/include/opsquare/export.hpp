#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "opsquare/experiment.hpp"

namespace opsquare {

inline constexpr const char* kVersion = "1.0.0";

class ExportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw ExportError("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

namespace csv {

inline std::string num(double v, int digits = 9) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string num(std::uint64_t v) { return std::to_string(v); }

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string opt_ms(const std::optional<SimTime>& t) { return t ? num(to_ms(*t)) : ""; }

// Splits one CSV line, honouring double-quoted fields.
inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ExportError("missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline Table read(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ExportError("cannot read " + p.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ExportError(p.string() + " is empty");
  t.header = split(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split(line));
  return t;
}

}  // namespace csv

inline std::string sweep_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << "slice,name,priority,load,seeds,generated,delivered,lost_overflow,lost_no_route,loss_ratio,loss_ratio_se,"
       "mean_latency_us,mean_latency_se_us,p5_us,p50_us,p95_us,p99_us,max_us,nacks\n";
  for (const auto& x : r.sweep) {
    o << x.slice << ',' << csv::quote(x.name) << ',' << x.priority << ',' << csv::num(x.load, 6) << ',' << x.seeds
      << ',' << x.generated << ',' << x.delivered << ',' << x.lost_overflow << ',' << x.lost_no_route << ','
      << csv::num(x.loss_ratio) << ',' << csv::num(x.loss_ratio_se) << ',' << csv::num(x.mean_latency_ns / 1e3)
      << ',' << csv::num(x.mean_latency_se_ns / 1e3) << ',' << csv::num(x.p5_ns / 1e3) << ','
      << csv::num(x.p50_ns / 1e3) << ',' << csv::num(x.p95_ns / 1e3) << ',' << csv::num(x.p99_ns / 1e3) << ','
      << csv::num(x.max_ns / 1e3) << ',' << x.nacks << '\n';
  }
  return o.str();
}

inline std::string cdf_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << "slice,name,load,latency_us,fraction\n";
  for (const auto& s : r.cdf)
    for (const auto& p : s.points)
      o << s.slice << ',' << csv::quote(s.name) << ',' << csv::num(s.load, 6) << ','
        << csv::num(p.latency_ns / 1e3) << ',' << csv::num(p.fraction, 6) << '\n';
  return o.str();
}

inline std::string runs_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << "variant,load,seed,slice,name,priority,generated,delivered,lost_overflow,lost_no_route,loss_ratio,"
       "mean_latency_us,p5_us,p50_us,p95_us,p99_us,nacks,switch_acks,switch_nacks_contention,"
       "switch_nacks_no_route,digest\n";
  for (const auto& run : r.runs)
    for (const auto& s : run.slices) {
      char dg[17];
      std::snprintf(dg, sizeof dg, "%016llx", static_cast<unsigned long long>(s.digest));
      o << run.variant << ',' << (run.load ? csv::num(*run.load, 6) : "") << ',' << run.seed << ',' << s.id << ','
        << csv::quote(s.name) << ',' << s.priority << ',' << s.tally.generated << ',' << s.tally.delivered << ','
        << s.tally.lost_buffer_overflow << ',' << s.tally.lost_no_route << ',' << csv::num(s.tally.loss_ratio())
        << ',' << csv::num(s.tally.mean_latency_ns() / 1e3) << ',' << csv::num(s.p5_ns / 1e3) << ','
        << csv::num(s.p50_ns / 1e3) << ',' << csv::num(s.p95_ns / 1e3) << ',' << csv::num(s.p99_ns / 1e3) << ','
        << s.tor.nack_received << ',' << s.sw.acks << ',' << s.sw.nacks_contention << ',' << s.sw.nacks_no_route
        << ',' << dg << '\n';
    }
  return o.str();
}

inline std::string checks_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << "variant,load,seed,slots,conservation_checks,conserved,generated,delivered,in_buffers,in_flight,"
       "lost_overflow,lost_no_route,labels,verdicts,acks,nacks_contention,nacks_no_route,priority_inversions,"
       "multiple_grants,flowmods,traffic_start_ms,traffic_stop_ms,end_ms\n";
  for (const auto& run : r.runs) {
    const auto& t = run.totals;
    const auto& a = run.audit;
    o << run.variant << ',' << (run.load ? csv::num(*run.load, 6) : "") << ',' << run.seed << ',' << run.slots << ','
      << run.conservation_checks << ',' << (run.conserved ? 1 : 0) << ',' << t.generated << ',' << t.delivered << ','
      << t.in_buffers << ',' << t.in_flight << ',' << t.lost_buffer_overflow << ',' << t.lost_no_route << ','
      << a.labels << ',' << a.verdicts << ',' << a.acks << ',' << a.nacks_contention << ',' << a.nacks_no_route
      << ',' << a.priority_inversions << ',' << a.multiple_grants << ',' << run.flowmods << ','
      << csv::num(to_ms(run.traffic_start)) << ',' << csv::num(to_ms(run.traffic_stop)) << ','
      << csv::num(to_ms(run.end)) << '\n';
  }
  return o.str();
}

inline std::string events_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << "variant,seed,time_ms,since_traffic_ms,kind,slice,value,detail\n";
  for (const auto& e : r.events)
    o << e.variant << ',' << e.seed << ',' << csv::num(to_ms(e.value.time)) << ','
      << csv::num(to_ms(e.value.time - e.traffic_start)) << ',' << e.value.kind << ',' << e.value.slice << ','
      << csv::num(e.value.value) << ',' << csv::quote(e.value.detail) << '\n';
  return o.str();
}

inline std::string timeseries_csv(const ExperimentResult& r, const Scenario& sc) {
  std::ostringstream o;
  o << "variant,seed,slice,name,window_start_ms,window_end_ms,since_traffic_ms,sent,delivered,lost,"
       "retransmissions,loss_ratio,mean_latency_us,complete\n";
  for (const auto& m : r.timeseries) {
    const auto& v = m.value;
    o << m.variant << ',' << m.seed << ',' << v.slice_id << ',' << csv::quote(sc.slice_name(v.slice_id)) << ','
      << csv::num(to_ms(v.window_start)) << ',' << csv::num(to_ms(v.window_end)) << ','
      << csv::num(to_ms(v.window_end - m.traffic_start)) << ',' << v.sent << ',' << v.delivered << ',' << v.lost
      << ',' << v.retransmissions << ',' << csv::num(v.loss_ratio) << ',' << csv::num(v.mean_latency_ns / 1e3)
      << ',' << (v.complete ? 1 : 0) << '\n';
  }
  return o.str();
}

inline std::string flows_csv(const ExperimentResult& r, const Scenario& sc) {
  std::ostringstream o;
  o << "variant,seed,slice,name,dst_tor,no_route_frames,first_no_route_ms,last_no_route_ms,delivered_frames,"
       "first_delivery_ms,last_delivery_ms\n";
  for (const auto& f : r.flows) {
    const auto& t = f.value.trace;
    o << f.variant << ',' << f.seed << ',' << f.value.slice << ',' << csv::quote(sc.slice_name(f.value.slice)) << ','
      << f.value.dst_tor << ',' << t.no_route_frames << ',' << csv::opt_ms(t.first_no_route) << ','
      << csv::opt_ms(t.last_no_route) << ',' << t.delivered_frames << ',' << csv::opt_ms(t.first_delivery) << ','
      << csv::opt_ms(t.last_delivery) << '\n';
  }
  return o.str();
}

// ---- plots -----------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
};

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

// Self-contained SVG line chart. Nonpositive values are skipped on a log axis.
inline std::string svg_plot(const PlotSpec& spec, const std::vector<PlotSeries>& series) {
  static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                           "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  const double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double y) { return spec.log_y ? std::log10(y) : y; };
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(y) || (spec.log_y && y <= 0)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, ty(y));
      y1 = std::max(y1, ty(y));
    }
  if (!std::isfinite(x0)) {
    x0 = 0;
    x1 = 1;
    y0 = 0;
    y1 = 1;
  }
  if (spec.log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
  } else {
    y0 = std::min(0.0, y0);
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };
  auto f = [](double v) { return csv::num(v, 6); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(spec.title)
    << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0;
    o << "<text x=\"" << f(px(xv)) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << f(xv) << "</text>\n";
  }
  if (spec.log_y) {
    for (int e = static_cast<int>(y0); e <= static_cast<int>(y1); ++e) {
      const double y = H - B - (e - y0) / (y1 - y0) * (H - T - B);
      o << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << f(y) << "\" y2=\"" << f(y)
        << "\" stroke=\"#ddd\"/>\n";
      o << "<text x=\"" << L - 6 << "\" y=\"" << f(y + 4) << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
  } else {
    for (int i = 0; i <= 5; ++i) {
      const double yv = y0 + (y1 - y0) * i / 5.0;
      const double y = H - B - (yv - y0) / (y1 - y0) * (H - T - B);
      o << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << f(y) << "\" y2=\"" << f(y)
        << "\" stroke=\"#ddd\"/>\n";
      o << "<text x=\"" << L - 6 << "\" y=\"" << f(y + 4) << "\" text-anchor=\"end\">" << f(yv) << "</text>\n";
    }
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << xml_escape(spec.x_label) << "</text>\n";
  o << "<text transform=\"translate(16," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(spec.y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* c = colors[i % std::size(colors)];
    std::string pts;
    for (const auto& [x, y] : series[i].points) {
      if (!std::isfinite(y) || (spec.log_y && y <= 0)) continue;
      pts += f(px(x)) + "," + f(py(y)) + " ";
    }
    if (!pts.empty())
      o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    const double ly = T + 16 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << W - R + 10 << "\" x2=\"" << W - R + 30 << "\" y1=\"" << ly << "\" y2=\"" << ly
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[i].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::map<std::string, std::string> plots(const ExperimentResult& r, const Scenario& sc) {
  std::map<std::string, std::string> out;
  if (r.kind == ExperimentKind::Sweep) {
    std::vector<PlotSeries> loss, lat;
    for (const auto& spec : sc.base.slices) {
      PlotSeries l{spec.name, {}}, m{spec.name, {}};
      for (const auto& row : r.sweep)
        if (row.slice == spec.id) {
          l.points.emplace_back(row.load, row.loss_ratio);
          m.points.emplace_back(row.load, row.mean_latency_ns / 1e3);
        }
      loss.push_back(std::move(l));
      lat.push_back(std::move(m));
    }
    out["loss.svg"] = svg_plot({"Packet loss vs load", "load", "loss ratio", true}, loss);
    out["latency.svg"] = svg_plot({"Mean server-to-server latency vs load", "load", "latency (us)", false}, lat);
    if (!r.cdf.empty()) {
      std::vector<PlotSeries> cdf;
      for (const auto& s : r.cdf) {
        PlotSeries p{s.name + " @" + csv::num(s.load, 3), {}};
        for (const auto& pt : s.points) p.points.emplace_back(pt.latency_ns / 1e3, pt.fraction);
        cdf.push_back(std::move(p));
      }
      out["cdf.svg"] = svg_plot({"Latency CDF", "latency (us)", "cumulative fraction", false}, cdf);
    }
  }
  if (!r.timeseries.empty()) {
    const auto first_seed = sc.seed;
    std::map<std::pair<std::string, SliceId>, PlotSeries> loss, lat;
    for (const auto& m : r.timeseries) {
      if (m.seed != first_seed) continue;
      const auto key = std::make_pair(m.variant, m.value.slice_id);
      const std::string name = sc.slice_name(m.value.slice_id) + " " + m.variant;
      const double t = to_ms(m.value.window_end - m.traffic_start);
      loss[key].name = name;
      loss[key].points.emplace_back(t, m.value.loss_ratio);
      lat[key].name = name;
      lat[key].points.emplace_back(t, m.value.mean_latency_ns / 1e3);
    }
    std::vector<PlotSeries> ls, ms;
    for (auto& [k, s] : loss) ls.push_back(std::move(s));
    for (auto& [k, s] : lat) ms.push_back(std::move(s));
    out["timeseries_loss.svg"] = svg_plot({"Windowed packet loss", "time since traffic start (ms)", "loss ratio", true}, ls);
    out["timeseries_latency.svg"] =
        svg_plot({"Windowed mean latency", "time since traffic start (ms)", "latency (us)", false}, ms);
  }
  return out;
}

// ---- run directory -----------------------------------------------------------

struct ExportedRun {
  std::map<std::string, std::string> files;  // name -> contents
  nlohmann::ordered_json manifest;
};

inline ExportedRun render(const ExperimentResult& r, const Scenario& sc, const std::string& scenario_text) {
  ExportedRun out;
  auto& f = out.files;
  f["runs.csv"] = runs_csv(r);
  f["checks.csv"] = checks_csv(r);
  if (r.kind == ExperimentKind::Sweep) {
    f["sweep.csv"] = sweep_csv(r);
    if (!r.cdf.empty()) f["cdf.csv"] = cdf_csv(r);
  } else {
    f["events.csv"] = events_csv(r);
    f["flows.csv"] = flows_csv(r, sc);
    if (!r.timeseries.empty()) f["timeseries.csv"] = timeseries_csv(r, sc);
  }
  for (auto& [name, body] : plots(r, sc)) f[name] = std::move(body);
  f["scenario.yaml"] = scenario_text;

  auto& m = out.manifest;
  m["tool"] = "opsquare";
  m["version"] = kVersion;
  m["scenario"] = sc.name;
  m["schema"] = kScenarioSchema;
  m["kind"] = to_string(r.kind);
  m["seed"] = sc.seed;
  m["seeds"] = sc.seed_list();
  m["config_sha256"] = sha256_hex(scenario_text);
  std::string listing;
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for (const auto& [name, body] : f) {
    const auto h = sha256_hex(body);
    files[name] = h;
    if (name.ends_with(".csv")) listing += name + " " + h + "\n";
  }
  m["files"] = files;
  m["csv_sha256"] = sha256_hex(listing);
  return out;
}

inline void write_run(const std::filesystem::path& dir, const ExportedRun& run) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ExportError("cannot create " + dir.string() + ": " + ec.message());
  auto put = [&](const std::string& name, const std::string& body) {
    std::ofstream o(dir / name, std::ios::binary);
    o << body;
    if (!o) throw ExportError("cannot write " + (dir / name).string());
  };
  for (const auto& [name, body] : run.files) put(name, body);
  put("manifest.json", run.manifest.dump(2) + "\n");
}

// ---- report ------------------------------------------------------------------

inline std::string report(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) throw ExportError("no manifest.json in " + dir.string());
  nlohmann::json m;
  try {
    std::ifstream in(mpath);
    m = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ExportError("unreadable manifest.json: " + std::string(e.what()));
  }
  for (const auto& [name, hash] : m.at("files").items())
    if (!std::filesystem::exists(dir / name)) throw ExportError("missing artifact " + name);

  std::ostringstream o;
  o << "scenario " << m.value("scenario", "?") << " (" << m.value("kind", "?") << "), seeds";
  for (const auto& s : m.at("seeds")) o << ' ' << s.get<std::uint64_t>();
  o << "\n\n";
  char buf[256];

  if (std::filesystem::exists(dir / "sweep.csv")) {
    const auto t = csv::read(dir / "sweep.csv");
    const auto c_name = t.col("name"), c_load = t.col("load"), c_loss = t.col("loss_ratio"),
               c_lat = t.col("mean_latency_us"), c_p95 = t.col("p95_us");
    std::vector<std::string> names, loads;
    std::map<std::pair<std::string, std::string>, const std::vector<std::string>*> cell;
    for (const auto& r : t.rows) {
      if (std::find(names.begin(), names.end(), r[c_name]) == names.end()) names.push_back(r[c_name]);
      if (std::find(loads.begin(), loads.end(), r[c_load]) == loads.end()) loads.push_back(r[c_load]);
      cell[{r[c_load], r[c_name]}] = &r;
    }
    o << "loss ratio / mean latency (us) / p95 latency (us) per slice\n";
    std::snprintf(buf, sizeof buf, "%-6s", "load");
    o << buf;
    for (const auto& n : names) {
      std::snprintf(buf, sizeof buf, " | %-28s", n.c_str());
      o << buf;
    }
    o << '\n';
    for (const auto& l : loads) {
      std::snprintf(buf, sizeof buf, "%-6s", l.c_str());
      o << buf;
      for (const auto& n : names) {
        const auto* r = cell.at({l, n});
        std::snprintf(buf, sizeof buf, " | %9.3g %8.3g %9.3g", std::stod((*r)[c_loss]), std::stod((*r)[c_lat]),
                      std::stod((*r)[c_p95]));
        o << buf;
      }
      o << '\n';
    }
    o << '\n';
  }

  if (std::filesystem::exists(dir / "runs.csv") && !std::filesystem::exists(dir / "sweep.csv")) {
    const auto t = csv::read(dir / "runs.csv");
    const auto cv = t.col("variant"), cs = t.col("seed"), cn = t.col("name"), cl = t.col("loss_ratio"),
               cm = t.col("mean_latency_us"), cg = t.col("generated"), cnr = t.col("lost_no_route"),
               cd = t.col("digest");
    o << "per-run slice metrics\n";
    std::snprintf(buf, sizeof buf, "%-13s %6s %-6s %12s %11s %10s %12s %s\n", "variant", "seed", "slice", "generated",
                  "loss", "mean_us", "no_route", "digest");
    o << buf;
    for (const auto& r : t.rows) {
      std::snprintf(buf, sizeof buf, "%-13s %6s %-6s %12s %11.3g %10.3f %12s %s\n", r[cv].c_str(), r[cs].c_str(),
                    r[cn].c_str(), r[cg].c_str(), std::stod(r[cl]), std::stod(r[cm]), r[cnr].c_str(), r[cd].c_str());
      o << buf;
    }
    o << '\n';
  }

  if (std::filesystem::exists(dir / "flows.csv")) {
    const auto t = csv::read(dir / "flows.csv");
    const auto cv = t.col("variant"), cs = t.col("seed"), cn = t.col("name"), cd = t.col("dst_tor"),
               cnr = t.col("no_route_frames"), cln = t.col("last_no_route_ms"), cdl = t.col("delivered_frames"),
               cfd = t.col("first_delivery_ms");
    bool header = false;
    for (const auto& r : t.rows) {
      if (r[cnr] == "0") continue;
      if (!header) {
        o << "flows with blocked (NoRoute) traffic\n";
        std::snprintf(buf, sizeof buf, "%-13s %6s %-6s %6s %12s %16s %12s %18s\n", "variant", "seed", "slice", "dst",
                      "no_route", "last_no_route_ms", "delivered", "first_delivery_ms");
        o << buf;
        header = true;
      }
      std::snprintf(buf, sizeof buf, "%-13s %6s %-6s ToR%-3s %12s %16s %12s %18s\n", r[cv].c_str(), r[cs].c_str(),
                    r[cn].c_str(), r[cd].c_str(), r[cnr].c_str(), r[cln].c_str(), r[cdl].c_str(), r[cfd].c_str());
      o << buf;
    }
    if (header) o << '\n';
  }

  if (std::filesystem::exists(dir / "events.csv")) {
    const auto t = csv::read(dir / "events.csv");
    const auto cv = t.col("variant"), cs = t.col("seed"), ct = t.col("time_ms"), ck = t.col("kind"),
               csl = t.col("slice"), cval = t.col("value"), cd = t.col("detail");
    o << "control-plane events\n";
    for (const auto& r : t.rows) {
      std::string extra;
      if (r[ck] == "threshold_exceeded") extra = " window loss " + r[cval];
      else if (r[ck] == "provisioned" || r[ck] == "reconfigured" || r[ck] == "rebalanced")
        extra = " after " + r[cval] + " ms";
      std::snprintf(buf, sizeof buf, "%-13s seed %-4s %12s ms  %-22s slice %-3s", r[cv].c_str(), r[cs].c_str(),
                    r[ct].c_str(), r[ck].c_str(), r[csl].c_str());
      o << buf << r[cd] << extra << '\n';
    }
    o << '\n';
  }
  return o.str();
}

}  // namespace opsquare
