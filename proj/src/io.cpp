#include "io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "errors.hpp"

namespace maxmix {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
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
  return out;
}

double parse_value(const std::string& tok, const std::string& path, int lineno) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(path + ":" + std::to_string(lineno) + ": malformed number '" +
                    tok + "'");
  }
}

}  // namespace

std::string version_string() { return "0.3.0"; }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open file for writing: " + path);
  os << text;
  if (!os) throw DataError("write failed: " + path);
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ostringstream os;
  os << "site_id,x,y,t,value\n";
  for (int i = 0; i < ds.n; ++i) {
    for (int t = 0; t < ds.T; ++t) {
      os << i << ',' << format_g17(ds.sites[i].x) << ',' << format_g17(ds.sites[i].y)
         << ',' << t << ',' << format_g17(ds.at(t, i)) << '\n';
    }
  }
  write_text_file(path, os.str());
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  {
    auto header = split_csv_line(line);
    if (header.size() != 5 || header[0] != "site_id" || header[1] != "x" ||
        header[2] != "y" || header[3] != "t" || header[4] != "value") {
      throw DataError(path + ":1: expected header 'site_id,x,y,t,value'");
    }
  }
  struct Obs {
    int site, t;
    double value;
  };
  std::vector<Obs> obs;
  std::map<int, Site> sites;
  int max_t = -1;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 5 fields, got " +
                      std::to_string(f.size()));
    }
    const int site = static_cast<int>(parse_value(f[0], path, lineno));
    const double x = parse_value(f[1], path, lineno);
    const double y = parse_value(f[2], path, lineno);
    const int t = static_cast<int>(parse_value(f[3], path, lineno));
    const double v = parse_value(f[4], path, lineno);
    if (!std::isfinite(v)) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": non-finite value (missing data is not supported)");
    }
    if (site < 0 || t < 0) {
      throw DataError(path + ":" + std::to_string(lineno) + ": negative site_id or t");
    }
    auto it = sites.find(site);
    if (it == sites.end()) {
      sites[site] = Site{x, y};
    } else if (it->second.x != x || it->second.y != y) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": inconsistent coordinates for site " + std::to_string(site));
    }
    max_t = std::max(max_t, t);
    obs.push_back({site, t, v});
  }
  if (obs.empty()) throw DataError(path + ": no observations");
  const int n = static_cast<int>(sites.size());
  // site ids must be 0..n-1
  int expect = 0;
  for (const auto& kv : sites) {
    if (kv.first != expect++) {
      throw DataError(path + ": site ids must be contiguous starting at 0");
    }
  }
  Dataset ds;
  ds.n = n;
  ds.T = max_t + 1;
  ds.sites.resize(n);
  for (const auto& kv : sites) ds.sites[kv.first] = kv.second;
  ds.y.assign(static_cast<std::size_t>(ds.T) * n,
              std::numeric_limits<double>::quiet_NaN());
  for (const Obs& o : obs) {
    if (o.t >= ds.T) continue;
    double& slot = ds.y[static_cast<std::size_t>(o.t) * n + o.site];
    if (!std::isnan(slot)) {
      throw DataError(path + ": duplicate observation for site " +
                      std::to_string(o.site) + ", t " + std::to_string(o.t));
    }
    slot = o.value;
  }
  for (double v : ds.y) {
    if (std::isnan(v)) {
      throw DataError(path + ": dataset is not dense (one value per site and t required)");
    }
  }
  return ds;
}

void write_sites_csv(const std::vector<Site>& sites, const std::string& path) {
  std::ostringstream os;
  os << "site_id,x,y\n";
  for (std::size_t i = 0; i < sites.size(); ++i) {
    os << i << ',' << format_g17(sites[i].x) << ',' << format_g17(sites[i].y) << '\n';
  }
  write_text_file(path, os.str());
}

std::vector<Site> read_sites_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open sites file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() != 3 || header[0] != "site_id" || header[1] != "x" ||
      header[2] != "y") {
    throw DataError(path + ":1: expected header 'site_id,x,y'");
  }
  std::vector<Site> sites;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 3 fields");
    }
    sites.push_back(Site{parse_value(f[1], path, lineno), parse_value(f[2], path, lineno)});
  }
  if (sites.empty()) throw DataError(path + ": no sites");
  return sites;
}

namespace {

void append_vec(std::ostringstream& os, const std::vector<double>& v) {
  for (double x : v) os << ',' << format_g17(x);
}

}  // namespace

void write_samples_csv(const PosteriorSamples& s, const std::string& path) {
  std::ostringstream os;
  const bool atoms = s.kind != ModelKind::Hevp;
  const bool mm = s.kind == ModelKind::Mm;
  const int nf = s.gev_mode == SurfaceMode::Constant ? 1 : s.n;
  os << "iteration,loglik,alpha,tau";
  if (mm) os << ",q,delta";
  for (int i = 0; i < nf; ++i) os << ",mu_" << i;
  for (int i = 0; i < nf; ++i) os << ",log_sigma_" << i;
  for (int i = 0; i < nf; ++i) os << ",xi_" << i;
  if (s.gev_mode == SurfaceMode::Gp) {
    for (const char* comp : {"mu", "log_sigma", "xi"}) {
      os << ",beta0_" << comp << ",beta1_" << comp << ",beta2_" << comp
         << ",gpvar_" << comp << ",gprange_" << comp;
    }
  }
  if (atoms) {
    for (int j = 0; j < s.J; ++j) os << ",pi_" << j;
    for (int j = 0; j < s.J; ++j) {
      for (int l = 0; l < s.L; ++l) os << ",gamma_" << j << '_' << l;
    }
  }
  os << '\n';
  for (const PosteriorDraw& d : s.draws) {
    os << d.iteration << ',' << format_g17(d.loglik) << ',' << format_g17(d.alpha)
       << ',' << format_g17(d.tau);
    if (mm) os << ',' << format_g17(d.q) << ',' << d.delta;
    append_vec(os, d.mu);
    append_vec(os, d.log_sigma);
    append_vec(os, d.xi);
    if (s.gev_mode == SurfaceMode::Gp) append_vec(os, d.gp_hyper);
    if (atoms) {
      append_vec(os, d.pi);
      append_vec(os, d.gamma);
    }
    os << '\n';
  }
  write_text_file(path, os.str());
}

void write_samples_dir(const PosteriorSamples& s, const std::string& dir) {
  ConfigDoc meta;
  meta.set("model_meta", "kind", model_kind_name(s.kind));
  meta.set("model_meta", "gev_mode",
           s.gev_mode == SurfaceMode::Constant ? "constant" : "gp");
  meta.set("model_meta", "n", std::to_string(s.n));
  meta.set("model_meta", "T", std::to_string(s.T));
  meta.set("model_meta", "J", std::to_string(s.J));
  meta.set("model_meta", "L", std::to_string(s.L));
  meta.set("model_meta", "iterations", std::to_string(s.iterations));
  meta.set("model_meta", "burnin", std::to_string(s.burnin));
  meta.set("model_meta", "thinning", std::to_string(s.thinning));
  meta.set("model_meta", "seed", std::to_string(s.seed));
  meta.set("model_meta", "gp_smoothness", format_g17(s.gp_smoothness));
  write_text_file(dir + "/model.ini", meta.serialize());
  write_sites_csv(s.sites, dir + "/sites.csv");
  write_sites_csv(s.knots.knots, dir + "/knots.csv");
  write_samples_csv(s, dir + "/samples.csv");
  write_acceptance_csv(s, dir + "/acceptance.csv");
}

PosteriorSamples read_samples_dir(const std::string& dir) {
  PosteriorSamples s;
  const ConfigDoc meta = ConfigDoc::parse_file(dir + "/model.ini");
  s.kind = model_kind_from_name(meta.get("model_meta", "kind"));
  const std::string mode = meta.get("model_meta", "gev_mode");
  if (mode != "constant" && mode != "gp") {
    throw DataError(dir + "/model.ini: bad gev_mode '" + mode + "'");
  }
  s.gev_mode = mode == "constant" ? SurfaceMode::Constant : SurfaceMode::Gp;
  s.n = meta.get_int_or("model_meta", "n", 0);
  s.T = meta.get_int_or("model_meta", "T", 0);
  s.J = meta.get_int_or("model_meta", "J", 0);
  s.L = meta.get_int_or("model_meta", "L", 0);
  s.iterations = meta.get_int_or("model_meta", "iterations", 0);
  s.burnin = meta.get_int_or("model_meta", "burnin", 0);
  s.thinning = meta.get_int_or("model_meta", "thinning", 1);
  s.seed = static_cast<std::uint64_t>(meta.get_double_or("model_meta", "seed", 0));
  s.gp_smoothness = meta.get_double_or("model_meta", "gp_smoothness", 0.5);
  s.sites = read_sites_csv(dir + "/sites.csv");
  s.knots = make_knot_set(read_sites_csv(dir + "/knots.csv"));
  if (static_cast<int>(s.sites.size()) != s.n ||
      static_cast<int>(s.knots.size()) != s.L) {
    throw DataError(dir + ": model.ini dimensions do not match sites/knots files");
  }

  const std::string path = dir + "/samples.csv";
  std::ifstream is(path);
  if (!is) throw DataError("cannot open samples file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  const auto header = split_csv_line(line);
  const bool atoms = s.kind != ModelKind::Hevp;
  const bool mm = s.kind == ModelKind::Mm;
  const int nf = s.gev_mode == SurfaceMode::Constant ? 1 : s.n;
  std::size_t expected = 4 + (mm ? 2 : 0) + 3 * static_cast<std::size_t>(nf) +
                         (s.gev_mode == SurfaceMode::Gp ? 15 : 0) +
                         (atoms ? s.J + static_cast<std::size_t>(s.J) * s.L : 0);
  if (header.size() != expected) {
    throw DataError(path + ": unexpected column count " +
                    std::to_string(header.size()) + " (want " +
                    std::to_string(expected) + ")");
  }
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != expected) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad field count");
    }
    PosteriorDraw d;
    std::size_t c = 0;
    d.iteration = static_cast<int>(parse_value(f[c++], path, lineno));
    d.loglik = parse_value(f[c++], path, lineno);
    d.alpha = parse_value(f[c++], path, lineno);
    d.tau = parse_value(f[c++], path, lineno);
    if (mm) {
      d.q = parse_value(f[c++], path, lineno);
      d.delta = static_cast<int>(parse_value(f[c++], path, lineno));
    }
    auto take = [&](int count, std::vector<double>& dst) {
      dst.resize(count);
      for (int k = 0; k < count; ++k) dst[k] = parse_value(f[c++], path, lineno);
    };
    take(nf, d.mu);
    take(nf, d.log_sigma);
    take(nf, d.xi);
    if (s.gev_mode == SurfaceMode::Gp) take(15, d.gp_hyper);
    if (atoms) {
      take(s.J, d.pi);
      take(s.J * s.L, d.gamma);
    }
    s.draws.push_back(std::move(d));
  }
  return s;
}

void write_acceptance_csv(const PosteriorSamples& s, const std::string& path) {
  std::ostringstream os;
  os << "block,proposals,accepted,rate,mean_step\n";
  for (const AcceptanceRecord& r : s.acceptance) {
    const double rate = r.proposals > 0
                            ? static_cast<double>(r.accepted) / r.proposals
                            : 0.0;
    os << r.block << ',' << r.proposals << ',' << r.accepted << ','
       << format_g17(rate) << ',' << format_g17(r.mean_step) << '\n';
  }
  write_text_file(path, os.str());
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open file for digest: " + path);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    const std::streamsize got = is.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

void write_manifest(const std::string& path, const std::string& command,
                    std::uint64_t seed, const ConfigDoc& config,
                    const std::vector<std::pair<std::string, std::string>>& inputs) {
  std::ostringstream os;
  os << "[run]\n";
  os << "command = " << command << "\n";
  os << "seed = " << seed << "\n";
  os << "version = " << version_string() << "\n";
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  os << "timestamp = " << stamp << "\n\n";
  if (!inputs.empty()) {
    os << "[inputs]\n";
    for (const auto& kv : inputs) {
      char hex[24];
      std::snprintf(hex, sizeof(hex), "%016llx",
                    static_cast<unsigned long long>(fnv1a64_file(kv.second)));
      os << kv.first << " = " << kv.second << " fnv1a64:" << hex << "\n";
    }
    os << "\n";
  }
  os << config.serialize();
  write_text_file(path, os.str());
}

}  // namespace maxmix
