#include "lfsr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lfsr/csv.hpp"
#include "lfsr/errors.hpp"
#include "lfsr/phantoms.hpp"

namespace lfsr::eval {

std::vector<CompositeRoi> default_composites() {
  using namespace phantoms;
  return {{"whole-cerebrum", {kCortex, kWhiteMatter, kVentricles}}, {"cerebral-tissue", {kCortex, kWhiteMatter}}};
}

std::map<std::string, double> roi_volumes(const LabelVolume& seg, const std::vector<CompositeRoi>& composites) {
  const double vv = seg.grid().voxel_volume();
  std::map<std::int32_t, std::size_t> counts;
  for (const auto& e : seg.table()) counts[e.id] = 0;
  for (std::size_t n = 0; n < seg.size(); ++n) ++counts[seg[n]];
  std::map<std::string, double> out;
  for (const auto& e : seg.table()) out[e.name] = static_cast<double>(counts[e.id]) * vv;
  for (const auto& c : composites) {
    if (out.count(c.name))
      throw ConfigError("composite ROI \"" + c.name + "\" collides with a label name");
    std::size_t total = 0;
    for (std::int32_t id : c.labels) {
      if (seg.table_index(id) < 0)
        throw ConfigError("composite ROI \"" + c.name + "\" references unknown label " + std::to_string(id));
      total += counts[id];
    }
    out[c.name] = static_cast<double>(total) * vv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// VolumeTable

void VolumeTable::validate() const {
  if (values.size() != subjects.size()) throw InputError("volume table: row count differs from subject count");
  std::set<std::string> seen(subjects.begin(), subjects.end());
  if (seen.size() != subjects.size()) throw InputError("volume table " + method + ": duplicate subject");
  std::set<std::string> rs(rois.begin(), rois.end());
  if (rs.size() != rois.size()) throw InputError("volume table " + method + ": duplicate ROI");
  for (std::size_t s = 0; s < values.size(); ++s) {
    if (values[s].size() != rois.size())
      throw InputError("volume table " + method + ": subject " + subjects[s] + " lacks some ROIs");
    for (double v : values[s])
      if (!(v >= 0.0) || !std::isfinite(v))
        throw InputError("volume table " + method + ": invalid volume for subject " + subjects[s]);
  }
}

std::optional<double> VolumeTable::find(const std::string& subject, const std::string& roi) const {
  const auto si = std::find(subjects.begin(), subjects.end(), subject);
  const auto ri = std::find(rois.begin(), rois.end(), roi);
  if (si == subjects.end() || ri == rois.end()) return std::nullopt;
  return values[si - subjects.begin()][ri - rois.begin()];
}

void VolumeTable::add(const std::string& subject, const std::map<std::string, double>& volumes) {
  if (rois.empty())
    for (const auto& [name, v] : volumes) rois.push_back(name);
  std::vector<double> row;
  for (const auto& r : rois) {
    const auto it = volumes.find(r);
    if (it == volumes.end()) throw InputError("subject " + subject + " lacks ROI " + r);
    row.push_back(it->second);
  }
  subjects.push_back(subject);
  values.push_back(std::move(row));
}

std::vector<VolumeTable> parse_volume_csv(const std::string& text) {
  const io::CsvTable csv = io::parse_csv(text);
  const std::size_t cs = csv.column("subject"), cr = csv.column("roi"), cv = csv.column("volume"),
                    cm = csv.column("method");
  std::vector<std::string> methods;
  // method -> subject -> roi -> value, keeping first-appearance order.
  std::map<std::string, std::vector<std::string>> subj_order, roi_order;
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> cells;
  for (std::size_t n = 0; n < csv.rows.size(); ++n) {
    const auto& row = csv.rows[n];
    const std::string &m = row[cm], &s = row[cs], &r = row[cr];
    double v;
    try {
      std::size_t used = 0;
      v = std::stod(row[cv], &used);
      if (used != row[cv].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError("volume CSV row " + std::to_string(n + 2) + ": bad volume \"" + row[cv] + "\"");
    }
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
    auto& so = subj_order[m];
    if (std::find(so.begin(), so.end(), s) == so.end()) so.push_back(s);
    auto& ro = roi_order[m];
    if (std::find(ro.begin(), ro.end(), r) == ro.end()) ro.push_back(r);
    if (!cells[m][s].emplace(r, v).second)
      throw FormatError("volume CSV: duplicate entry for " + m + "/" + s + "/" + r);
  }
  std::vector<VolumeTable> out;
  for (const auto& m : methods) {
    VolumeTable t;
    t.method = m;
    t.rois = roi_order[m];
    for (const auto& s : subj_order[m]) {
      std::vector<double> row;
      for (const auto& r : t.rois) {
        const auto it = cells[m][s].find(r);
        if (it == cells[m][s].end()) throw FormatError("volume CSV: " + m + "/" + s + " lacks ROI " + r);
        row.push_back(it->second);
      }
      t.subjects.push_back(s);
      t.values.push_back(std::move(row));
    }
    t.validate();
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<VolumeTable> read_volume_csv(const std::filesystem::path& path) {
  const io::CsvTable csv = io::read_csv(path);
  return parse_volume_csv(io::format_csv(csv));
}

std::string format_volume_csv(const std::vector<VolumeTable>& tables) {
  io::CsvTable csv;
  csv.header = {"subject", "roi", "volume", "method"};
  for (const auto& t : tables)
    for (std::size_t s = 0; s < t.subjects.size(); ++s)
      for (std::size_t r = 0; r < t.rois.size(); ++r) {
        std::ostringstream v;
        v.precision(17);
        v << t.values[s][r];
        csv.rows.push_back({t.subjects[s], t.rois[r], v.str(), t.method});
      }
  return io::format_csv(csv);
}

// ---------------------------------------------------------------------------
// Report

const MethodStats* AgreementReport::find(const std::string& roi, const std::string& method) const {
  for (const auto& r : rows)
    if (r.roi == roi && r.method == method) return &r;
  return nullptr;
}

const SteigerComparison* AgreementReport::find_steiger(const std::string& roi, const std::string& a,
                                                       const std::string& b) const {
  for (const auto& s : steiger)
    if (s.roi == roi && s.method_a == a && s.method_b == b) return &s;
  return nullptr;
}

namespace {

std::vector<double> column(const VolumeTable& t, const std::vector<std::string>& subjects, const std::string& roi) {
  std::vector<double> v;
  for (const auto& s : subjects) v.push_back(*t.find(s, roi));
  return v;
}

}  // namespace

AgreementReport build_report(const VolumeTable& gold, const std::vector<VolumeTable>& methods) {
  gold.validate();
  for (const auto& m : methods) {
    m.validate();
    std::vector<std::string> missing, extra;
    for (const auto& s : gold.subjects)
      if (std::find(m.subjects.begin(), m.subjects.end(), s) == m.subjects.end()) missing.push_back(s);
    for (const auto& s : m.subjects)
      if (std::find(gold.subjects.begin(), gold.subjects.end(), s) == gold.subjects.end()) extra.push_back(s);
    if (!missing.empty() || !extra.empty()) {
      std::string msg = "method " + m.method + ": subject mismatch;";
      for (const auto& s : missing) msg += " missing " + s;
      for (const auto& s : extra) msg += " unexpected " + s;
      throw InputError(msg);
    }
    for (const auto& r : gold.rois)
      if (std::find(m.rois.begin(), m.rois.end(), r) == m.rois.end())
        throw InputError("method " + m.method + " lacks ROI " + r);
  }

  AgreementReport rep;
  for (const auto& roi : gold.rois) {
    const auto g = column(gold, gold.subjects, roi);
    std::vector<std::vector<double>> cols;
    for (const auto& m : methods) {
      MethodStats ms;
      ms.roi = roi;
      ms.method = m.method;
      ms.gold = g;
      ms.values = column(m, gold.subjects, roi);
      ms.pearson = stats::pearson(g, ms.values);
      ms.bland_altman = stats::bland_altman(g, ms.values);
      cols.push_back(ms.values);
      rep.rows.push_back(std::move(ms));
    }
    for (std::size_t a = 0; a < methods.size(); ++a)
      for (std::size_t b = a + 1; b < methods.size(); ++b) {
        SteigerComparison sc;
        sc.roi = roi;
        sc.method_a = methods[a].method;
        sc.method_b = methods[b].method;
        sc.r_gA = rep.find(roi, sc.method_a)->pearson.r;
        sc.r_gB = rep.find(roi, sc.method_b)->pearson.r;
        try {
          sc.r_AB = stats::pearson(cols[a], cols[b]).r;
          sc.test = stats::steiger_dependent(sc.r_gA, sc.r_gB, sc.r_AB, g.size());
        } catch (const StatsError&) {
          sc.test.reset();
        }
        rep.steiger.push_back(sc);
      }
  }
  rep.footer =
      "Pearson p-values: two-tailed t test with n-2 df. RPC = 1.96 x SD of differences (method - gold). "
      "KS p-values test the differences against a normal with estimated mean and SD using the "
      "known-parameter Kolmogorov distribution, so they are conservative (Lilliefors effect). "
      "Steiger comparisons use Z1* with Fisher z and mean-r pooling; "
      "'*' marks methods whose correlation is significantly lower than the first method's (p < 0.05). "
      "No multiple-comparison correction.";
  return rep;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("failed writing " + p.string());
}

}  // namespace

void write_report(const AgreementReport& rep, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::string> rois, methods;
  for (const auto& r : rep.rows) {
    if (std::find(rois.begin(), rois.end(), r.roi) == rois.end()) rois.push_back(r.roi);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }

  io::CsvTable table, ba, st;
  table.header = {"roi", "method", "r", "p", "flags"};
  ba.header = {"roi", "method", "n", "bias", "sd", "rpc", "lower", "upper", "ks_statistic", "ks_p"};
  st.header = {"roi", "method_a", "method_b", "r_gA", "r_gB", "r_AB", "z", "p"};
  for (const auto& r : rep.rows) {
    std::string flags;
    if (!methods.empty() && r.method != methods.front()) {
      const auto* sc = rep.find_steiger(r.roi, methods.front(), r.method);
      if (sc && sc->test && sc->test->statistic > 0.0 && sc->test->p < 0.05) flags = "*";
    }
    table.rows.push_back({r.roi, r.method, num(r.pearson.r), num(r.pearson.p), flags});
    const auto& b = r.bland_altman;
    ba.rows.push_back({r.roi, r.method, std::to_string(b.n), num(b.bias), num(b.sd), num(b.rpc), num(b.lower),
                       num(b.upper), num(b.ks_statistic), num(b.ks_p)});
  }
  for (const auto& s : rep.steiger)
    st.rows.push_back({s.roi, s.method_a, s.method_b, num(s.r_gA), num(s.r_gB), num(s.r_AB),
                       s.test ? num(s.test->statistic) : "NA", s.test ? num(s.test->p) : "NA"});
  io::write_csv(table, dir / "table.csv");
  io::write_csv(ba, dir / "bland_altman.csv");
  io::write_csv(st, dir / "steiger.csv");
  write_text(dir / "notes.txt", rep.footer + "\n");

  for (const auto& roi : rois) {
    std::vector<Series> series;
    for (const auto& r : rep.rows)
      if (r.roi == roi) {
        series.push_back({r.method, r.gold, r.values});
        write_text(dir / ("bland_altman_" + file_safe(roi) + "_" + file_safe(r.method) + ".svg"),
                   bland_altman_svg(roi + ": " + r.method + " vs gold", r.gold, r.values, r.bland_altman));
      }
    write_text(dir / ("scatter_" + file_safe(roi) + ".svg"),
               scatter_svg(roi, "gold volume (mm^3)", "method volume (mm^3)", series, true));
  }
}

}  // namespace lfsr::eval
