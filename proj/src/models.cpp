#include "nonholo/models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace nonholo {

namespace {

VectorField parse_field(const std::vector<std::string>& comps) {
  VectorField f;
  for (const auto& c : comps) f.comp.push_back(parse_expression(c));
  return f;
}

SystemInput disc_input(double m, double R, double J_s, double J_r, double grav, double tau) {
  if (m <= 0 || R <= 0 || J_s <= 0 || J_r <= 0 || grav <= 0)
    throw ModelError("rolling_disc: nonpositive parameter");
  if (tau < 0 || tau >= M_PI / 2) throw ModelError("rolling_disc: tau must lie in [0, pi/2)");

  SystemInput in;
  in.name = "disc";
  in.chart = {"theta", "phi", "x", "y"};
  in.metric_entries.assign(4, std::vector<Expr>(4, Expr::constant(0.0)));
  in.metric_entries[0][0] = Expr::var("J_s");
  in.metric_entries[1][1] = Expr::var("J_r");
  in.metric_entries[2][2] = Expr::var("m");
  in.metric_entries[3][3] = Expr::var("m");
  in.potential = parse_expression("m*g*(R - x*sin(tau))");
  in.d_spanning = {
      parse_field({"1/sqrt(J_s)", "0", "0", "0"}),
      parse_field({"0", "1/sqrt(J_r+m*R^2)", "R*cos(theta)/sqrt(J_r+m*R^2)",
                   "R*sin(theta)/sqrt(J_r+m*R^2)"}),
  };
  in.complement_spanning = {
      parse_field({"0", "0", "sin(theta)/sqrt(m)", "-cos(theta)/sqrt(m)"}),
      parse_field({"0", "-sqrt(m)*R/(sqrt(J_r)*sqrt(J_r+m*R^2))",
                   "sqrt(J_r)*cos(theta)/(sqrt(m)*sqrt(J_r+m*R^2))",
                   "sqrt(J_r)*sin(theta)/(sqrt(m)*sqrt(J_r+m*R^2))"}),
  };
  in.velocity_names = {"v_s", "v_r"};
  in.params = {{"m", m}, {"R", R}, {"J_s", J_s}, {"J_r", J_r}, {"g", grav}, {"tau", tau}};
  in.chart_box = {{"theta", {-3.0, 3.0}}, {"phi", {-3.0, 3.0}}, {"x", {-2.0, 2.0}},
                  {"y", {-2.0, 2.0}}};
  in.velocity_box = {{"v_s", {-2.0, 2.0}}, {"v_r", {-2.0, 2.0}}};
  in.adjoint_box = {{"p_1", {-2.0, 2.0}}, {"p_2", {-2.0, 2.0}}};
  return in;
}

}  // namespace

MechanicalSystem rolling_disc(double m, double R, double J_s, double J_r, double grav,
                              double tau) {
  return build_system(disc_input(m, R, J_s, J_r, grav, tau));
}

MechanicalSystem flat_holonomic() {
  SystemInput in;
  in.name = "flat_holonomic";
  in.chart = {"x", "y", "z"};
  in.metric_entries.assign(3, std::vector<Expr>(3, Expr::constant(0.0)));
  for (int i = 0; i < 3; ++i) in.metric_entries[i][i] = Expr::constant(1.0);
  in.potential = Expr::constant(0.0);
  in.d_spanning = {parse_field({"1", "0", "0"}), parse_field({"0", "1", "0"})};
  in.chart_box = {{"x", {-2.0, 2.0}}, {"y", {-2.0, 2.0}}, {"z", {-2.0, 2.0}}};
  return build_system(in);
}

// ---------------------------------------------------------------------------
// Model file format: sections [chart], [velocities], [params], [metric],
// [potential], [distribution], [complement], [box]; '#' starts a comment.

namespace {

struct IndexedEntry {
  int a = 0, i = 0;
  Expr value;
  int line = 0;
};

struct ModelFileData {
  std::vector<std::string> chart;
  std::vector<std::string> velocities;
  std::vector<std::pair<std::string, double>> params;
  std::vector<IndexedEntry> metric;       // g[i][j]
  Expr potential;
  bool have_potential = false;
  std::vector<IndexedEntry> distribution;  // X[a][i]
  std::vector<IndexedEntry> complement;    // Y[a][i]
  std::vector<std::tuple<std::string, double, double>> box;
};

std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_indexed(const std::string& key, const std::string& head, int* a, int* i) {
  // head[a][i]
  if (key.rfind(head, 0) != 0) return false;
  int consumed = 0;
  int fields = std::sscanf(key.c_str() + head.size(), "[%d][%d]%n", a, i, &consumed);
  return fields == 2 && head.size() + static_cast<std::size_t>(consumed) == key.size();
}

Expr parse_rhs(const std::string& text, int line) {
  try {
    return parse_expression(text);
  } catch (const ParseError& e) {
    throw ModelParseError(std::string("bad expression: ") + e.what(), line);
  }
}

ModelFileData read_model_file(std::istream& is) {
  ModelFileData data;
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string s = raw;
    std::size_t hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = strip(s);
    if (s.empty()) continue;
    if (s.front() == '[' && s.back() == ']') {
      section = s.substr(1, s.size() - 2);
      if (section != "chart" && section != "velocities" && section != "params" &&
          section != "metric" && section != "potential" && section != "distribution" &&
          section != "complement" && section != "box")
        throw ModelParseError("unknown section [" + section + "]", line);
      continue;
    }
    if (section.empty()) throw ModelParseError("content before any section", line);

    if (section == "chart" || section == "velocities") {
      for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
          throw ModelParseError("bad variable name '" + s + "'", line);
      (section == "chart" ? data.chart : data.velocities).push_back(s);
      continue;
    }
    if (section == "box") {
      std::size_t in_pos = s.find(" in ");
      std::size_t lb = s.find('[', in_pos == std::string::npos ? 0 : in_pos);
      std::size_t comma = s.find(',', lb);
      std::size_t rb = s.find(']', comma);
      if (in_pos == std::string::npos || lb == std::string::npos ||
          comma == std::string::npos || rb == std::string::npos)
        throw ModelParseError("expected 'name in [lo, hi]'", line);
      std::string name = strip(s.substr(0, in_pos));
      try {
        double lo = std::stod(s.substr(lb + 1, comma - lb - 1));
        double hi = std::stod(s.substr(comma + 1, rb - comma - 1));
        if (!(lo <= hi)) throw ModelParseError("empty interval for " + name, line);
        data.box.emplace_back(name, lo, hi);
      } catch (const ModelParseError&) {
        throw;
      } catch (const std::exception&) {
        throw ModelParseError("bad interval bounds", line);
      }
      continue;
    }

    std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw ModelParseError("expected 'key = value'", line);
    std::string key = strip(s.substr(0, eq));
    std::string value = strip(s.substr(eq + 1));
    if (section == "params") {
      try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        data.params.emplace_back(key, v);
      } catch (const std::exception&) {
        throw ModelParseError("bad parameter value for " + key, line);
      }
      continue;
    }
    if (section == "potential") {
      if (key != "V") throw ModelParseError("unknown key '" + key + "' in [potential]", line);
      data.potential = parse_rhs(value, line);
      data.have_potential = true;
      continue;
    }
    IndexedEntry entry;
    entry.value = parse_rhs(value, line);
    entry.line = line;
    if (section == "metric") {
      if (!parse_indexed(key, "g", &entry.a, &entry.i))
        throw ModelParseError("unknown key '" + key + "' in [metric]", line);
      data.metric.push_back(entry);
    } else if (section == "distribution") {
      if (!parse_indexed(key, "X", &entry.a, &entry.i))
        throw ModelParseError("unknown key '" + key + "' in [distribution]", line);
      data.distribution.push_back(entry);
    } else {
      if (!parse_indexed(key, "Y", &entry.a, &entry.i))
        throw ModelParseError("unknown key '" + key + "' in [complement]", line);
      data.complement.push_back(entry);
    }
  }
  return data;
}

std::vector<VectorField> assemble_fields(const std::vector<IndexedEntry>& entries, int n,
                                         const char* what) {
  int count = 0;
  for (const auto& e : entries) count = std::max(count, e.a);
  std::vector<VectorField> out(static_cast<std::size_t>(count));
  for (auto& f : out) f.comp.assign(static_cast<std::size_t>(n), Expr::constant(0.0));
  for (const auto& e : entries) {
    if (e.a < 1 || e.i < 1 || e.i > n)
      throw ModelParseError(std::string("index out of range in ") + what, e.line);
    out[static_cast<std::size_t>(e.a - 1)].comp[static_cast<std::size_t>(e.i - 1)] = e.value;
  }
  return out;
}

SystemInput input_from_data(const ModelFileData& data) {
  SystemInput in;
  in.name = "model";
  in.chart = data.chart;
  int n = static_cast<int>(in.chart.size());
  if (n == 0) throw ModelError("model file: empty [chart] section");
  if (!data.have_potential) throw ModelError("model file: missing [potential]");
  for (const auto& [k, v] : data.params) in.params[k] = v;

  // declared-name check for every expression
  std::map<std::string, bool> declared;
  for (const auto& c : in.chart) declared[c] = true;
  for (const auto& [k, v] : in.params) declared[k] = true;
  auto check_declared = [&](const Expr& e, const char* what) {
    for (int id : e.free_vars().ids()) {
      const std::string& nm = symbol_name(id);
      if (!declared.count(nm))
        throw ModelError(std::string("model file: undeclared identifier '") + nm + "' in " +
                         what);
    }
  };

  in.metric_entries.assign(n, std::vector<Expr>(n, Expr::constant(0.0)));
  std::vector<std::vector<bool>> seen(n, std::vector<bool>(n, false));
  for (const auto& e : data.metric) {
    if (e.a < 1 || e.a > n || e.i < 1 || e.i > n)
      throw ModelParseError("metric index out of range", e.line);
    int i = e.a - 1, j = e.i - 1;
    if (seen[i][j] && !expr_equal(in.metric_entries[i][j], e.value))
      throw ModelParseError("conflicting metric entry", e.line);
    in.metric_entries[i][j] = e.value;
    in.metric_entries[j][i] = e.value;  // mirrored
    seen[i][j] = seen[j][i] = true;
    check_declared(e.value, "[metric]");
  }
  in.potential = data.potential;
  check_declared(in.potential, "[potential]");

  in.d_spanning = assemble_fields(data.distribution, n, "[distribution]");
  if (in.d_spanning.empty()) throw ModelError("model file: empty [distribution]");
  in.complement_spanning = assemble_fields(data.complement, n, "[complement]");
  for (const auto& f : in.d_spanning)
    for (const auto& c : f.comp) check_declared(c, "[distribution]");
  for (const auto& f : in.complement_spanning)
    for (const auto& c : f.comp) check_declared(c, "[complement]");

  in.velocity_names = data.velocities;
  int k = static_cast<int>(in.d_spanning.size());
  std::map<std::string, bool> velocity_name;
  {
    std::vector<std::string> vnames = in.velocity_names;
    if (vnames.empty())
      for (int a = 1; a <= k; ++a) vnames.push_back("v_" + std::to_string(a));
    for (const auto& v : vnames) velocity_name[v] = true;
  }

  for (const auto& [name, lo, hi] : data.box) {
    if (std::find(in.chart.begin(), in.chart.end(), name) != in.chart.end()) {
      in.chart_box[name] = {lo, hi};
    } else if (velocity_name.count(name)) {
      in.velocity_box[name] = {lo, hi};
    } else if (name.rfind("p_", 0) == 0) {
      in.adjoint_box[name] = {lo, hi};
    } else {
      throw ModelError("model file: box entry for undeclared variable '" + name + "'");
    }
  }
  for (const auto& c : in.chart)
    if (!in.chart_box.count(c))
      throw ModelError("model file: missing box interval for chart variable " + c);
  return in;
}

}  // namespace

MechanicalSystem load_model_text(const std::string& text) {
  std::istringstream is(text);
  return build_system(input_from_data(read_model_file(is)));
}

MechanicalSystem load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ModelError("cannot open model file: " + path);
  MechanicalSystem sys = build_system(input_from_data(read_model_file(is)));
  sys.name = path;
  return sys;
}

namespace {

std::string format_param(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string print_model(const MechanicalSystem& sys) {
  std::ostringstream os;
  os << "[chart]\n";
  for (const auto& c : sys.chart) os << c << "\n";
  os << "\n[velocities]\n";
  for (const auto& v : sys.vel_names) os << v << "\n";
  os << "\n[params]\n";
  for (const auto& [k, v] : sys.params) os << k << " = " << format_param(v) << "\n";
  os << "\n[metric]\n";
  for (int i = 0; i < sys.n; ++i)
    for (int j = i; j < sys.n; ++j)
      if (!sys.g.entries[i][j].is_zero())
        os << "g[" << i + 1 << "][" << j + 1 << "] = " << to_string(sys.g.entries[i][j])
           << "\n";
  os << "\n[potential]\nV = " << to_string(sys.potential) << "\n";
  os << "\n[distribution]\n";
  for (int a = 0; a < sys.k; ++a)
    for (int i = 0; i < sys.n; ++i)
      if (!sys.frame_d.fields[a].comp[i].is_zero())
        os << "X[" << a + 1 << "][" << i + 1
           << "] = " << to_string(sys.frame_d.fields[a].comp[i]) << "\n";
  os << "\n[complement]\n";
  for (int a = 0; a < sys.n - sys.k; ++a)
    for (int i = 0; i < sys.n; ++i)
      if (!sys.frame_dp.fields[a].comp[i].is_zero())
        os << "Y[" << a + 1 << "][" << i + 1
           << "] = " << to_string(sys.frame_dp.fields[a].comp[i]) << "\n";
  os << "\n[box]\n";
  auto emit_box = [&os](const Box& b) {
    for (const auto& [name, iv] : b)
      os << name << " in [" << format_param(iv.first) << ", " << format_param(iv.second)
         << "]\n";
  };
  emit_box(sys.chart_box);
  emit_box(sys.velocity_box);
  emit_box(sys.adjoint_box);
  return os.str();
}

MechanicalSystem make_model(const std::string& name_or_path,
                            const std::map<std::string, double>& overrides) {
  auto value = [&](const std::string& key, double fallback) {
    auto it = overrides.find(key);
    return it != overrides.end() ? it->second : fallback;
  };
  if (name_or_path == "disc") {
    for (const auto& [k, v] : overrides)
      if (k != "m" && k != "R" && k != "J_s" && k != "J_r" && k != "g" && k != "tau")
        throw ModelError("override for unknown parameter: " + k);
    return rolling_disc(value("m", 1.0), value("R", 1.0), value("J_s", 1.0), value("J_r", 1.0),
                        value("g", 9.8), value("tau", 0.5235987755982988));
  }
  if (name_or_path == "flat_holonomic") {
    if (!overrides.empty())
      throw ModelError("flat_holonomic has no parameters to override");
    return flat_holonomic();
  }
  std::ifstream is(name_or_path);
  if (!is) throw ModelError("cannot open model file: " + name_or_path);
  SystemInput in = input_from_data(read_model_file(is));
  for (const auto& [k, v] : overrides) {
    if (!in.params.count(k)) throw ModelError("override for unknown parameter: " + k);
    in.params[k] = v;
  }
  in.name = name_or_path;
  return build_system(in);
}

}  // namespace nonholo
