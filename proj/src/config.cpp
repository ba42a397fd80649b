#include "cps/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "cps/error.hpp"

namespace cps {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::Config, field + ": " + why);
}

double to_double(const std::string& field, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') bad(field, "expected a number, got '" + v + "'");
  return d;
}

long long to_int(const std::string& field, const std::string& v) {
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0') bad(field, "expected an integer, got '" + v + "'");
  return i;
}

int to_int32(const std::string& field, const std::string& v) {
  const long long i = to_int(field, v);
  if (i < -2147483647LL || i > 2147483647LL) bad(field, "integer out of range");
  return static_cast<int>(i);
}

bool to_bool(const std::string& field, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(field, "expected true or false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> parts;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CPS_DOUBLE(sec, name, member)                                                                       \
  Field {                                                                                                   \
    sec, name, [](RunConfig& c, const std::string& f, const std::string& v) { c.member = to_double(f, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }                                                    \
  }
#define CPS_INT(sec, name, member)                                                                         \
  Field {                                                                                                  \
    sec, name, [](RunConfig& c, const std::string& f, const std::string& v) { c.member = to_int32(f, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                                        \
  }
#define CPS_STRING(sec, name, member)                                                                \
  Field {                                                                                            \
    sec, name, [](RunConfig& c, const std::string&, const std::string& v) { c.member = v; },         \
        [](const RunConfig& c) { return c.member; }                                                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      CPS_STRING("state", "kind", state.kind),
      CPS_DOUBLE("state", "mean_n", state.mean_n),
      CPS_DOUBLE("state", "alpha_re", state.alpha_re),
      CPS_DOUBLE("state", "alpha_im", state.alpha_im),
      CPS_INT("state", "photon_number", state.photon_number),
      CPS_INT("state", "n_max", state.n_max),
      CPS_DOUBLE("state", "rotation", state.rotation),

      Field{"run", "seed",
            [](RunConfig& c, const std::string& f, const std::string& v) {
              char* end = nullptr;
              const unsigned long long s = std::strtoull(v.c_str(), &end, 10);
              if (v.empty() || *end != '\0' || v[0] == '-') bad(f, "expected a non-negative integer");
              c.seed = s;
            },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      CPS_STRING("run", "out", out),
      CPS_STRING("run", "kernel_cache", kernel_cache),
      Field{"run", "epsilons",
            [](RunConfig& c, const std::string& f, const std::string& v) {
              c.epsilons.clear();
              for (const auto& p : split(v, ',')) c.epsilons.push_back(to_double(f, p));
            },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.epsilons.size(); ++i) s += (i ? ", " : "") + fmt(c.epsilons[i]);
              return s;
            }},
      CPS_INT("run", "phi_points", phi_points),

      CPS_INT("simulate", "n_phases", n_phases),
      CPS_INT("simulate", "events_per_phase", events_per_phase),
      CPS_DOUBLE("simulate", "eta", eta),
      CPS_INT("simulate", "histogram_bins", histogram_bins),

      CPS_DOUBLE("grid", "x_min", x_grid.x_min),
      CPS_DOUBLE("grid", "x_max", x_grid.x_max),
      CPS_DOUBLE("grid", "x_spacing", x_grid.spacing),
      Field{"grid", "interpolation",
            [](RunConfig& c, const std::string& f, const std::string& v) {
              if (v == "linear")
                c.interpolation = Interpolation::Linear;
              else if (v == "cubic")
                c.interpolation = Interpolation::Cubic;
              else
                bad(f, "expected linear or cubic, got '" + v + "'");
            },
            [](const RunConfig& c) { return to_string(c.interpolation); }},

      Field{"kernel", "pairs",
            [](RunConfig& c, const std::string& f, const std::string& v) {
              c.kernel_pairs.clear();
              for (const auto& p : split(v, ',')) {
                const auto colon = p.find(':');
                if (colon == std::string::npos) bad(f, "expected eps:eta entries, got '" + p + "'");
                c.kernel_pairs.push_back(
                    {to_double(f, trim(p.substr(0, colon))), to_double(f, trim(p.substr(colon + 1)))});
              }
            },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.kernel_pairs.size(); ++i)
                s += (i ? ", " : "") + fmt(c.kernel_pairs[i].epsilon) + ":" + fmt(c.kernel_pairs[i].eta);
              return s;
            }},
      CPS_DOUBLE("kernel", "field_min", field_min),
      CPS_DOUBLE("kernel", "field_max", field_max),
      CPS_INT("kernel", "field_points", field_points),
      CPS_INT("kernel", "sum_phase_points", sum_phase_points),
      CPS_DOUBLE("kernel", "tol", tol),

      CPS_STRING("estimate", "dataset", dataset),
      CPS_STRING("estimate", "reference", reference),
      Field{"estimate", "normalize",
            [](RunConfig& c, const std::string& f, const std::string& v) { c.normalize = to_bool(f, v); },
            [](const RunConfig& c) { return std::string(c.normalize ? "true" : "false"); }},
      CPS_INT("estimate", "density_n_max", density_n_max),

      CPS_STRING("compare", "a", compare_a),
      CPS_STRING("compare", "b", compare_b),
  };
  return table;
}

#undef CPS_DOUBLE
#undef CPS_INT
#undef CPS_STRING

}  // namespace

std::string to_string(Interpolation interpolation) {
  return interpolation == Interpolation::Linear ? "linear" : "cubic";
}

void RunConfig::validate() const {
  const auto& s = state;
  if (s.kind != "vacuum" && s.kind != "coherent" && s.kind != "squeezed_vacuum" && s.kind != "fock")
    bad("state.kind", "expected vacuum, coherent, squeezed_vacuum or fock, got '" + s.kind + "'");
  if (!(s.mean_n >= 0.0) || !std::isfinite(s.mean_n)) bad("state.mean_n", "must be a finite value >= 0");
  if (!std::isfinite(s.alpha_re) || !std::isfinite(s.alpha_im)) bad("state.alpha_re", "amplitude must be finite");
  if (s.photon_number < 0) bad("state.photon_number", "must be >= 0");
  if (s.n_max < 0) bad("state.n_max", "must be >= 0 (0 selects it automatically)");
  if (s.kind == "fock" && s.n_max != 0 && s.photon_number > s.n_max)
    bad("state.photon_number", "exceeds state.n_max");
  if (!std::isfinite(s.rotation)) bad("state.rotation", "must be finite");

  if (epsilons.empty()) bad("run.epsilons", "at least one epsilon required");
  for (double e : epsilons)
    if (!(e > 0.0) || !std::isfinite(e)) bad("run.epsilons", "epsilon must be > 0, got " + fmt(e));
  if (phi_points < 1) bad("run.phi_points", "phi grid is empty");

  if (n_phases < 1) bad("simulate.n_phases", "must be >= 1");
  if (events_per_phase < 1) bad("simulate.events_per_phase", "must be >= 1");
  if (!(eta > 0.5 && eta <= 1.0)) bad("simulate.eta", "must lie in (1/2, 1], got " + fmt(eta));
  if (histogram_bins != 0 && histogram_bins < 2) bad("simulate.histogram_bins", "must be 0 or >= 2");

  if (!(x_grid.spacing > 0.0)) bad("grid.x_spacing", "must be > 0");
  if (!(x_grid.x_max > x_grid.x_min)) bad("grid.x_max", "must exceed grid.x_min");
  if ((x_grid.x_max - x_grid.x_min) / x_grid.spacing > 1e6) bad("grid.x_spacing", "grid would exceed 10^6 points");

  if (kernel_pairs.empty()) bad("kernel.pairs", "at least one eps:eta pair required");
  for (const auto& p : kernel_pairs) {
    if (!(p.epsilon > 0.0)) bad("kernel.pairs", "epsilon must be > 0, got " + fmt(p.epsilon));
    if (!(p.eta > 0.5 && p.eta <= 1.0)) bad("kernel.pairs", "eta must lie in (1/2, 1], got " + fmt(p.eta));
  }
  if (!(field_max > field_min)) bad("kernel.field_max", "must exceed kernel.field_min");
  if (field_points < 2) bad("kernel.field_points", "must be >= 2");
  if (sum_phase_points < 2) bad("kernel.sum_phase_points", "must be >= 2");
  if (!(tol > 0.0 && tol < 1.0)) bad("kernel.tol", "must lie in (0, 1)");

  if (density_n_max < 0) bad("estimate.density_n_max", "must be >= 0");
  if (reference.empty()) bad("estimate.reference", "use analytic, none or a CSV path");
}

RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') bad("line " + std::to_string(line_no), "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : fields()) known = known || section == f.section;
      if (!known) bad("line " + std::to_string(line_no), "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad("line " + std::to_string(line_no), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string name = section + "." + key;
    bool found = false;
    for (const auto& f : fields()) {
      if (section == f.section && key == f.key) {
        f.set(c, name, value);
        found = true;
        break;
      }
    }
    if (!found) bad(name, "unknown key");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  return parse_config(in);
}

std::string serialize_config(const RunConfig& c) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(c) + "\n";
  }
  return out;
}

DensityMatrix build_state(const StateSpec& spec, std::string* tag) {
  std::string t;
  auto pure = [&]() -> FockState {
    if (spec.kind == "vacuum") {
      t = "vacuum";
      return coherent_state(0.0, spec.n_max);
    }
    if (spec.kind == "coherent") {
      const cplx alpha(spec.alpha_re, spec.alpha_im);
      t = "coherent alpha=" + fmt(spec.alpha_re) + (spec.alpha_im < 0 ? "" : "+") + fmt(spec.alpha_im) + "i";
      return spec.n_max > 0 ? coherent_state(alpha, spec.n_max) : coherent_state(alpha);
    }
    if (spec.kind == "squeezed_vacuum") {
      t = "squeezed_vacuum mean_n=" + fmt(spec.mean_n);
      return spec.n_max > 0 ? squeezed_vacuum(spec.mean_n, spec.n_max) : squeezed_vacuum(spec.mean_n);
    }
    if (spec.kind == "fock") {
      t = "fock n=" + std::to_string(spec.photon_number);
      return fock_number_state(spec.photon_number, spec.n_max > 0 ? spec.n_max : spec.photon_number);
    }
    bad("state.kind", "unknown state kind '" + spec.kind + "'");
  }();
  if (spec.rotation != 0.0) {
    const bool gaussian = pure.is_gaussian();
    pure = pure.phase_rotated(spec.rotation);
    pure.mark_gaussian(gaussian);
    t += " rotated=" + fmt(spec.rotation);
  }
  t += " n_max=" + std::to_string(pure.n_max());
  if (tag) *tag = t;
  return pure_to_density(pure);
}

}  // namespace cps
