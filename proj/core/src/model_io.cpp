#include "decompart/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace decompart {

using nlohmann::json;

namespace {

Expr parse_expr_field(const json& j, const std::string& field_path) {
  if (!j.is_string()) throw SchemaError(field_path + ": expected an expression string");
  try {
    return Expr::parse(j.get<std::string>());
  } catch (const SyntaxError& e) {
    throw SchemaError(field_path + ": " + e.what());
  } catch (const UnknownIdentifier& e) {
    throw SchemaError(field_path + ": " + e.what());
  }
}

VectorXd parse_vector(const json& j, const std::string& field_path, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw SchemaError(field_path + ": expected an array of " + std::to_string(n) + " numbers");
  VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number())
      throw SchemaError(field_path + "[" + std::to_string(i) + "]: expected a number");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

MatrixXd parse_matrix(const json& j, const std::string& field_path, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw SchemaError(field_path + ": expected " + std::to_string(n) + " rows");
  MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    m.row(i) = parse_vector(j[static_cast<std::size_t>(i)],
                            field_path + "[" + std::to_string(i) + "]", n)
                   .transpose();
  return m;
}

}  // namespace

LoadedDocument load_model_from_string(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(origin + ": " + e.what());
  }
  if (!doc.is_object()) throw SchemaError(origin + ": document must be a JSON object");

  LoadedDocument out;
  out.name = doc.value("name", origin);

  if (!doc.contains("compartments") || !doc["compartments"].is_array() ||
      doc["compartments"].empty())
    throw SchemaError("compartments: expected a non-empty array of labels");
  std::map<std::string, int> index;  // label -> 0-based
  for (const auto& c : doc["compartments"]) {
    if (!c.is_string()) throw SchemaError("compartments: labels must be strings");
    std::string label = c.get<std::string>();
    if (label == "0") throw SchemaError("compartments: label '0' is reserved for the exterior");
    if (!index.emplace(label, static_cast<int>(out.compartments.size())).second)
      throw UnknownLabel("compartments: duplicate label '" + label + "'");
    out.compartments.push_back(label);
  }
  const int n = static_cast<int>(out.compartments.size());
  auto resolve = [&](const std::string& label, const std::string& field) {
    auto it = index.find(label);
    if (it == index.end()) throw UnknownLabel(field + ": unknown compartment '" + label + "'");
    return it->second;
  };

  bool dynamic = doc.contains("flows") || doc.contains("inputs") || doc.contains("outputs") ||
                 doc.contains("x0");
  if (dynamic) {
    std::vector<Expr> flows(static_cast<std::size_t>(n * n), Expr::zero());
    std::vector<Expr> inputs(static_cast<std::size_t>(n), Expr::zero());
    std::vector<Expr> outputs(static_cast<std::size_t>(n), Expr::zero());
    VectorXd x0 = VectorXd::Zero(n);

    if (doc.contains("flows")) {
      if (!doc["flows"].is_array()) throw SchemaError("flows: expected an array");
      int fi = 0;
      for (const auto& f : doc["flows"]) {
        std::string path = "flows[" + std::to_string(fi++) + "]";
        if (!f.is_object() || !f.contains("from") || !f.contains("to") || !f.contains("expr"))
          throw SchemaError(path + ": expected {from, to, expr}");
        int j = resolve(f["from"].get<std::string>(), path + ".from");
        int i = resolve(f["to"].get<std::string>(), path + ".to");
        if (!flows[static_cast<std::size_t>(i * n + j)].is_zero_constant())
          throw SchemaError(path + ": duplicate flow " + f["from"].get<std::string>() + " -> " +
                            f["to"].get<std::string>());
        flows[static_cast<std::size_t>(i * n + j)] = parse_expr_field(f["expr"], path + ".expr");
      }
    }
    auto fill_map = [&](const char* key, std::vector<Expr>& dst) {
      if (!doc.contains(key)) return;
      if (!doc[key].is_object()) throw SchemaError(std::string(key) + ": expected a label->expr map");
      for (const auto& [label, expr] : doc[key].items()) {
        int i = resolve(label, std::string(key) + "." + label);
        dst[static_cast<std::size_t>(i)] =
            parse_expr_field(expr, std::string(key) + "." + label);
      }
    };
    fill_map("inputs", inputs);
    fill_map("outputs", outputs);
    if (doc.contains("x0")) {
      if (!doc["x0"].is_object()) throw SchemaError("x0: expected a label->number map");
      for (const auto& [label, val] : doc["x0"].items()) {
        int i = resolve(label, "x0." + label);
        if (!val.is_number()) throw SchemaError("x0." + label + ": expected a number");
        x0[i] = val.get<double>();
      }
    }
    out.model = CompartmentalModel(out.compartments, std::move(flows), std::move(inputs),
                                   std::move(outputs), std::move(x0), out.name);
  }

  if (doc.contains("static")) {
    const json& st = doc["static"];
    if (!st.is_object() || !st.contains("F") || !st.contains("z") || !st.contains("y"))
      throw SchemaError("static: expected {F, z, y[, x]}");
    std::optional<VectorXd> x;
    if (st.contains("x")) x = parse_vector(st["x"], "static.x", n);
    out.static_system = StaticSystem::build(parse_matrix(st["F"], "static.F", n),
                                            parse_vector(st["z"], "static.z", n),
                                            parse_vector(st["y"], "static.y", n), std::move(x));
  }

  if (doc.contains("paths")) {
    if (!doc["paths"].is_array()) throw SchemaError("paths: expected an array of path strings");
    int pi = 0;
    for (const auto& p : doc["paths"]) {
      std::string path = "paths[" + std::to_string(pi++) + "]";
      if (!p.is_string()) throw SchemaError(path + ": expected a string");
      out.paths.push_back(parse_path_spec(p.get<std::string>()));
    }
  }

  if (!out.model && !out.static_system)
    throw SchemaError(origin + ": document defines neither a dynamic model nor a static block");
  return out;
}

LoadedDocument load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open model document " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_model_from_string(ss.str(), path.filename().string());
}

std::string save_model(const LoadedDocument& doc) {
  json j;
  j["name"] = doc.name;
  j["compartments"] = doc.compartments;
  const int n = static_cast<int>(doc.compartments.size());
  if (doc.model) {
    json flows = json::array();
    json inputs = json::object(), outputs = json::object(), x0 = json::object();
    for (int i = 0; i < n; ++i) {
      for (int jj = 0; jj < n; ++jj)
        if (doc.model->has_flow(i, jj))
          flows.push_back({{"from", doc.compartments[static_cast<std::size_t>(jj)]},
                           {"to", doc.compartments[static_cast<std::size_t>(i)]},
                           {"expr", doc.model->flow(i, jj).print()}});
      if (doc.model->has_input(i))
        inputs[doc.compartments[static_cast<std::size_t>(i)]] = doc.model->input(i).print();
      if (doc.model->has_output(i))
        outputs[doc.compartments[static_cast<std::size_t>(i)]] = doc.model->output(i).print();
      x0[doc.compartments[static_cast<std::size_t>(i)]] = doc.model->x0()[i];
    }
    j["flows"] = flows;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["x0"] = x0;
  }
  if (doc.static_system) {
    const StaticSystem& s = *doc.static_system;
    json st;
    st["F"] = json::array();
    for (int i = 0; i < n; ++i) {
      json row = json::array();
      for (int jj = 0; jj < n; ++jj) row.push_back(s.F(i, jj));
      st["F"].push_back(row);
    }
    st["z"] = std::vector<double>(s.z.data(), s.z.data() + n);
    st["y"] = std::vector<double>(s.y.data(), s.y.data() + n);
    if (s.x) st["x"] = std::vector<double>(s.x->data(), s.x->data() + n);
    j["static"] = st;
  }
  if (!doc.paths.empty()) {
    json paths = json::array();
    for (const auto& p : doc.paths) paths.push_back(format_path_spec(p));
    j["paths"] = paths;
  }
  return j.dump(2);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Table Table::matrix_series(const std::string& name, const std::string& symbol,
                           const std::vector<double>& times,
                           const std::vector<MatrixXd>& series) {
  Table t;
  t.name = name;
  t.columns.push_back("t");
  if (!series.empty()) {
    const int rows = static_cast<int>(series.front().rows());
    const int cols = static_cast<int>(series.front().cols());
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r)
        t.columns.push_back(symbol + "[" + std::to_string(r + 1) + "," + std::to_string(c + 1) +
                            "]");
    for (std::size_t s = 0; s < times.size(); ++s) {
      std::vector<double> row;
      row.reserve(static_cast<std::size_t>(rows * cols) + 1);
      row.push_back(times[s]);
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) row.push_back(series[s](r, c));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

Table Table::vector_series(const std::string& name, const std::vector<std::string>& columns,
                           const std::vector<double>& times,
                           const std::vector<VectorXd>& series) {
  Table t;
  t.name = name;
  t.columns.push_back("t");
  t.columns.insert(t.columns.end(), columns.begin(), columns.end());
  for (std::size_t s = 0; s < times.size(); ++s) {
    std::vector<double> row;
    row.push_back(times[s]);
    for (int i = 0; i < series[s].size(); ++i) row.push_back(series[s][i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table Table::single_matrix(const std::string& name, const std::string& symbol, double t,
                           const MatrixXd& m) {
  return matrix_series(name, symbol, {t}, {m});
}

void emit_tables(const ResultBundle& bundle, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IOError("cannot create output directory " + dir.string());

  json manifest;
  manifest["run"] = bundle.run_name;
  manifest["command"] = bundle.command;
  manifest["engine"] = bundle.engine_version;
  if (!bundle.config_json.empty()) manifest["config"] = json::parse(bundle.config_json);
  manifest["flags"] = bundle.flags;
  manifest["files"] = json::array();

  for (const Table& t : bundle.tables) {
    std::filesystem::path file = dir / (t.name + ".csv");
    std::ofstream os(file);
    if (!os) throw IOError("cannot write " + file.string());
    for (std::size_t c = 0; c < t.columns.size(); ++c)
      os << (c ? "," : "") << t.columns[c];
    os << "\n";
    for (const auto& row : t.rows) {
      for (std::size_t c = 0; c < row.size(); ++c)
        os << (c ? "," : "") << format_double(row[c]);
      os << "\n";
    }
    manifest["files"].push_back({{"file", file.filename().string()},
                                 {"columns", t.columns.size()},
                                 {"rows", t.rows.size()},
                                 {"table", t.name}});
  }

  std::ofstream ms(dir / "manifest.json");
  if (!ms) throw IOError("cannot write manifest.json");
  ms << manifest.dump(2) << "\n";
}

}  // namespace decompart
