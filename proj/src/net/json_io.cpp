#include "eqapprox/net/json_io.hpp"

#include <fstream>
#include <sstream>

#include "eqapprox/common/error.hpp"

namespace eqapprox {

using nlohmann::json;

namespace {

double finite_number(const json& v) {
  if (!v.is_number()) throw ParseError("expected a number, found " + std::string(v.type_name()));
  return v.get<double>();
}

json layer_weights_to_json(const SparseMatrix& W) {
  if (static_cast<std::int64_t>(W.rows) * W.cols <= kDenseWeightLimit) {
    json rows = json::array();
    for (int r = 0; r < W.rows; ++r) {
      std::vector<double> row(static_cast<std::size_t>(W.cols), 0.0);
      for (std::int64_t k = W.row_ptr[r]; k < W.row_ptr[r + 1]; ++k) row[W.col[k]] = W.val[k];
      rows.push_back(std::move(row));
    }
    return rows;
  }
  json entries = json::array();
  for (int r = 0; r < W.rows; ++r)
    for (std::int64_t k = W.row_ptr[r]; k < W.row_ptr[r + 1]; ++k)
      entries.push_back(json::array({r, W.col[k], W.val[k]}));
  return json{{"rows", W.rows}, {"cols", W.cols}, {"entries", std::move(entries)}};
}

SparseMatrix layer_weights_from_json(const json& doc) {
  if (doc.is_array()) {
    const int rows = static_cast<int>(doc.size());
    if (rows == 0) throw ParseError("layer weights have no rows");
    const int cols = static_cast<int>(doc[0].size());
    SparseMatrix W(0, cols);
    std::vector<std::pair<int, double>> row;
    for (const json& r : doc) {
      if (!r.is_array() || static_cast<int>(r.size()) != cols)
        throw ParseError("ragged weight matrix");
      row.clear();
      for (int c = 0; c < cols; ++c) {
        const double v = finite_number(r[c]);
        if (v != 0.0) row.emplace_back(c, v);
      }
      W.push_row(row);
    }
    return W;
  }
  if (doc.is_object()) {
    const int rows = doc.at("rows").get<int>();
    const int cols = doc.at("cols").get<int>();
    std::vector<std::tuple<int, int, double>> trip;
    for (const json& e : doc.at("entries")) {
      if (!e.is_array() || e.size() != 3) throw ParseError("sparse entry must be [row, col, value]");
      trip.emplace_back(e[0].get<int>(), e[1].get<int>(), finite_number(e[2]));
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(trip));
  }
  throw ParseError("layer weights must be an array of rows or a sparse object");
}

}  // namespace

json network_to_json(const ReluNetwork& net) {
  json layers = json::array();
  for (const Layer& l : net.layers()) {
    layers.push_back({{"weights", layer_weights_to_json(l.weights())},
                      {"bias", std::vector<double>(l.bias().data(), l.bias().data() + l.bias().size())},
                      {"activation", l.activation() == Activation::relu ? "relu" : "identity"}});
  }
  return json{{"input_dim", net.input_dim()}, {"output_dim", net.output_dim()}, {"layers", std::move(layers)}};
}

ReluNetwork network_from_json(const json& doc) {
  try {
    std::vector<Layer> layers;
    for (const json& l : doc.at("layers")) {
      SparseMatrix W = layer_weights_from_json(l.at("weights"));
      const json& bj = l.at("bias");
      Vector b(static_cast<Eigen::Index>(bj.size()));
      for (std::size_t i = 0; i < bj.size(); ++i) b[static_cast<Eigen::Index>(i)] = finite_number(bj[i]);
      const std::string act = l.at("activation").get<std::string>();
      Activation a;
      if (act == "relu")
        a = Activation::relu;
      else if (act == "identity")
        a = Activation::identity;
      else
        throw ParseError("unknown activation '" + act + "'");
      layers.emplace_back(std::move(W), std::move(b), a);
    }
    ReluNetwork net(std::move(layers));
    if (doc.at("input_dim").get<int>() != net.input_dim() ||
        doc.at("output_dim").get<int>() != net.output_dim())
      throw DimensionError("declared input/output dims disagree with the layers");
    return net;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed network document: ") + e.what());
  }
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& doc) {
  if (!doc.is_array()) throw ParseError("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(doc.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(doc[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = doc[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = finite_number(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& doc) {
  if (!doc.is_array()) throw ParseError("vector must be an array");
  Vector v(static_cast<Eigen::Index>(doc.size()));
  for (std::size_t i = 0; i < doc.size(); ++i) v[static_cast<Eigen::Index>(i)] = finite_number(doc[i]);
  return v;
}

std::string serialize(const ReluNetwork& net) { return network_to_json(net).dump(); }

ReluNetwork deserialize(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("network document does not parse: ") + e.what());
  }
  return network_from_json(doc);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

ReluNetwork load_network(const std::string& path) { return deserialize(read_text_file(path)); }

void save_network(const ReluNetwork& net, const std::string& path) { write_text_file(path, serialize(net)); }

}  // namespace eqapprox
