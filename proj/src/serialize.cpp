#include "kdiag/serialize.hpp"

#include <cstdio>

#include "json.hpp"

namespace kdiag {

namespace {

using nlohmann::json;

json algebra_json(const TracedAlgebra& alg) {
  json blocks = json::array();
  for (const BlockSpec& b : alg.blocks())
    blocks.push_back({{"dim", b.dim}, {"weight", b.weight}});
  return {{"blocks", blocks}};
}

AlgebraPtr algebra_from(const json& j) {
  std::vector<BlockSpec> blocks;
  for (const auto& b : j.at("blocks"))
    blocks.push_back(
        {b.at("dim").get<Eigen::Index>(), b.at("weight").get<double>()});
  return make_algebra(std::move(blocks));
}

json matop_json(const MatOp& x) {
  json blocks = json::array();
  for (int b = 0; b < x.num_blocks(); ++b) {
    const auto& m = x.block(b);
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        row.push_back({m(i, j).real(), m(i, j).imag()});
      rows.push_back(std::move(row));
    }
    blocks.push_back(std::move(rows));
  }
  return {{"algebra", algebra_json(*x.algebra())}, {"blocks", blocks}};
}

MatOp matop_from(const json& j) {
  AlgebraPtr alg = algebra_from(j.at("algebra"));
  std::vector<Eigen::MatrixXcd> blocks;
  const json& data = j.at("blocks");
  for (int b = 0; b < alg->num_blocks(); ++b) {
    Eigen::Index d = alg->dim(b);
    const json& rows = data.at(static_cast<std::size_t>(b));
    if (static_cast<Eigen::Index>(rows.size()) != d)
      throw ValidationError("matop json: row count mismatch");
    Eigen::MatrixXcd m(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const json& row = rows.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != d)
        throw ValidationError("matop json: column count mismatch");
      for (Eigen::Index k = 0; k < d; ++k) {
        const json& c = row.at(static_cast<std::size_t>(k));
        m(i, k) = Complex(c.at(0).get<double>(), c.at(1).get<double>());
      }
    }
    blocks.push_back(std::move(m));
  }
  return MatOp(alg, std::move(blocks));
}

json parse_or_throw(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError("malformed JSON");
  return j;
}

}  // namespace

std::string algebra_to_json(const TracedAlgebra& alg) {
  return algebra_json(alg).dump(2);
}

AlgebraPtr algebra_from_json(const std::string& text) {
  return algebra_from(parse_or_throw(text));
}

std::string matop_to_json(const MatOp& x) { return matop_json(x).dump(); }

MatOp matop_from_json(const std::string& text) {
  return matop_from(parse_or_throw(text));
}

std::string tuple_to_json(const HermTuple& alpha) {
  json entries = json::array();
  for (int j = 0; j < alpha.n(); ++j)
    entries.push_back(matop_json(alpha.entry(j)));
  json out = {{"algebra", algebra_json(*alpha.algebra())},
              {"entries", entries}};
  return out.dump();
}

HermTuple tuple_from_json(const std::string& text) {
  json j = parse_or_throw(text);
  std::vector<MatOp> entries;
  for (const auto& e : j.at("entries")) entries.push_back(matop_from(e));
  return HermTuple(std::move(entries));
}

std::string eigen_tuples_csv(const JointSpectrum& J) {
  std::string out = "block,col";
  for (int j = 0; j < J.n(); ++j)
    out += ",lambda_" + std::to_string(j + 1);
  out += "\n";
  char buf[64];
  for (const auto& e : J.tuples()) {
    out += std::to_string(e.block) + "," + std::to_string(e.col);
    for (int j = 0; j < J.n(); ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", e.lambda[j]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace kdiag
