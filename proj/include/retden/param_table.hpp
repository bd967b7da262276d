#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "retden/density.hpp"

namespace retden {

/// Dense lookup table (state, action) -> density parameters of a single model kind.
class ParamTable {
 public:
  ParamTable(std::size_t n_states, std::size_t n_actions, const DensityParams& init)
      : n_states_(n_states), n_actions_(n_actions), kind_(kind_of(init)),
        entries_(n_states * n_actions, init) {
    if (n_states == 0 || n_actions == 0) throw std::invalid_argument("ParamTable: empty table");
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  ModelKind kind() const noexcept { return kind_; }

  const DensityParams& at(std::size_t s, std::size_t a) const { return entries_[index(s, a)]; }

  void set(std::size_t s, std::size_t a, const DensityParams& params) {
    if (kind_of(params) != kind_)
      throw std::invalid_argument("ParamTable: model kind mismatch in set()");
    entries_[index(s, a)] = params;
  }

  friend bool operator==(const ParamTable& x, const ParamTable& y) {
    if (x.n_states_ != y.n_states_ || x.n_actions_ != y.n_actions_ || x.kind_ != y.kind_) return false;
    for (std::size_t i = 0; i < x.entries_.size(); ++i)
      if (to_vector(x.entries_[i]) != to_vector(y.entries_[i])) return false;
    return true;
  }

 private:
  std::size_t index(std::size_t s, std::size_t a) const {
    if (s >= n_states_ || a >= n_actions_) throw std::out_of_range("ParamTable: index out of range");
    return s * n_actions_ + a;
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  ModelKind kind_;
  std::vector<DensityParams> entries_;
};

/// Whitespace-separated rows "state action kind p1 p2 [p3]" after a header line.
inline void write_param_table(std::ostream& os, const ParamTable& table) {
  const auto prec = os.precision(17);
  os << "# state action kind params\n";
  for (std::size_t s = 0; s < table.n_states(); ++s) {
    for (std::size_t a = 0; a < table.n_actions(); ++a) {
      const auto& p = table.at(s, a);
      os << s << ' ' << a << ' ' << to_string(kind_of(p));
      const Eigen::VectorXd v = to_vector(p);
      for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << v[i];
      os << '\n';
    }
  }
  os.precision(prec);
}

inline ParamTable read_param_table(std::istream& is, std::size_t n_states, std::size_t n_actions) {
  std::optional<ParamTable> table;
  std::vector<bool> seen(n_states * n_actions, false);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::size_t s = 0, a = 0;
    std::string kind_name;
    if (!(row >> s >> a >> kind_name)) throw std::invalid_argument("param table: bad row '" + line + "'");
    const ModelKind kind = parse_model_kind(kind_name);
    Eigen::VectorXd v(dimension(kind));
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (!(row >> v[i])) throw std::invalid_argument("param table: missing parameter in '" + line + "'");
    DensityParams p = kind == ModelKind::gaussian  ? DensityParams(GaussianParams(v[0], v[1]))
                      : kind == ModelKind::laplace ? DensityParams(LaplaceParams(v[0], v[1]))
                                                   : DensityParams(SkewedLaplaceParams(v[0], v[1], v[2]));
    if (!table) table.emplace(n_states, n_actions, p);
    if (s >= n_states || a >= n_actions) throw std::invalid_argument("param table: index out of range");
    table->set(s, a, p);
    seen[s * n_actions + a] = true;
  }
  for (bool b : seen)
    if (!b) throw std::invalid_argument("param table: missing (state, action) rows");
  return *table;
}

}  // namespace retden
