#include "nsym/symbol.hpp"

#include <stdexcept>

namespace nsym {

SymbolTable::SymbolTable() { s_ = insert("s", SymbolKind::CurveParameter); }

Symbol SymbolTable::insert(const std::string& name, SymbolKind kind) {
  if (name.empty()) throw std::invalid_argument("empty symbol name");
  if (find(name).valid()) throw std::invalid_argument("duplicate symbol name: " + name);
  auto data = std::make_shared<SymbolData>();
  data->name = name;
  data->kind = kind;
  data->seq = next_seq_++;
  all_.push_back(data);
  return Symbol(data);
}

Symbol SymbolTable::add_coordinate(const std::string& name) {
  Symbol coord = insert(name, SymbolKind::Coordinate);
  Symbol vel = insert(name + "dot", SymbolKind::Velocity);
  Symbol acc = insert(name + "ddot", SymbolKind::Acceleration);
  // Wire the links; the nodes are owned by all_, so const_cast is contained here.
  auto* c = const_cast<SymbolData*>(coord.raw());
  auto* v = const_cast<SymbolData*>(vel.raw());
  auto* a = const_cast<SymbolData*>(acc.raw());
  for (const auto& owned : all_) {
    if (owned.get() == c) {
      for (const auto& ov : all_) {
        if (ov.get() == v) {
          c->velocity = ov;
          v->base = owned;
        }
        if (ov.get() == a) {
          c->acceleration = ov;
          a->base = owned;
        }
      }
    }
  }
  coords_.push_back(coord);
  return coord;
}

Symbol SymbolTable::add_parameter(const std::string& name) {
  Symbol p = insert(name, SymbolKind::Parameter);
  params_.push_back(p);
  return p;
}

Symbol SymbolTable::add_ansatz_coeff(const std::string& name) {
  return insert(name, SymbolKind::AnsatzCoeff);
}

Symbol SymbolTable::find(const std::string& name) const {
  for (const auto& d : all_) {
    if (d->name == name) return Symbol(d);
  }
  return Symbol();
}

}  // namespace nsym
