#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace nsym {

enum class SymbolKind {
  CurveParameter,  // the affine parameter s
  Coordinate,      // x^i
  Velocity,        // dx^i/ds, named "<coord>dot"
  Acceleration,    // d2x^i/ds2, internal to total derivatives, named "<coord>ddot"
  Parameter,       // constant parameter such as a
  AnsatzCoeff,     // unknown coefficient c_k of a solver ansatz
};

class SymbolTable;

struct SymbolData {
  std::string name;
  SymbolKind kind;
  std::uint32_t seq = 0;  // creation order within the table; total ordering key
  // Coordinate <-> derivative links (null where not applicable).
  std::weak_ptr<const SymbolData> base;  // for Velocity/Acceleration: the coordinate
  std::shared_ptr<const SymbolData> velocity;
  std::shared_ptr<const SymbolData> acceleration;
};

/// Lightweight immutable handle; identity is the underlying node.
class Symbol {
 public:
  Symbol() = default;
  explicit Symbol(std::shared_ptr<const SymbolData> d) : data_(std::move(d)) {}

  bool valid() const { return data_ != nullptr; }
  const std::string& name() const { return data_->name; }
  SymbolKind kind() const { return data_->kind; }
  std::uint32_t seq() const { return data_->seq; }

  bool is_velocity() const { return valid() && data_->kind == SymbolKind::Velocity; }
  bool is_coordinate() const { return valid() && data_->kind == SymbolKind::Coordinate; }

  Symbol coordinate() const { return Symbol(data_->base.lock()); }
  Symbol velocity() const { return Symbol(data_->velocity); }
  Symbol acceleration() const { return Symbol(data_->acceleration); }

  bool operator==(const Symbol& o) const { return data_ == o.data_; }
  bool operator!=(const Symbol& o) const { return data_ != o.data_; }
  bool operator<(const Symbol& o) const { return seq() < o.seq(); }

  const SymbolData* raw() const { return data_.get(); }

 private:
  std::shared_ptr<const SymbolData> data_;
};

/// Owns the symbols of one workspace. Names are unique; kinds immutable.
/// Creating a coordinate also creates its "<name>dot" velocity and
/// "<name>ddot" acceleration symbols.
class SymbolTable {
 public:
  SymbolTable();

  Symbol curve_parameter() const { return s_; }

  Symbol add_coordinate(const std::string& name);
  Symbol add_parameter(const std::string& name);
  Symbol add_ansatz_coeff(const std::string& name);

  /// Lookup by name; invalid Symbol when absent.
  Symbol find(const std::string& name) const;

  const std::vector<Symbol>& coordinates() const { return coords_; }
  const std::vector<Symbol>& parameters() const { return params_; }

 private:
  Symbol insert(const std::string& name, SymbolKind kind);

  std::vector<std::shared_ptr<SymbolData>> all_;
  std::vector<Symbol> coords_;
  std::vector<Symbol> params_;
  Symbol s_;
  std::uint32_t next_seq_ = 0;
};

}  // namespace nsym
