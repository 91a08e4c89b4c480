#include "hasr/units.h"

#include <istream>
#include <ostream>

#include "hasr/errors.h"

namespace hasr {

UnitTable::UnitTable(SubwordVocab vocab) : vocab_(std::move(vocab)) {
  names_.emplace_back(kBlankName);
  for (const std::string& u : vocab_.units()) names_.push_back(u);
  names_.emplace_back(kSosName);
  names_.emplace_back(kEosName);
  for (std::size_t i = 0; i < names_.size(); ++i) ids_[names_[i]] = static_cast<LabelId>(i);
}

LabelId UnitTable::id(std::string_view unit) const {
  auto it = ids_.find(std::string(unit));
  if (it == ids_.end()) throw ContractError("unknown unit \"" + std::string(unit) + "\"");
  return it->second;
}

const std::string& UnitTable::unit(LabelId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    throw ContractError("unknown label id " + std::to_string(id));
  }
  return names_[static_cast<std::size_t>(id)];
}

std::vector<LabelId> UnitTable::encode(std::span<const std::string> units) const {
  std::vector<LabelId> ids;
  ids.reserve(units.size());
  for (const std::string& u : units) {
    const LabelId i = id(u);
    if (!is_unit(i)) throw ContractError("\"" + u + "\" is not a subword unit");
    ids.push_back(i);
  }
  return ids;
}

std::vector<LabelId> UnitTable::encode_sentence(std::string_view text, OovPolicy policy) const {
  return encode(segment_sentence(text, vocab_, policy));
}

void UnitTable::write(std::ostream& out) const {
  for (std::size_t i = 0; i < names_.size(); ++i) out << names_[i] << ' ' << i << '\n';
}

UnitTable UnitTable::read(std::istream& in) {
  std::vector<std::string> names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> parts = split_words(line);
    const std::string where = "unit file line " + std::to_string(line_no);
    if (parts.size() != 2) throw ParseError(where + ": expected \"unit id\"");
    std::size_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoul(parts[1], &used);
      if (used != parts[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(where + ": bad id \"" + parts[1] + "\"");
    }
    if (id != names.size()) throw ParseError(where + ": ids must ascend from 0");
    names.push_back(parts[0]);
  }
  if (names.size() < 4) throw ParseError("unit file has too few entries");
  if (names.front() != kBlankName) throw ParseError("unit file: id 0 must be <blank>");
  if (names[names.size() - 2] != kSosName || names.back() != kEosName) {
    throw ParseError("unit file: the last two ids must be <sos> and <eos>");
  }
  std::vector<std::string> units(names.begin() + 1, names.end() - 2);
  SubwordVocab vocab = SubwordVocab::from_units(units);
  if (vocab.units().size() != units.size()) {
    throw ParseError("unit file lists duplicate units or omits a character of its alphabet");
  }
  UnitTable table(std::move(vocab));
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (table.names_[i + 1] != units[i]) {
      throw ParseError("unit file: single characters and '_' must precede merged units");
    }
  }
  return table;
}

}  // namespace hasr
