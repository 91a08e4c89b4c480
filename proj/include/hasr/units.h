#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hasr/tokenizer.h"

namespace hasr {

using LabelId = int;

// Integer ids for the recognizer outputs:
//   0          CTC blank
//   1 .. K     subword units in inventory order
//   K+1, K+2   <sos>, <eos>
// The CTC layer scores ids 0..K; the attention decoder scores ids 1..K+2.
class UnitTable {
 public:
  UnitTable() = default;
  explicit UnitTable(SubwordVocab vocab);

  static constexpr LabelId kBlank = 0;
  static constexpr std::string_view kBlankName = "<blank>";
  static constexpr std::string_view kSosName = "<sos>";
  static constexpr std::string_view kEosName = "<eos>";

  const SubwordVocab& vocab() const { return vocab_; }
  std::size_t num_units() const { return vocab_.units().size(); }
  LabelId sos() const { return static_cast<LabelId>(num_units() + 1); }
  LabelId eos() const { return static_cast<LabelId>(num_units() + 2); }
  std::size_t num_labels() const { return num_units() + 3; }
  std::size_t ctc_size() const { return num_units() + 1; }
  std::size_t decoder_size() const { return num_units() + 2; }

  LabelId id(std::string_view unit) const;
  const std::string& unit(LabelId id) const;
  bool is_unit(LabelId id) const { return id >= 1 && id <= static_cast<LabelId>(num_units()); }

  std::vector<LabelId> encode(std::span<const std::string> units) const;
  std::vector<LabelId> encode_sentence(std::string_view text,
                                       OovPolicy policy = OovPolicy::kReject) const;

  // "<name> <id>" per line, ids ascending from 0.
  void write(std::ostream& out) const;
  static UnitTable read(std::istream& in);

 private:
  SubwordVocab vocab_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, LabelId> ids_;
};

// Decoder output column for a label id.
inline std::size_t decoder_index(LabelId id) { return static_cast<std::size_t>(id - 1); }
inline LabelId decoder_label(std::size_t index) { return static_cast<LabelId>(index + 1); }

}  // namespace hasr
