#include "dvs/layout/block.hpp"

namespace dvs {

bool BlockBuilder::fits(std::size_t bytes) const { return used_bytes() + 2 + bytes <= kBlockSize; }

bool BlockBuilder::add(ByteSpan payload, bool raw_flag) {
  if (!fits(payload.size())) return false;
  payload_.insert(payload_.end(), payload.begin(), payload.end());
  auto end = static_cast<std::uint16_t>(payload_.size());
  if (raw_flag) end |= kRawFlag;
  ends_.push_back(end);
  return true;
}

std::array<std::uint8_t, kBlockSize> BlockBuilder::finish() {
  std::array<std::uint8_t, kBlockSize> out{};
  store_le(out.data(), static_cast<std::uint16_t>(ends_.size()));
  for (std::size_t i = 0; i < ends_.size(); ++i) store_le(out.data() + 2 + 2 * i, ends_[i]);
  std::memcpy(out.data() + 2 + 2 * ends_.size(), payload_.data(), payload_.size());
  ends_.clear();
  payload_.clear();
  return out;
}

void BlockBuilder::finish_into(Bytes& out) {
  const auto image = finish();
  out.insert(out.end(), image.begin(), image.end());
}

BlockView::BlockView(ByteSpan block, std::string_view address) : block_(block), address_(address) {
  if (block.size() != kBlockSize) throw CorruptionError("block " + address_ + ": wrong size");
  count_ = load_le<std::uint16_t>(block.data());
  const std::size_t header = 2 + 2 * count_;
  if (header > kBlockSize) throw CorruptionError("block " + address_ + ": entry count " + std::to_string(count_));
  std::size_t prev = 0;
  for (std::size_t i = 0; i < count_; ++i) {
    const std::size_t end = load_le<std::uint16_t>(block.data() + 2 + 2 * i) & ~BlockBuilder::kRawFlag;
    if (end < prev || header + end > kBlockSize) {
      throw CorruptionError("block " + address_ + ": bad offset for entry " + std::to_string(i));
    }
    prev = end;
  }
}

BlockEntry BlockView::entry(std::size_t slot) const {
  if (slot >= count_) {
    throw CorruptionError("block " + address_ + ": slot " + std::to_string(slot) + " beyond count " +
                          std::to_string(count_));
  }
  const std::size_t header = 2 + 2 * count_;
  const auto raw_end = load_le<std::uint16_t>(block_.data() + 2 + 2 * slot);
  const std::size_t end = raw_end & ~BlockBuilder::kRawFlag;
  const std::size_t begin = slot == 0 ? 0 : (load_le<std::uint16_t>(block_.data() + 2 * slot) & ~BlockBuilder::kRawFlag);
  return {block_.subspan(header + begin, end - begin), (raw_end & BlockBuilder::kRawFlag) != 0};
}

}  // namespace dvs
