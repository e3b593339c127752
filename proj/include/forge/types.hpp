#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace forge {

enum class DataKind { kObjectCentric, kLocationCentric, kAtmosphereCentric, kConversation };

inline constexpr std::array<DataKind, 4> kAllDataKinds = {
    DataKind::kObjectCentric, DataKind::kLocationCentric,
    DataKind::kAtmosphereCentric, DataKind::kConversation};

// "object", "location", "atmosphere", "conversation"
std::string_view to_string(DataKind kind);
DataKind parse_data_kind(std::string_view s);

enum class Language { kEn, kKo, kZh };

inline constexpr std::array<Language, 3> kAllLanguages = {Language::kEn, Language::kKo,
                                                          Language::kZh};

std::string_view to_string(Language lang);
Language parse_language(std::string_view s);

// Currency held as integer micro-dollars so ledger sums are exact.
class Money {
 public:
  constexpr Money() = default;
  static constexpr Money from_micros(std::int64_t micros) { return Money(micros); }
  static Money from_dollars(double dollars);

  constexpr std::int64_t micros() const { return micros_; }
  double dollars() const { return static_cast<double>(micros_) / 1e6; }

  constexpr Money& operator+=(Money o) {
    micros_ += o.micros_;
    return *this;
  }
  friend constexpr Money operator+(Money a, Money b) { return Money(a.micros_ + b.micros_); }
  friend constexpr Money operator*(Money a, std::int64_t n) { return Money(a.micros_ * n); }
  friend constexpr auto operator<=>(Money, Money) = default;

 private:
  constexpr explicit Money(std::int64_t micros) : micros_(micros) {}
  std::int64_t micros_ = 0;
};

}  // namespace forge
