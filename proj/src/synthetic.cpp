#include "klcbl/synthetic.hpp"

#include <array>
#include <cstdio>
#include <string_view>

#include "klcbl/rng.hpp"

namespace klcbl {

namespace {

constexpr std::array<std::string_view, 12> kTelecom = {
    "phone", "call", "sms", "link", "impersonated", "bank", "transfer", "verification", "code", "refund", "app",
    "customer-service"};
constexpr std::array<std::string_view, 12> kNonTelecom = {
    "cash", "shop", "buyer", "counterfeit", "invoice", "deposit", "rent", "landlord", "goods", "contract",
    "face-to-face", "receipt"};
constexpr std::array<std::string_view, 12> kOther = {
    "theft", "bicycle", "dispute", "neighbour", "noise", "injury", "lost", "wallet", "traffic", "window", "fight",
    "parking"};
constexpr std::array<std::string_view, 16> kShared = {
    "the", "victim", "reported", "that", "on", "monday", "afternoon", "police", "station", "yuan", "a", "man",
    "woman", "said", "then", "later"};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& words, SplitMix64& rng) {
  return words[rng.below(N)];
}

}  // namespace

std::vector<RawExample> make_synthetic_dataset(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<RawExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % kNumClasses);
    const std::size_t length = 8 + rng.below(9);
    std::string text;
    for (std::size_t w = 0; w < length; ++w) {
      // roughly one word in three carries the class signal, the middle one always
      std::string_view word;
      if (w == length / 2 || rng.below(3) == 0) {
        word = label == 0 ? pick(kTelecom, rng) : label == 1 ? pick(kNonTelecom, rng) : pick(kOther, rng);
      } else {
        word = pick(kShared, rng);
      }
      if (!text.empty()) text += ' ';
      text += word;
    }
    text += '.';
    char id[32];
    std::snprintf(id, sizeof(id), "s%04zu", i);
    out.push_back({id, std::move(text), label});
  }
  return out;
}

}  // namespace klcbl
