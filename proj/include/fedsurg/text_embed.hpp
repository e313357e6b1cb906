#pragma once

// Per-site conditioning vectors. Prompts are embedded with a hash-seeded
// Gaussian draw so every distinct prompt maps to a fixed unit vector without
// any pretrained encoder; externally computed embeddings can be loaded from
// TDF files instead.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fedsurg/tensor.hpp"

namespace fedsurg::text {

inline constexpr std::size_t kDefaultDim = 64;

enum class IndicatorKind { text, one_hot, random };

std::string_view to_string(IndicatorKind kind);
IndicatorKind parse_indicator_kind(std::string_view name);

struct TextIndicator {
  Tensor vector;
  IndicatorKind kind = IndicatorKind::text;
  /// Prompt string or, for loaded embeddings, the file path.
  std::string source;
  std::size_t site = 0;
  std::uint64_t seed = 0;

  std::size_t dim() const { return vector.size(); }
};

/// "Dataset: {name}, Task: {task}, Label: {a, b, c}"
std::string site_prompt(std::string_view dataset, std::string_view task, const std::vector<std::string>& labels);

TextIndicator embed_prompt(std::string_view prompt, std::size_t dim = kDefaultDim);

TextIndicator make_indicator(IndicatorKind kind, std::size_t site, std::string_view prompt, std::size_t site_count,
                             std::size_t dim, std::uint64_t seed);

TextIndicator load_embedding_file(const std::filesystem::path& path);

/// A zero vector of the given dimension; used where language guidance is
/// ablated but the network shape must stay unchanged.
TextIndicator null_indicator(std::size_t dim);

}  // namespace fedsurg::text
