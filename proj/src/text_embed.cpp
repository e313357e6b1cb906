#include "fedsurg/text_embed.hpp"

#include <cmath>

#include "fedsurg/errors.hpp"
#include "fedsurg/rng.hpp"
#include "fedsurg/tdf.hpp"

namespace fedsurg::text {

namespace {

Tensor gaussian_unit_vector(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  Tensor v(Shape{dim});
  for (auto& x : v.data()) x = rng.normal();
  const double norm = l2_norm(v);
  for (auto& x : v.data()) x /= norm;
  return v;
}

}  // namespace

std::string_view to_string(IndicatorKind kind) {
  switch (kind) {
    case IndicatorKind::text:
      return "text";
    case IndicatorKind::one_hot:
      return "one_hot";
    case IndicatorKind::random:
      return "random";
  }
  return "text";
}

IndicatorKind parse_indicator_kind(std::string_view name) {
  if (name == "text") return IndicatorKind::text;
  if (name == "one_hot") return IndicatorKind::one_hot;
  if (name == "random") return IndicatorKind::random;
  throw InputError("unknown indicator kind '" + std::string(name) + "' (valid: text, one_hot, random)");
}

std::string site_prompt(std::string_view dataset, std::string_view task, const std::vector<std::string>& labels) {
  std::string prompt = "Dataset: " + std::string(dataset) + ", Task: " + std::string(task) + ", Label: ";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) prompt += ", ";
    prompt += labels[i];
  }
  return prompt;
}

TextIndicator embed_prompt(std::string_view prompt, std::size_t dim) {
  if (prompt.empty()) throw InputError("embed_prompt: empty prompt");
  if (dim == 0) throw InputError("embed_prompt: dimension must be positive");
  TextIndicator ind;
  ind.seed = fnv1a64(prompt);
  ind.vector = gaussian_unit_vector(ind.seed, dim);
  ind.kind = IndicatorKind::text;
  ind.source = std::string(prompt);
  return ind;
}

TextIndicator make_indicator(IndicatorKind kind, std::size_t site, std::string_view prompt, std::size_t site_count,
                             std::size_t dim, std::uint64_t seed) {
  if (site_count > 0 && site >= site_count) throw InputError("make_indicator: site index out of range");
  TextIndicator ind;
  switch (kind) {
    case IndicatorKind::text:
      ind = embed_prompt(prompt, dim);
      break;
    case IndicatorKind::one_hot:
      if (site >= dim) {
        throw InputError("one_hot indicator needs site < d (site " + std::to_string(site) + ", d " +
                         std::to_string(dim) + ")");
      }
      ind.vector = Tensor(Shape{dim});
      ind.vector[site] = 1.0;
      ind.kind = IndicatorKind::one_hot;
      break;
    case IndicatorKind::random:
      if (dim == 0) throw InputError("random indicator: dimension must be positive");
      ind.vector = gaussian_unit_vector(seed, dim);
      ind.kind = IndicatorKind::random;
      ind.seed = seed;
      break;
  }
  ind.site = site;
  return ind;
}

TextIndicator load_embedding_file(const std::filesystem::path& path) {
  Tensor v = tdf::read(path);
  if (v.rank() != 1) throw FormatError("embedding file must hold a rank-1 tensor, got " + shape_str(v.shape()));
  const double norm = l2_norm(v);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw InputError("embedding file holds a zero or non-finite vector");
  for (auto& x : v.data()) x /= norm;
  TextIndicator ind;
  ind.vector = std::move(v);
  ind.kind = IndicatorKind::text;
  ind.source = path.string();
  return ind;
}

TextIndicator null_indicator(std::size_t dim) {
  TextIndicator ind;
  ind.vector = Tensor(Shape{dim});
  ind.source = "<none>";
  return ind;
}

}  // namespace fedsurg::text
