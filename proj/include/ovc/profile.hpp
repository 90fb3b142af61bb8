#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ovc {

inline constexpr std::size_t kNumBuckets = 10;  // rating buckets 1..10
inline constexpr std::size_t kNumRegions = 10;  // object-level regions per image
inline constexpr std::size_t kGridSide = 5;     // wide global feature is kGridSide x kGridSide x d_g

enum class Profile { desk, full };

/// Feature and layer widths. `full` reproduces the published network; `desk`
/// shrinks every width while keeping each concatenation identity intact.
struct ProfileDims {
  std::size_t global_dim;        // d_g, narrow global feature / wide grid channels
  std::size_t regional_dim;      // d_r
  std::size_t reduced_global;    // FCN_g output, 3 equal conv blocks on the wide path
  std::size_t reduced_regional;  // FCN_r output
  std::size_t node_global;       // FCN_g' output appended to every node
  std::size_t attention_dim;     // rows of W_att
  std::size_t attention_hidden;  // hidden width of the object-attention predictor

  std::size_t node_dim() const noexcept { return reduced_regional + node_global; }
  std::size_t grid_cells() const noexcept { return kGridSide * kGridSide; }

  friend bool operator==(const ProfileDims&, const ProfileDims&) = default;
};

inline constexpr ProfileDims kFullDims{16928, 16928, 6144, 256, 128, 128, 4096};
inline constexpr ProfileDims kDeskDims{64, 32, 48, 8, 4, 8, 16};

inline const ProfileDims& dims_for(Profile p) { return p == Profile::full ? kFullDims : kDeskDims; }

inline std::string_view to_string(Profile p) { return p == Profile::full ? "full" : "desk"; }

inline Profile parse_profile(std::string_view s) {
  if (s == "desk") return Profile::desk;
  if (s == "full") return Profile::full;
  throw std::invalid_argument("unknown profile '" + std::string(s) + "' (expected desk or full)");
}

enum class Split { train, test };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

}  // namespace ovc
