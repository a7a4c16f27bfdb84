#pragma once
// Skeleton ingestion, Spine-Base normalization, window assembly, class
// weighting, fold splitting and a seeded synthetic dataset generator.
//
// Class labels are 0-based in memory (0..6) and 1-based in files (1..7).

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "sttn/tensor.hpp"

namespace sttn {

inline constexpr int kJointCount = 25;
inline constexpr Index kNumClasses = 7;
inline constexpr Index kSpineBase = 0;

using Joint = std::array<double, 3>;

// One Kinect-II frame; joints follow the SDK order with Spine Base first.
struct SkeletonFrame {
    std::string sequence_id;
    std::int64_t frame_index = 0;
    std::array<Joint, kJointCount> joints{};
    Index label = 0;

    bool operator==(const SkeletonFrame&) const = default;
};

struct WindowSample {
    DenseTensor tensor;  // C x T x 3
    Index label = 0;     // label of the center frame
    std::string sequence_id;
    std::int64_t center_frame = 0;
};

// Named joint subsets (joint indices into the 25-joint Kinect layout):
//   "all24"       every joint except Spine Base
//   "no_hands20"  additionally drops HandTip/Thumb left and right (21..24)
std::vector<Index> joint_subset_preset(const std::string& name);

// Rows are joints[c] - joints[Spine Base] for c in `subset`.
MatrixXd normalize_frame(const SkeletonFrame& frame, std::span<const Index> subset);

struct WindowingResult {
    std::vector<WindowSample> windows;
    Index skipped_sequences = 0;  // sequences shorter than T
};

// Stride-1 windows of T consecutive frames, never crossing a sequence
// boundary. Frames must be grouped by sequence (as load_dataset returns
// them). T must be odd; the label is the frame at 1-based position (T+1)/2.
WindowingResult make_windows(std::span<const SkeletonFrame> frames, Index steps, std::span<const Index> subset);

struct ClassWeights {
    std::vector<double> weights;  // N / (L * count_l); 0 for absent classes
    std::vector<Index> absent;
};

ClassWeights class_weights(std::span<const Index> labels, Index num_classes = kNumClasses);

struct FoldRoles {
    std::vector<Index> train;
    std::vector<Index> validation;
    std::vector<Index> test;
};

struct DatasetSplit {
    std::vector<std::vector<Index>> folds;  // disjoint, covering 0..n-1
    std::vector<FoldRoles> roles;           // one per fold
};

// Seeded shuffle into `k` folds whose sizes differ by at most one (the first
// n % k folds are larger). Fold f is the test set of round f; the remaining
// folds, concatenated in fold order, form the training portion, whose last
// floor(len / 10) indices (at least one) are held out for validation.
DatasetSplit split_kfold(Index n, std::uint64_t seed, Index k = 10);
inline DatasetSplit split_10fold(Index n, std::uint64_t seed) { return split_kfold(n, seed, 10); }

// ---- synthetic data -------------------------------------------------------

struct JointOffset {
    Index joint = 0;
    Joint offset{};
};

struct Oscillation {
    Index joint = 0;
    Joint amplitude{};        // meters, per axis
    double frequency_hz = 1.0;
};

struct SyntheticClass {
    Index label = 0;          // 0-based
    Index frames = 0;         // total frames of this class across sequences
    std::vector<JointOffset> pose_offsets;
    std::vector<Oscillation> oscillations;
};

struct SyntheticSpec {
    double frame_rate = 30.0;
    double noise_sigma = 0.005;
    Index sequences = 4;
    Index segment_frames = 90;  // contiguous frames per labeled segment
    double root_jitter = 0.5;   // std-dev of the per-sequence global offset
    std::vector<SyntheticClass> classes;

    void validate() const;
};

// Canonical standing pose used as every class's base skeleton.
const std::array<Joint, kJointCount>& reference_pose();

// Frame stream determined by (spec, seed). Per sequence s (ids "SYN-00",
// "SYN-01", ...), random draws happen in this order:
//   1. three normals scaled by root_jitter: the sequence's global offset;
//   2. one Fisher-Yates shuffle of the sequence's segment list, which holds
//      for every class (in spec order) its frames for this sequence cut into
//      runs of segment_frames;
//   3. per segment, one uniform phase in [0, 2 pi) per oscillation, then per
//      frame and joint three normals scaled by noise_sigma.
// Class c contributes frames / sequences frames to each sequence, the first
// frames % sequences sequences taking one extra.
std::vector<SkeletonFrame> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Presets: "two_frequency", "imbalanced7", "static_poses".
SyntheticSpec synthetic_preset(const std::string& name);

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticSpec& spec);

// Classes 0 and 1 share one mean pose and differ only in the oscillation
// frequency of the right arm, so no single frame tells them apart.
SyntheticSpec two_frequency_spec(Index frames_per_class, double slow_hz, double fast_hz);

// ---- JSON-lines dataset files ----------------------------------------------
//
// One frame per line:
//   {"sequence_id": "...", "frame_index": 0, "label": 1, "joints": [[x,y,z], ... x25]}

// Validates every record; frame_index must strictly increase within a
// sequence in file order. Returns frames stably sorted by sequence_id.
std::vector<SkeletonFrame> parse_dataset(std::istream& in);
std::vector<SkeletonFrame> load_dataset(const std::string& path);

void write_dataset(std::ostream& out, std::span<const SkeletonFrame> frames);
void save_dataset(const std::string& path, std::span<const SkeletonFrame> frames);

}  // namespace sttn
