#include "sttn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "sttn/random.hpp"

namespace sttn {

using nlohmann::json;

std::vector<Index> joint_subset_preset(const std::string& name) {
    std::vector<Index> subset;
    if (name == "all24") {
        for (Index j = 1; j < kJointCount; ++j) subset.push_back(j);
    } else if (name == "no_hands20") {
        for (Index j = 1; j <= 20; ++j) subset.push_back(j);
    } else {
        throw ConfigError("unknown joint subset '" + name + "' (expected all24 or no_hands20)", "joint_subset");
    }
    return subset;
}

MatrixXd normalize_frame(const SkeletonFrame& frame, std::span<const Index> subset) {
    MatrixXd out(static_cast<Index>(subset.size()), 3);
    const Joint& root = frame.joints[kSpineBase];
    for (std::size_t r = 0; r < subset.size(); ++r) {
        const Index c = subset[r];
        if (c == kSpineBase) throw ConfigError("joint subset must not contain Spine Base (joint 0)", "joint_subset");
        if (c < 0 || c >= kJointCount) {
            throw ConfigError("joint index " + std::to_string(c) + " outside 0..24", "joint_subset");
        }
        const Joint& p = frame.joints[static_cast<std::size_t>(c)];
        for (int a = 0; a < 3; ++a) out(static_cast<Index>(r), a) = p[a] - root[a];
    }
    return out;
}

WindowingResult make_windows(std::span<const SkeletonFrame> frames, Index steps, std::span<const Index> subset) {
    if (steps < 1 || steps % 2 == 0) {
        throw ConfigError("window length T must be a positive odd number, got " + std::to_string(steps), "T");
    }
    const Index channels = static_cast<Index>(subset.size());
    WindowingResult result;
    std::size_t begin = 0;
    while (begin < frames.size()) {
        std::size_t end = begin;
        while (end < frames.size() && frames[end].sequence_id == frames[begin].sequence_id) ++end;
        const Index len = static_cast<Index>(end - begin);
        if (len < steps) {
            ++result.skipped_sequences;
        } else {
            std::vector<MatrixXd> normalized;
            normalized.reserve(static_cast<std::size_t>(len));
            for (std::size_t i = begin; i < end; ++i) normalized.push_back(normalize_frame(frames[i], subset));
            for (Index start = 0; start + steps <= len; ++start) {
                WindowSample w;
                w.tensor = DenseTensor(Shape{channels, steps, 3});
                auto d = w.tensor.data();
                for (Index c = 0; c < channels; ++c)
                    for (Index t = 0; t < steps; ++t)
                        for (Index a = 0; a < 3; ++a)
                            d[static_cast<std::size_t>((c * steps + t) * 3 + a)] =
                                normalized[static_cast<std::size_t>(start + t)](c, a);
                const auto& center = frames[begin + static_cast<std::size_t>(start + steps / 2)];
                w.label = center.label;
                w.sequence_id = center.sequence_id;
                w.center_frame = center.frame_index;
                result.windows.push_back(std::move(w));
            }
        }
        begin = end;
    }
    return result;
}

ClassWeights class_weights(std::span<const Index> labels, Index num_classes) {
    std::vector<Index> counts(static_cast<std::size_t>(num_classes), 0);
    for (Index l : labels) {
        if (l < 0 || l >= num_classes) throw DataError("label " + std::to_string(l) + " outside class range");
        ++counts[static_cast<std::size_t>(l)];
    }
    ClassWeights out;
    out.weights.assign(static_cast<std::size_t>(num_classes), 0.0);
    const double n = static_cast<double>(labels.size());
    for (Index l = 0; l < num_classes; ++l) {
        const Index c = counts[static_cast<std::size_t>(l)];
        if (c == 0) {
            out.absent.push_back(l);
        } else {
            out.weights[static_cast<std::size_t>(l)] = n / (static_cast<double>(num_classes) * static_cast<double>(c));
        }
    }
    return out;
}

DatasetSplit split_kfold(Index n, std::uint64_t seed, Index k) {
    if (k < 2) throw ConfigError("fold count must be at least 2", "folds");
    if (n < k) {
        throw ConfigError("dataset of " + std::to_string(n) + " windows cannot be split into " + std::to_string(k) +
                              " folds",
                          "dataset");
    }
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    SplitMix64 rng(seed);
    rng.shuffle(std::span(perm));

    DatasetSplit split;
    Index pos = 0;
    for (Index f = 0; f < k; ++f) {
        const Index size = n / k + (f < n % k ? 1 : 0);
        split.folds.emplace_back(perm.begin() + pos, perm.begin() + pos + size);
        pos += size;
    }
    for (Index f = 0; f < k; ++f) {
        FoldRoles roles;
        roles.test = split.folds[static_cast<std::size_t>(f)];
        std::vector<Index> portion;
        for (Index g = 0; g < k; ++g)
            if (g != f) portion.insert(portion.end(), split.folds[static_cast<std::size_t>(g)].begin(),
                                       split.folds[static_cast<std::size_t>(g)].end());
        const auto n_val = static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, portion.size() / 10));
        roles.train.assign(portion.begin(), portion.end() - n_val);
        roles.validation.assign(portion.end() - n_val, portion.end());
        split.roles.push_back(std::move(roles));
    }
    return split;
}

// ---- synthetic --------------------------------------------------------------

const std::array<Joint, kJointCount>& reference_pose() {
    static const std::array<Joint, kJointCount> pose{{
        {0.00, 0.00, 0.00},    // SpineBase
        {0.00, 0.30, 0.00},    // SpineMid
        {0.00, 0.55, 0.00},    // Neck
        {0.00, 0.70, 0.00},    // Head
        {-0.18, 0.50, 0.00},   // ShoulderLeft
        {-0.25, 0.25, 0.00},   // ElbowLeft
        {-0.28, 0.02, 0.00},   // WristLeft
        {-0.29, -0.05, 0.00},  // HandLeft
        {0.18, 0.50, 0.00},    // ShoulderRight
        {0.25, 0.25, 0.00},    // ElbowRight
        {0.28, 0.02, 0.00},    // WristRight
        {0.29, -0.05, 0.00},   // HandRight
        {-0.09, -0.02, 0.00},  // HipLeft
        {-0.10, -0.45, 0.00},  // KneeLeft
        {-0.10, -0.85, 0.00},  // AnkleLeft
        {-0.10, -0.90, 0.08},  // FootLeft
        {0.09, -0.02, 0.00},   // HipRight
        {0.10, -0.45, 0.00},   // KneeRight
        {0.10, -0.85, 0.00},   // AnkleRight
        {0.10, -0.90, 0.08},   // FootRight
        {0.00, 0.48, 0.00},    // SpineShoulder
        {-0.30, -0.12, 0.00},  // HandTipLeft
        {-0.26, -0.07, 0.03},  // ThumbLeft
        {0.30, -0.12, 0.00},   // HandTipRight
        {0.26, -0.07, 0.03},   // ThumbRight
    }};
    return pose;
}

void SyntheticSpec::validate() const {
    std::vector<std::string> problems;
    if (!(frame_rate > 0)) problems.push_back("frame_rate must be positive");
    if (!(noise_sigma >= 0)) problems.push_back("noise_sigma must be non-negative");
    if (sequences < 1) problems.push_back("sequences must be >= 1");
    if (segment_frames < 1) problems.push_back("segment_frames must be >= 1");
    if (!(root_jitter >= 0)) problems.push_back("root_jitter must be non-negative");
    if (classes.empty()) problems.push_back("at least one class is required");
    for (const auto& c : classes) {
        const std::string tag = "class " + std::to_string(c.label + 1) + ": ";
        if (c.label < 0 || c.label >= kNumClasses) problems.push_back(tag + "label outside 1..7");
        if (c.frames < 0) problems.push_back(tag + "frames must be >= 0");
        for (const auto& o : c.pose_offsets)
            if (o.joint < 0 || o.joint >= kJointCount) problems.push_back(tag + "pose offset joint outside 0..24");
        for (const auto& o : c.oscillations) {
            if (o.joint < 0 || o.joint >= kJointCount) problems.push_back(tag + "oscillation joint outside 0..24");
            if (!(o.frequency_hz >= 0)) problems.push_back(tag + "oscillation frequency must be >= 0");
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid synthetic spec:";
        for (auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg, "spec");
    }
}

std::vector<SkeletonFrame> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    SplitMix64 rng(seed);
    std::vector<SkeletonFrame> out;

    std::vector<std::array<Joint, kJointCount>> base;
    for (const auto& c : spec.classes) {
        auto pose = reference_pose();
        for (const auto& o : c.pose_offsets)
            for (int a = 0; a < 3; ++a) pose[static_cast<std::size_t>(o.joint)][a] += o.offset[a];
        base.push_back(pose);
    }

    for (Index s = 0; s < spec.sequences; ++s) {
        Joint root{0.0, 0.0, 2.5};
        for (int a = 0; a < 3; ++a) root[a] += spec.root_jitter * rng.normal();

        struct Segment {
            std::size_t cls;
            Index frames;
        };
        std::vector<Segment> segments;
        for (std::size_t c = 0; c < spec.classes.size(); ++c) {
            const Index total = spec.classes[c].frames;
            Index mine = total / spec.sequences + (s < total % spec.sequences ? 1 : 0);
            while (mine > 0) {
                const Index len = std::min(mine, spec.segment_frames);
                segments.push_back({c, len});
                mine -= len;
            }
        }
        rng.shuffle(std::span(segments));

        char id[32];
        std::snprintf(id, sizeof(id), "SYN-%02lld", static_cast<long long>(s));
        std::int64_t frame_index = 0;
        for (const auto& seg : segments) {
            const auto& cls = spec.classes[seg.cls];
            std::vector<double> phase;
            for (std::size_t o = 0; o < cls.oscillations.size(); ++o)
                phase.push_back(2.0 * std::numbers::pi * rng.uniform());
            for (Index f = 0; f < seg.frames; ++f, ++frame_index) {
                SkeletonFrame frame;
                frame.sequence_id = id;
                frame.frame_index = frame_index;
                frame.label = cls.label;
                frame.joints = base[seg.cls];
                const double t = static_cast<double>(frame_index) / spec.frame_rate;
                for (std::size_t o = 0; o < cls.oscillations.size(); ++o) {
                    const auto& osc = cls.oscillations[o];
                    const double wave = std::sin(2.0 * std::numbers::pi * osc.frequency_hz * t + phase[o]);
                    for (int a = 0; a < 3; ++a) frame.joints[static_cast<std::size_t>(osc.joint)][a] += osc.amplitude[a] * wave;
                }
                for (auto& joint : frame.joints)
                    for (int a = 0; a < 3; ++a) joint[a] += root[a] + spec.noise_sigma * rng.normal();
                out.push_back(std::move(frame));
            }
        }
    }
    return out;
}

namespace {

// Right arm chain: elbow, wrist, hand, hand tip, thumb.
constexpr std::array<Index, 5> kRightArm{9, 10, 11, 23, 24};
constexpr std::array<Index, 5> kLeftArm{5, 6, 7, 21, 22};

void swing(SyntheticClass& c, std::span<const Index> joints, Joint amplitude, double hz) {
    for (std::size_t k = 0; k < joints.size(); ++k) {
        const double scale = 0.5 + 0.5 * static_cast<double>(k + 1) / static_cast<double>(joints.size());
        c.oscillations.push_back({joints[k], {amplitude[0] * scale, amplitude[1] * scale, amplitude[2] * scale}, hz});
    }
}

void shift(SyntheticClass& c, std::span<const Index> joints, Joint offset) {
    for (Index j : joints) c.pose_offsets.push_back({j, offset});
}

}  // namespace

SyntheticSpec two_frequency_spec(Index frames_per_class, double slow_hz, double fast_hz) {
    SyntheticSpec spec;
    spec.noise_sigma = 0.005;
    spec.sequences = 4;
    spec.segment_frames = 120;
    for (Index l = 0; l < 2; ++l) {
        SyntheticClass c;
        c.label = l;
        c.frames = frames_per_class;
        swing(c, kRightArm, {0.12, 0.10, 0.06}, l == 0 ? slow_hz : fast_hz);
        spec.classes.push_back(std::move(c));
    }
    return spec;
}

SyntheticSpec synthetic_preset(const std::string& name) {
    if (name == "two_frequency") return two_frequency_spec(600, 0.4, 2.0);
    if (name == "static_poses") {
        SyntheticSpec spec;
        spec.noise_sigma = 0.0;
        spec.sequences = 2;
        spec.segment_frames = 40;
        const std::array<Joint, 3> raise{{{0.0, 0.35, 0.0}, {0.0, 0.0, 0.30}, {0.15, 0.0, 0.0}}};
        for (Index l = 0; l < 3; ++l) {
            SyntheticClass c;
            c.label = l;
            c.frames = 120;
            shift(c, kRightArm, raise[static_cast<std::size_t>(l)]);
            spec.classes.push_back(std::move(c));
        }
        return spec;
    }
    if (name == "imbalanced7") {
        // Class totals of the reference corpus: 908, 1503, 134, 104, 97, 114, 437.
        const std::array<Index, 7> totals{908, 1503, 134, 104, 97, 114, 437};
        SyntheticSpec spec;
        spec.noise_sigma = 0.01;
        spec.sequences = 10;
        spec.segment_frames = 30;
        for (Index l = 0; l < 7; ++l) {
            SyntheticClass c;
            c.label = l;
            c.frames = totals[static_cast<std::size_t>(l)];
            const double lift = 0.05 * static_cast<double>(l);
            shift(c, kRightArm, {0.0, lift, 0.02 * static_cast<double>(l % 3)});
            shift(c, kLeftArm, {0.0, 0.3 - lift, 0.0});
            swing(c, l % 2 ? kRightArm : kLeftArm, {0.06, 0.05, 0.03}, 0.5 + 0.4 * static_cast<double>(l));
            spec.classes.push_back(std::move(c));
        }
        return spec;
    }
    throw ConfigError("unknown synthetic preset '" + name + "' (expected two_frequency, imbalanced7 or static_poses)",
                      "preset");
}

namespace {

Joint joint_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-element coordinate array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

SyntheticSpec synthetic_spec_from_json(const json& j) {
    try {
        SyntheticSpec spec;
        spec.frame_rate = j.value("frame_rate", spec.frame_rate);
        spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
        spec.sequences = j.value("sequences", spec.sequences);
        spec.segment_frames = j.value("segment_frames", spec.segment_frames);
        spec.root_jitter = j.value("root_jitter", spec.root_jitter);
        for (const auto& jc : j.at("classes")) {
            SyntheticClass c;
            c.label = jc.at("label").get<Index>() - 1;
            c.frames = jc.value("frames", Index{0});
            for (const auto& o : jc.value("pose_offsets", json::array()))
                c.pose_offsets.push_back({o.at("joint").get<Index>(), joint_from_json(o.at("offset"))});
            for (const auto& o : jc.value("oscillations", json::array()))
                c.oscillations.push_back(
                    {o.at("joint").get<Index>(), joint_from_json(o.at("amplitude")), o.at("frequency_hz").get<double>()});
            spec.classes.push_back(std::move(c));
        }
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what(), "spec");
    }
}

json to_json(const SyntheticSpec& spec) {
    json j;
    j["frame_rate"] = spec.frame_rate;
    j["noise_sigma"] = spec.noise_sigma;
    j["sequences"] = spec.sequences;
    j["segment_frames"] = spec.segment_frames;
    j["root_jitter"] = spec.root_jitter;
    j["classes"] = json::array();
    for (const auto& c : spec.classes) {
        json jc;
        jc["label"] = c.label + 1;
        jc["frames"] = c.frames;
        jc["pose_offsets"] = json::array();
        for (const auto& o : c.pose_offsets) jc["pose_offsets"].push_back({{"joint", o.joint}, {"offset", o.offset}});
        jc["oscillations"] = json::array();
        for (const auto& o : c.oscillations)
            jc["oscillations"].push_back(
                {{"joint", o.joint}, {"amplitude", o.amplitude}, {"frequency_hz", o.frequency_hz}});
        j["classes"].push_back(std::move(jc));
    }
    return j;
}

// ---- JSON-lines I/O ---------------------------------------------------------

namespace {

SkeletonFrame frame_from_json(const json& j, std::size_t record) {
    if (!j.is_object()) throw ParseError(record, "record is not a JSON object");
    for (const char* key : {"sequence_id", "frame_index", "label", "joints"})
        if (!j.contains(key)) throw ParseError(record, std::string("missing field '") + key + "'");
    SkeletonFrame f;
    try {
        f.sequence_id = j.at("sequence_id").get<std::string>();
        f.frame_index = j.at("frame_index").get<std::int64_t>();
        f.label = j.at("label").get<Index>() - 1;
    } catch (const json::exception& e) {
        throw ParseError(record, e.what());
    }
    if (f.label < 0 || f.label >= kNumClasses) throw ParseError(record, "label outside 1..7");
    const auto& joints = j.at("joints");
    if (!joints.is_array() || joints.size() != kJointCount) {
        throw ParseError(record, "expected 25 joints, got " + std::to_string(joints.is_array() ? joints.size() : 0));
    }
    for (std::size_t k = 0; k < joints.size(); ++k) {
        const auto& p = joints[k];
        if (!p.is_array() || p.size() != 3) throw ParseError(record, "joint " + std::to_string(k) + " is not [x,y,z]");
        for (std::size_t a = 0; a < 3; ++a) {
            if (!p[a].is_number()) throw ParseError(record, "joint " + std::to_string(k) + " has a non-numeric coordinate");
            const double v = p[a].get<double>();
            if (!std::isfinite(v)) throw ParseError(record, "joint " + std::to_string(k) + " is not finite");
            f.joints[k][a] = v;
        }
    }
    return f;
}

}  // namespace

std::vector<SkeletonFrame> parse_dataset(std::istream& in) {
    std::vector<SkeletonFrame> frames;
    std::map<std::string, std::int64_t> last_index;
    std::string line;
    std::size_t record = 0;
    while (std::getline(in, line)) {
        ++record;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(record, e.what());
        }
        SkeletonFrame f = frame_from_json(j, record);
        auto [it, fresh] = last_index.try_emplace(f.sequence_id, f.frame_index);
        if (!fresh) {
            if (f.frame_index <= it->second) {
                throw DataError("record " + std::to_string(record) + ": frame_index " + std::to_string(f.frame_index) +
                                " does not increase within sequence '" + f.sequence_id + "'");
            }
            it->second = f.frame_index;
        }
        frames.push_back(std::move(f));
    }
    std::stable_sort(frames.begin(), frames.end(),
                     [](const SkeletonFrame& a, const SkeletonFrame& b) { return a.sequence_id < b.sequence_id; });
    return frames;
}

std::vector<SkeletonFrame> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset '" + path + "'");
    return parse_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const SkeletonFrame> frames) {
    for (const auto& f : frames) {
        json j;
        j["sequence_id"] = f.sequence_id;
        j["frame_index"] = f.frame_index;
        j["label"] = f.label + 1;
        j["joints"] = f.joints;
        out << j.dump() << '\n';
    }
}

void save_dataset(const std::string& path, std::span<const SkeletonFrame> frames) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dataset '" + path + "'");
    write_dataset(out, frames);
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace sttn
