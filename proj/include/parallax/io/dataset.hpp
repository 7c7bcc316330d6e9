#pragma once

#include <filesystem>
#include <iomanip>

#include "parallax/io/image_io.hpp"
#include "parallax/synth/scenes.hpp"

namespace parallax {

namespace fs = std::filesystem;

// Dataset layout: one directory per triplet holding frame_{1,2,3}.ppm,
// mask_{1,2,3}.pgm (instance indices; omitted when the sample has none),
// depth_{1,2,3}.pfm (NaN = invalid), poses.txt and intrinsics.txt, plus a
// manifest.txt at the root listing samples and their seeds.

namespace detail {

inline std::string format_numbers(const double* v, int n) {
    std::ostringstream os;
    os.precision(17);
    for (int i = 0; i < n; ++i) {
        if (i) os << ' ';
        os << v[i];
    }
    return os.str();
}

}  // namespace detail

inline void save_sample(const fs::path& dir, const SceneSample& s) {
    fs::create_directories(dir);
    for (int f = 0; f < 3; ++f) {
        const std::string n = std::to_string(f + 1);
        write_ppm((dir / ("frame_" + n + ".ppm")).string(), s.triplet.frames[static_cast<size_t>(f)]);
        if (s.triplet.has_masks())
            write_pgm((dir / ("mask_" + n + ".pgm")).string(), s.triplet.masks.maps[static_cast<size_t>(f)]);
        if (s.gt_depth[static_cast<size_t>(f)].defined())
            write_pfm((dir / ("depth_" + n + ".pfm")).string(), s.gt_depth[static_cast<size_t>(f)]);
    }
    std::ofstream poses(dir / "poses.txt");
    check(poses.good(), "save_sample: cannot write poses.txt");
    poses << "ego_1_2 " << detail::format_numbers(s.gt_ego12.v.data(), 6) << '\n';
    poses << "ego_2_3 " << detail::format_numbers(s.gt_ego23.v.data(), 6) << '\n';
    for (const ObjectGT& o : s.objects) {
        poses << "object " << o.id << ' ' << o.category << ' '
              << detail::format_numbers(o.m12.v.data(), 6) << ' '
              << detail::format_numbers(o.m23.v.data(), 6) << ' '
              << detail::format_numbers(o.velocity.data(), 3) << ' ' << o.depth << ' '
              << (o.zero_apparent_motion ? 1 : 0) << '\n';
    }
    std::ofstream intr(dir / "intrinsics.txt");
    intr << s.triplet.k.serialize() << '\n';
    check(intr.good(), "save_sample: cannot write intrinsics.txt");
}

inline SceneSample load_sample(const fs::path& dir) {
    SceneSample s;
    for (int f = 0; f < 3; ++f) {
        const std::string n = std::to_string(f + 1);
        s.triplet.frames[static_cast<size_t>(f)] = read_ppm((dir / ("frame_" + n + ".ppm")).string());
        const fs::path mask_path = dir / ("mask_" + n + ".pgm");
        if (fs::exists(mask_path))
            s.triplet.masks.maps[static_cast<size_t>(f)] = read_pgm(mask_path.string());
        const fs::path depth_path = dir / ("depth_" + n + ".pfm");
        if (fs::exists(depth_path)) s.gt_depth[static_cast<size_t>(f)] = read_pfm(depth_path.string());
    }
    {
        std::ifstream intr(dir / "intrinsics.txt");
        check(intr.good(), "load_sample: missing intrinsics.txt in " + dir.string());
        std::string line;
        std::getline(intr, line);
        s.triplet.k = Intrinsics::parse(line);
    }
    std::ifstream poses(dir / "poses.txt");
    if (poses.good()) {
        std::string line;
        while (std::getline(poses, line)) {
            std::istringstream is(line);
            std::string tag;
            is >> tag;
            if (tag == "ego_1_2") {
                for (double& v : s.gt_ego12.v) is >> v;
            } else if (tag == "ego_2_3") {
                for (double& v : s.gt_ego23.v) is >> v;
            } else if (tag == "object") {
                ObjectGT o;
                int zero_flag = 0;
                is >> o.id >> o.category;
                for (double& v : o.m12.v) is >> v;
                for (double& v : o.m23.v) is >> v;
                for (double& v : o.velocity) is >> v;
                is >> o.depth >> zero_flag;
                check(!is.fail(), "load_sample: bad object line '" + line + "'");
                o.zero_apparent_motion = zero_flag != 0;
                s.objects.push_back(o);
                s.triplet.masks.categories[o.id] = o.category;
            }
        }
    }
    return s;
}

inline std::string sample_dir_name(int index) {
    std::ostringstream os;
    os << "sample_" << std::setw(5) << std::setfill('0') << index;
    return os.str();
}

inline void save_dataset(const fs::path& root, const std::vector<SceneSample>& samples,
                         bool sequence = false) {
    fs::create_directories(root);
    std::ofstream manifest(root / "manifest.txt");
    check(manifest.good(), "save_dataset: cannot write manifest in " + root.string());
    manifest << "parallax-dataset 1\n";
    if (sequence) manifest << "sequence 1\n";
    for (size_t i = 0; i < samples.size(); ++i) {
        const std::string name = sample_dir_name(static_cast<int>(i));
        save_sample(root / name, samples[i]);
        bool degenerate = false;
        for (const ObjectGT& o : samples[i].objects) degenerate |= o.zero_apparent_motion;
        manifest << "sample " << name << " seed " << samples[i].seed << " degenerate "
                 << (degenerate ? 1 : 0) << '\n';
    }
    check(manifest.good(), "save_dataset: manifest write failed");
}

struct Dataset {
    std::vector<SceneSample> samples;
    bool sequence = false;  // consecutive overlapping windows of one trajectory
};

inline Dataset load_dataset_info(const fs::path& root) {
    std::ifstream manifest(root / "manifest.txt");
    check(manifest.good(), "load_dataset: missing manifest.txt in " + root.string());
    std::string line;
    check(static_cast<bool>(std::getline(manifest, line)) && line == "parallax-dataset 1",
          "load_dataset: bad manifest header");
    Dataset out;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        if (line == "sequence 1") {
            out.sequence = true;
            continue;
        }
        std::istringstream is(line);
        std::string tag, name, seed_tag;
        uint64_t seed = 0;
        check(static_cast<bool>(is >> tag >> name >> seed_tag >> seed) && tag == "sample",
              "load_dataset: bad manifest line '" + line + "'");
        SceneSample s = load_sample(root / name);
        s.seed = seed;
        out.samples.push_back(std::move(s));
    }
    return out;
}

inline std::vector<SceneSample> load_dataset(const fs::path& root) {
    return load_dataset_info(root).samples;
}

}  // namespace parallax
