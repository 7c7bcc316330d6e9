#pragma once

#include <fstream>

#include "parallax/net/networks.hpp"

namespace parallax {

// Checkpoint layout: a text manifest of `tensor <name> <dims...>` lines
// between a version header and a `data` marker, followed by the raw 64-bit
// little-endian values in manifest order. Deterministic byte-for-byte given
// identical tensors.
inline void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "save_checkpoint: cannot open " + path);
    f << "parallax-checkpoint 1\n";
    for (const auto& [name, t] : tensors) {
        f << "tensor " << name;
        for (int d : t.shape()) f << ' ' << d;
        f << '\n';
    }
    f << "data\n";
    for (const auto& [name, t] : tensors) {
        const auto& v = t.values();
        f.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    check(f.good(), "save_checkpoint: write failed for " + path);
}

inline NamedTensors load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "load_checkpoint: cannot open " + path);
    std::string line;
    check(static_cast<bool>(std::getline(f, line)) && line == "parallax-checkpoint 1",
          "load_checkpoint: bad header in " + path);
    struct Entry {
        std::string name;
        Shape shape;
    };
    std::vector<Entry> entries;
    while (std::getline(f, line)) {
        if (line == "data") break;
        std::istringstream is(line);
        std::string tag, name;
        check(static_cast<bool>(is >> tag >> name) && tag == "tensor",
              "load_checkpoint: bad manifest line '" + line + "'");
        Shape shape;
        int d;
        while (is >> d) shape.push_back(d);
        entries.push_back({name, shape});
    }
    NamedTensors out;
    for (const Entry& e : entries) {
        std::vector<double> v(static_cast<size_t>(numel(e.shape)));
        f.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
        check(f.good(), "load_checkpoint: truncated data for tensor " + e.name);
        out.emplace_back(e.name, Tensor::from(e.shape, std::move(v)));
    }
    return out;
}

// Copies checkpoint values into existing model tensors, matched by name.
// Every destination name must be present with an identical shape.
inline void apply_checkpoint(const NamedTensors& loaded, const NamedTensors& dest) {
    for (const auto& [name, t] : dest) {
        bool found = false;
        for (const auto& [lname, lt] : loaded) {
            if (lname != name) continue;
            check(lt.shape() == t.shape(), "apply_checkpoint: shape mismatch for " + name +
                                               ": " + shape_str(lt.shape()) + " vs " +
                                               shape_str(t.shape()));
            const_cast<Tensor&>(t).mutable_values() = lt.values();
            found = true;
            break;
        }
        check(found, "apply_checkpoint: tensor " + name + " missing from checkpoint");
    }
}

inline bool checkpoint_has_tensor(const NamedTensors& loaded, const std::string& name) {
    for (const auto& [n, t] : loaded)
        if (n == name) return true;
    return false;
}

}  // namespace parallax
