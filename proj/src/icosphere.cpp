#include "icofact/icosphere.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "format.hpp"

namespace icofact {

MeshCounts counts(int level) {
    if (level < 0) throw std::invalid_argument("counts: level must be >= 0");
    const std::int64_t p = std::int64_t{1} << (2 * level);  // 4^level
    return {20 * p, 30 * p, 10 * p + 2};
}

std::vector<std::pair<int, int>> Mesh::edges() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(faces.size() * 3);
    for (const auto& f : faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            out.emplace_back(std::min(a, b), std::max(a, b));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

MeshCounts Mesh::count() const {
    return {static_cast<std::int64_t>(faces.size()),
            static_cast<std::int64_t>(edges().size()),
            static_cast<std::int64_t>(nodes.size())};
}

Mesh base_icosahedron() {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    Mesh m;
    const double raw[12][3] = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (const auto& r : raw) m.nodes.push_back(Point3(r[0], r[1], r[2]).normalized());

    m.faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };
    for (auto& f : m.faces) {
        const Point3& a = m.nodes[f[0]];
        const Point3& b = m.nodes[f[1]];
        const Point3& c = m.nodes[f[2]];
        if ((b - a).cross(c - a).dot(a + b + c) < 0) std::swap(f[1], f[2]);
    }
    return m;
}

PointSet face_centers(const Mesh& mesh) {
    PointSet centers(static_cast<Eigen::Index>(mesh.faces.size()), 3);
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        const Point3 c = (mesh.nodes[f[0]] + mesh.nodes[f[1]] + mesh.nodes[f[2]]).normalized();
        centers.row(static_cast<Eigen::Index>(i)) = c.transpose();
    }
    return centers;
}

double face_area(const Mesh& mesh, int face) {
    const auto& f = mesh.faces.at(static_cast<std::size_t>(face));
    const Point3& a = mesh.nodes[f[0]];
    return 0.5 * (mesh.nodes[f[1]] - a).cross(mesh.nodes[f[2]] - a).norm();
}

IcosphereHierarchy::IcosphereHierarchy(int level_cap) : level_cap_(level_cap) {
    if (level_cap < 0) throw std::invalid_argument("level cap must be >= 0");
    levels_.push_back(base_icosahedron());
    parents_.emplace_back();
}

IcosphereHierarchy IcosphereHierarchy::build(int depth, int level_cap) {
    if (depth < 0) throw std::invalid_argument("hierarchy depth must be >= 0");
    if (depth > level_cap) {
        throw std::length_error("hierarchy depth " + std::to_string(depth) +
                                " exceeds level cap " + std::to_string(level_cap));
    }
    IcosphereHierarchy h(level_cap);
    while (h.max_level() < depth) h.add_level();
    return h;
}

int IcosphereHierarchy::parent_of(int level, int face) const {
    if (level < 1 || level > max_level()) throw std::out_of_range("parent_of: level has no parent");
    return parents_[static_cast<std::size_t>(level)].at(static_cast<std::size_t>(face));
}

const std::array<int, 4>& IcosphereHierarchy::children_of(int level, int face) const {
    if (level < 0 || level >= max_level()) throw std::out_of_range("children_of: level has no children");
    return children_[static_cast<std::size_t>(level)].at(static_cast<std::size_t>(face));
}

std::array<FaceRef, 4> IcosphereHierarchy::children_of(FaceRef f) const {
    const auto& c = children_of(f.level, f.index);
    return {FaceRef{f.level + 1, c[0]}, FaceRef{f.level + 1, c[1]},
            FaceRef{f.level + 1, c[2]}, FaceRef{f.level + 1, c[3]}};
}

std::vector<int> IcosphereHierarchy::descendants(FaceRef f, int target_level) const {
    if (target_level < f.level || target_level > max_level()) {
        throw std::out_of_range("descendants: target level out of range");
    }
    std::vector<int> current{f.index};
    for (int lvl = f.level; lvl < target_level; ++lvl) {
        std::vector<int> next;
        next.reserve(current.size() * 4);
        for (int face : current) {
            const auto& c = children_of(lvl, face);
            next.insert(next.end(), c.begin(), c.end());
        }
        current = std::move(next);
    }
    return current;
}

void IcosphereHierarchy::add_level() {
    if (max_level() >= level_cap_) {
        throw std::length_error("cannot subdivide beyond level cap " + std::to_string(level_cap_));
    }
    const Mesh& coarse = levels_.back();
    Mesh fine;
    fine.nodes = coarse.nodes;
    fine.faces.reserve(coarse.faces.size() * 4);

    std::unordered_map<std::uint64_t, int> midpoint;
    midpoint.reserve(coarse.faces.size() * 2);
    auto mid = [&](int a, int b) {
        const auto lo = static_cast<std::uint64_t>(std::min(a, b));
        const auto hi = static_cast<std::uint64_t>(std::max(a, b));
        const std::uint64_t key = (lo << 32) | hi;
        auto [it, inserted] = midpoint.try_emplace(key, static_cast<int>(fine.nodes.size()));
        if (inserted) fine.nodes.push_back((coarse.nodes[a] + coarse.nodes[b]).normalized());
        return it->second;
    };

    std::vector<std::array<int, 4>> children(coarse.faces.size());
    std::vector<int> parents(coarse.faces.size() * 4);
    for (std::size_t f = 0; f < coarse.faces.size(); ++f) {
        const auto [a, b, c] = coarse.faces[f];
        const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
        const std::array<std::array<int, 3>, 4> split = {{
            {ab, bc, ca},
            {a, ab, ca},
            {ab, b, bc},
            {ca, bc, c},
        }};
        for (int k = 0; k < 4; ++k) {
            const int id = static_cast<int>(fine.faces.size());
            fine.faces.push_back(split[static_cast<std::size_t>(k)]);
            children[f][static_cast<std::size_t>(k)] = id;
            parents[static_cast<std::size_t>(id)] = static_cast<int>(f);
        }
    }
    children_.push_back(std::move(children));
    parents_.push_back(std::move(parents));
    levels_.push_back(std::move(fine));
}

IcosphereHierarchy subdivide(const IcosphereHierarchy& hier) {
    IcosphereHierarchy out = hier;
    out.add_level();
    return out;
}

void write_obj(std::ostream& os, const Mesh& mesh) {
    std::string line;
    for (const auto& p : mesh.nodes) {
        line = "v ";
        detail::append_number(line, p.x());
        line += ' ';
        detail::append_number(line, p.y());
        line += ' ';
        detail::append_number(line, p.z());
        line += '\n';
        os << line;
    }
    for (const auto& f : mesh.faces) {
        os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
}

void write_face_centers_csv(std::ostream& os, const PointSet& centers) {
    os << "face_id,x,y,z\n";
    std::string line;
    for (Eigen::Index i = 0; i < centers.rows(); ++i) {
        line = std::to_string(i);
        for (int k = 0; k < 3; ++k) {
            line += ',';
            detail::append_number(line, centers(i, k));
        }
        line += '\n';
        os << line;
    }
}

}  // namespace icofact
