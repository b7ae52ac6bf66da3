#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace icofact {

using Point3 = Eigen::Vector3d;
// One unit 3-vector per row.
using PointSet = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct MeshCounts {
    std::int64_t faces;
    std::int64_t edges;
    std::int64_t nodes;

    friend bool operator==(const MeshCounts&, const MeshCounts&) = default;
};

// Closed-form face/edge/node counts of the level-n icosphere.
MeshCounts counts(int level);

struct Mesh {
    std::vector<Point3> nodes;
    std::vector<std::array<int, 3>> faces;

    // Unique undirected edges, each stored as (min, max) node index.
    std::vector<std::pair<int, int>> edges() const;
    MeshCounts count() const;
};

// Regular icosahedron inscribed in the unit sphere, faces oriented outward.
Mesh base_icosahedron();

// Normalized centroid of every face, one per row.
PointSet face_centers(const Mesh& mesh);

// Area of the flat triangle spanned by a face's three nodes.
double face_area(const Mesh& mesh, int face);

// Reference to a face of some hierarchy level.
struct FaceRef {
    int level = 0;
    int index = 0;

    friend bool operator==(const FaceRef&, const FaceRef&) = default;
    friend auto operator<=>(const FaceRef&, const FaceRef&) = default;
};

// Nested icosphere triangulations. Level 0 is the icosahedron; each further
// level splits every face into four through its edge midpoints. Child 0 is
// the central triangle, children 1..3 are the corners at parent nodes 0..2.
class IcosphereHierarchy {
public:
    static constexpr int kDefaultLevelCap = 9;

    explicit IcosphereHierarchy(int level_cap = kDefaultLevelCap);

    // Hierarchy with levels 0..depth.
    static IcosphereHierarchy build(int depth, int level_cap = kDefaultLevelCap);

    int max_level() const { return static_cast<int>(levels_.size()) - 1; }
    int level_cap() const { return level_cap_; }
    const Mesh& level(int n) const { return levels_.at(static_cast<std::size_t>(n)); }

    // Parent face (at level - 1) of a face at `level` >= 1.
    int parent_of(int level, int face) const;
    const std::array<int, 4>& children_of(int level, int face) const;
    FaceRef parent_of(FaceRef f) const { return {f.level - 1, parent_of(f.level, f.index)}; }
    std::array<FaceRef, 4> children_of(FaceRef f) const;

    // Level-`target_level` faces descending from `f` (including f itself when
    // target_level == f.level).
    std::vector<int> descendants(FaceRef f, int target_level) const;

    // Appends one level. Throws std::length_error beyond the level cap.
    void add_level();

private:
    int level_cap_;
    std::vector<Mesh> levels_;
    // parents_[n][f]: parent of level-n face f (parents_[0] is empty).
    std::vector<std::vector<int>> parents_;
    // children_[n][f]: children at level n+1 of level-n face f.
    std::vector<std::vector<std::array<int, 4>>> children_;
};

// Returns a copy of `hier` with one more level.
IcosphereHierarchy subdivide(const IcosphereHierarchy& hier);

// Wavefront OBJ with "v" and 1-based "f" records.
void write_obj(std::ostream& os, const Mesh& mesh);
// CSV with header "face_id,x,y,z".
void write_face_centers_csv(std::ostream& os, const PointSet& centers);

}  // namespace icofact
