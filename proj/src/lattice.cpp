#include "rdfilter/lattice.hpp"

#include <string>

#include "rdfilter/errors.hpp"

namespace rdf {

Lattice::Lattice(int side, double spacing) : side_(side), spacing_(spacing) {
    if (side < 1)
        throw UsageError("lattice side must be >= 1, got " + std::to_string(side));
    if (!(spacing > 0.0))
        throw UsageError("lattice spacing must be > 0, got " + std::to_string(spacing));

    const int n = side_ * side_;
    nbr_.assign(static_cast<std::size_t>(4) * n, -1);
    deg_.assign(n, 0);
    for (int r = 0; r < side_; ++r) {
        for (int c = 0; c < side_; ++c) {
            const int v = r * side_ + c;
            std::int32_t* slots = &nbr_[static_cast<std::size_t>(4) * v];
            std::uint8_t d = 0;
            if (r > 0) slots[0] = v - side_, ++d;
            if (c > 0) slots[1] = v - 1, ++d;
            if (c < side_ - 1) slots[2] = v + 1, ++d;
            if (r < side_ - 1) slots[3] = v + side_, ++d;
            deg_[v] = d;
        }
    }
}

int Lattice::flat_index(Site s) const {
    if (!contains(s))
        throw UsageError("site (" + std::to_string(s.v1) + ", " + std::to_string(s.v2) +
                         ") outside lattice of side " + std::to_string(side_));
    return (s.v1 - 1) * side_ + (s.v2 - 1);
}

Site Lattice::site_at(int flat) const {
    if (flat < 0 || flat >= n_sites())
        throw UsageError("flat index " + std::to_string(flat) + " outside [0, " +
                         std::to_string(n_sites()) + ")");
    return Site{flat / side_ + 1, flat % side_ + 1};
}

std::vector<Site> Lattice::neighbors(Site s) const {
    const int v = flat_index(s);
    std::vector<Site> out;
    out.reserve(4);
    const std::int32_t* slots = &nbr_[static_cast<std::size_t>(4) * v];
    for (int k = 0; k < 4; ++k)
        if (slots[k] >= 0) out.push_back(site_at(slots[k]));
    return out;
}

void laplacian(const Lattice& lat, std::span<const double> field, std::span<double> out) {
    const int n = lat.n_sites();
    if (static_cast<int>(field.size()) != n || static_cast<int>(out.size()) != n)
        throw UsageError("laplacian: field length " + std::to_string(field.size()) +
                         " does not match lattice with " + std::to_string(n) + " sites");
    const double inv_h2 = 1.0 / (lat.spacing() * lat.spacing());
    const std::int32_t* nbr = lat.neighbor_table().data();
    for (int v = 0; v < n; ++v) {
        const std::int32_t* slots = &nbr[static_cast<std::size_t>(4) * v];
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
            if (slots[k] >= 0) acc += field[slots[k]] - field[v];
        out[v] = acc * inv_h2;
    }
}

std::vector<double> laplacian(const Lattice& lat, std::span<const double> field) {
    std::vector<double> out(lat.n_sites());
    laplacian(lat, field, out);
    return out;
}

int site_to_flat(const Lattice& lat, Site s, int species, int n_species) {
    if (n_species < 1)
        throw UsageError("n_species must be >= 1, got " + std::to_string(n_species));
    if (species < 1 || species > n_species)
        throw UsageError("species index " + std::to_string(species) + " outside [1, " +
                         std::to_string(n_species) + "]");
    return (species - 1) * lat.n_sites() + lat.flat_index(s);
}

BlockPartition BlockPartition::single_block(int n_sites) {
    if (n_sites < 1)
        throw UsageError("single_block: n_sites must be >= 1");
    BlockPartition p;
    p.block_side = 0;
    p.blocks.resize(1);
    p.blocks[0].resize(n_sites);
    for (int v = 0; v < n_sites; ++v) p.blocks[0][v] = v;
    return p;
}

BlockPartition make_partition(const Lattice& lat, int block_side) {
    const int side = lat.side();
    if (block_side < 1 || block_side > side)
        throw UsageError("block side must be in [1, " + std::to_string(side) + "], got " +
                         std::to_string(block_side));
    if (side % block_side != 0)
        throw UsageError("block side " + std::to_string(block_side) +
                         " does not divide lattice side " + std::to_string(side));

    const int per_row = side / block_side;
    BlockPartition p;
    p.block_side = block_side;
    p.blocks.resize(static_cast<std::size_t>(per_row) * per_row);
    for (int br = 0; br < per_row; ++br) {
        for (int bc = 0; bc < per_row; ++bc) {
            auto& block = p.blocks[static_cast<std::size_t>(br) * per_row + bc];
            block.reserve(static_cast<std::size_t>(block_side) * block_side);
            for (int r = 0; r < block_side; ++r)
                for (int c = 0; c < block_side; ++c)
                    block.push_back((br * block_side + r) * side + (bc * block_side + c));
        }
    }
    return p;
}

} // namespace rdf
