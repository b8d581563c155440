#pragma once

// Square 2-D lattice with 1-based site coordinates, row-major flat indexing,
// nearest-neighbour topology, discrete Laplacian, and block partitions.

#include <cstdint>
#include <span>
#include <vector>

namespace rdf {

// 1-based coordinate pair; v1 indexes rows, v2 columns.
struct Site {
    int v1 = 1;
    int v2 = 1;
};

class Lattice {
public:
    // side >= 1, spacing > 0; anything else is a usage error.
    Lattice(int side, double spacing);

    int side() const noexcept { return side_; }
    double spacing() const noexcept { return spacing_; }
    int n_sites() const noexcept { return side_ * side_; }

    bool contains(Site s) const noexcept {
        return s.v1 >= 1 && s.v1 <= side_ && s.v2 >= 1 && s.v2 <= side_;
    }

    // Row-major 0-based flat index; throws if the site is out of range.
    int flat_index(Site s) const;
    Site site_at(int flat) const;

    // In-lattice sites at Manhattan distance 1, in ascending flat order.
    std::vector<Site> neighbors(Site s) const;

    // Flat adjacency for hot loops: 4 slots per site, -1 where a neighbour
    // falls outside the lattice. Order per site: up, left, right, down.
    const std::vector<std::int32_t>& neighbor_table() const noexcept { return nbr_; }
    const std::vector<std::uint8_t>& neighbor_counts() const noexcept { return deg_; }

private:
    int side_;
    double spacing_;
    std::vector<std::int32_t> nbr_;
    std::vector<std::uint8_t> deg_;
};

// Five-point Laplacian with zero-flux boundaries: the sum over in-lattice
// neighbours of (f[v'] - f[v]) / spacing^2. Field length must equal n_sites.
void laplacian(const Lattice& lat, std::span<const double> field, std::span<double> out);
std::vector<double> laplacian(const Lattice& lat, std::span<const double> field);

// Flat index into a species-major state vector: species s (1-based) occupies
// the contiguous range [(s-1)*n, s*n) where n is the number of lattice sites.
int site_to_flat(const Lattice& lat, Site s, int species, int n_species);

// Disjoint square blocks tiling the lattice, row-major over the block grid;
// sites within each block are listed in ascending flat order.
struct BlockPartition {
    int block_side = 0;
    std::vector<std::vector<std::int32_t>> blocks;

    int n_blocks() const noexcept { return static_cast<int>(blocks.size()); }

    // One block holding every site: reduces the filter to its classical form
    // and covers models without lattice structure.
    static BlockPartition single_block(int n_sites);
};

// block_side must be in [1, side] and divide side exactly.
BlockPartition make_partition(const Lattice& lat, int block_side);

} // namespace rdf
