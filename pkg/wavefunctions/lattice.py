"""
Periodic square-lattice geometry for the toric code.

Spins live on bonds. Bond ``2 * (y * lx + x)`` is the horizontal bond h(x, y)
leaving vertex (x, y) eastwards, the next index is the vertical bond v(x, y)
leaving it northwards. Cells are numbered plaquettes first (``y * lx + x``),
then stars (``lx * ly + y * lx + x``).

Cell bond order, which is also the weight-slot order of the ansatz:

    plaquette P(x, y): h(x, y), h(x, y+1), v(x, y), v(x+1, y)   (S, N, W, E)
    star      S(x, y): h(x, y), h(x-1, y), v(x, y), v(x, y-1)   (E, W, N, S)
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .exceptions import LatticeError

HORIZONTAL = 0
VERTICAL = 1

# Positions inside ``Lattice.cell_bonds`` rows
NORTH_BOND_OF_PLAQUETTE = 1
SOUTH_BOND_OF_STAR = 3


class LoopKind(str, enum.Enum):
    DIRECT = 'direct'
    DUAL = 'dual'


@dataclass(frozen=True)
class Lattice:
    """An ``lx`` by ``ly`` torus. Immutable; all index tables are read-only arrays."""

    lx: int
    ly: int

    @property
    def n_spins(self) -> int:
        return 2 * self.lx * self.ly

    @property
    def n_plaquettes(self) -> int:
        return self.lx * self.ly

    @property
    def n_stars(self) -> int:
        return self.lx * self.ly

    @property
    def n_cells(self) -> int:
        return 2 * self.lx * self.ly

    def h(self, x: int, y: int) -> int:
        return 2 * ((y % self.ly) * self.lx + (x % self.lx)) + HORIZONTAL

    def v(self, x: int, y: int) -> int:
        return 2 * ((y % self.ly) * self.lx + (x % self.lx)) + VERTICAL

    def plaquette(self, x: int, y: int) -> int:
        return (y % self.ly) * self.lx + (x % self.lx)

    def star(self, x: int, y: int) -> int:
        return self.n_plaquettes + (y % self.ly) * self.lx + (x % self.lx)

    def is_plaquette(self, cell: int) -> bool:
        self.check_cell(cell)
        return cell < self.n_plaquettes

    def cell_coords(self, cell: int) -> tuple[int, int]:
        self.check_cell(cell)
        site = cell % self.n_plaquettes
        return site % self.lx, site // self.lx

    def bond_coords(self, bond: int) -> tuple[int, int, int]:
        """Return ``(x, y, orientation)`` of a bond index."""
        if not 0 <= bond < self.n_spins:
            raise LatticeError(f"bond {bond} outside [0, {self.n_spins})")
        site, orientation = divmod(bond, 2)
        return site % self.lx, site // self.lx, orientation

    def check_cell(self, cell: int) -> None:
        if not 0 <= int(cell) < self.n_cells:
            raise LatticeError(f"cell {cell} outside [0, {self.n_cells})")

    @cached_property
    def cell_bonds(self) -> np.ndarray:
        """``(n_cells, 4)`` bond indices of every plaquette and star."""
        rows = []
        for y in range(self.ly):
            for x in range(self.lx):
                rows.append((self.h(x, y), self.h(x, y + 1), self.v(x, y), self.v(x + 1, y)))
        for y in range(self.ly):
            for x in range(self.lx):
                rows.append((self.h(x, y), self.h(x - 1, y), self.v(x, y), self.v(x, y - 1)))
        return _frozen(np.array(rows, dtype=np.intp))

    @cached_property
    def bond_cells(self) -> np.ndarray:
        """``(n_spins, 4)`` cells containing each bond: two plaquettes, then two stars."""
        owners = [[] for _ in range(self.n_spins)]
        for cell, bonds in enumerate(self.cell_bonds):
            for bond in bonds:
                owners[bond].append(cell)
        return _frozen(np.array(owners, dtype=np.intp))

    @cached_property
    def incidence(self) -> np.ndarray:
        """``(n_cells, n_spins)`` weight slot (1..4) of each bond in each cell, 0 if absent."""
        table = np.zeros((self.n_cells, self.n_spins), dtype=np.intp)
        for cell, bonds in enumerate(self.cell_bonds):
            table[cell, bonds] = np.arange(1, 5)
        return _frozen(table)

    @cached_property
    def plaquette_bonds(self) -> np.ndarray:
        return self.cell_bonds[: self.n_plaquettes]

    @cached_property
    def star_bonds(self) -> np.ndarray:
        return self.cell_bonds[self.n_plaquettes:]

    def bond_permutation(self, dx: int, dy: int) -> np.ndarray:
        """Bond relabeling induced by translating every coordinate by ``(dx, dy)``."""
        perm = np.empty(self.n_spins, dtype=np.intp)
        for y in range(self.ly):
            for x in range(self.lx):
                perm[self.h(x, y)] = self.h(x + dx, y + dy)
                perm[self.v(x, y)] = self.v(x + dx, y + dy)
        return perm


@dataclass(frozen=True)
class LoopPath:
    """
    A closed path on the direct (cells are stars) or dual (cells are plaquettes)
    lattice. ``incidences`` pairs every loop cell with each loop bond it contains,
    so every bond appears twice.
    """

    kind: LoopKind
    direction: str  # 'x', 'y', 'star' or 'plaquette'
    cells: tuple[int, ...]
    bonds: tuple[int, ...]
    incidences: tuple[tuple[int, int], ...]

    @property
    def length(self) -> int:
        return len(self.bonds)

    @property
    def contractible(self) -> bool:
        return self.direction in ('star', 'plaquette')


@lru_cache(maxsize=32)
def build_lattice(lx: int, ly: int) -> Lattice:
    if int(lx) != lx or int(ly) != ly:
        raise LatticeError(f"lattice dimensions must be integers, got {lx}x{ly}")
    if lx < 2 or ly < 2:
        raise LatticeError(f"lattice must be at least 2x2, got {lx}x{ly}")
    return Lattice(int(lx), int(ly))


def straight_dual_loops(lat: Lattice, direction: str) -> list[LoopPath]:
    """
    Straight non-contractible dual loops. Direction x at row y crosses the
    vertical bonds v(x, y) for all x; direction y at column x crosses h(x, y)
    for all y.
    """
    loops = []
    if direction == 'x':
        for y in range(lat.ly):
            bonds = [lat.v(x, y) for x in range(lat.lx)]
            cells = [lat.plaquette(x, y) for x in range(lat.lx)]
            loops.append(_make_loop(lat, LoopKind.DUAL, 'x', cells, bonds))
    elif direction == 'y':
        for x in range(lat.lx):
            bonds = [lat.h(x, y) for y in range(lat.ly)]
            cells = [lat.plaquette(x, y) for y in range(lat.ly)]
            loops.append(_make_loop(lat, LoopKind.DUAL, 'y', cells, bonds))
    else:
        raise LatticeError(f"direction must be 'x' or 'y', got {direction!r}")
    return loops


def straight_direct_loops(lat: Lattice, direction: str) -> list[LoopPath]:
    """
    Straight non-contractible direct loops. Direction x at row y runs along
    h(x, y) for all x; direction y at column x along v(x, y) for all y.
    """
    loops = []
    if direction == 'x':
        for y in range(lat.ly):
            bonds = [lat.h(x, y) for x in range(lat.lx)]
            cells = [lat.star(x, y) for x in range(lat.lx)]
            loops.append(_make_loop(lat, LoopKind.DIRECT, 'x', cells, bonds))
    elif direction == 'y':
        for x in range(lat.lx):
            bonds = [lat.v(x, y) for y in range(lat.ly)]
            cells = [lat.star(x, y) for y in range(lat.ly)]
            loops.append(_make_loop(lat, LoopKind.DIRECT, 'y', cells, bonds))
    else:
        raise LatticeError(f"direction must be 'x' or 'y', got {direction!r}")
    return loops


def elementary_loop(lat: Lattice, cell: int) -> LoopPath:
    """
    The contractible loop around one cell: around a star it is the dual loop
    through the four plaquettes touching its vertex, around a plaquette the
    direct loop through the stars at its four corners.
    """
    lat.check_cell(cell)
    x, y = lat.cell_coords(cell)
    bonds = [int(b) for b in lat.cell_bonds[cell]]
    if lat.is_plaquette(cell):
        cells = [lat.star(x, y), lat.star(x + 1, y), lat.star(x + 1, y + 1), lat.star(x, y + 1)]
        return _make_loop(lat, LoopKind.DIRECT, 'plaquette', cells, bonds)
    cells = [lat.plaquette(x, y), lat.plaquette(x - 1, y), lat.plaquette(x - 1, y - 1), lat.plaquette(x, y - 1)]
    return _make_loop(lat, LoopKind.DUAL, 'star', cells, bonds)


def loop_generators(lat: Lattice) -> list[LoopPath]:
    """Elementary loops around every cell plus one straight loop per lattice and direction."""
    loops = [elementary_loop(lat, cell) for cell in range(lat.n_cells)]
    loops.append(straight_direct_loops(lat, 'x')[0])
    loops.append(straight_direct_loops(lat, 'y')[0])
    loops.append(straight_dual_loops(lat, 'x')[0])
    loops.append(straight_dual_loops(lat, 'y')[0])
    return loops


def _make_loop(lat, kind, direction, cells, bonds) -> LoopPath:
    bond_set = set(bonds)
    incidences = tuple(
        (int(cell), int(bond))
        for cell in cells
        for bond in lat.cell_bonds[cell]
        if int(bond) in bond_set
    )
    # A closed path enters and leaves each cell through exactly two of its bonds
    if len(incidences) != 2 * len(bonds):
        raise LatticeError(f"{kind.value} loop along {direction} is not closed")
    return LoopPath(
        kind=kind,
        direction=direction,
        cells=tuple(int(c) for c in cells),
        bonds=tuple(int(b) for b in bonds),
        incidences=incidences,
    )


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array
