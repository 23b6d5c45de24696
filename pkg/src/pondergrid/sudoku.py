"""Puzzle generation, encoding, augmentation, and CSV streaming.

Two board sizes: the full 9x9 game (81 cells, 3x3 boxes) and a 4x4 micro
variant (16 cells, 2x2 boxes) used for desk-scale training runs. Cell
encoding is 0 for blank, 1..n for digits, with one reserved pad symbol on
top, giving vocab 11 for 9x9 and vocab 6 for 4x4 (the pad id is never
emitted by the encoder; it exists to round the alphabet out).

Generated puzzles always have a unique solution: the generator digs cells
out of a complete grid and re-checks uniqueness with the backtracking
solver after every removal.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np


class DataError(ValueError):
    """Malformed puzzle data."""


def box_size(n):
    b = int(math.isqrt(n))
    if b * b != n:
        raise DataError(f"side {n} is not a perfect square")
    return b


def vocab_size(n):
    # blank + digits + reserved pad
    return n + 2


PAD_9 = 10
PAD_4 = 5


@dataclass
class Puzzle:
    """grid/solution are flat int arrays of length n*n; 0 marks a blank."""

    grid: np.ndarray
    solution: np.ndarray
    n: int

    @property
    def givens_mask(self):
        return self.grid != 0

    @property
    def n_givens(self):
        return int((self.grid != 0).sum())


@dataclass
class PuzzleBatch:
    tokens: np.ndarray        # [B, L] int encoding of grids
    targets: np.ndarray       # [B, L] encoded solutions
    givens_mask: np.ndarray   # [B, L] bool

    def __len__(self):
        return self.tokens.shape[0]


def batch_from_puzzles(puzzles):
    tokens = np.stack([p.grid for p in puzzles]).astype(np.int64)
    targets = np.stack([p.solution for p in puzzles]).astype(np.int64)
    return PuzzleBatch(tokens=tokens, targets=targets, givens_mask=tokens != 0)


# ---------------------------------------------------------------------------
# constraint checks and the backtracking solver


def _units(n):
    b = box_size(n)
    rows = [[r * n + c for c in range(n)] for r in range(n)]
    cols = [[r * n + c for r in range(n)] for c in range(n)]
    boxes = []
    for br in range(0, n, b):
        for bc in range(0, n, b):
            boxes.append([(br + i) * n + (bc + j) for i in range(b) for j in range(b)])
    return rows + cols + boxes


def is_valid_solution(solution, n):
    sol = np.asarray(solution).reshape(n * n)
    if sol.min() < 1 or sol.max() > n:
        return False
    want = set(range(1, n + 1))
    return all({int(sol[i]) for i in unit} == want for unit in _units(n))


def is_consistent(grid, solution):
    grid = np.asarray(grid)
    solution = np.asarray(solution)
    mask = grid != 0
    return bool(np.all(grid[mask] == solution[mask]))


def solve_backtracking(grid, n, limit=2, rng=None):
    """Exhaustive backtracking; returns (n_solutions up to limit, first).

    Contradictory givens simply yield zero solutions. Candidate sets are
    kept as bitmasks per row/column/box. An optional rng shuffles the digit
    order, turning the solver into a uniform-ish complete-grid sampler.
    """
    b = box_size(n)
    g = list(np.asarray(grid).reshape(n * n))
    rows = [0] * n
    cols = [0] * n
    boxes = [0] * n

    def box_of(i):
        return (i // n) // b * b + (i % n) // b

    for i, v in enumerate(g):
        if v == 0:
            continue
        bit = 1 << v
        r, c, bx = i // n, i % n, box_of(i)
        if rows[r] & bit or cols[c] & bit or boxes[bx] & bit:
            return 0, None
        rows[r] |= bit
        cols[c] |= bit
        boxes[bx] |= bit

    empties = [i for i, v in enumerate(g) if v == 0]
    digits = list(range(1, n + 1))
    found = []

    def pick():
        # most-constrained empty cell
        best, best_count = -1, n + 1
        for i in empties:
            if g[i] != 0:
                continue
            used = rows[i // n] | cols[i % n] | boxes[box_of(i)]
            count = sum(1 for d in digits if not used & (1 << d))
            if count == 0:
                return i, ()
            if count < best_count:
                best, best_count = i, count
        if best < 0:
            return None, None
        used = rows[best // n] | cols[best % n] | boxes[box_of(best)]
        order = digits if rng is None else rng.permutation(digits).tolist()
        return best, tuple(d for d in order if not used & (1 << d))

    def recurse():
        cell, cands = pick()
        if cell is None:
            found.append(list(g))
            return len(found) >= limit
        if not cands:
            return False
        r, c, bx = cell // n, cell % n, box_of(cell)
        for d in cands:
            bit = 1 << d
            g[cell] = d
            rows[r] |= bit
            cols[c] |= bit
            boxes[bx] |= bit
            done = recurse()
            g[cell] = 0
            rows[r] ^= bit
            cols[c] ^= bit
            boxes[bx] ^= bit
            if done:
                return True
        return False

    recurse()
    first = np.array(found[0], dtype=np.int64) if found else None
    return len(found), first


def count_complete_grids(n):
    """Brute-force count of all complete valid grids (oracle; 4x4 -> 288)."""
    count, _ = solve_backtracking(np.zeros(n * n, dtype=np.int64), n,
                                  limit=10 ** 9)
    return count


# ---------------------------------------------------------------------------
# generation and augmentation


def random_complete_grid(n, rng):
    _, sol = solve_backtracking(np.zeros(n * n, dtype=np.int64), n, limit=1,
                                rng=rng)
    return sol


def gen_puzzle(seed, n=4, n_givens_range=(4, 12)):
    """One unique-solution puzzle with a givens count inside the range.

    Digs cells from a random complete grid in random order, keeping only
    removals that preserve uniqueness; retries with a fresh grid when the
    dig cannot get the count under the upper bound.
    """
    lo, hi = n_givens_range
    if not 0 <= lo <= hi <= n * n:
        raise DataError(f"bad givens range {n_givens_range} for {n}x{n}")
    rng = np.random.default_rng(seed)
    while True:
        sol = random_complete_grid(n, rng)
        grid = sol.copy()
        target = int(rng.integers(lo, hi + 1))
        for i in rng.permutation(n * n):
            if int((grid != 0).sum()) <= target:
                break
            keep = grid[i]
            grid[i] = 0
            cnt, _ = solve_backtracking(grid, n, limit=2)
            if cnt != 1:
                grid[i] = keep
        if lo <= int((grid != 0).sum()) <= hi:
            return Puzzle(grid=grid, solution=sol, n=n)


def augment(puzzle, seed):
    """Validity-preserving symmetry: digit relabel, band/stack and in-band
    row/column shuffles, optional transpose. Uniqueness is preserved because
    each op is a bijection on the set of complete grids."""
    n = puzzle.n
    b = box_size(n)
    rng = np.random.default_rng(seed)

    perm_digits = np.concatenate([[0], rng.permutation(np.arange(1, n + 1))])

    def row_order():
        bands = rng.permutation(b)
        return np.concatenate([bands[i] * b + rng.permutation(b) for i in range(b)])

    rows = row_order()
    cols = row_order()
    do_transpose = bool(rng.integers(0, 2))

    def apply(flat):
        g = perm_digits[flat.reshape(n, n)]
        g = g[rows][:, cols]
        if do_transpose:
            g = g.T
        return g.reshape(-1)

    return Puzzle(grid=apply(puzzle.grid), solution=apply(puzzle.solution), n=n)


# ---------------------------------------------------------------------------
# text encoding and CSV streaming


def grid_to_string(grid):
    return "".join(str(int(v)) for v in grid)


def string_to_grid(s, n):
    if len(s) != n * n:
        raise DataError(f"expected {n * n} chars, got {len(s)}")
    out = np.zeros(n * n, dtype=np.int64)
    for i, ch in enumerate(s):
        if ch in ".0":
            out[i] = 0
        elif ch.isdigit() and 1 <= int(ch) <= n:
            out[i] = int(ch)
        else:
            raise DataError(f"bad cell char {ch!r} at position {i}")
    return out


def save_csv(path, puzzles):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["puzzle", "solution"])
        for p in puzzles:
            w.writerow([grid_to_string(p.grid), grid_to_string(p.solution)])


class CsvStream:
    """Iterator over puzzles in a two-column CSV (header optional).

    Structurally malformed rows (wrong column count, wrong length, bad
    characters) raise DataError with the 1-based row number. Rows whose
    solution is invalid or disagrees with the givens are skipped; .rejected
    counts them. Rows stream one at a time; the file is never slurped.
    """

    def __init__(self, path, n=None):
        self.path = path
        self.n = n
        self.rejected = 0
        self._it = self._rows()

    def __iter__(self):
        return self

    def __next__(self):
        return next(self._it)

    def _rows(self):
        with open(self.path, newline="") as fh:
            reader = csv.reader(fh)
            for line_no, row in enumerate(reader, start=1):
                if not row:
                    continue
                if line_no == 1 and not _looks_like_grid(row[0]):
                    continue  # header
                if len(row) < 2:
                    raise DataError(
                        f"{self.path}:{line_no}: expected 2 columns, got {len(row)}")
                puz_s, sol_s = row[0].strip(), row[1].strip()
                side = self.n or int(math.isqrt(len(puz_s)))
                try:
                    grid = string_to_grid(puz_s, side)
                    sol = string_to_grid(sol_s, side)
                except DataError as exc:
                    raise DataError(f"{self.path}:{line_no}: {exc}") from exc
                if not is_valid_solution(sol, side) or not is_consistent(grid, sol):
                    self.rejected += 1
                    continue
                yield Puzzle(grid=grid, solution=sol, n=side)


def load_csv(path, n=None):
    return CsvStream(path, n=n)


def _looks_like_grid(s):
    s = s.strip()
    return bool(s) and all(ch.isdigit() or ch == "." for ch in s)


# ---------------------------------------------------------------------------
# dataset assembly for training


def generate_dataset(n_train, n_eval, seed, n=4, n_givens_range=(4, 12)):
    """Deterministic train/eval split; eval puzzles use a disjoint seed range."""
    train = [gen_puzzle(seed * 1_000_003 + i, n=n, n_givens_range=n_givens_range)
             for i in range(n_train)]
    eval_ = [gen_puzzle((seed + 7919) * 1_000_003 + 500_000_000 + i, n=n,
                        n_givens_range=n_givens_range)
             for i in range(n_eval)]
    return train, eval_
