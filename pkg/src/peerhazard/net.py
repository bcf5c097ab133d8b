"""Undirected network structure, random generators, and component decomposition.

Networks are stored densely (symmetric 0/1 adjacency, zero diagonal). All
downstream computations factorize over connected components, so the component
partition is computed once at construction and cached on the object.
"""

from dataclasses import dataclass, field

import numpy as np


def _find_components(adjacency: np.ndarray) -> list[np.ndarray]:
    """Connected components by BFS, ordered by smallest member index.

    Isolated nodes become singleton components.
    """
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        members = []
        while stack:
            u = stack.pop()
            members.append(u)
            for v in np.flatnonzero(adjacency[u]):
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        comps.append(np.array(sorted(members), dtype=np.intp))
    return comps


@dataclass(frozen=True)
class Network:
    """Symmetric binary adjacency with cached degrees and component partition."""

    adjacency: np.ndarray
    degrees: np.ndarray = field(init=False, repr=False)
    components: list = field(init=False, repr=False)

    def __post_init__(self):
        A = np.asarray(self.adjacency)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency must have zero diagonal")
        if not np.isin(A, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        A = A.astype(np.int8)
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "degrees", A.sum(axis=1).astype(np.intp))
        object.__setattr__(self, "components", _find_components(A))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])


def components(net: Network) -> list[np.ndarray]:
    """Partition of {0..n-1} into maximal connected components."""
    return net.components


def make_block_network(n_total: int, block_size: int) -> Network:
    """Disjoint union of n_total/block_size complete graphs of size block_size."""
    if n_total <= 0 or block_size <= 0:
        raise ValueError("n_total and block_size must be positive")
    if n_total % block_size != 0:
        raise ValueError(
            f"block_size {block_size} does not divide n_total {n_total}"
        )
    n_blocks = n_total // block_size
    block = np.ones((block_size, block_size), dtype=np.int8)
    np.fill_diagonal(block, 0)
    A = np.kron(np.eye(n_blocks, dtype=np.int8), block)
    return Network(A)


def make_homophilic_network(groups: list[np.ndarray], rng: np.random.Generator) -> Network:
    """Similarity-based link formation within groups.

    Within each group, an edge (i, j) is present iff the mean absolute
    difference of the two covariates falls below an independent symmetric
    uniform threshold on [0, 1]. No cross-group edges.
    """
    if not groups:
        raise ValueError("groups must be non-empty")
    sizes = []
    for g, Xg in enumerate(groups):
        Xg = np.asarray(Xg, dtype=float)
        if Xg.ndim != 2 or Xg.shape[1] != 2:
            raise ValueError(f"group {g} must be a 2-column covariate matrix")
        if Xg.shape[0] < 2:
            raise ValueError(f"group {g} must have at least 2 members")
        sizes.append(Xg.shape[0])
    n = sum(sizes)
    A = np.zeros((n, n), dtype=np.int8)
    offset = 0
    for Xg, m in zip(groups, sizes):
        Xg = np.asarray(Xg, dtype=float)
        dist = (
            np.abs(Xg[:, 0][:, None] - Xg[:, 0][None, :])
            + np.abs(Xg[:, 1][:, None] - Xg[:, 1][None, :])
        ) / 2.0
        eta = rng.uniform(size=(m, m))
        eta = np.triu(eta, 1)
        eta = eta + eta.T  # symmetric thresholds
        edges = (dist < eta).astype(np.int8)
        np.fill_diagonal(edges, 0)
        A[offset:offset + m, offset:offset + m] = edges
        offset += m
    return Network(A)


def write_edge_list(net: Network, path) -> None:
    """Serialize as 'n <count>' header plus one 'i j' line per undirected edge."""
    with open(path, "w") as fh:
        fh.write(f"n {net.n}\n")
        rows, cols = np.nonzero(np.triu(net.adjacency, 1))
        for i, j in zip(rows, cols):
            fh.write(f"{i} {j}\n")


def read_edge_list(path) -> Network:
    """Read the edge-list format written by write_edge_list."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("n "):
        raise ValueError(f"{path}: missing 'n <count>' header line")
    try:
        n = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise ValueError(f"{path}: malformed header {lines[0]!r}") from None
    A = np.zeros((n, n), dtype=np.int8)
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'i j', got {ln!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-integer edge {ln!r}") from None
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"{path}:{lineno}: invalid edge ({i}, {j}) for n={n}")
        A[i, j] = 1
        A[j, i] = 1
    return Network(A)
