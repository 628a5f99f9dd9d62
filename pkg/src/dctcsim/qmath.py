"""Dense linear algebra on tensor-factored Hilbert spaces.

Everything here works on plain ``numpy`` arrays underneath. Two thin value
types, :class:`DensityOperator` and :class:`UnitaryOperator`, pair a matrix
with a :class:`SubsystemLayout` so that slots can be addressed by name.

Slot convention: row-major, leftmost slot most significant. A basis index of a
layout with dims ``(d0, d1, d2)`` is ``x0 * d1 * d2 + x1 * d2 + x2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TOL_HERM = 1e-10
TOL_UNIT = 1e-10
TOL_PSD = 1e-10
TOL_TRACE = 1e-10

#: Largest total Hilbert dimension an interaction may have in dense mode.
DENSE_CAP = 2**14


class DimensionError(ValueError):
    """Operands have incompatible shapes or layouts."""


class CapExceededError(ValueError):
    """A construction would exceed the configured dense dimension cap."""


def as_matrix(m) -> np.ndarray:
    """Validate and convert ``m`` to a square complex array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def check_cap(dim: int, cap: int | None = None, what: str = "dimension") -> None:
    cap = DENSE_CAP if cap is None else cap
    if dim > cap:
        raise CapExceededError(f"{what} {dim} exceeds dense cap {cap}")


# ---------------------------------------------------------------------------
# Layouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered named tensor slots."""

    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(str(lb) for lb in self.labels)
        if not dims:
            raise DimensionError("layout needs at least one slot")
        if any(d < 1 for d in dims):
            raise DimensionError(f"slot dimensions must be positive, got {dims}")
        if len(dims) != len(labels):
            raise DimensionError("dims and labels differ in length")
        if len(set(labels)) != len(labels):
            raise ValueError(f"slot labels must be unique, got {labels}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of(cls, dims: Sequence[int], labels: Sequence[str] | None = None) -> "SubsystemLayout":
        if labels is None:
            labels = [f"q{i}" for i in range(len(dims))]
        return cls(tuple(dims), tuple(labels))

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    def __len__(self) -> int:
        return len(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown slot {label!r}; layout has {self.labels}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def select(self, labels: Iterable[str]) -> "SubsystemLayout":
        """Sub-layout of ``labels``, kept in this layout's order."""
        wanted = set(labels)
        for lb in wanted:
            self.index(lb)
        pos = [i for i, lb in enumerate(self.labels) if lb in wanted]
        return SubsystemLayout(tuple(self.dims[i] for i in pos), tuple(self.labels[i] for i in pos))

    def concat(self, other: "SubsystemLayout") -> "SubsystemLayout":
        return SubsystemLayout(self.dims + other.dims, self.labels + other.labels)

    def relabel(self, labels: Sequence[str]) -> "SubsystemLayout":
        return SubsystemLayout(self.dims, tuple(labels))


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


def _psd_ok(mat: np.ndarray, tol: float) -> bool:
    # Cholesky of the shifted matrix succeeds iff min eigenvalue > -tol (up to roundoff),
    # and is far cheaper than a full eigendecomposition at large dims.
    try:
        np.linalg.cholesky(mat + tol * np.eye(mat.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, positive semidefinite, unit-trace operator on a layout."""

    mat: np.ndarray
    layout: SubsystemLayout

    def __post_init__(self):
        mat = as_matrix(self.mat)
        if mat.shape[0] != self.layout.total:
            raise DimensionError(
                f"matrix dim {mat.shape[0]} does not match layout total {self.layout.total}"
            )
        herm = np.max(np.abs(mat - mat.conj().T))
        if herm > TOL_HERM:
            raise ValueError(f"not Hermitian (defect {herm:.3g})")
        mat = 0.5 * (mat + mat.conj().T)
        tr = np.trace(mat).real
        if abs(tr - 1.0) > TOL_TRACE:
            raise ValueError(f"trace is {tr!r}, expected 1")
        if not _psd_ok(mat, TOL_PSD):
            raise ValueError("not positive semidefinite")
        object.__setattr__(self, "mat", _frozen(mat))

    @classmethod
    def from_matrix(cls, m, dims: Sequence[int] | None = None,
                    labels: Sequence[str] | None = None) -> "DensityOperator":
        m = as_matrix(m)
        return cls(m, SubsystemLayout.of(dims or [m.shape[0]], labels))

    @classmethod
    def from_ket(cls, psi, dims: Sequence[int] | None = None,
                 labels: Sequence[str] | None = None) -> "DensityOperator":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls.from_matrix(np.outer(psi, psi.conj()), dims, labels)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.mat, self.mat)))

    def relabel(self, labels: Sequence[str]) -> "DensityOperator":
        return DensityOperator(self.mat, self.layout.relabel(labels))

    def __repr__(self) -> str:
        return f"DensityOperator(layout={self.layout.labels}, dims={self.layout.dims})"


class UnitaryOperator:
    """Unitary on a layout.

    Permutation unitaries keep only their index map; the dense matrix is built on
    first access to :attr:`mat`, so large permutation circuits stay cheap.
    """

    def __init__(self, mat, layout: SubsystemLayout | None = None):
        mat = as_matrix(mat)
        layout = layout or SubsystemLayout.of([mat.shape[0]])
        if mat.shape[0] != layout.total:
            raise DimensionError("matrix dim does not match layout total")
        defect = np.max(np.abs(mat @ mat.conj().T - np.eye(mat.shape[0])))
        if defect > TOL_UNIT:
            raise ValueError(f"not unitary (defect {defect:.3g})")
        self._mat = _frozen(mat)
        self.layout = layout
        self.perm = _detect_permutation(self._mat)

    @classmethod
    def from_permutation(cls, perm, layout: SubsystemLayout) -> "UnitaryOperator":
        """Build ``U|i> = |perm[i]>``."""
        perm = np.asarray(perm, dtype=np.intp)
        if perm.shape != (layout.total,) or not np.array_equal(np.sort(perm), np.arange(layout.total)):
            raise ValueError("perm is not a permutation of the layout's basis")
        self = cls.__new__(cls)
        self._mat = None
        self.layout = layout
        perm = perm.copy()
        perm.setflags(write=False)
        self.perm = perm
        return self

    @property
    def dim(self) -> int:
        return self.layout.total

    @property
    def mat(self) -> np.ndarray:
        if self._mat is None:
            m = np.zeros((self.dim, self.dim), dtype=complex)
            m[self.perm, np.arange(self.dim)] = 1.0
            m.setflags(write=False)
            self._mat = m
        return self._mat

    def unitarity_defect(self) -> float:
        if self._mat is None:
            return 0.0
        return float(np.max(np.abs(self._mat @ self._mat.conj().T - np.eye(self.dim))))

    def compose(self, other: "UnitaryOperator") -> "UnitaryOperator":
        """``self @ other`` (``other`` acts first)."""
        if self.layout != other.layout:
            raise DimensionError("layouts differ")
        if self.perm is not None and other.perm is not None:
            return UnitaryOperator.from_permutation(self.perm[other.perm], self.layout)
        return UnitaryOperator(self.mat @ other.mat, self.layout)

    def __repr__(self) -> str:
        kind = "permutation" if self.perm is not None else "dense"
        return f"UnitaryOperator({kind}, layout={self.layout.labels})"


def _detect_permutation(mat: np.ndarray) -> np.ndarray | None:
    nz = np.abs(mat) > 0.5
    if not np.all(nz.sum(axis=0) == 1):
        return None
    rows = np.argmax(nz, axis=0)
    cols = np.arange(mat.shape[0])
    if not np.allclose(mat[rows, cols], 1.0, atol=1e-14):
        return None
    rest = mat.copy()
    rest[rows, cols] = 0.0
    if np.any(rest != 0):
        return None
    rows.setflags(write=False)
    return rows


# ---------------------------------------------------------------------------
# Array-level primitives (no validation)
# ---------------------------------------------------------------------------


def tensor_product(*mats) -> np.ndarray:
    """Kronecker product; slot order follows argument order."""
    if not mats:
        raise ValueError("need at least one operand")
    out = as_matrix(mats[0])
    for m in mats[1:]:
        out = np.kron(out, as_matrix(m))
    return out


def ptrace_array(mat: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every slot not in ``keep`` (slot positions, kept in order)."""
    dims = list(dims)
    n = len(dims)
    keep = sorted(set(keep))
    drop = [i for i in range(n) if i not in keep]
    t = mat.reshape(dims + dims)
    perm = keep + drop + [n + i for i in keep] + [n + i for i in drop]
    dk = math.prod(dims[i] for i in keep)
    dd = math.prod(dims[i] for i in drop)
    t = t.transpose(perm).reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def conjugate_array(u: UnitaryOperator, mat: np.ndarray) -> np.ndarray:
    """``U mat U^dagger``, using the index map when ``u`` is a permutation."""
    if u.perm is not None:
        inv = np.empty_like(u.perm)
        inv[u.perm] = np.arange(u.perm.size)
        return mat[np.ix_(inv, inv)]
    return u.mat @ mat @ u.mat.conj().T


def permute_slots_array(mat: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor slots: new slot ``k`` is old slot ``order[k]``."""
    n = len(dims)
    t = mat.reshape(list(dims) * 2)
    t = t.transpose(list(order) + [n + i for i in order])
    d = math.prod(dims)
    return t.reshape(d, d)


# ---------------------------------------------------------------------------
# Operations on value types
# ---------------------------------------------------------------------------


def tensor_states(*states: DensityOperator) -> DensityOperator:
    layout = states[0].layout
    for s in states[1:]:
        layout = layout.concat(s.layout)
    return DensityOperator(tensor_product(*(s.mat for s in states)), layout)


def partial_trace(rho: DensityOperator, keep: Iterable[str]) -> DensityOperator:
    """Reduced state on the slots named in ``keep``, in their original order."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep must name at least one slot")
    pos = sorted({rho.layout.index(lb) for lb in keep})
    red = ptrace_array(rho.mat, rho.layout.dims, pos)
    layout = SubsystemLayout(tuple(rho.layout.dims[i] for i in pos),
                             tuple(rho.layout.labels[i] for i in pos))
    return DensityOperator(red, layout)


def apply_unitary(rho: DensityOperator, u: UnitaryOperator) -> DensityOperator:
    if rho.dim != u.dim:
        raise DimensionError(f"state dim {rho.dim} vs unitary dim {u.dim}")
    return DensityOperator(conjugate_array(u, rho.mat), rho.layout)


def _check_same_dim(a: DensityOperator, b: DensityOperator) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"dims differ: {a.dim} vs {b.dim}")


def _hermitian_part(m: np.ndarray) -> np.ndarray:
    defect = np.max(np.abs(m - m.conj().T))
    if defect > TOL_HERM:
        raise ValueError(f"operand not Hermitian (defect {defect:.3g})")
    return 0.5 * (m + m.conj().T)


def trace_distance(a: DensityOperator | np.ndarray, b: DensityOperator | np.ndarray) -> float:
    """Half the trace norm of ``a - b``."""
    ma = a.mat if isinstance(a, DensityOperator) else as_matrix(a)
    mb = b.mat if isinstance(b, DensityOperator) else as_matrix(b)
    if ma.shape != mb.shape:
        raise DimensionError(f"dims differ: {ma.shape[0]} vs {mb.shape[0]}")
    ev = np.linalg.eigvalsh(_hermitian_part(ma - mb))
    return float(min(1.0, 0.5 * np.sum(np.abs(ev))))


def sqrt_psd(m: np.ndarray, floor: float = 1e-14) -> np.ndarray:
    """Positive square root; eigenvalues below ``floor`` are treated as exact zeros."""
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.where(w < floor, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(a: DensityOperator, b: DensityOperator) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``.

    Evaluated as the squared trace norm of ``sqrt(a) sqrt(b)``, which is the same
    quantity and symmetric in its arguments by construction.
    """
    _check_same_dim(a, b)
    sv = np.linalg.svd(sqrt_psd(a.mat) @ sqrt_psd(b.mat), compute_uv=False)
    return min(1.0, max(0.0, float(np.sum(sv) ** 2)))


def _hermitian_part_loose(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    r = k[u - css / k > 0][-1]
    theta = css[r - 1] / r
    return np.clip(v - theta, 0.0, None)


def nearest_density_operator(m, layout: SubsystemLayout | None = None) -> DensityOperator:
    """Frobenius-closest density operator to the Hermitian part of ``m``."""
    m = as_matrix(m)
    h = _hermitian_part_loose(m)
    w, v = np.linalg.eigh(h)
    p = project_to_simplex(w)
    out = (v * p) @ v.conj().T
    out = out / np.trace(out).real
    return DensityOperator(out, layout or SubsystemLayout.of([m.shape[0]]))


def random_density_operator(d: int, purity: str = "mixed", seed=None,
                            labels: Sequence[str] | None = None) -> DensityOperator:
    """Seeded random state: Haar pure (``purity="pure"``) or normalized ``G G^dagger``."""
    if d < 2:
        raise ValueError("d must be at least 2")
    rng = np.random.default_rng(seed)
    if purity == "pure":
        psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        psi /= np.linalg.norm(psi)
        mat = np.outer(psi, psi.conj())
    elif purity == "mixed":
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        mat = g @ g.conj().T
        mat /= np.trace(mat).real
    else:
        raise ValueError(f"purity must be 'pure' or 'mixed', got {purity!r}")
    return DensityOperator(mat, SubsystemLayout.of([d], labels))


def maximally_mixed(layout: SubsystemLayout) -> DensityOperator:
    return DensityOperator(np.eye(layout.total) / layout.total, layout)


def basis_state(d: int, k: int = 0, label: str = "q0") -> DensityOperator:
    m = np.zeros((d, d), dtype=complex)
    m[k, k] = 1.0
    return DensityOperator(m, SubsystemLayout((d,), (label,)))


def tensor_power(rho: DensityOperator, n: int, labels: Sequence[str] | None = None) -> DensityOperator:
    if n < 1:
        raise ValueError("n must be positive")
    mat = rho.mat
    for _ in range(n - 1):
        mat = np.kron(mat, rho.mat)
    dims = list(rho.layout.dims) * n
    if labels is None:
        labels = [f"{lb}_{i}" for i in range(n) for lb in rho.layout.labels]
    return DensityOperator(mat, SubsystemLayout.of(dims, labels))


# ---------------------------------------------------------------------------
# Fixture text format
# ---------------------------------------------------------------------------


def format_matrix(m) -> str:
    """``dim`` on the first line, then one ``re im`` pair per row-major entry."""
    m = as_matrix(m)
    lines = [str(m.shape[0])]
    lines += [f"{z.real:.17g} {z.imag:.17g}" for z in m.ravel()]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    return _parse_matrix_lines(iter(text.split("\n")))


def _parse_matrix_lines(lines) -> np.ndarray:
    lines = (ln for ln in lines if ln.strip())
    dim = int(next(lines))
    vals = np.empty(dim * dim, dtype=complex)
    for i in range(dim * dim):
        re, im = next(lines).split()
        vals[i] = complex(float(re), float(im))
    return vals.reshape(dim, dim)
