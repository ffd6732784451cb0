"""Labeled dense tensors and the matrix factorizations built on them.

Every tensor carries an ordered tuple of :class:`Index` objects. Two axes on
different tensors are contracted when their indices share ``(id, conj_level)``.
Data is stored as a ``complex128`` numpy array laid out row-major over the
declared index order.

The array-level helpers (``psd_sqrt``, ``hermitian_trace_distance``,
``truncated_svd``) are used directly by the hot loops elsewhere in the package;
the labeled wrappers (``svd``, ``qr``, ``sqrt_and_inv_sqrt``, ...) are thin
layers on top of them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    NotHermitian,
    NotPositive,
    NumericalError,
)

DTYPE = np.complex128

#: Default relative cutoff below which eigenvalues are pseudo-inverted to zero.
PINV_CUTOFF = 1e-12
#: Relative tolerance for negative eigenvalues treated as round-off.
NEGATIVE_TOL = 1e-12
HERMITIAN_TOL = 1e-10

SITE = "site"
BOND = "bond"


@dataclass(frozen=True)
class Index:
    """A tensor axis label.

    ``conj_level`` separates the ket copy (0) of a bond index from its bra
    copy (1) in a norm network. Site indices keep level 0 on both layers so
    that they are summed when bra and ket meet.
    """

    id: Hashable
    dim: int
    kind: str = BOND
    conj_level: int = 0

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"index dimension must be >= 1, got {self.dim}")
        if self.kind not in (SITE, BOND):
            raise ValueError(f"unknown index kind {self.kind!r}")
        if self.conj_level < 0:
            raise ValueError("conj_level must be >= 0")

    @property
    def key(self):
        return (self.id, self.conj_level)

    def bra(self) -> "Index":
        if self.kind == SITE:
            return self
        return replace(self, conj_level=self.conj_level + 1)

    def with_dim(self, dim: int) -> "Index":
        return replace(self, dim=int(dim))


class LabeledTensor:
    """Dense complex tensor whose axes are identified by :class:`Index` labels."""

    __slots__ = ("indices", "data")

    def __init__(self, indices: Sequence[Index], data):
        indices = tuple(indices)
        keys = [ix.key for ix in indices]
        if len(set(keys)) != len(keys):
            raise ValueError(f"repeated index on a single tensor: {keys}")
        shape = tuple(ix.dim for ix in indices)
        arr = np.asarray(data, dtype=DTYPE)
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise DimensionMismatch(
                f"data of size {arr.size} does not match index dims {shape}"
            )
        arr = arr.reshape(shape).view()
        arr.flags.writeable = False
        self.indices = indices
        self.data = arr

    # -- basic views -----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def rank(self) -> int:
        return len(self.indices)

    @property
    def keys(self):
        return tuple(ix.key for ix in self.indices)

    def axis(self, ix) -> int:
        key = ix.key if isinstance(ix, Index) else ix
        for n, own in enumerate(self.indices):
            if own.key == key or (not isinstance(key, tuple) and own.id == key):
                return n
        raise KeyError(f"index {key!r} not on tensor {self.keys}")

    def index(self, ix) -> Index:
        return self.indices[self.axis(ix)]

    def __repr__(self):
        labels = ", ".join(f"{ix.id}{'*' * ix.conj_level}:{ix.dim}" for ix in self.indices)
        return f"LabeledTensor({labels})"

    # -- transformations -------------------------------------------------
    def transpose(self, order: Sequence) -> "LabeledTensor":
        axes = [self.axis(o) for o in order]
        if sorted(axes) != list(range(self.rank)):
            raise ValueError("transpose order must be a permutation of the indices")
        return LabeledTensor([self.indices[a] for a in axes], self.data.transpose(axes))

    def conj(self) -> "LabeledTensor":
        return LabeledTensor(self.indices, self.data.conj())

    def dag(self) -> "LabeledTensor":
        """Complex conjugate with bond indices moved to the bra layer."""
        return LabeledTensor([ix.bra() for ix in self.indices], self.data.conj())

    def relabel(self, mapping: dict) -> "LabeledTensor":
        new = []
        for ix in self.indices:
            target = mapping.get(ix.key, mapping.get(ix.id, ix))
            if not isinstance(target, Index):
                target = replace(ix, id=target)
            if target.dim != ix.dim:
                raise DimensionMismatch(f"relabel changes dim of {ix.id}")
            new.append(target)
        return LabeledTensor(new, self.data)

    def scale(self, factor) -> "LabeledTensor":
        return LabeledTensor(self.indices, self.data * factor)

    def scalar(self) -> complex:
        if self.rank:
            raise ValueError(f"tensor of rank {self.rank} is not a scalar")
        return complex(self.data[()])

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def matrix_view(self, rows: Iterable) -> "MatrixView":
        row_ix = [self.index(r) for r in rows]
        row_keys = {ix.key for ix in row_ix}
        col_ix = [ix for ix in self.indices if ix.key not in row_keys]
        return MatrixView(self, tuple(row_ix), tuple(col_ix))

    def __matmul__(self, other: "LabeledTensor") -> "LabeledTensor":
        return contract(self, other)


@dataclass(frozen=True)
class MatrixView:
    """A tensor grouped into row and column index sets."""

    tensor: LabeledTensor
    row_indices: tuple
    col_indices: tuple

    def __post_init__(self):
        keys = [ix.key for ix in self.row_indices + self.col_indices]
        if sorted(map(repr, keys)) != sorted(map(repr, self.tensor.keys)):
            raise ValueError("row and column indices must partition the tensor indices")

    @classmethod
    def of(cls, tensor: LabeledTensor, rows: Iterable) -> "MatrixView":
        return tensor.matrix_view(rows)

    @property
    def nrows(self) -> int:
        return int(np.prod([ix.dim for ix in self.row_indices], dtype=np.int64))

    @property
    def ncols(self) -> int:
        return int(np.prod([ix.dim for ix in self.col_indices], dtype=np.int64))

    def array(self) -> np.ndarray:
        t = self.tensor.transpose([ix.key for ix in self.row_indices + self.col_indices])
        return t.data.reshape(self.nrows, self.ncols)


def contract(a: LabeledTensor, b: LabeledTensor) -> LabeledTensor:
    """Sum over every index shared by ``a`` and ``b``.

    The result carries the remaining indices of ``a`` followed by those of
    ``b``. Contracting over all indices yields a rank-0 tensor.
    """
    bkeys = {ix.key: n for n, ix in enumerate(b.indices)}
    ax_a, ax_b = [], []
    for n, ix in enumerate(a.indices):
        m = bkeys.get(ix.key)
        if m is None:
            continue
        if b.indices[m].dim != ix.dim:
            raise DimensionMismatch(
                f"index {ix.id!r} has dim {ix.dim} on one tensor and "
                f"{b.indices[m].dim} on the other"
            )
        ax_a.append(n)
        ax_b.append(m)
    data = np.tensordot(a.data, b.data, axes=(ax_a, ax_b))
    shared = set(ax_a)
    shared_b = set(ax_b)
    out = [ix for n, ix in enumerate(a.indices) if n not in shared]
    out += [ix for n, ix in enumerate(b.indices) if n not in shared_b]
    return LabeledTensor(out, data)


def _check_finite(m: np.ndarray):
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix contains non-finite entries")


# -- array-level factorizations --------------------------------------------

def truncated_svd(m: np.ndarray, max_rank=None, cutoff=None):
    """Thin SVD ``m = u @ diag(s) @ vh`` with optional truncation.

    Singular values below ``cutoff * s[0]`` and beyond ``max_rank`` are
    dropped; at least one is always kept. Returns ``(u, s, vh, discarded)``
    where ``discarded`` holds the dropped singular values.
    """
    _check_finite(m)
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            import scipy.linalg

            u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"SVD failed: {exc}") from exc
    keep = len(s)
    if cutoff is not None and cutoff > 0 and len(s):
        keep = max(1, int(np.count_nonzero(s > cutoff * s[0])))
    if max_rank is not None:
        keep = max(1, min(keep, int(max_rank)))
    return u[:, :keep], s[:keep], vh[:keep], s[keep:]


def fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    if vecs.size == 0:
        return vecs
    rows = np.argmax(np.abs(vecs), axis=0)
    pivots = vecs[rows, np.arange(vecs.shape[1])]
    phases = pivots / np.abs(pivots)
    return vecs / phases[None, :]


def check_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL):
    scale = np.linalg.norm(m)
    if np.linalg.norm(m - m.conj().T) > tol * max(scale, np.finfo(float).tiny):
        raise NotHermitian("matrix is not Hermitian to tolerance")


def psd_eigh(m: np.ndarray, check: bool = True):
    """Eigendecomposition of a PSD matrix, eigenvalues descending.

    Returns ``(evals, vecs)`` with ``m = vecs @ diag(evals) @ vecs^dagger``;
    round-off negative eigenvalues are clamped to zero.
    """
    _check_finite(m)
    if check:
        check_hermitian(m)
    evals, vecs = np.linalg.eigh((m + m.conj().T) / 2)
    evals = evals[::-1]
    vecs = fix_phases(vecs[:, ::-1])
    top = evals[0] if len(evals) else 0.0
    if len(evals) and evals[-1] < -NEGATIVE_TOL * max(abs(top), np.finfo(float).tiny):
        raise NotPositive(f"eigenvalue {evals[-1]:.3e} below tolerance (max {top:.3e})")
    return np.clip(evals, 0.0, None), vecs


def psd_sqrt(m: np.ndarray, pinv_cutoff: float = PINV_CUTOFF, check: bool = True):
    """Return ``(half, inv_half)`` with ``half^dagger @ half = m``.

    With ``m = U^dagger D U`` (rows of ``U`` are eigenvectors) we take
    ``half = D^(1/2) U`` and ``inv_half = U^dagger D^(-1/2)``. Eigenvalues
    below ``pinv_cutoff * max`` are treated as null: they are zeroed in both
    factors, so the identity holds on the retained space.
    """
    evals, vecs = psd_eigh(m, check=check)
    u = vecs.conj().T
    root = np.sqrt(evals)
    inv = np.zeros_like(root)
    if len(evals) and evals[0] > 0:
        mask = evals > pinv_cutoff * evals[0]
        inv[mask] = 1.0 / root[mask]
        root = np.where(mask, root, 0.0)
    half = root[:, None] * u
    inv_half = u.conj().T * inv[None, :]
    return half.astype(DTYPE), inv_half.astype(DTYPE)


def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def hermitian_trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``|| a/tr(a) - b/tr(b) ||_1`` for Hermitian inputs (eigenvalue route)."""
    ta, tb = np.trace(a), np.trace(b)
    if ta == 0 or tb == 0:
        raise DegenerateInput("zero trace in normalized trace distance")
    diff = a / ta - b / tb
    diff = (diff + diff.conj().T) / 2
    return float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def batched_trace_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized :func:`hermitian_trace_distance` over a leading batch axis."""
    ta = np.trace(a, axis1=-2, axis2=-1)
    tb = np.trace(b, axis1=-2, axis2=-1)
    if np.any(ta == 0) or np.any(tb == 0):
        raise DegenerateInput("zero trace in normalized trace distance")
    diff = a / ta[:, None, None] - b / tb[:, None, None]
    diff = (diff + np.conj(np.swapaxes(diff, -1, -2))) / 2
    return np.sum(np.abs(np.linalg.eigvalsh(diff)), axis=-1)


# -- labeled wrappers --------------------------------------------------------

def svd(m: MatrixView, max_rank=None, cutoff=None, left_id="svd_left", right_id="svd_right"):
    """SVD of a matrix view into ``U (rows, left)``, ``S (left, right)``,
    ``V (right, cols)``.

    ``S`` is diagonal, real, non-negative and descending.
    """
    mat = m.array()
    if not np.any(mat):
        raise DegenerateInput("cannot decompose a zero tensor")
    u, s, vh, _ = truncated_svd(mat, max_rank=max_rank, cutoff=cutoff)
    k = len(s)
    left, right = Index(left_id, k), Index(right_id, k)
    U = LabeledTensor(m.row_indices + (left,), u.reshape([ix.dim for ix in m.row_indices] + [k]))
    S = LabeledTensor((left, right), np.diag(s))
    V = LabeledTensor((right,) + m.col_indices, vh.reshape([k] + [ix.dim for ix in m.col_indices]))
    return U, S, V


def qr(m: MatrixView, new_id="qr_bond"):
    """Thin QR: ``Q (rows, new)`` isometric and ``R (new, cols)``."""
    mat = m.array()
    _check_finite(mat)
    q, r = np.linalg.qr(mat, mode="reduced")
    k = q.shape[1]
    new = Index(new_id, k)
    Q = LabeledTensor(m.row_indices + (new,), q.reshape([ix.dim for ix in m.row_indices] + [k]))
    R = LabeledTensor((new,) + m.col_indices, r.reshape([k] + [ix.dim for ix in m.col_indices]))
    return Q, R


def sqrt_and_inv_sqrt(m: MatrixView, pinv_cutoff: float = PINV_CUTOFF, new_id="sqrt_bond"):
    """Square root factors of a Hermitian PSD matrix view.

    Returns ``half`` with indices ``(new, col)`` and ``inv_half`` with
    indices ``(row, new)``, so that ``half^dagger half = m`` and
    ``contract(inv_half, half)`` is the projector onto the retained
    eigenspace, labeled ``(row, col)``.
    """
    if len(m.row_indices) != 1 or len(m.col_indices) != 1:
        raise ValueError("sqrt_and_inv_sqrt expects a matrix with one row and one column index")
    mat = m.array()
    if mat.shape[0] != mat.shape[1]:
        raise DimensionMismatch("sqrt_and_inv_sqrt requires a square matrix")
    half, inv_half = psd_sqrt(mat, pinv_cutoff)
    n = mat.shape[0]
    new = Index(new_id, n)
    H = LabeledTensor((new, m.col_indices[0]), half)
    Hi = LabeledTensor((m.row_indices[0], new), inv_half)
    return H, Hi


def normalized_trace_distance(a: MatrixView, b: MatrixView) -> float:
    """Trace norm of ``a/tr(a) - b/tr(b)``; lies in ``[0, 2]`` for PSD inputs."""
    ma, mb = a.array(), b.array()
    if ma.shape != mb.shape or ma.shape[0] != ma.shape[1]:
        raise DimensionMismatch("normalized_trace_distance needs square matrices of equal size")
    ta, tb = np.trace(ma), np.trace(mb)
    if abs(ta) == 0 or abs(tb) == 0:
        raise DegenerateInput("zero trace in normalized trace distance")
    return trace_norm(ma / ta - mb / tb)


def identity(row: Index, col: Index) -> LabeledTensor:
    if row.dim != col.dim:
        raise DimensionMismatch("identity needs equal dims")
    return LabeledTensor((row, col), np.eye(row.dim))


def diag_tensor(values, row: Index, col: Index) -> LabeledTensor:
    return LabeledTensor((row, col), np.diag(np.asarray(values, dtype=DTYPE)))
