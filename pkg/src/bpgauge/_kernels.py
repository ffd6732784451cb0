"""Array kernels for message updates on the (lazy) norm network.

Vertex tensors are handled in batches: ``t[b, s, a_1, ..., a_k]`` stacks
``B`` vertices of identical shape. A matrix ``M[b]`` attached to bond axis
``i`` is absorbed on the ket layer as
``K[b, ..., y, ...] = sum_x t[b, ..., x, ...] M[b, x, y]``; the bra layer is
the complex conjugate of ``t``. The doubled norm-network tensor is never
formed. Single vertices use ``B = 1``.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateMessage

_TINY = 1e-300


class BraCache:
    """Conjugated copies of a batch tensor, permuted to match ket layouts.

    ``get(order)`` returns ``conj(t)`` with its non-batch axes arranged as
    ``order`` and flattened to ``(B, rest, chi_last)``.
    """

    def __init__(self, t):
        self.t = t
        self._conj = None
        self._store = {}

    def get(self, order):
        key = tuple(order)
        hit = self._store.get(key)
        if hit is None:
            if self._conj is None:
                self._conj = self.t.conj()
            arr = np.ascontiguousarray(self._conj.transpose((0,) + tuple(a + 1 for a in key)))
            hit = arr.reshape(arr.shape[0], -1, arr.shape[-1])
            self._store[key] = hit
        return hit


class _Absorbed:
    """Batch ket tensor with matrices absorbed on some axes.

    ``order[p]`` is the original axis found at position ``p + 1`` of
    ``data`` (position 0 is the batch axis). Absorbing pushes an axis last.
    """

    __slots__ = ("data", "order")

    def __init__(self, data, order):
        self.data = data
        self.order = order

    def absorb(self, axis, m):
        p = self.order.index(axis)
        data = self.data
        if p != len(self.order) - 1:
            data = np.moveaxis(data, p + 1, -1)
        shape = data.shape
        out = np.matmul(data.reshape(shape[0], -1, shape[-1]), m)
        order = self.order[:p] + self.order[p + 1:] + [axis]
        return _Absorbed(out.reshape(shape[:-1] + (m.shape[-1],)), order)

    def last(self, axis):
        """Data with ``axis`` moved last, as ``(B, rest, chi)``, and the new order."""
        p = self.order.index(axis)
        data = self.data
        order = self.order
        if p != len(order) - 1:
            data = np.moveaxis(data, p + 1, -1)
            order = order[:p] + order[p + 1:] + [axis]
        return data.reshape(data.shape[0], -1, data.shape[-1]), order


def _absorb_all(k, mats, axes):
    for a in axes:
        m = mats[a]
        if m is not None:
            k = k.absorb(a, m)
    return k


def _split_recursive(t, mats, open_axes, leaf):
    """Visit each open axis with every other axis absorbed, sharing work by halving."""
    closed = [a for a in range(1, t.ndim - 1) if a not in open_axes]
    base = _absorb_all(_Absorbed(t, list(range(t.ndim - 1))), mats, closed)

    def rec(k, group):
        if len(group) == 1:
            leaf(k, group[0])
            return
        half = len(group) // 2
        left, right = group[:half], group[half:]
        rec(_absorb_all(k, mats, right), left)
        rec(_absorb_all(k, mats, left), right)

    if open_axes:
        rec(base, list(open_axes))


def outgoing_environments(t, mats, open_axes, bra=None):
    """Environment matrices ``E[b, ket, bra]`` for several open bond axes.

    ``t`` is a batch tensor ``(B, s, a_1, ..., a_k)``; ``mats[a]`` is a
    ``(B, chi, chi)`` stack for bond axis ``a`` (1-based, matching the
    unbatched layout) or ``None`` for the identity. Returns
    ``{axis: (B, chi, chi)}``.
    """
    if bra is None:
        bra = BraCache(t)
    out = {}

    def leaf(k, axis):
        ket, order = k.last(axis)
        c = bra.get(order)
        out[axis] = np.matmul(np.swapaxes(ket, 1, 2), c)

    _split_recursive(t, mats, open_axes, leaf)
    return out


def outgoing_sqrt_factors(t, halves_dag, open_axes):
    """Ket batch tensors with square-root messages absorbed, flattened for QR.

    ``halves_dag[a]`` is ``half^dagger`` for the message entering axis ``a``.
    Returns ``{axis: (B, rest, chi)}``.
    """
    out = {}

    def leaf(k, axis):
        out[axis] = k.last(axis)[0]

    _split_recursive(t, halves_dag, open_axes, leaf)
    return out


def normalize_messages(m):
    """Hermitize and scale a ``(B, chi, chi)`` stack to unit trace."""
    m = (m + np.conj(np.swapaxes(m, -1, -2))) * 0.5
    tr = np.trace(m, axis1=-2, axis2=-1).real
    if not np.all(np.isfinite(tr)) or np.any(tr <= _TINY):
        raise DegenerateMessage("message has zero trace")
    return m / tr[:, None, None]


def normalize_message(m):
    """Single-matrix form of :func:`normalize_messages`."""
    return normalize_messages(m[None])[0]


def sqrt_factor_from_qr(k):
    """New square-root message ``conj(R)`` from the QR of ``k``, unit Frobenius norm.

    ``k`` has shape ``(rest, chi)``; ``k^T conj(k) = R^T conj(R)`` so that
    ``half^dagger half`` with ``half = conj(R)`` reproduces the plain update.
    When ``rest < chi`` R is padded with zero rows.
    """
    chi = k.shape[1]
    r = np.linalg.qr(k, mode="r")
    if r.shape[0] < chi:
        r = np.vstack([r, np.zeros((chi - r.shape[0], chi), dtype=r.dtype)])
    n = np.linalg.norm(r)
    if not np.isfinite(n) or n <= _TINY:
        raise DegenerateMessage("square-root message vanished")
    return r.conj() / n
