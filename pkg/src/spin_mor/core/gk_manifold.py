"""
Gabion-Kahler (product-sum) states and their tangent geometry.

A GK state of rank r and order n is the sum of r rows, each row a tensor
product of n factor vectors:

    psi(c) = sum_k  c[k, 1] (x) c[k, 2] (x) ... (x) c[k, n]

In antisymmetric (Slater) mode each row is replaced by the signed sum over
permutations of its factors. Coefficients are stored per factor as arrays of
shape (rank, d_l). The flat coordinate vector orders components as
(row, factor, component).

The tangent frame holds the Jacobian A = d psi / d c, the Kahler potential
kappa = |psi|^2 / 2, the Hermitian metric g = A^dagger A / 2, its
pseudoinverse, and applies the tangent-space projector P_K.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import pinvh

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2 ** 14
DEFAULT_SVD_TOL = 1e-10


def _permutation_sign(perm: Sequence[int]) -> int:
    sign = 1
    seen = list(perm)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


def antisymmetrize(vectors: np.ndarray, order: int, d: int) -> np.ndarray:
    """
    Signed sum over permutations of tensor legs.

    Args:
        vectors: Array of shape (..., d**order)
        order: Number of tensor legs
        d: Local dimension (equal for all legs)

    Returns:
        Array of the same shape
    """
    lead = vectors.shape[:-1]
    tensor = vectors.reshape(lead + (d,) * order)
    n_lead = len(lead)
    out = np.zeros_like(tensor)
    for perm in itertools.permutations(range(order)):
        axes = tuple(range(n_lead)) + tuple(n_lead + p for p in perm)
        out += _permutation_sign(perm) * np.transpose(tensor, axes)
    return out.reshape(vectors.shape)


@dataclass(frozen=True, eq=False)
class GKState:
    """
    Point on a gabion-Kahler manifold.

    Attributes:
        coeffs: Tuple of per-factor coefficient arrays, each of shape (rank, d_l)
        antisymmetric: Slater mode; requires equal factor dimensions
    """

    coeffs: Tuple[np.ndarray, ...]
    antisymmetric: bool = False

    def __post_init__(self):
        coeffs = tuple(np.array(c, dtype=complex, copy=True) for c in self.coeffs)
        if not coeffs:
            raise ValueError("GK state needs at least one factor")

        rank = coeffs[0].shape[0] if coeffs[0].ndim == 2 else -1
        for l, c in enumerate(coeffs):
            if c.ndim != 2 or c.shape[0] != rank or c.shape[1] < 1:
                raise ValueError(
                    f"Factor {l} has shape {c.shape}; expected (rank={rank}, d_l >= 1)"
                )
            c.flags.writeable = False

        if rank < 1:
            raise ValueError(f"GK rank must be positive, got {rank}")

        if self.antisymmetric and len({c.shape[1] for c in coeffs}) != 1:
            raise ValueError("Antisymmetric GK states require equal factor dimensions")

        object.__setattr__(self, 'coeffs', coeffs)

    @property
    def order(self) -> int:
        return len(self.coeffs)

    @property
    def rank(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def factor_dims(self) -> Tuple[int, ...]:
        return tuple(c.shape[1] for c in self.coeffs)

    @property
    def dim(self) -> int:
        return int(np.prod(self.factor_dims, dtype=np.int64))

    @property
    def n_coords(self) -> int:
        """Complex dimension of the coordinate space."""
        return self.rank * int(sum(self.factor_dims))

    def evaluate(self) -> np.ndarray:
        """State vector psi(c) of length prod(d_l)."""
        return evaluate(self)

    def flat(self) -> np.ndarray:
        """Coordinates as one complex vector in (row, factor, component) order."""
        return np.concatenate(self.coeffs, axis=1).ravel()

    def with_flat(self, vector: np.ndarray) -> 'GKState':
        """New state with the given flat coordinates."""
        vector = np.asarray(vector, dtype=complex)
        if vector.shape != (self.n_coords,):
            raise ValueError(f"Expected {self.n_coords} coordinates, got shape {vector.shape}")
        table = vector.reshape(self.rank, -1)
        splits = np.cumsum(self.factor_dims)[:-1]
        return GKState(tuple(np.split(table, splits, axis=1)), self.antisymmetric)

    def balanced(self) -> 'GKState':
        """
        Gauge-equivalent state with unit-norm factors and each row's weight in factor 0.
        """
        norms = np.stack([np.linalg.norm(c, axis=1) for c in self.coeffs])
        weights = np.prod(norms, axis=0)
        safe = np.where(norms > 0, norms, 1.0)

        coeffs = [c / safe[l][:, None] for l, c in enumerate(self.coeffs)]
        coeffs[0] = coeffs[0] * np.where(np.all(norms > 0, axis=0), weights, 0.0)[:, None]
        return GKState(tuple(coeffs), self.antisymmetric)

    def scaled(self, factor: complex) -> 'GKState':
        coeffs = list(self.coeffs)
        coeffs[0] = coeffs[0] * factor
        return GKState(tuple(coeffs), self.antisymmetric)

    def permuted(self, perm: Sequence[int]) -> 'GKState':
        """Reorder the factors."""
        return GKState(tuple(self.coeffs[p] for p in perm), self.antisymmetric)

    def to_record(self) -> Dict:
        """Structured record with coefficients as (re, im) pairs."""
        return {
            'order': self.order,
            'rank': self.rank,
            'dims': list(self.factor_dims),
            'antisymmetric': self.antisymmetric,
            'coeffs': [
                [[[float(z.real), float(z.imag)] for z in row] for row in c]
                for c in self.coeffs
            ],
        }

    @classmethod
    def from_record(cls, record: Dict) -> 'GKState':
        """
        Inverse of to_record.

        Raises:
            ValueError: If declared order, rank or dims disagree with the coefficients
        """
        coeffs = []
        for table in record['coeffs']:
            arr = np.asarray(table, dtype=float)
            coeffs.append(arr[..., 0] + 1j * arr[..., 1])

        state = cls(tuple(coeffs), bool(record.get('antisymmetric', False)))
        if (
            state.order != record['order']
            or state.rank != record['rank']
            or list(state.factor_dims) != list(record['dims'])
        ):
            raise ValueError("GK record header does not match its coefficient table")
        return state


# Evaluation ----------------------------------------------------------------

_ROW = 0


def _leg(l: int) -> int:
    return 1 + l


def _einsum_rows(
    factors: List[np.ndarray], rank: int, sum_rows: bool, extra=()
) -> np.ndarray:
    """
    Contract per-factor arrays into a product tensor.

    ``factors[l]`` has shape (rank, d_l) and contributes leg l, or is a tuple
    (array, sublist) for arbitrary index layouts. Output legs follow the
    factor order, preceded by the row axis when ``sum_rows`` is False and by
    any ``extra`` labels.
    """
    # the ones vector keeps the row label present when every factor is replaced
    operands = [np.ones(rank), [_ROW]]
    for l, f in enumerate(factors):
        if isinstance(f, tuple):
            operands.extend(f)
        else:
            operands.extend([f, [_ROW, _leg(l)]])
    out = ([] if sum_rows else [_ROW]) + list(extra) + [_leg(l) for l in range(len(factors))]
    return np.einsum(*operands, out, optimize=True)


def evaluate(state: GKState) -> np.ndarray:
    """
    Evaluate the product-sum state vector.

    Args:
        state: GK state

    Returns:
        Complex vector of length prod(d_l)

    Example:
        >>> s = GKState((np.array([[1, 2]]), np.array([[3, 4]])))
        >>> evaluate(s).real
        array([3., 4., 6., 8.])
    """
    psi = _einsum_rows(list(state.coeffs), state.rank, sum_rows=True).ravel()
    if state.antisymmetric:
        psi = antisymmetrize(psi, state.order, state.factor_dims[0])
    return psi


def _offsets(state: GKState) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(state.factor_dims)])


def jacobian(state: GKState) -> np.ndarray:
    """
    Dense Jacobian A[i, alpha] = d psi_i / d c_alpha, shape (dim, n_coords).

    Each column is the product state with one factor replaced by a basis
    vector.
    """
    D, r = state.dim, state.rank
    offsets = _offsets(state)
    A3 = np.zeros((D, r, offsets[-1]), dtype=complex)

    slot = len(state.coeffs) + 1
    for l, d in enumerate(state.factor_dims):
        factors: List = list(state.coeffs)
        factors[l] = (np.eye(d), [slot, _leg(l)])
        # shape (rank, d_l, *dims)
        block = _einsum_rows(factors, r, sum_rows=False, extra=(slot,))
        A3[:, :, offsets[l]:offsets[l + 1]] = block.reshape(r, d, D).transpose(2, 0, 1)

    A = A3.reshape(D, state.n_coords)
    if state.antisymmetric:
        A = antisymmetrize(A.T, state.order, state.factor_dims[0]).T
    return A


def jacobian_dot(state: GKState, v: np.ndarray) -> np.ndarray:
    """A @ v without materializing A."""
    table = np.asarray(v, dtype=complex).reshape(state.rank, -1)
    offsets = _offsets(state)
    out = np.zeros(state.dim, dtype=complex)
    for l in range(state.order):
        factors = list(state.coeffs)
        factors[l] = table[:, offsets[l]:offsets[l + 1]]
        out += _einsum_rows(factors, state.rank, sum_rows=True).ravel()
    if state.antisymmetric:
        out = antisymmetrize(out, state.order, state.factor_dims[0])
    return out


def jacobian_adj_dot(state: GKState, w: np.ndarray) -> np.ndarray:
    """A^dagger @ w without materializing A."""
    w = np.asarray(w, dtype=complex)
    if state.antisymmetric:
        w = antisymmetrize(w, state.order, state.factor_dims[0])
    W = w.reshape(state.factor_dims)

    blocks = []
    legs = [_leg(l) for l in range(state.order)]
    for l in range(state.order):
        operands = [np.ones(state.rank), [_ROW], W, legs]
        for p, c in enumerate(state.coeffs):
            if p != l:
                operands.extend([c.conj(), [_ROW, _leg(p)]])
        blocks.append(np.einsum(*operands, [_ROW, _leg(l)], optimize=True))
    return np.concatenate(blocks, axis=1).ravel()


def gram_metric(state: GKState) -> np.ndarray:
    """
    ``A^dagger A`` from factor Gram matrices, without forming psi.

    Only for non-antisymmetric states.
    """
    if state.antisymmetric:
        raise ValueError("Gram-matrix metric is only available for product-sum states")

    r, n = state.rank, state.order
    grams = np.stack([c.conj() @ c.T for c in state.coeffs])  # G_p[k, k']
    offsets = _offsets(state)
    M = np.zeros((r, offsets[-1], r, offsets[-1]), dtype=complex)

    for l in range(n):
        for lp in range(n):
            excluded = {l, lp}
            prod = np.ones((r, r), dtype=complex)
            for p in range(n):
                if p not in excluded:
                    prod = prod * grams[p]
            if l == lp:
                block = np.einsum('kK,iI->kiKI', prod, np.eye(state.factor_dims[l]))
            else:
                block = np.einsum(
                    'kK,Ki,kI->kiKI', prod, state.coeffs[l], state.coeffs[lp].conj()
                )
            M[:, offsets[l]:offsets[l + 1], :, offsets[lp]:offsets[lp + 1]] = block

    m = state.n_coords
    return M.reshape(m, m)


def second_derivatives(state: GKState) -> np.ndarray:
    """
    Tensor B[i, alpha, gamma] = d^2 psi_i / d c_alpha d c_gamma.

    Nonzero only for coordinates in the same row and different factors.
    """
    D, r, m = state.dim, state.rank, state.n_coords
    offsets = _offsets(state)
    B5 = np.zeros((D, r, offsets[-1], offsets[-1]), dtype=complex)

    slot_a, slot_b = state.order + 1, state.order + 2
    for l in range(state.order):
        for lp in range(l + 1, state.order):
            factors: List = list(state.coeffs)
            factors[l] = (np.eye(state.factor_dims[l]), [slot_a, _leg(l)])
            factors[lp] = (np.eye(state.factor_dims[lp]), [slot_b, _leg(lp)])
            block = _einsum_rows(factors, r, sum_rows=False, extra=(slot_a, slot_b))
            block = block.reshape(r, state.factor_dims[l], state.factor_dims[lp], D)
            block = block.transpose(3, 0, 1, 2)
            B5[:, :, offsets[l]:offsets[l + 1], offsets[lp]:offsets[lp + 1]] = block
            B5[:, :, offsets[lp]:offsets[lp + 1], offsets[l]:offsets[l + 1]] = block.transpose(0, 1, 3, 2)

    # Embed the per-row blocks on the (row, row) diagonal
    B = np.zeros((D, r, offsets[-1], r, offsets[-1]), dtype=complex)
    for k in range(r):
        B[:, k, :, k, :] = B5[:, k]
    B = B.reshape(D, m, m)

    if state.antisymmetric:
        B = antisymmetrize(B.transpose(1, 2, 0), state.order, state.factor_dims[0]).transpose(2, 0, 1)
    return B


# Tangent frame -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TangentFrame:
    """
    Tangent data at a GK state.

    ``A`` is None above the dense limit; use ``A_dot``/``A_adj_dot`` there.
    """

    state: GKState
    psi: np.ndarray
    kappa: float
    g: np.ndarray
    g_pinv: np.ndarray
    svd_tol: float
    A: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def numeric_rank(self) -> int:
        w = np.linalg.eigvalsh(self.g)
        return int(np.sum(w > self.svd_tol * max(w.max(), 0.0)))

    def A_dot(self, v: np.ndarray) -> np.ndarray:
        if self.A is not None:
            return self.A @ v
        return jacobian_dot(self.state, v)

    def A_adj_dot(self, w: np.ndarray) -> np.ndarray:
        if self.A is not None:
            return self.A.conj().T @ w
        return jacobian_adj_dot(self.state, w)

    def raise_index(self, covector: np.ndarray) -> np.ndarray:
        """Apply the metric pseudoinverse g^{alpha beta-bar}."""
        return self.g_pinv @ covector

    def lower_index(self, vector: np.ndarray) -> np.ndarray:
        return self.g @ vector

    def project(self, w: np.ndarray) -> np.ndarray:
        """Tangent projector ``P_K w = A (g^+ / 2) A^dagger w``."""
        return self.A_dot(0.5 * (self.g_pinv @ self.A_adj_dot(w)))

    def project_normal(self, w: np.ndarray) -> np.ndarray:
        """``(I - P_K) w``."""
        return w - self.project(w)

    def pullback(self, w: np.ndarray) -> np.ndarray:
        """Least-squares coordinate direction v with A v = P_K w."""
        return 0.5 * (self.g_pinv @ self.A_adj_dot(w))


def tangent_frame(
    state: GKState,
    svd_tol: float = DEFAULT_SVD_TOL,
    dense: Optional[bool] = None,
) -> TangentFrame:
    """
    Build the tangent frame at a state.

    Args:
        state: GK state
        svd_tol: Relative eigenvalue cutoff for the metric pseudoinverse
        dense: Force (True) or forbid (False) materializing A; by default A
            is dense when dim H <= DENSE_LIMIT

    Returns:
        TangentFrame

    Raises:
        ValueError: If the state evaluates to zero
    """
    psi = evaluate(state)
    norm_sq = float(np.vdot(psi, psi).real)
    if norm_sq == 0.0 or not np.isfinite(norm_sq):
        raise ValueError("Tangent frame undefined at the zero state")

    if dense is None:
        dense = state.dim <= DENSE_LIMIT or state.antisymmetric

    if dense:
        A = jacobian(state)
        M = A.conj().T @ A
    else:
        A = None
        M = gram_metric(state)

    g = 0.5 * (M + M.conj().T) / 2
    g_pinv = pinvh(g, rtol=svd_tol)

    return TangentFrame(
        state=state,
        psi=psi,
        kappa=0.5 * norm_sq,
        g=g,
        g_pinv=g_pinv,
        svd_tol=svd_tol,
        A=A,
    )


# Constructors --------------------------------------------------------------


def random_gk_state(
    order: int,
    rank: int,
    d: Union[int, Sequence[int]],
    seed: int,
    antisymmetric: bool = False,
) -> GKState:
    """
    Random GK state: each row an independent normalized product state, sum normalized.

    Args:
        order: Number of factors
        rank: Number of rows
        d: Local dimension, or one per factor
        seed: RNG seed
        antisymmetric: Slater mode

    Returns:
        GKState with |psi| = 1

    Raises:
        ValueError: If the shape is not positive or the state vanishes

    Example:
        >>> s = random_gk_state(order=3, rank=2, d=2, seed=7)
        >>> round(float(np.linalg.norm(s.evaluate())), 12)
        1.0
    """
    # Validate inputs
    if order < 1 or rank < 1:
        raise ValueError(f"order and rank must be positive, got order={order}, rank={rank}")

    dims = [int(d)] * order if np.isscalar(d) else [int(x) for x in d]
    if len(dims) != order or min(dims) < 1:
        raise ValueError(f"Invalid factor dimensions {dims} for order {order}")

    rng = np.random.default_rng(seed)
    coeffs = []
    for dl in dims:
        c = rng.standard_normal((rank, dl)) + 1j * rng.standard_normal((rank, dl))
        coeffs.append(c / np.linalg.norm(c, axis=1, keepdims=True))

    state = GKState(tuple(coeffs), antisymmetric)
    norm = np.linalg.norm(state.evaluate())
    if norm == 0.0:
        raise ValueError("Random GK state vanished (antisymmetric order exceeds local dimension?)")
    return state.scaled(1.0 / norm)


def product_state(vectors: Sequence[np.ndarray]) -> GKState:
    """Rank-1 GK state from a list of factor vectors."""
    return GKState(tuple(np.asarray(v, dtype=complex)[None, :] for v in vectors))


def gauge_dimension_estimate(state: GKState) -> int:
    """
    Gauge-reduced complex dimension ``rank * (sum(d_l - 1) + 1)``.

    An annotation; the numeric rank of g is the ground truth.
    """
    return state.rank * (int(sum(d - 1 for d in state.factor_dims)) + 1)
