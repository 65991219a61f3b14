"""
Sampling dictionaries for quantum states.

Petal dictionaries are deterministic: every column is a product of spin
coherent states whose directions are tetrahedron vertices, labeled by a
word over the four-letter alphabet {0, 1, 2, 3}. Restricting the words to
an error-correcting code bounds the pairwise Hamming distance and hence
the pairwise wedge product, since for the tetrahedral alphabet

    |w_i ^ w_k|^2 = 1 - 9^(-j h(w_i, w_k)).

Gaussian dictionaries are the random baseline.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, svds

from ..core.spin_algebra import coherent_amplitudes, parse_spin, tetrahedral_directions

logger = logging.getLogger(__name__)

ALPHABET_SIZE = 4
KINDS = ('petal', 'gaussian')
CODES = ('none', 'parity', 'secded')
MIN_DISTANCE = {'none': 1, 'parity': 2, 'secded': 4}
CHUNK_ENTRIES = 2 ** 20
MATERIALIZE_LIMIT = 2 ** 24


# Alphabet and words ----------------------------------------------------------


def alphabet_states(j=0.5) -> np.ndarray:
    """Coherent states of the tetrahedral alphabet, shape (4, 2j + 1)."""
    return coherent_amplitudes(j, tetrahedral_directions())


def _check_word(word, name: str) -> np.ndarray:
    w = np.asarray(word)
    if w.ndim != 1 or not np.issubdtype(w.dtype, np.integer):
        raise ValueError(f"{name} must be a 1-D integer word, got {word!r}")
    if w.size and (w.min() < 0 or w.max() >= ALPHABET_SIZE):
        raise ValueError(f"{name} uses characters outside the alphabet 0..{ALPHABET_SIZE - 1}: {word!r}")
    return w


def hamming_distance(w_i: Sequence[int], w_k: Sequence[int]) -> int:
    """Number of positions at which two equal-length words differ."""
    a, b = _check_word(w_i, "w_i"), _check_word(w_k, "w_k")
    if a.shape != b.shape:
        raise ValueError(f"Word lengths differ: {a.size} vs {b.size}")
    return int(np.count_nonzero(a != b))


def tetrahedral_wedge_sq(j, hamming: int) -> float:
    """Closed form ``1 - 9^(-j h)``."""
    return 1.0 - 9.0 ** (-parse_spin(j) * hamming)


def wedge_and_hamming(w_i: Sequence[int], w_k: Sequence[int], j=0.5) -> Dict[str, float]:
    """
    Wedge product of two petal vectors against their Hamming distance.

    The wedge ``|w_i|^2 |w_k|^2 - |<w_i|w_k>|^2`` is evaluated from the
    per-character coherent-state overlaps; the closed form depends only on
    the Hamming distance.

    Args:
        w_i: First word
        w_k: Second word, same length
        j: Spin of every character

    Returns:
        Dict with wedge_sq, hamming, closed_form and relation_defect

    Raises:
        ValueError: If the lengths differ or a character is outside the alphabet

    Example:
        >>> round(wedge_and_hamming([0, 1, 2], [0, 1, 3])['wedge_sq'], 12)
        0.666666666667
    """
    h = hamming_distance(w_i, w_k)
    a, b = np.asarray(w_i), np.asarray(w_k)
    amps = alphabet_states(j)

    norms_i = np.prod(np.sum(np.abs(amps[a]) ** 2, axis=1))
    norms_k = np.prod(np.sum(np.abs(amps[b]) ** 2, axis=1))
    overlap = np.prod(np.einsum('ld,ld->l', amps[a].conj(), amps[b]))
    wedge_sq = float(norms_i * norms_k - abs(overlap) ** 2)

    closed = tetrahedral_wedge_sq(j, h)
    return {
        'wedge_sq': wedge_sq,
        'hamming': h,
        'closed_form': closed,
        'relation_defect': abs(wedge_sq - closed),
    }


# Codes -----------------------------------------------------------------------


def _hamming_levels(n_chars: int) -> int:
    m = int(np.log2(n_chars)) if n_chars > 0 else 0
    if n_chars < 4 or 2 ** m != n_chars:
        raise ValueError(f"SECDED needs a power-of-two word length >= 4, got {n_chars}")
    return m


def payload_length(n_chars: int, code: str) -> int:
    """Number of free characters in a codeword of ``n_chars``."""
    if code not in CODES:
        raise ValueError(f"Unknown code '{code}'. Available: {', '.join(CODES)}")
    if n_chars < 1:
        raise ValueError(f"n_chars must be positive, got {n_chars}")
    if code == 'none':
        return n_chars
    if code == 'parity':
        if n_chars < 2:
            raise ValueError(f"Parity code needs at least 2 characters, got {n_chars}")
        return n_chars - 1
    return n_chars - _hamming_levels(n_chars) - 1


def extended_hamming_generator(n_bits: int) -> np.ndarray:
    """
    Generator of the extended Hamming code of length ``n_bits`` over GF(2).

    Position 0 carries the overall parity, positions 2^i the Hamming checks
    and the rest the data, in increasing order.

    Returns:
        Integer matrix of shape (k, n_bits) with k = n_bits - log2(n_bits) - 1

    Example:
        >>> extended_hamming_generator(8).shape
        (4, 8)
    """
    m = _hamming_levels(n_bits)
    data_positions = [p for p in range(1, n_bits) if p & (p - 1)]
    G = np.zeros((len(data_positions), n_bits), dtype=np.int64)
    for row, pos in enumerate(data_positions):
        G[row, pos] = 1
        for i in range(m):
            if pos >> i & 1:
                G[row, 1 << i] = 1
        G[row, 0] = G[row, 1:].sum() % 2
    return G


def encode(payload: np.ndarray, n_chars: int, code: str) -> np.ndarray:
    """
    Encode payload words (rows of base-4 digits) into codewords.

    The parity code appends the sum of the payload mod 4. SECDED encodes
    each of the two bit planes of the 4-ary symbols with the extended
    Hamming code, so any two codewords differ in at least four characters.

    Args:
        payload: Integer array of shape (B, payload_length) with entries 0..3
        n_chars: Codeword length
        code: One of CODES

    Returns:
        Integer array of shape (B, n_chars)
    """
    payload = np.atleast_2d(np.asarray(payload, dtype=np.int64))
    k = payload_length(n_chars, code)
    if payload.shape[1] != k:
        raise ValueError(f"Payload has {payload.shape[1]} characters, code '{code}' expects {k}")

    if code == 'none':
        return payload.copy()
    if code == 'parity':
        return np.concatenate([payload, payload.sum(axis=1, keepdims=True) % ALPHABET_SIZE], axis=1)

    G = extended_hamming_generator(n_chars)
    planes = [((payload >> b) & 1) @ G % 2 for b in (0, 1)]
    return planes[0] | (planes[1] << 1)


def payload_digits(indices: np.ndarray, k: int) -> np.ndarray:
    """Base-4 digits of column indices, most significant first, shape (B, k)."""
    indices = np.asarray(indices, dtype=np.int64)
    powers = ALPHABET_SIZE ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return (indices[:, None] // powers[None, :]) % ALPHABET_SIZE


def dictionary_dimensions(n_chars: int, code: str, j=0.5) -> Tuple[int, int]:
    """(rows n, columns p) of a petal dictionary: n = (2j+1)^n_chars, p = 4^payload."""
    d = int(round(2 * parse_spin(j))) + 1
    return d ** n_chars, ALPHABET_SIZE ** payload_length(n_chars, code)


# Dictionaries ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SamplingDictionary:
    """
    Sampling matrix X of shape (n_rows, n_cols), applied without materializing.

    Attributes:
        kind: 'petal' or 'gaussian'
        n_rows: Row count n
        n_cols: Column count p
        j: Spin of the petal characters
        n_chars: Petal word length
        code: Petal code
        seed: Gaussian seed
        is_complex: Complex Gaussian entries
        orthonormal: Gaussian rows orthonormalized (then X X^dagger = (p/n) I)
    """

    kind: str
    n_rows: int
    n_cols: int
    j: float = 0.5
    n_chars: int = 0
    code: str = 'none'
    seed: Optional[int] = None
    is_complex: bool = False
    orthonormal: bool = False

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def min_distance(self) -> Optional[int]:
        return MIN_DISTANCE[self.code] if self.kind == 'petal' else None

    @cached_property
    def _alphabet(self) -> np.ndarray:
        return alphabet_states(self.j)

    @cached_property
    def _gaussian(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        X = rng.standard_normal(self.shape)
        if self.is_complex:
            X = (X + 1j * rng.standard_normal(self.shape)) / np.sqrt(2.0)
        X /= np.sqrt(self.n_rows)
        if self.orthonormal:
            U, _, Vh = np.linalg.svd(X, full_matrices=False)
            X = np.sqrt(self.n_cols / self.n_rows) * (U @ Vh)
        return X

    def words(self, indices: Sequence[int]) -> np.ndarray:
        """Codewords of the given columns, shape (B, n_chars)."""
        if self.kind != 'petal':
            raise ValueError("Only petal dictionaries have words")
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_cols):
            raise ValueError(f"Column index out of range [0, {self.n_cols})")
        k = payload_length(self.n_chars, self.code)
        return encode(payload_digits(indices, k), self.n_chars, self.code)

    def columns(self, indices: Sequence[int]) -> np.ndarray:
        """Columns as rows of an array of shape (B, n_rows)."""
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        if self.kind == 'gaussian':
            return self._gaussian[:, indices].T

        chars = self.words(indices)
        states = self._alphabet[chars[:, 0]]
        for l in range(1, self.n_chars):
            states = (states[:, :, None] * self._alphabet[chars[:, l]][:, None, :]).reshape(len(indices), -1)
        return states

    def _chunks(self) -> Iterator[np.ndarray]:
        size = max(1, CHUNK_ENTRIES // self.n_rows)
        for start in range(0, self.n_cols, size):
            yield np.arange(start, min(start + size, self.n_cols))

    def matvec(self, w: np.ndarray) -> np.ndarray:
        """``X w`` for a coefficient vector of length p."""
        w = np.asarray(w).ravel()
        if w.size != self.n_cols:
            raise ValueError(f"Coefficient vector has length {w.size}, expected {self.n_cols}")
        if self.kind == 'gaussian':
            return self._gaussian @ w
        out = np.zeros(self.n_rows, dtype=complex)
        for idx in self._chunks():
            out += self.columns(idx).T @ w[idx]
        return out

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """``X^dagger y`` for a sample vector of length n."""
        y = np.asarray(y).ravel()
        if y.size != self.n_rows:
            raise ValueError(f"Sample vector has length {y.size}, expected {self.n_rows}")
        if self.kind == 'gaussian':
            return self._gaussian.conj().T @ y
        return np.concatenate([self.columns(idx).conj() @ y for idx in self._chunks()])

    def materialize(self) -> np.ndarray:
        """Dense X of shape (n, p)."""
        if self.n_rows * self.n_cols > MATERIALIZE_LIMIT:
            raise ValueError(
                f"Dictionary {self.n_rows}x{self.n_cols} is too large to materialize; use matvec/rmatvec"
            )
        if self.kind == 'gaussian':
            return self._gaussian.copy()
        return self.columns(np.arange(self.n_cols)).T

    def as_operator(self) -> LinearOperator:
        dtype = complex if (self.kind == 'petal' or self.is_complex) else float
        return LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.rmatvec, dtype=dtype)

    def spectral_norm(self) -> float:
        """Largest singular value of X."""
        if self.n_rows * self.n_cols <= MATERIALIZE_LIMIT:
            return float(np.linalg.norm(self.materialize(), 2))
        sigma = svds(self.as_operator(), k=1, return_singular_vectors=False)
        return float(sigma[0])

    def get_info(self) -> Dict:
        info = {
            'kind': self.kind,
            'n_rows': self.n_rows,
            'n_cols': self.n_cols,
        }
        if self.kind == 'petal':
            info.update({
                'j': self.j,
                'n_chars': self.n_chars,
                'code': self.code,
                'min_hamming_distance': self.min_distance,
                'min_wedge_sq': tetrahedral_wedge_sq(self.j, self.min_distance),
            })
        else:
            info.update({'seed': self.seed, 'is_complex': self.is_complex, 'orthonormal': self.orthonormal})
        return info


def build_dictionary(n_chars: int, code: str = 'parity', j=0.5) -> SamplingDictionary:
    """
    Build a tetrahedral petal dictionary.

    Args:
        n_chars: Word length (number of spins)
        code: 'none', 'parity' or 'secded' (power-of-two lengths >= 4)
        j: Spin of every character

    Returns:
        SamplingDictionary with n = (2j+1)^n_chars rows and 4^payload columns

    Raises:
        ValueError: If the code cannot have this length

    Example:
        >>> build_dictionary(3, 'parity').shape
        (8, 16)
        >>> build_dictionary(16, 'secded').shape == (2 ** 16, 2 ** 22)
        True
    """
    j = parse_spin(j)
    n, p = dictionary_dimensions(n_chars, code, j)
    logger.debug(f"Petal dictionary: {n_chars} chars, code {code}, {n}x{p}")
    return SamplingDictionary(kind='petal', n_rows=n, n_cols=p, j=j, n_chars=n_chars, code=code)


def gaussian_dictionary(
    n: int,
    p: int,
    seed: Optional[int] = None,
    is_complex: bool = False,
    orthonormalize: bool = False,
) -> SamplingDictionary:
    """
    Random Gaussian sampling matrix with N(0, 1/n) entries.

    Args:
        n: Rows
        p: Columns
        seed: Random seed
        is_complex: Circular complex entries
        orthonormalize: Set every singular value to sqrt(p/n)

    Returns:
        SamplingDictionary
    """
    if n < 1 or p < 1:
        raise ValueError(f"Dictionary shape must be positive, got {n}x{p}")
    if orthonormalize and n > p:
        raise ValueError(f"Orthonormalized rows need n <= p, got {n}x{p}")
    return SamplingDictionary(
        kind='gaussian', n_rows=n, n_cols=p, seed=seed, is_complex=is_complex, orthonormal=orthonormalize
    )


def as_matrix(X) -> np.ndarray:
    """Dense matrix of a SamplingDictionary or array-like."""
    if isinstance(X, SamplingDictionary):
        return X.materialize()
    return np.asarray(X)
