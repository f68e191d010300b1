"""Complex linear-algebra helpers and reproducible random streams.

Every random draw in the package goes through :class:`SeededRng`.  A stream
is identified by ``(base_seed, stream_id)``; child streams are derived by
hashing purpose tags (trial index, link name, ...) so that the draws of a
trial never depend on how many trials ran before it or on which thread ran
them.
"""

import hashlib

import numpy as np

from .errors import ParameterError, SingularityError

__all__ = [
    "SeededRng",
    "stream_id_for",
    "cgauss_vector",
    "hermitian_solve",
    "singular_values",
]

_MASK64 = (1 << 64) - 1

#: Default condition-number cap for :func:`hermitian_solve`.
COND_CAP = 1e12


def stream_id_for(*tags):
    """Stable 64-bit identifier for a tuple of tags.

    Python's builtin ``hash`` is salted per process for strings, so a keyed
    BLAKE2 digest of the tags' ``repr`` is used instead.
    """
    digest = hashlib.blake2b(repr(tags).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class SeededRng:
    """A deterministic random stream.

    Parameters
    ----------
    base_seed : int
        Experiment-level seed.
    stream_id : int
        Identifier of this stream under ``base_seed``.  Distinct ids give
        independent streams (they map to distinct ``SeedSequence`` spawn keys).
    """

    def __init__(self, base_seed, stream_id=0):
        self.base_seed = int(base_seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        seq = np.random.SeedSequence(self.base_seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"SeededRng(base_seed={self.base_seed}, stream_id={self.stream_id})"

    def spawn(self, *tags):
        """Child stream keyed by this stream's id and ``tags``."""
        return SeededRng(self.base_seed, stream_id_for(self.stream_id, *tags))

    @property
    def generator(self):
        return self._gen

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)


def cgauss_vector(rng, n, variance=1.0):
    """Draw i.i.d. circularly-symmetric complex Gaussian samples.

    ``n`` may be an int or a shape tuple.  Real and imaginary parts each have
    variance ``variance / 2``.
    """
    if variance < 0:
        raise ParameterError(f"variance must be non-negative, got {variance}")
    shape = (n,) if np.isscalar(n) else tuple(n)
    if variance == 0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(variance / 2.0)
    re = rng.normal(0.0, scale, shape)
    im = rng.normal(0.0, scale, shape)
    return re + 1j * im


def hermitian_solve(A, B, cond_cap=COND_CAP, label=None):
    """Solve ``A X = B`` for square ``A``.

    Raises :class:`SingularityError` if ``A`` is singular or its 2-norm
    condition number exceeds ``cond_cap``.  ``label`` (e.g. a group index) is
    carried into the error so callers can tell which system failed.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError(f"A must be square, got shape {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise ParameterError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
    where = "" if label is None else f" (group {label})"
    if not np.all(np.isfinite(A)):
        raise SingularityError(f"non-finite matrix{where}", group=label)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > cond_cap:
        raise SingularityError(
            f"matrix is singular or ill-conditioned{where}: cond={cond:.3g}",
            group=label,
        )
    return np.linalg.solve(A, B)


def singular_values(A):
    """Singular values of ``A`` in descending order."""
    A = np.asarray(A, dtype=complex)
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)
