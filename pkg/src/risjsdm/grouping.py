"""UE clustering, path-loss RIS grouping, cross-correlation model, association.

The association search evaluates the cross-correlation model under each
candidate's own RIS -> UE assignment, so the model and the search stay
consistent.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ScaleExceededError

__all__ = [
    "LosData",
    "GroupingPlan",
    "kmeans_group",
    "ris_grouping",
    "cross_correlation_q",
    "q_matrix",
    "association_objective",
    "associate",
    "count_candidates",
]


@dataclass
class LosData:
    """LoS statistics of every RIS toward every UE.

    Attributes
    ----------
    theta, phi : ndarray, shape (K, N)
        RIS -> UE departure angles.
    beta_u : ndarray, shape (K, N), complex
        LoS gains ``beta^U_{k,n,0}``.
    beta_b : ndarray, shape (K,), complex
        BS -> RIS LoS gains ``beta^B_{k,0}``.
    rho_u : ndarray, shape (K, N)
        Free-space amplitudes RIS -> UE.
    ris_geom : UpaGeometry
    """

    theta: np.ndarray
    phi: np.ndarray
    beta_u: np.ndarray
    beta_b: np.ndarray
    rho_u: np.ndarray
    ris_geom: object
    _arvs: np.ndarray = field(default=None, repr=False)

    @property
    def K(self):
        return self.theta.shape[0]

    @property
    def N(self):
        return self.theta.shape[1]

    @property
    def arvs(self):
        """Departure responses ``r_{k,n,0}``, shape ``(K, N, M_R)``."""
        if self._arvs is None:
            from .channel import upa_arv

            self._arvs = upa_arv(self.theta, self.phi, self.ris_geom)
        return self._arvs

    def gram(self):
        """``G[k, a, n] = r_{k,a,0}^H r_{k,n,0}``."""
        r = self.arvs
        return np.einsum("kai,kni->kan", r.conj(), r)

    def direction_vectors(self, recenter=True):
        """Per-UE direction vectors ``[theta_1, phi_1, ..., theta_K, phi_K]`` (shape ``N x 2K``).

        With ``recenter`` each RIS's azimuths are rotated so that their
        circular mean sits at zero before wrapping into ``(-pi, pi]``.  This
        keeps a UE cluster that straddles the azimuth seam contiguous and
        leaves Euclidean distances unchanged when no seam is crossed.
        """
        phi = self.phi
        if recenter:
            ref = np.angle(np.exp(1j * phi).mean(axis=1, keepdims=True))
            phi = np.angle(np.exp(1j * (phi - ref)))
        out = np.empty((self.N, 2 * self.K))
        out[:, 0::2] = self.theta.T
        out[:, 1::2] = phi.T
        return out


@dataclass
class GroupingPlan:
    """UE groups, RIS groups and the ordered association.

    ``selected[c][j]`` is the UE served by RIS ``ris_groups[c][j]``.
    """

    ue_groups: list
    ris_groups: list
    selected: list = None

    def __post_init__(self):
        self.ue_groups = [sorted(int(n) for n in g) for g in self.ue_groups]
        self.ris_groups = [sorted(int(k) for k in g) for g in self.ris_groups]
        if len(self.ue_groups) != len(self.ris_groups):
            raise ParameterError("ue_groups and ris_groups must have the same length")
        if self.selected is not None:
            self.selected = [[int(n) for n in s] for s in self.selected]
            for c, (s, g, r) in enumerate(zip(self.selected, self.ue_groups, self.ris_groups)):
                if len(s) != len(r) or len(set(s)) != len(s) or not set(s) <= set(g):
                    raise ParameterError(f"group {c}: invalid selection {s}")

    @property
    def C(self):
        return len(self.ue_groups)

    @property
    def K(self):
        return sum(len(r) for r in self.ris_groups)

    def assignment(self):
        """RIS index -> assigned UE; requires ``selected``."""
        if self.selected is None:
            raise ParameterError("plan has no association yet")
        out = {}
        for ris, sel in zip(self.ris_groups, self.selected):
            out.update(zip(ris, sel))
        return out

    def ris_order(self):
        """RIS indices ordered by group, then within group (stream order)."""
        return [k for r in self.ris_groups for k in r]

    def served_order(self):
        """Served UEs in stream order (aligned with :meth:`ris_order`)."""
        if self.selected is None:
            raise ParameterError("plan has no association yet")
        return [n for s in self.selected for n in s]

    def group_of_ue(self):
        return {n: c for c, g in enumerate(self.ue_groups) for n in g}

    def group_of_ris(self):
        return {k: c for c, g in enumerate(self.ris_groups) for k in g}

    def to_text(self):
        """Human-readable plan description."""
        lines = []
        for c in range(self.C):
            sel = "-" if self.selected is None else " ".join(str(n + 1) for n in self.selected[c])
            lines.append(
                f"group {c + 1}: ues {' '.join(str(n + 1) for n in self.ue_groups[c])}"
                f" | ris {' '.join(str(k + 1) for k in self.ris_groups[c]) or '-'}"
                f" | served {sel}"
            )
        return "\n".join(lines)


def _lloyd(X, centers, max_iter, tol):
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        labels = d2.argmin(axis=1)
        labels = _repair_empty(X, labels, centers.shape[0])
        new = np.stack([X[labels == c].mean(axis=0) for c in range(centers.shape[0])])
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < tol:
            break
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    labels = _repair_empty(X, d2.argmin(axis=1), centers.shape[0])
    centers = np.stack([X[labels == c].mean(axis=0) for c in range(centers.shape[0])])
    wcss = float(sum(((X[labels == c] - centers[c]) ** 2).sum() for c in range(centers.shape[0])))
    return labels, wcss


def _repair_empty(X, labels, C):
    labels = labels.copy()
    while True:
        counts = np.bincount(labels, minlength=C)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return labels
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        centroid = X[members].mean(axis=0)
        far = members[np.argmax(((X[members] - centroid) ** 2).sum(-1))]
        labels[far] = empty[0]


def kmeans_group(vectors, C, rng, restarts=10, max_iter=100, tol=1e-6):
    """K-means clustering of direction vectors into ``C`` non-empty groups.

    Lloyd iterations from ``restarts`` random initializations (distinct data
    points); the run with the smallest within-cluster sum of squares wins.
    Groups are returned as sorted index lists, ordered by smallest member.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2:
        raise ParameterError("vectors must be an (N, d) array")
    N = X.shape[0]
    if C < 1 or N < C:
        raise ParameterError(f"cannot split {N} UEs into {C} groups")
    best = None
    for _ in range(restarts):
        init = rng.permutation(N)[:C]
        labels, wcss = _lloyd(X, X[init].copy(), max_iter, tol)
        if best is None or wcss < best[1] - 1e-15:
            best = (labels, wcss)
    labels = best[0]
    groups = [sorted(np.flatnonzero(labels == c).tolist()) for c in range(C)]
    return sorted(groups, key=lambda g: g[0])


def ris_grouping(avg_path_loss, ue_groups):
    """Greedy path-loss RIS grouping with per-group caps ``K_c <= N_c``.

    Repeatedly assigns the unassigned RIS / open group pair with the largest
    average path-loss amplitude; ties go to the smaller RIS index, then the
    smaller group index.
    """
    table = np.asarray(avg_path_loss, dtype=float)
    K, C = table.shape
    caps = [len(g) for g in ue_groups]
    if len(caps) != C:
        raise ParameterError(f"table has {C} groups but {len(caps)} UE groups given")
    if np.any(table <= 0):
        raise ParameterError("average path-loss entries must be positive")
    if sum(caps) < K:
        raise ParameterError(f"caps {caps} cannot hold {K} RISs")
    groups = [[] for _ in range(C)]
    free = set(range(K))
    open_groups = {c for c in range(C) if caps[c] > 0}
    while free:
        best = None
        for k in sorted(free):
            for c in sorted(open_groups):
                if best is None or table[k, c] > table[best]:
                    best = (k, c)
        k, c = best
        groups[c].append(k)
        free.remove(k)
        if len(groups[c]) >= caps[c]:
            open_groups.remove(c)
    return [sorted(g) for g in groups]


def _weights(los, gram=None):
    """``W[k, a, n] = beta^U_{k,n} r_{k,a}^H r_{k,n}``: RIS k's mean gain at UE n when steered at UE a."""
    if gram is None:
        gram = los.gram()
    return gram * los.beta_u[:, None, :]


def q_matrix(assignment, los, weights=None):
    """Full ``N x N`` cross-correlation model for an assignment.

    ``assignment[k]`` is the UE assigned to RIS ``k``.
    ``Q[n, m] = sum_k |beta^B_k|^2 conj(beta^U_{k,m}) beta^U_{k,n}
    (r_{k,m}^H r_{k,a}) (r_{k,a}^H r_{k,n})``.
    """
    K = los.K
    a = np.asarray([assignment[k] for k in range(K)], dtype=int)
    W = _weights(los) if weights is None else weights
    V = W[np.arange(K), a, :]  # (K, N)
    return np.einsum("k,km,kn->nm", np.abs(los.beta_b) ** 2, V.conj(), V)


def cross_correlation_q(n, m, assignment, los):
    """Model of ``E{h_m^H F F^H h_n}`` for steering assignment ``assignment``."""
    K = los.K
    missing = [k for k in range(K) if k not in assignment]
    if missing:
        raise ParameterError(f"RIS {missing} has no assigned UE")
    return complex(q_matrix(assignment, los)[n, m])


def association_objective(plan, los, weights=None):
    """Max ``|Q|`` over served UE pairs in different groups (``0`` if none)."""
    Q = np.abs(q_matrix(plan.assignment(), los, weights))
    tags = [(n, c) for c, s in enumerate(plan.selected) for n in s]
    worst = 0.0
    for (n, c), (m, d) in itertools.product(tags, tags):
        if c != d:
            worst = max(worst, Q[n, m])
    return float(worst)


def count_candidates(ue_groups, ris_groups):
    return math.prod(math.perm(len(g), len(r)) for g, r in zip(ue_groups, ris_groups))


def associate(plan, los, cap=1_000_000, reverse=False):
    """Exhaustive min-max association.

    For every combination of ordered per-group selections, ``Q`` is evaluated
    under that combination's own assignment; the combination with the smallest
    worst inter-group ``|Q|`` wins, ties going to the lexicographically
    smallest selection.  ``reverse`` only flips the enumeration order (the
    result must not depend on it).
    """
    for c, (g, r) in enumerate(zip(plan.ue_groups, plan.ris_groups)):
        if len(r) > len(g):
            raise ParameterError(f"group {c} has {len(r)} RISs but only {len(g)} UEs")
    total = count_candidates(plan.ue_groups, plan.ris_groups)
    if total > cap:
        raise ScaleExceededError(f"association search has {total} candidates (cap {cap})")
    W = _weights(los)
    bb2 = np.abs(los.beta_b) ** 2
    per_group = [list(itertools.permutations(g, len(r))) for g, r in zip(plan.ue_groups, plan.ris_groups)]
    combos = itertools.product(*per_group)
    if reverse:
        combos = reversed(list(combos))
    best = None
    for combo in combos:
        a = np.empty(los.K, dtype=int)
        served, labels = [], []
        for c, (ris, sel) in enumerate(zip(plan.ris_groups, combo)):
            a[ris] = sel
            served.extend(sel)
            labels.extend([c] * len(sel))
        V = W[np.arange(los.K), a][:, served]  # (K, S)
        Q = np.abs(np.einsum("k,km,kn->nm", bb2, V.conj(), V))
        lab = np.asarray(labels)
        mask = lab[:, None] != lab[None, :]
        obj = float(Q[mask].max()) if mask.any() else 0.0
        key = (obj, tuple(tuple(s) for s in combo))
        if best is None or key < best:
            best = key
    return GroupingPlan(plan.ue_groups, plan.ris_groups, [list(s) for s in best[1]]), best[0]
