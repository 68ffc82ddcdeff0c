"""η-Einstein Sasakian model spaces.

Three families are provided:

* ``heisenberg3`` / ``heisenberg5``: the Heisenberg group with
  ``λ = dz - Σ y_k dx_k`` and transverse metric ``½ Σ (dx_k² + dy_k²)``;
* ``sphere3`` / ``sphere5``: the round sphere in ``C^{n+1} = R^{2n+2}``, handled in
  embedded coordinates with the tangential-projection connection;
* ``hypcyl3``: the circle bundle over the hyperbolic cylinder ``dρ² + cosh²ρ dφ²``
  with ``λ = dz + 2 sinh ρ dφ``.

Normalization
-------------
``ω = dλ`` uses ``dλ(X, Y) = ½(X λ(Y) - Y λ(X) - λ([X, Y]))``.  ``J`` is defined
by ``ω(X, Y) = g(JX, Y)``, so ``g = λ⊗λ + ω(·, J·)`` becomes a checkable identity
rather than a definition.  Contact forms are scaled so that ``∇λ = ω`` holds.

Curvature uses ``R(∂_a, ∂_b)∂_c = R^e_{cab} ∂_e`` with
``R^e_{cab} = ∂_a Γ^e_{bc} - ∂_b Γ^e_{ac} + Γ^e_{as}Γ^s_{bc} - Γ^e_{bs}Γ^s_{ac}``,
``R_{dcab} = g_{de} R^e_{cab}`` and ``Ric_{cb} = R^e_{ceb}``.  With this choice
the round sphere has ``R_{abcd} = g_{ac}g_{bd} - g_{ad}g_{bc}`` and the identity
``R^e_{cab} λ_e = g_{cb} λ_a - g_{ca} λ_b`` holds with a plus sign.

Array conventions
-----------------
All evaluators are vectorized over leading axes: ``x`` has shape ``(..., D)``
where ``D`` is the chart dimension (``2n+1`` for charts, ``2n+2`` for spheres).

* ``metric[..., a, b] = g_ab``
* ``christoffel[..., a, b, c] = Γ^a_bc``
* ``phi[..., b, a] = J^b_a`` (matrix acting on column vectors)
* ``omega[..., a, b] = ω_ab``
* ``riemann[..., d, c, a, b] = R_dcab`` and ``riemann_up[..., e, c, a, b] = R^e_cab``
* ``nabla_riemann[..., s, d, c, a, b] = ∇_s R_dcab``
* ``nabla_lambda[..., a, b] = ∇_a λ_b``, ``nabla_reeb[..., a, b] = (∇_a T)^b``,
  ``nabla_phi[..., a, b, c] = (∇_a J)^b_c``
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sp
from scipy.stats import qmc

from .errors import PointOutsideChart

SPHERE_TOL = 1e-12
FD_STEP = 1e-4


class ModelKind(str, Enum):
    HEISENBERG_R3 = "heisenberg3"
    HEISENBERG_R5 = "heisenberg5"
    SPHERE_S3 = "sphere3"
    SPHERE_S5 = "sphere5"
    HYPERBOLIC_CYLINDER3 = "hypcyl3"


MODEL_IDS = tuple(k.value for k in ModelKind)


# ---------------------------------------------------------------------------
# symbolic generation for chart models
# ---------------------------------------------------------------------------

def _vectorize(expr_array, syms) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a sympy array into a numpy function of ``x[..., D]``."""
    arr = sp.Array(expr_array)
    shape = arr.shape
    flat = list(sp.flatten(arr))
    nz = [(i, e) for i, e in enumerate(flat) if e != 0]
    const = [(i, float(e)) for i, e in nz if not e.free_symbols]
    var = [(i, e) for i, e in nz if e.free_symbols]
    fn = sp.lambdify(syms, [e for _, e in var], modules="numpy", cse=True) if var else None
    size = len(flat)

    def evaluate(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        out = np.zeros(lead + (size,))
        for i, c in const:
            out[..., i] = c
        if fn is not None:
            vals = fn(*[x[..., k] for k in range(x.shape[-1])])
            for (i, _), v in zip(var, vals):
                out[..., i] = v
        return out.reshape(lead + tuple(shape))

    return evaluate


@dataclass(frozen=True)
class _ChartSymbols:
    """Compiled evaluators for one chart model."""

    metric: Callable
    metric_inv: Callable
    contact: Callable
    reeb: Callable
    omega: Callable
    phi: Callable
    christoffel: Callable
    riemann_up: Callable
    riemann: Callable
    ricci: Callable
    nabla_riemann: Callable
    nabla_lambda: Callable
    nabla_reeb: Callable
    nabla_phi: Callable


def _chart_definition(kind: ModelKind):
    if kind is ModelKind.HEISENBERG_R3:
        x, y, z = syms = sp.symbols("x y z", real=True)
        lam = [-y, 0, 1]
        base = sp.diag(sp.Rational(1, 2), sp.Rational(1, 2), 0)
    elif kind is ModelKind.HEISENBERG_R5:
        x1, y1, x2, y2, z = syms = sp.symbols("x1 y1 x2 y2 z", real=True)
        lam = [-y1, 0, -y2, 0, 1]
        base = sp.diag(*([sp.Rational(1, 2)] * 4), 0)
    elif kind is ModelKind.HYPERBOLIC_CYLINDER3:
        r, p, z = syms = sp.symbols("rho phi z", real=True)
        lam = [0, 2 * sp.sinh(r), 1]
        base = sp.diag(1, sp.cosh(r) ** 2, 0)
    else:  # pragma: no cover
        raise ValueError(kind)
    lam = sp.Matrix(lam)
    g = base + lam * lam.T
    return list(syms), g, lam


@lru_cache(maxsize=None)
def _chart_symbols(kind: ModelKind) -> _ChartSymbols:
    syms, g, lam = _chart_definition(kind)
    D = len(syms)
    simp = sp.cancel
    ginv = g.inv().applyfunc(simp)
    T = (ginv * lam).applyfunc(simp)
    dl = [[sp.diff(lam[b], syms[a]) for b in range(D)] for a in range(D)]
    omega = sp.Matrix(D, D, lambda a, b: sp.Rational(1, 2) * (dl[a][b] - dl[b][a]))
    phi = (ginv * omega.T).applyfunc(simp)  # ω_ab = g_cb J^c_a  =>  J = g⁻¹ ωᵀ
    dg = [[[sp.diff(g[b, c], syms[a]) for c in range(D)] for b in range(D)] for a in range(D)]
    Gam = sp.MutableDenseNDimArray.zeros(D, D, D)
    for a, b, c in itertools.product(range(D), repeat=3):
        Gam[a, b, c] = simp(sum(sp.Rational(1, 2) * ginv[a, d] * (dg[b][d][c] + dg[c][d][b] - dg[d][b][c])
                                for d in range(D)))
    Rup = sp.MutableDenseNDimArray.zeros(D, D, D, D)
    for e, c, a, b in itertools.product(range(D), repeat=4):
        val = sp.diff(Gam[e, b, c], syms[a]) - sp.diff(Gam[e, a, c], syms[b])
        val += sum(Gam[e, a, s] * Gam[s, b, c] - Gam[e, b, s] * Gam[s, a, c] for s in range(D))
        Rup[e, c, a, b] = simp(val)
    Rdn = sp.MutableDenseNDimArray.zeros(D, D, D, D)
    for d, c, a, b in itertools.product(range(D), repeat=4):
        Rdn[d, c, a, b] = simp(sum(g[d, e] * Rup[e, c, a, b] for e in range(D)))
    Ric = sp.Matrix(D, D, lambda c, b: simp(sum(Rup[e, c, e, b] for e in range(D))))
    nR = sp.MutableDenseNDimArray.zeros(D, D, D, D, D)
    for s, d, c, a, b in itertools.product(range(D), repeat=5):
        val = sp.diff(Rdn[d, c, a, b], syms[s])
        for e in range(D):
            val -= (Gam[e, s, d] * Rdn[e, c, a, b] + Gam[e, s, c] * Rdn[d, e, a, b]
                    + Gam[e, s, a] * Rdn[d, c, e, b] + Gam[e, s, b] * Rdn[d, c, a, e])
        nR[s, d, c, a, b] = simp(val)
    nlam = sp.Matrix(D, D, lambda a, b: simp(dl[a][b] - sum(Gam[e, a, b] * lam[e] for e in range(D))))
    nT = sp.Matrix(D, D, lambda a, b: simp(sp.diff(T[b], syms[a]) + sum(Gam[b, a, c] * T[c] for c in range(D))))
    nJ = sp.MutableDenseNDimArray.zeros(D, D, D)
    for a, b, c in itertools.product(range(D), repeat=3):
        val = sp.diff(phi[b, c], syms[a])
        val += sum(Gam[b, a, e] * phi[e, c] - Gam[e, a, c] * phi[b, e] for e in range(D))
        nJ[a, b, c] = simp(val)
    v = lambda arr: _vectorize(arr, syms)  # noqa: E731
    return _ChartSymbols(
        metric=v(g.tolist()), metric_inv=v(ginv.tolist()), contact=v(list(lam)),
        reeb=v(list(T)), omega=v(omega.tolist()), phi=v(phi.tolist()),
        christoffel=v(Gam), riemann_up=v(Rup), riemann=v(Rdn), ricci=v(Ric.tolist()),
        nabla_riemann=v(nR), nabla_lambda=v(nlam.tolist()), nabla_reeb=v(nT.tolist()),
        nabla_phi=v(nJ),
    )


# ---------------------------------------------------------------------------
# geometry back-ends
# ---------------------------------------------------------------------------

class _ChartGeometry:
    """Global-chart model, closed-form or finite-difference curvature."""

    embedded = False

    def __init__(self, kind: ModelKind, curvature_mode: str):
        self.kind = kind
        self.curvature_mode = curvature_mode
        self._s = _chart_symbols(kind)
        self.dim = 5 if kind is ModelKind.HEISENBERG_R5 else 3

    def metric(self, x):
        return self._s.metric(x)

    def metric_inv(self, x):
        return self._s.metric_inv(x)

    def contact(self, x):
        return self._s.contact(x)

    def reeb(self, x):
        return self._s.reeb(x)

    def omega(self, x):
        return self._s.omega(x)

    def phi(self, x):
        return self._s.phi(x)

    def christoffel(self, x):
        return self._s.christoffel(x)

    def nabla_lambda(self, x):
        return self._s.nabla_lambda(x)

    def nabla_reeb(self, x):
        return self._s.nabla_reeb(x)

    def nabla_phi(self, x):
        return self._s.nabla_phi(x)

    # curvature ------------------------------------------------------------
    def riemann_up(self, x):
        if self.curvature_mode == "closed_form":
            return self._s.riemann_up(x)
        return _fd_riemann_up(self.christoffel, np.asarray(x, dtype=float))

    def riemann(self, x):
        if self.curvature_mode == "closed_form":
            return self._s.riemann(x)
        return np.einsum("...de,...ecab->...dcab", self.metric(x), self.riemann_up(x))

    def ricci(self, x):
        if self.curvature_mode == "closed_form":
            return self._s.ricci(x)
        return np.einsum("...eceb->...cb", self.riemann_up(x))

    def nabla_riemann(self, x):
        if self.curvature_mode == "closed_form":
            return self._s.nabla_riemann(x)
        x = np.asarray(x, dtype=float)
        D = x.shape[-1]
        dR = np.stack([(self.riemann(x + FD_STEP * e) - self.riemann(x - FD_STEP * e)) / (2 * FD_STEP)
                       for e in np.eye(D)], axis=-5)
        Gam = self.christoffel(x)
        R = self.riemann(x)
        return (dR - np.einsum("...esd,...ecab->...sdcab", Gam, R)
                - np.einsum("...esc,...deab->...sdcab", Gam, R)
                - np.einsum("...esa,...dceb->...sdcab", Gam, R)
                - np.einsum("...esb,...dcae->...sdcab", Gam, R))

    def normalize(self, x):
        x = np.array(x, dtype=float)
        if self.kind is ModelKind.HYPERBOLIC_CYLINDER3:
            x[..., 1] = np.mod(x[..., 1], 2 * np.pi)
        return x

    def validate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim or not np.all(np.isfinite(x)):
            raise PointOutsideChart(f"expected finite coordinates of length {self.dim}")
        return x


def _fd_riemann_up(christoffel, x):
    """Riemann tensor from central differences of the Christoffel symbols."""
    D = x.shape[-1]
    dG = np.stack([(christoffel(x + FD_STEP * e) - christoffel(x - FD_STEP * e)) / (2 * FD_STEP)
                   for e in np.eye(D)], axis=-4)  # [..., s, e, b, c] = ∂_s Γ^e_bc
    G = christoffel(x)
    R = np.einsum("...aebc->...ecab", dG) - np.einsum("...beac->...ecab", dG)
    R = R + np.einsum("...eas,...sbc->...ecab", G, G) - np.einsum("...ebs,...sac->...ecab", G, G)
    return R


def _complex_structure(D: int) -> np.ndarray:
    """Multiplication by i on R^{2m} with coordinates (x1, y1, x2, y2, ...)."""
    I = np.zeros((D, D))
    for k in range(0, D, 2):
        I[k + 1, k] = 1.0
        I[k, k + 1] = -1.0
    return I


class _SphereGeometry:
    """Round sphere S^{2n+1} ⊂ C^{n+1} in embedded coordinates.

    Tensors are written in the ambient coordinates of R^{2n+2}, with metric the
    Euclidean one; they are meaningful on tangent vectors ``X ⊥ x``.  The
    Levi-Civita connection is the tangential projection, ``Γ^a_bc = x^a δ_bc``.
    """

    embedded = True
    curvature_mode = "closed_form"

    def __init__(self, kind: ModelKind):
        self.kind = kind
        self.dim = 4 if kind is ModelKind.SPHERE_S3 else 6
        self.I = _complex_structure(self.dim)

    def _P(self, x):
        x = np.asarray(x, dtype=float)
        return np.eye(self.dim) - x[..., :, None] * x[..., None, :]

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    metric_inv = metric

    def contact(self, x):
        return np.asarray(x, dtype=float) @ self.I.T

    reeb = contact

    def phi(self, x):
        P = self._P(x)
        return P @ self.I @ P

    def omega(self, x):
        return np.swapaxes(self.phi(x), -1, -2)

    def christoffel(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., :, None, None] * np.eye(self.dim)

    def nabla_lambda(self, x):
        # λ_b(x) = (I x)_b, so ∂_a λ_b = I[b, a]; the Γ-term is ⟨x, Ix⟩ δ_ab = 0
        x = np.asarray(x, dtype=float)
        G = self.christoffel(x)
        return np.broadcast_to(self.I.T, G.shape[:-1]) - np.einsum("...eab,...e->...ab", G, self.contact(x))

    def nabla_reeb(self, x):
        x = np.asarray(x, dtype=float)
        G = self.christoffel(x)
        return np.broadcast_to(self.I.T, G.shape[:-1]) + np.einsum("...bac,...c->...ab", G, self.reeb(x))

    def nabla_phi(self, x):
        x = np.asarray(x, dtype=float)
        D = self.dim
        P = self._P(x)
        E = np.eye(D)
        # ∂_a P = -(e_a xᵀ + x e_aᵀ)
        dP = -(np.einsum("ab,...c->...abc", E, x) + np.einsum("...b,ac->...abc", x, E))
        dJ = np.einsum("...abe,ef,...fc->...abc", dP, self.I, P) + np.einsum("...be,ef,...afc->...abc", P, self.I, dP)
        J = self.phi(x)
        G = self.christoffel(x)
        return dJ + np.einsum("...bae,...ec->...abc", G, J) - np.einsum("...eac,...be->...abc", G, J)

    def riemann(self, x):
        P = self._P(x)
        return (np.einsum("...ac,...bd->...abcd", P, P) - np.einsum("...ad,...bc->...abcd", P, P))

    riemann_up = riemann

    def ricci(self, x):
        return (self.dim - 2) * self._P(x)

    def nabla_riemann(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 5)

    def normalize(self, x):
        return np.array(x, dtype=float)

    def validate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim or not np.all(np.isfinite(x)):
            raise PointOutsideChart(f"expected finite embedded coordinates of length {self.dim}")
        err = np.abs(np.linalg.norm(x, axis=-1) - 1.0)
        if np.any(err > SPHERE_TOL):
            raise PointOutsideChart(f"sphere point off the unit sphere by {float(np.max(err)):.3e}")
        return x


# ---------------------------------------------------------------------------
# left-invariant frame algebra for the curvature bounds K_m
# ---------------------------------------------------------------------------

def _structure_constants(kind: ModelKind) -> np.ndarray:
    """c[k, i, j] = g([e_i, e_j], e_k) in a left-invariant orthonormal frame."""
    if kind in (ModelKind.HEISENBERG_R3, ModelKind.HEISENBERG_R5):
        m = 1 if kind is ModelKind.HEISENBERG_R3 else 2
        D = 2 * m + 1
        c = np.zeros((D, D, D))
        for k in range(m):
            c[D - 1, 2 * k, 2 * k + 1] = -2.0
            c[D - 1, 2 * k + 1, 2 * k] = 2.0
        return c
    if kind is ModelKind.HYPERBOLIC_CYLINDER3:
        c = np.zeros((3, 3, 3))
        c[0, 0, 1], c[0, 1, 0] = -1.0, 1.0
        c[2, 0, 1], c[2, 1, 0] = -2.0, 2.0
        return c
    if kind in (ModelKind.SPHERE_S3, ModelKind.SPHERE_S5):
        raise ValueError("sphere curvature bounds are closed form")
    raise ValueError(kind)  # pragma: no cover


def frame_curvature_norms(c: np.ndarray, m_max: int) -> list[float]:
    """Norms ``|∇^k Rm|`` for k = 0..m_max of a left-invariant metric.

    ``c`` are the structure constants of an orthonormal frame.  The connection
    coefficients ``Γ[k, i, j] = g(∇_{e_i} e_j, e_k)`` follow from Koszul, and
    covariant derivatives of constant-coefficient tensors are purely algebraic.
    """
    D = c.shape[0]
    # Γ^k_ij = ½(c^k_ij − c^i_jk + c^j_ki)
    G = np.zeros((D, D, D))
    for k, i, j in itertools.product(range(D), repeat=3):
        G[k, i, j] = 0.5 * (c[k, i, j] - c[i, j, k] + c[j, k, i])
    # R^m_{kij} = Γ^l_jk Γ^m_il − Γ^l_ik Γ^m_jl − c^l_ij Γ^m_lk
    Rup = (np.einsum("ljk,mil->mkij", G, G) - np.einsum("lik,mjl->mkij", G, G)
           - np.einsum("lij,mlk->mkij", c, G))
    T = Rup  # orthonormal frame: lowering is the identity
    norms = [float(np.sqrt(np.sum(T ** 2)))]
    for _ in range(m_max):
        # (∇_a T)_{b1..bp} = −Σ_s Γ^c_{a b_s} T_{..c..}
        p = T.ndim
        out = np.zeros((D,) + T.shape)
        for s in range(p):
            moved = np.moveaxis(T, s, 0)  # c first
            term = np.tensordot(G, moved, axes=([0], [0]))  # [a, b_s, rest...]
            term = np.moveaxis(term, 1, s + 1)
            out -= term
        T = out
        norms.append(float(np.sqrt(np.sum(T ** 2))))
    return norms


# ---------------------------------------------------------------------------
# public types
# ---------------------------------------------------------------------------

_ETA = {
    ModelKind.HEISENBERG_R3: 0.0,
    ModelKind.HEISENBERG_R5: 0.0,
    ModelKind.SPHERE_S3: 4.0,
    ModelKind.SPHERE_S5: 6.0,
    ModelKind.HYPERBOLIC_CYLINDER3: -1.0,
}

#: nominal injectivity-radius lower bound used as a reported model constant
INJECTIVITY_LOWER_BOUND = float(np.pi)


@dataclass(frozen=True)
class SasakianModel:
    """An η-Einstein Sasakian model space.

    ``z_period`` (Heisenberg only) optionally quotients by the central
    translation ``z -> z + z_period``; this is what lets non-exact examples close.
    """

    kind: ModelKind
    n: int
    eta_einstein_constant: float
    curvature_bounds: tuple[float, ...]
    injectivity_lower_bound: float
    curvature_mode: str = "closed_form"
    z_period: float | None = None
    geometry: object = field(default=None, repr=False, compare=False)

    @property
    def ambient_dim(self) -> int:
        return 2 * self.n + 1

    @property
    def coord_dim(self) -> int:
        return self.geometry.dim

    @property
    def embedded(self) -> bool:
        return self.geometry.embedded

    @property
    def id(self) -> str:
        return self.kind.value

    def winding_period(self) -> np.ndarray:
        """Coordinate translations that are identities of the model (rows)."""
        D = self.coord_dim
        if self.kind is ModelKind.HYPERBOLIC_CYLINDER3:
            return np.array([[0.0, 2 * np.pi, 0.0]])
        if self.z_period is not None:
            w = np.zeros(D)
            w[-1] = self.z_period
            return w[None, :]
        return np.zeros((0, D))

    def reeb_flow(self, x: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Flow points ``x`` for time ``c`` along the Reeb field (an isometry preserving λ)."""
        x = np.array(x, dtype=float)
        c = np.asarray(c, dtype=float)
        if self.embedded:
            cos, sin = np.cos(c)[..., None], np.sin(c)[..., None]
            return cos * x + sin * (x @ self.geometry.I.T)
        x[..., -1] = x[..., -1] + c
        return x


@dataclass(frozen=True)
class ChartPoint:
    model: SasakianModel
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", self.model.geometry.normalize(self.coords))


@dataclass(frozen=True)
class Frame:
    metric: np.ndarray
    contact_form: np.ndarray
    reeb: np.ndarray
    phi: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class CurvaturePack:
    riemann: np.ndarray
    ricci: np.ndarray
    nabla_riemann: np.ndarray
    evaluation_mode: str


def _curvature_bounds(kind: ModelKind, m_max: int = 5) -> tuple[float, ...]:
    if kind in (ModelKind.SPHERE_S3, ModelKind.SPHERE_S5):
        d = 3 if kind is ModelKind.SPHERE_S3 else 5
        rm = float(np.sqrt(2.0 * d * (d - 1)))
        return tuple([rm] * (m_max + 1))
    norms = frame_curvature_norms(_structure_constants(kind), m_max)
    return tuple(float(v) for v in np.cumsum(norms))


@lru_cache(maxsize=None)
def get_model(model_id: str, curvature_mode: str = "closed_form",
              z_period: float | None = None) -> SasakianModel:
    """Build (and cache) a model by string id."""
    try:
        kind = ModelKind(model_id)
    except ValueError:
        raise ValueError(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}") from None
    if curvature_mode not in ("closed_form", "finite_difference"):
        raise ValueError(f"unknown curvature mode {curvature_mode!r}")
    if kind in (ModelKind.SPHERE_S3, ModelKind.SPHERE_S5):
        if curvature_mode != "closed_form":
            raise ValueError("sphere models only support closed-form curvature")
        geom = _SphereGeometry(kind)
    else:
        geom = _ChartGeometry(kind, curvature_mode)
    if z_period is not None and kind not in (ModelKind.HEISENBERG_R3, ModelKind.HEISENBERG_R5):
        raise ValueError("z_period applies to Heisenberg models only")
    n = 2 if kind in (ModelKind.HEISENBERG_R5, ModelKind.SPHERE_S5) else 1
    return SasakianModel(kind=kind, n=n, eta_einstein_constant=_ETA[kind],
                         curvature_bounds=_curvature_bounds(kind),
                         injectivity_lower_bound=INJECTIVITY_LOWER_BOUND,
                         curvature_mode=curvature_mode, z_period=z_period, geometry=geom)


def _coords(model: SasakianModel, p) -> np.ndarray:
    x = p.coords if isinstance(p, ChartPoint) else p
    return model.geometry.validate(x)


def frame_at(model: SasakianModel, p) -> Frame:
    """Metric, contact form, Reeb field, Φ-tensor and ω at a point."""
    x = _coords(model, p)
    G = model.geometry
    return Frame(metric=G.metric(x), contact_form=G.contact(x), reeb=G.reeb(x),
                 phi=G.phi(x), omega=G.omega(x))


def connection_at(model: SasakianModel, p) -> np.ndarray:
    """Christoffel symbols ``Γ^a_bc`` at a point."""
    return model.geometry.christoffel(_coords(model, p))


def curvature_at(model: SasakianModel, p) -> CurvaturePack:
    x = _coords(model, p)
    G = model.geometry
    return CurvaturePack(riemann=G.riemann(x), ricci=G.ricci(x), nabla_riemann=G.nabla_riemann(x),
                         evaluation_mode=G.curvature_mode)


def eta_einstein_constant(model: SasakianModel) -> float:
    return model.eta_einstein_constant


# ---------------------------------------------------------------------------
# identity residuals
# ---------------------------------------------------------------------------

def tangent_basis(model: SasakianModel, x: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space as columns, shape ``(..., D, 2n+1)``.

    Chart models return the identity (coordinates are already intrinsic).
    """
    x = np.asarray(x, dtype=float)
    D = model.coord_dim
    if not model.embedded:
        return np.broadcast_to(np.eye(D), x.shape[:-1] + (D, D)).copy()
    P = np.eye(D) - x[..., :, None] * x[..., None, :]
    u, _, _ = np.linalg.svd(P)
    return u[..., :, : D - 1]


@dataclass(frozen=True)
class AmbientTensors:
    """All ambient tensors at a batch of points, expressed in an intrinsic basis."""

    g: np.ndarray
    ginv: np.ndarray
    lam: np.ndarray
    T: np.ndarray
    J: np.ndarray
    omega: np.ndarray
    nabla_lambda: np.ndarray
    nabla_reeb: np.ndarray
    nabla_phi: np.ndarray
    riemann_up: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    nabla_riemann: np.ndarray
    christoffel: np.ndarray | None


def pulled_back_tensors(model: SasakianModel, x: np.ndarray) -> AmbientTensors:
    """Evaluate every ambient tensor at ``x`` in the basis of :func:`tangent_basis`.

    For embedded models covariant slots are contracted with ``E`` and contravariant
    slots with ``Eᵀ`` (``E`` orthonormal in the Euclidean metric).
    """
    x = np.asarray(x, dtype=float)
    G = model.geometry
    if not model.embedded:
        return AmbientTensors(
            g=G.metric(x), ginv=G.metric_inv(x), lam=G.contact(x), T=G.reeb(x), J=G.phi(x),
            omega=G.omega(x), nabla_lambda=G.nabla_lambda(x), nabla_reeb=G.nabla_reeb(x),
            nabla_phi=G.nabla_phi(x), riemann_up=G.riemann_up(x), riemann=G.riemann(x),
            ricci=G.ricci(x), nabla_riemann=G.nabla_riemann(x), christoffel=G.christoffel(x))
    E = tangent_basis(model, x)
    co = lambda t, k: _pull(t, E, k)  # noqa: E731
    g = co(G.metric(x), "dd")
    return AmbientTensors(
        g=g, ginv=np.linalg.inv(g), lam=co(G.contact(x), "d"), T=co(G.reeb(x), "u"),
        J=co(G.phi(x), "ud"), omega=co(G.omega(x), "dd"), nabla_lambda=co(G.nabla_lambda(x), "dd"),
        nabla_reeb=co(G.nabla_reeb(x), "du"), nabla_phi=co(G.nabla_phi(x), "dud"),
        riemann_up=co(G.riemann_up(x), "uddd"), riemann=co(G.riemann(x), "dddd"),
        ricci=co(G.ricci(x), "dd"), nabla_riemann=co(G.nabla_riemann(x), "ddddd"), christoffel=None)


def _pull(t: np.ndarray, E: np.ndarray, kinds: str) -> np.ndarray:
    nlead = E.ndim - 2
    out = t
    for s, kind in enumerate(kinds):
        ax = nlead + s
        out = np.moveaxis(out, ax, -1)
        out = np.einsum("...a,...ab->...b", out, _bcast(E, out.ndim - 1 - nlead))
        out = np.moveaxis(out, -1, ax)
    return out


def _bcast(E: np.ndarray, extra: int) -> np.ndarray:
    """Insert ``extra`` singleton axes before the two matrix axes of ``E``."""
    idx = (Ellipsis,) + (None,) * extra + (slice(None), slice(None))
    return E[idx]


def random_legendrian_frame(model: SasakianModel, A: AmbientTensors, rng: np.random.Generator) -> np.ndarray:
    """Random basis of a Legendrian n-plane at each point, shape ``(..., n, 2n+1)``."""
    lead = A.g.shape[:-2]
    m = A.g.shape[-1]
    frames = []
    for _ in range(model.n):
        w = rng.standard_normal(lead + (m,))
        # horizontal projection
        w = w - np.einsum("...a,...a->...", A.lam, w)[..., None] * A.T
        for f in frames:
            for u in (f, np.einsum("...ba,...a->...b", A.J, f)):
                nu = np.einsum("...a,...ab,...b->...", u, A.g, u)
                w = w - (np.einsum("...a,...ab,...b->...", u, A.g, w) / nu)[..., None] * u
        frames.append(w)
    return np.stack(frames, axis=-2)


def ambient_identity_residuals(model: SasakianModel, points, seed: int = 0) -> dict[str, float]:
    """Max residual over ``points`` for each structural identity of the model.

    Keys: ``reeb_normalization``, ``reeb_kernel``, ``adapted_metric``,
    ``metric_decomposition``, ``phi_square``, ``nabla_lambda``, ``killing``,
    ``nabla_reeb``, ``nabla_phi``, ``reeb_curvature``, ``curvature_lambda``,
    ``curvature_omega``, ``phi_trace``, ``phi_trace_bianchi``,
    ``legendrian_trace`` (two equalities), ``riemann_symmetries``, ``ricci_trace``,
    ``eta_einstein``, ``eta_einstein_constant``.
    """
    x = np.asarray([_coords(model, p) for p in points]) if not isinstance(points, np.ndarray) else points
    x = model.geometry.validate(x)
    A = pulled_back_tensors(model, x)
    n = model.n
    m = 2 * n + 1
    I = np.eye(m)
    ein = np.einsum
    g, gi, lam, T, J, w = A.g, A.ginv, A.lam, A.T, A.J, A.omega
    Rup, R, Ric = A.riemann_up, A.riemann, A.ricci
    Ricu = ein("...es,...sa->...ea", gi, Ric)  # R^e_a
    res: dict[str, np.ndarray] = {}
    res["reeb_normalization"] = ein("...a,...a->...", lam, T) - 1.0
    res["reeb_kernel"] = ein("...ab,...a->...b", w, T)
    res["adapted_metric"] = ein("...ab,...b->...a", g, T) - lam
    res["metric_decomposition"] = g - (lam[..., :, None] * lam[..., None, :] + ein("...ac,...cb->...ab", w, J))
    pi = I - T[..., :, None] * lam[..., None, :]
    res["phi_square"] = ein("...ba,...ac->...bc", J, J) + pi
    res["nabla_lambda"] = A.nabla_lambda - w
    nT_low = ein("...ab,...bc->...ac", A.nabla_reeb, g)
    res["killing"] = nT_low + np.swapaxes(nT_low, -1, -2)
    res["nabla_reeb"] = A.nabla_reeb - np.swapaxes(J, -1, -2)
    # (∇_a J)^b_c = λ_c δ^b_a − g_ac T^b
    res["nabla_phi"] = A.nabla_phi - (I[:, :, None] * lam[..., None, None, :]
                                      - g[..., :, None, :] * T[..., None, :, None])
    # R(∂_a, T)∂_c = λ_c ∂_a − g_ac T, i.e. R^b_{c a e} T^e
    res["reeb_curvature"] = ein("...bcae,...e->...bac", Rup, T) - (
        I[:, :, None] * lam[..., None, None, :] - T[..., :, None, None] * g[..., None, :, :])
    res["curvature_lambda"] = ein("...ecab,...e->...cab", Rup, lam) - (
        g[..., :, None, :] * lam[..., None, :, None] - g[..., :, :, None] * lam[..., None, None, :])
    # R^e_{γαβ} ω_{eδ} + R^e_{δαβ} ω_{γe}, indices [γ, δ, α, β]
    lhs = ein("...egab,...ed->...gdab", Rup, w) + ein("...edab,...ge->...gdab", Rup, w)
    rhs = (-ein("...bd,...ag->...gdab", g, w) + ein("...bg,...ad->...gdab", g, w)
           + ein("...ad,...bg->...gdab", g, w) - ein("...ag,...bd->...gdab", g, w))
    res["curvature_omega"] = lhs - rhs
    res["phi_trace"] = ein("...be,...egab->...ag", J, Rup) - (
        ein("...ea,...eg->...ag", Ricu, w) - (2 * n - 1) * w)
    res["phi_trace_bianchi"] = ein("...be,...ebag->...ag", J, Rup) - (
        ein("...eg,...ae->...ag", Ricu, w) - ein("...ea,...ge->...ag", Ricu, w) - 2 * (2 * n - 1) * w)
    rng = np.random.default_rng(seed)
    Fr = random_legendrian_frame(model, A, rng)  # [..., i, a]
    V = ein("...ba,...ia->...ib", J, Fr)
    gL = ein("...ia,...ab,...jb->...ij", Fr, g, Fr)
    gLi = np.linalg.inv(gL)
    lhs4 = ein("...ik,...gdbe,...ib,...ke->...gd", gLi, R, V, Fr)
    mid4 = -0.5 * ein("...sb,...bsgd->...gd", J, Rup)
    rhs4 = 0.5 * (ein("...eg,...de->...gd", Ricu, w) - ein("...ed,...ge->...gd", Ricu, w)
                  - 2 * (2 * n - 1) * np.swapaxes(w, -1, -2))
    res["legendrian_trace"] = np.concatenate([(lhs4 - mid4).reshape(len(x), -1),
                                              (mid4 - rhs4).reshape(len(x), -1)], axis=-1)
    sym = [R + np.swapaxes(R, -4, -3), R + np.swapaxes(R, -2, -1),
           R - np.moveaxis(np.moveaxis(R, -2, -4), -1, -3),
           R + np.moveaxis(R, (-3, -2, -1), (-2, -1, -3)) + np.moveaxis(R, (-3, -2, -1), (-1, -3, -2))]
    res["riemann_symmetries"] = np.concatenate([s.reshape(len(x), -1) for s in sym], axis=-1)
    res["ricci_trace"] = Ric - ein("...ecea->...ca", Rup)
    fit = fit_eta_einstein(model, A)
    res["eta_einstein"] = fit["residual"]
    res["eta_einstein_constant"] = np.atleast_1d(fit["K_plus_2"] - model.eta_einstein_constant)
    out = {}
    for k, v in res.items():
        v = np.asarray(v)
        out[k] = float(np.max(np.abs(v))) if v.size else 0.0
    return out


def fit_eta_einstein(model: SasakianModel, A: AmbientTensors) -> dict:
    """Least-squares fit of ``Ric = K g + (2n−K) λ⊗λ`` per point.

    Returns per-point ``K_plus_2`` array, its mean and std, and the residual tensor.
    """
    n = model.n
    ll = A.lam[..., :, None] * A.lam[..., None, :]
    basis = A.g - ll
    target = A.ricci - 2 * n * ll
    # Frobenius product in the orthonormalized sense: use g^{-1} on both slots
    ip = lambda X, Y: np.einsum("...ab,...ac,...bd,...cd->...", X, A.ginv, A.ginv, Y)  # noqa: E731
    K = ip(basis, target) / ip(basis, basis)
    resid = A.ricci - (K[..., None, None] * A.g + (2 * n - K)[..., None, None] * ll)
    return {"K_plus_2_points": K + 2, "K_plus_2": float(np.mean(K + 2)), "std": float(np.std(K + 2)),
            "residual": resid}


def sample_points(model: SasakianModel, count: int, seed: int = 0, quasi: bool = False) -> np.ndarray:
    """Random (or Sobol quasi-random) chart points.

    Heisenberg and hyperbolic charts are sampled in a box of half-width 1.5 about
    the origin; spheres uniformly.
    """
    D = model.coord_dim
    if quasi:
        m = int(np.ceil(np.log2(max(count, 2))))
        u = qmc.Sobol(d=D, scramble=True, seed=seed).random_base2(m)[:count]
    else:
        u = np.random.default_rng(seed).random((count, D))
    if model.embedded:
        from scipy.stats import norm
        z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        return z / np.linalg.norm(z, axis=-1, keepdims=True)
    x = 3.0 * u - 1.5
    if model.kind is ModelKind.HYPERBOLIC_CYLINDER3:
        x[..., 1] = 2 * np.pi * u[..., 1]
    return x


def sampled_curvature_norms(model: SasakianModel, count: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Sup over quasi-random points of ``|Rm|`` and ``|∇Rm|`` in the intrinsic basis."""
    x = sample_points(model, count, seed=seed, quasi=True)
    A = pulled_back_tensors(model, x)
    gi = A.ginv
    R, dR = A.riemann, A.nabla_riemann
    r2 = np.einsum("...abcd,...ae,...bf,...cg,...dh,...efgh->...", R, gi, gi, gi, gi, R, optimize=True)
    d2 = np.einsum("...sabcd,...st,...ae,...bf,...cg,...dh,...tefgh->...", dR, gi, gi, gi, gi, gi, dR,
                   optimize=True)
    return float(np.sqrt(np.max(r2))), float(np.sqrt(np.max(np.abs(d2))))
