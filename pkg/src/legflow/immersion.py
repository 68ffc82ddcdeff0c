"""Discrete closed Legendrian curves (n=1) and tori (n=2) on periodic grids.

Positions are stored as full chart coordinates ``F(u)`` on the grid
``u ∈ [0, 2π)^n``.  Coordinates that wind around a model identification
(``φ`` on the hyperbolic cylinder, ``z`` in a Heisenberg quotient) are kept
unwrapped: ``F(u + 2π e_i) = F(u) + winding[i]``.  The linear part is removed
before any Fourier operation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from . import fourier
from .ambient import ChartPoint, SasakianModel, get_model
from .errors import DegenerateMetric, NotClosable, ProjectionFailed, ResolutionTooLow

TWO_PI = fourier.TWO_PI
MIN_RESOLUTION = 16
DET_FLOOR = 1e-14
RECOVERABLE_RESIDUAL = 1e-2


def default_legendrian_tol(n: int) -> float:
    return 1e-7 if n == 1 else 1e-6


@dataclass(frozen=True)
class SecondFundamentalData:
    A: np.ndarray          # [..., i, j, a]
    h: np.ndarray          # [..., i, j, k]
    H: np.ndarray          # [..., j]
    A_sq: np.ndarray       # per node |A|²
    H_sq: np.ndarray       # per node |H|²
    reeb_component: np.ndarray  # λ_a A_ij^a

    @property
    def max_A_sq(self) -> float:
        return float(np.max(self.A_sq))

    @property
    def max_H(self) -> float:
        return float(np.sqrt(np.max(self.H_sq)))

    @property
    def symmetry_defect(self) -> float:
        h = self.h
        perms = [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
        nd = h.ndim - 3
        lead = tuple(range(nd))
        return float(max(np.max(np.abs(h - np.transpose(h, lead + tuple(nd + q for q in p))))
                         for p in perms))


class DiscreteLegendrian:
    """A closed immersed Legendrian sampled on a periodic grid.

    Instances are treated as immutable; all derived data is cached on first use.
    """

    def __init__(self, model: SasakianModel, positions: np.ndarray, winding: np.ndarray | None = None,
                 family: str = "custom", params: dict | None = None, legendrian_tol: float | None = None):
        positions = np.array(positions, dtype=float)
        n = positions.ndim - 1
        if n not in (1, 2) or n != model.n:
            raise ValueError(f"grid dimension {n} does not match Legendrian dimension {model.n}")
        if positions.shape[-1] != model.coord_dim:
            raise ValueError("coordinate dimension mismatch")
        shape = positions.shape[:-1]
        if min(shape) < MIN_RESOLUTION:
            raise ResolutionTooLow(f"resolution {shape} below {MIN_RESOLUTION} per dimension")
        self.model = model
        self.positions = positions
        self.positions.flags.writeable = False
        self.shape = shape
        self.n = n
        self.winding = np.zeros((n, model.coord_dim)) if winding is None else np.array(winding, dtype=float)
        self.family = family
        self.params = dict(params or {})
        self.legendrian_tol = default_legendrian_tol(n) if legendrian_tol is None else legendrian_tol

    # -- construction helpers ------------------------------------------------
    def with_positions(self, positions: np.ndarray, **meta) -> "DiscreteLegendrian":
        params = dict(self.params)
        params.update(meta)
        return DiscreteLegendrian(self.model, positions, self.winding, self.family, params, self.legendrian_tol)

    @property
    def grid(self) -> tuple[np.ndarray, ...]:
        return fourier.grid_coords(self.shape)

    @property
    def cell_area(self) -> float:
        return float(np.prod([TWO_PI / N for N in self.shape]))

    def linear_part(self) -> np.ndarray:
        u = self.grid
        lin = np.zeros(self.positions.shape)
        for i in range(self.n):
            lin += u[i][..., None] * self.winding[i] / TWO_PI
        return lin

    @cached_property
    def periodic_part(self) -> np.ndarray:
        return self.positions - self.linear_part()

    def points(self) -> list[ChartPoint]:
        return [ChartPoint(self.model, p) for p in self.positions.reshape(-1, self.model.coord_dim)]

    # -- first fundamental data ------------------------------------------------
    @cached_property
    def tangents(self) -> np.ndarray:
        """``F_i^a`` with shape ``(*grid, n, D)``."""
        P = self.periodic_part
        return np.stack([fourier.diff(P, i) + self.winding[i] / TWO_PI for i in range(self.n)], axis=self.n)

    @cached_property
    def hessian(self) -> np.ndarray:
        """Coordinate second derivatives ``∂_i∂_j F^a``, shape ``(*grid, n, n, D)``."""
        F = self.tangents
        rows = []
        for i in range(self.n):
            rows.append(np.stack([fourier.diff(F[..., j, :], i) for j in range(self.n)], axis=self.n))
        return np.stack(rows, axis=self.n)

    @cached_property
    def amb(self) -> "NodeAmbient":
        return NodeAmbient(self.model, self.positions)

    @cached_property
    def metric(self) -> np.ndarray:
        F = self.tangents
        return np.einsum("...ia,...ab,...jb->...ij", F, self.amb.g, F)

    @cached_property
    def det(self) -> np.ndarray:
        d = np.linalg.det(self.metric)
        if np.any(~np.isfinite(d)) or np.min(d) < DET_FLOOR:
            raise DegenerateMetric(f"induced metric determinant {float(np.nanmin(d)):.3e} below {DET_FLOOR}")
        return d

    @cached_property
    def metric_inv(self) -> np.ndarray:
        _ = self.det
        return np.linalg.inv(self.metric)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(self.det)

    @cached_property
    def dmu(self) -> np.ndarray:
        """Volume weight per node: ``√det(g_ij)`` times the label-cell area."""
        return self.sqrt_det * self.cell_area

    @cached_property
    def volume(self) -> float:
        return float(np.sum(self.dmu))

    @cached_property
    def normals(self) -> np.ndarray:
        """``v_k = J F_k``, shape ``(*grid, n, D)``."""
        return np.einsum("...ba,...ka->...kb", self.amb.J, self.tangents)

    @cached_property
    def contact_residual(self) -> np.ndarray:
        """``λ(F_i)`` per node and direction."""
        return np.einsum("...a,...ia->...i", self.amb.lam, self.tangents)

    @cached_property
    def legendrian_residual(self) -> float:
        return float(np.max(np.abs(self.contact_residual)))

    @cached_property
    def metric_derivatives(self) -> np.ndarray:
        """``∂_l g_ij`` with shape ``(*grid, l, i, j)``."""
        return np.stack([fourier.diff(self.metric, l) for l in range(self.n)], axis=self.n)

    @cached_property
    def induced_christoffel(self) -> np.ndarray:
        """``Γ^k_ij`` of the induced metric, shape ``(*grid, k, i, j)``."""
        dg = self.metric_derivatives  # [l, i, j]
        first = 0.5 * (np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg)
        return np.einsum("...kl,...lij->...kij", self.metric_inv, first)

    def first_fundamental(self) -> dict:
        return {"metric": self.metric, "metric_inv": self.metric_inv, "dmu": self.dmu,
                "volume": self.volume, "legendrian_residual": self.legendrian_residual}

    # -- second fundamental data -------------------------------------------------
    @cached_property
    def second(self) -> SecondFundamentalData:
        F = self.tangents
        Gam = self.amb.christoffel
        A = (self.hessian + np.einsum("...abc,...ib,...jc->...ija", Gam, F, F)
             - np.einsum("...kij,...ka->...ija", self.induced_christoffel, F))
        h = -np.einsum("...ab,...ka,...ijb->...ijk", self.amb.omega, F, A)
        gi = self.metric_inv
        H = np.einsum("...ik,...ijk->...j", gi, h)
        A_sq = np.einsum("...ijk,...ia,...jb,...kc,...abc->...", h, gi, gi, gi, h)
        H_sq = np.einsum("...i,...ij,...j->...", H, gi, H)
        reeb = np.einsum("...a,...ija->...ij", self.amb.lam, A)
        return SecondFundamentalData(A=A, h=h, H=H, A_sq=A_sq, H_sq=H_sq, reeb_component=reeb)

    def mean_curvature_vector(self) -> np.ndarray:
        """``g^{ij} A_ij``, which equals ``-H^k v_k`` on a Legendrian."""
        return np.einsum("...ij,...ija->...a", self.metric_inv, self.second.A)

    def covariant_gradient(self, f: np.ndarray) -> np.ndarray:
        """``∇^k f`` (index raised) of a nodal function."""
        df = fourier.gradient(f, self.n)
        return np.einsum("...kl,...l->...k", self.metric_inv, df)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        """Strong-form Laplace–Beltrami ``(1/√g) ∂_i(√g g^{ij} ∂_j f)`` (analyst's sign)."""
        df = fourier.gradient(f, self.n)
        flux = self.sqrt_det[..., None] * np.einsum("...ij,...j->...i", self.metric_inv, df)
        div = sum(fourier.diff(flux[..., i], i) for i in range(self.n))
        return div / self.sqrt_det

    def cycle_integrals(self, form: np.ndarray) -> np.ndarray:
        """Integrals of a 1-form over the fundamental cycles (averaged over parallel copies)."""
        return np.array([TWO_PI * float(np.mean(form[..., i])) for i in range(self.n)])

    # -- serialization ---------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "model": self.model.id,
            "curvature_mode": self.model.curvature_mode,
            "z_period": self.model.z_period,
            "grid_shape": list(self.shape),
            "winding": self.winding.tolist(),
            "positions": self.positions.reshape(-1).tolist(),
            "metadata": {"family": self.family, "params": _jsonable(self.params),
                         "legendrian_tol": self.legendrian_tol},
        }

    @classmethod
    def from_json(cls, data: dict) -> "DiscreteLegendrian":
        model = get_model(data["model"], data.get("curvature_mode", "closed_form"), data.get("z_period"))
        shape = tuple(data["grid_shape"])
        pos = np.asarray(data["positions"], dtype=float).reshape(shape + (model.coord_dim,))
        meta = data.get("metadata", {})
        return cls(model, pos, np.asarray(data["winding"], dtype=float), meta.get("family", "custom"),
                   meta.get("params"), meta.get("legendrian_tol"))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    def node_table(self) -> tuple[list[str], np.ndarray]:
        """Per-node fields for plotting: grid labels, |H|, |A|², dμ."""
        sec = self.second
        cols = [u.reshape(-1) for u in self.grid]
        names = [f"u{i + 1}" for i in range(self.n)] + ["abs_H", "A_sq", "dmu"]
        cols += [np.sqrt(sec.H_sq).reshape(-1), sec.A_sq.reshape(-1), self.dmu.reshape(-1)]
        return names, np.stack(cols, axis=1)

    def write_node_csv(self, path) -> None:
        names, data = self.node_table()
        np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class NodeAmbient:
    """Ambient tensors evaluated at every grid node (lazily, in chart coordinates)."""

    def __init__(self, model: SasakianModel, x: np.ndarray):
        self.model = model
        self.x = x
        self._geom = model.geometry

    @cached_property
    def g(self):
        return self._geom.metric(self.x)

    @cached_property
    def lam(self):
        return self._geom.contact(self.x)

    @cached_property
    def T(self):
        return self._geom.reeb(self.x)

    @cached_property
    def J(self):
        return self._geom.phi(self.x)

    @cached_property
    def omega(self):
        return self._geom.omega(self.x)

    @cached_property
    def christoffel(self):
        return self._geom.christoffel(self.x)

    @cached_property
    def riemann(self):
        return self._geom.riemann(self.x)

    @cached_property
    def ricci(self):
        return self._geom.ricci(self.x)

    @cached_property
    def nabla_riemann(self):
        return self._geom.nabla_riemann(self.x)


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def _great_circle(model, shape, params):
    (u,) = fourier.grid_coords(shape)
    F = np.zeros(shape + (model.coord_dim,))
    F[..., 0] = np.cos(u)
    F[..., 2] = np.sin(u)
    return F, None


def _clifford_torus(model, shape, params):
    u1, u2 = fourier.grid_coords(shape)
    th = [u1, u2, -u1 - u2]
    F = np.zeros(shape + (6,))
    for k in range(3):
        F[..., 2 * k] = np.cos(th[k]) / np.sqrt(3.0)
        F[..., 2 * k + 1] = np.sin(th[k]) / np.sqrt(3.0)
    return F, None


def _geodesic_lift(model, shape, params):
    (u,) = fourier.grid_coords(shape)
    F = np.zeros(shape + (3,))
    F[..., 1] = u
    return F, np.array([[0.0, TWO_PI, 0.0]])


def _lemniscate_xy(u, a):
    return a * np.sin(u), a * np.sin(u) * np.cos(u)


def _lemniscate(model, shape, params):
    a = float(params.get("scale", 1.0))
    (u,) = fourier.grid_coords(shape)
    x, y = _lemniscate_xy(u, a)
    F = np.stack([x, y, -a * a * np.cos(u) ** 3 / 3.0], axis=-1)
    return F, None


def _round_circle(model, shape, params):
    r = float(params.get("radius", 1.0))
    (u,) = fourier.grid_coords(shape)
    hol = -np.pi * r * r
    _require_closure(model, hol, "round circle")
    F = np.stack([r * np.cos(u), r * np.sin(u), -r * r * (u / 2.0 - np.sin(2 * u) / 4.0)], axis=-1)
    return F, np.array([[0.0, 0.0, hol]])


def _lemniscate_torus(model, shape, params):
    a = float(params.get("scale", 1.0))
    u1, u2 = fourier.grid_coords(shape)
    x1, y1 = _lemniscate_xy(u1, a)
    x2, y2 = _lemniscate_xy(u2, a)
    z = -a * a * (np.cos(u1) ** 3 + np.cos(u2) ** 3) / 3.0
    return np.stack([x1, y1, x2, y2, z], axis=-1), None


def _planar_lift(model, shape, params):
    """Heisenberg lift of a user-supplied closed planar Fourier curve.

    ``params['x']`` / ``params['y']`` are lists of ``(k, cos_coeff, sin_coeff)``.
    The height is obtained by spectral integration of ``z' = y x'``.
    """
    (u,) = fourier.grid_coords(shape)

    def series(terms):
        out = np.zeros(shape)
        for k, c, s in terms:
            out += c * np.cos(k * u) + s * np.sin(k * u)
        return out

    x, y = series(params["x"]), series(params["y"])
    return lift_planar_curve(model, x, y)


def lift_planar_curve(model: SasakianModel, x: np.ndarray, y: np.ndarray):
    """Integrate the horizontality ODE ``z' = y x'`` by spectral quadrature."""
    rate = y * fourier.diff(x, 0)
    hol = TWO_PI * float(np.mean(rate))
    _require_closure(model, hol, "planar lift")
    N = x.shape[0]
    osc = rate - np.mean(rate)
    zh = np.fft.rfft(osc)
    k = np.fft.rfftfreq(N, d=1.0 / N)
    zh[1:] /= 1j * k[1:]
    zh[0] = 0.0
    if N % 2 == 0:
        zh[-1] = 0.0
    z = np.fft.irfft(zh, n=N) + hol * fourier.grid_coords((N,))[0] / TWO_PI
    F = np.stack([x, y, z], axis=-1)
    W = np.array([[0.0, 0.0, hol]]) if hol != 0.0 else None
    return F, W


def _require_closure(model: SasakianModel, hol: float, what: str, rel_tol: float = 1e-9) -> None:
    if abs(hol) <= rel_tol * max(1.0, abs(hol)) * 1e-3:
        return
    per = model.z_period
    if per is None or per == 0.0:
        raise NotClosable(f"{what}: horizontality holonomy {hol:.6g} does not vanish and the model "
                          f"has no central period")
    ratio = hol / per
    if abs(ratio - round(ratio)) > rel_tol * max(1.0, abs(ratio)) or round(ratio) == 0:
        raise NotClosable(f"{what}: holonomy {hol:.6g} is not a multiple of the central period {per:.6g}")


FAMILIES: dict[str, tuple[tuple[str, ...], Callable]] = {
    "great_circle": (("sphere3",), _great_circle),
    "clifford_torus": (("sphere5",), _clifford_torus),
    "geodesic_lift": (("hypcyl3",), _geodesic_lift),
    "lemniscate": (("heisenberg3",), _lemniscate),
    "round_circle": (("heisenberg3",), _round_circle),
    "lemniscate_torus": (("heisenberg5",), _lemniscate_torus),
    "planar_lift": (("heisenberg3",), _planar_lift),
}


def potential(name: str, L: DiscreteLegendrian) -> np.ndarray:
    """Named deformation potential on the grid of ``L``."""
    u = L.grid
    u1 = u[0]
    u2 = u[1] if L.n > 1 else np.zeros_like(u1)
    table = {
        "cos_u": np.cos(u1), "cos_phi": np.cos(u1), "cos_theta": np.cos(u1),
        "sin_u": np.sin(u1), "cos_2u": np.cos(2 * u1), "sin_2u": np.sin(2 * u1),
        "cos_3u": np.cos(3 * u1),
        "cos_u1": np.cos(u1), "cos_u2": np.cos(u2), "cos_u1_plus_u2": np.cos(u1 + u2),
        "sin_u1_minus_u2": np.sin(u1 - u2), "cos_2u1": np.cos(2 * u1),
    }
    if name not in table:
        raise ValueError(f"unknown potential {name!r}; expected one of {sorted(table)}")
    return table[name]


def build_immersion(model: SasakianModel, family: str, resolution, params: dict | None = None,
                    perturb: dict | None = None, legendrian_tol: float | None = None) -> DiscreteLegendrian:
    """Construct a built-in Legendrian, optionally deformed by a named potential.

    ``perturb = {"f": <potential name>, "s": <amplitude>}`` applies
    :func:`legendrian_deform`.
    """
    params = dict(params or {})
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}")
    allowed, maker = FAMILIES[family]
    if model.id not in allowed:
        raise ValueError(f"family {family!r} lives in {allowed}, not {model.id!r}")
    shape = (int(resolution),) * model.n if np.isscalar(resolution) else tuple(int(r) for r in resolution)
    if len(shape) != model.n:
        raise ValueError("resolution has wrong dimension")
    if min(shape) < MIN_RESOLUTION:
        raise ResolutionTooLow(f"resolution {shape} below {MIN_RESOLUTION} per dimension")
    F, W = maker(model, shape, params)
    L = DiscreteLegendrian(model, F, W, family, params, legendrian_tol)
    if L.legendrian_residual > L.legendrian_tol:
        raise ProjectionFailed(f"built immersion not Legendrian: residual {L.legendrian_residual:.3e}")
    if perturb:
        f = potential(perturb["f"], L)
        s = float(perturb.get("s", 0.0))
        try:
            L = legendrian_deform(L, f, s)
        except ProjectionFailed as exc:
            raise NotClosable(f"perturbation {perturb['f']} with s={s:g} does not close up as a Legendrian "
                              f"at this resolution: {exc}") from exc
        L.params["perturb"] = {"f": perturb["f"], "s": s}
    return L


# ---------------------------------------------------------------------------
# Legendrian deformations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeformationField:
    f: np.ndarray
    X: np.ndarray
    theta: np.ndarray

    def contact_defect(self, L: DiscreteLegendrian) -> float:
        """max |λ(X) − 2f|."""
        return float(np.max(np.abs(np.einsum("...a,...a->...", L.amb.lam, self.X) - 2 * self.f)))


def deformation_field(L: DiscreteLegendrian, f: np.ndarray) -> DeformationField:
    """``X = J∇f + 2fT`` together with its isotropic 1-form ``θ = ½ df``."""
    df = fourier.gradient(f, L.n)
    grad = np.einsum("...kl,...l->...k", L.metric_inv, df)
    X = np.einsum("...k,...ka->...a", grad, L.normals) + 2.0 * f[..., None] * L.amb.T
    return DeformationField(f=f, X=X, theta=0.5 * df)


def legendrian_deform(L: DiscreteLegendrian, f: np.ndarray, s: float, steps: int | None = None,
                      project: bool = True) -> DiscreteLegendrian:
    """Integrate ``dF/ds = J∇f + 2fT`` from 0 to ``s`` with RK4, ``f`` fixed per grid label."""
    f = np.asarray(f, dtype=float)
    if f.shape != L.shape:
        raise ValueError("potential must live on the grid")
    if s == 0.0:
        return L
    frac = fourier.high_mode_energy_fraction(f, L.n)
    if frac > 1e-8:
        raise ResolutionTooLow(f"potential not spectrally resolved (top-third energy {frac:.2e})")
    if steps is None:
        steps = max(8, int(np.ceil(abs(s) / 2.5e-3)))
    ds = s / steps

    def rhs(F):
        return deformation_field(L.with_positions(F), f).X

    F = np.array(L.positions)
    for _ in range(steps):
        k1 = rhs(F)
        k2 = rhs(F + 0.5 * ds * k1)
        k3 = rhs(F + 0.5 * ds * k2)
        k4 = rhs(F + ds * k3)
        F = F + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    out = L.with_positions(F)
    if project:
        from .projection import project_legendrian
        out, _ = project_legendrian(out)
    return out
