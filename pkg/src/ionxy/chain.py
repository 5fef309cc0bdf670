"""Ion-chain mechanics: equilibrium positions, transverse normal modes,
and Lamb-Dicke parameters.

All frequencies are stored and returned in angular units (rad/s).  The
axial potential is made dimensionless with the length scale
``l = (e^2 / (4 pi eps0 M omega_z^2))^(1/3)`` so equilibrium positions
are trap independent up to that scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.constants as const

from .errors import NoConvergence, ValidationError, ZigZagUnstable

__all__ = [
    "TrapConfig",
    "ChainGeometry",
    "ModeSet",
    "equilibrium_positions",
    "transverse_modes",
    "lamb_dicke",
]

_GRAD_TOL = 1e-10


@dataclass(frozen=True)
class TrapConfig:
    """Static trap parameters.

    Parameters
    ----------
    omega_x, omega_y : float
        Transverse secular frequencies of the X' and Y' principal axes
        (rad/s).
    omega_z : float
        Axial secular frequency (rad/s).
    mass : float
        Ion mass (kg).
    delta_k : float
        Magnitude of the Raman wave-vector difference projected on the
        relevant principal axis (1/m).
    """

    omega_x: float
    omega_y: float
    omega_z: float
    mass: float
    delta_k: float = 0.0

    def __post_init__(self):
        for name in ("omega_x", "omega_y", "omega_z", "mass"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0", parameter=name)
        if self.delta_k < 0:
            raise ValidationError("delta_k must be >= 0", parameter="delta_k")

    @property
    def length_scale(self) -> float:
        """Chain length scale l = (e^2 / 4 pi eps0 M omega_z^2)^(1/3) in m."""
        coulomb = const.e**2 / (4 * np.pi * const.epsilon_0)
        return (coulomb / (self.mass * self.omega_z**2)) ** (1.0 / 3.0)

    def transverse_frequency(self, axis: str) -> float:
        if axis in ("X'", "x", "X"):
            return self.omega_x
        if axis in ("Y'", "y", "Y"):
            return self.omega_y
        raise ValidationError(f"unknown axis {axis!r}", parameter="axis")


@dataclass(frozen=True)
class ChainGeometry:
    """Equilibrium positions of a linear chain in units of the length scale."""

    n_ions: int
    positions: np.ndarray  # dimensionless, strictly increasing
    length_scale: float    # m

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, float))

    @property
    def positions_m(self) -> np.ndarray:
        return self.positions * self.length_scale


@dataclass(frozen=True)
class ModeSet:
    """Transverse normal modes of one principal axis.

    ``omega_m`` is sorted descending so index 0 is the center-of-mass
    mode.  ``b`` has ions on rows and modes on columns; each column is
    sign-fixed so its largest-magnitude component is positive.  ``eta``
    is filled by :func:`lamb_dicke` and inherits the sign of ``b``.
    """

    axis: str
    omega_m: np.ndarray           # rad/s, descending
    b: np.ndarray                 # N x N orthogonal
    eta: np.ndarray | None = None  # N x N, dimensionless
    _literal: bool = field(default=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "omega_m", np.atleast_1d(np.asarray(self.omega_m, float)))
        object.__setattr__(self, "b", np.atleast_2d(np.asarray(self.b, float)))
        if self.eta is not None:
            object.__setattr__(self, "eta", np.atleast_2d(np.asarray(self.eta, float)))
        if self.b.shape[1] != self.omega_m.size:
            raise ValidationError("b must have one column per mode")
        if np.any(np.diff(self.omega_m) > 0):
            raise ValidationError("omega_m must be sorted descending")

    @property
    def n_ions(self) -> int:
        return self.b.shape[0]

    @property
    def n_modes(self) -> int:
        return self.omega_m.size

    @classmethod
    def from_literal(cls, omega_m, b, eta, axis: str = "X'") -> "ModeSet":
        """Build a ModeSet directly from literal arrays.

        Supports dimensionless unit systems (e.g. a single mode at
        omega_m = 2 pi x 1) where no TrapConfig exists.  No
        orthogonality is enforced on ``b``.
        """
        return cls(axis=axis, omega_m=np.asarray(omega_m, float),
                   b=np.atleast_2d(np.asarray(b, float)),
                   eta=np.atleast_2d(np.asarray(eta, float)), _literal=True)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "omega_m_rad_s": self.omega_m.tolist(),
            "b": self.b.tolist(),
            "eta": None if self.eta is None else self.eta.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _potential_gradient(u: np.ndarray) -> np.ndarray:
    # dimensionless axial potential: sum(u^2)/2 + sum_{i<j} 1/|u_i - u_j|
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return u - np.sum(np.sign(d) / d**2, axis=1)


def _potential_hessian(u: np.ndarray) -> np.ndarray:
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    inv3 = 1.0 / np.abs(d) ** 3
    hess = -2.0 * inv3
    np.fill_diagonal(hess, 1.0 + 2.0 * inv3.sum(axis=1))
    return hess


def _coulomb_inv3(u: np.ndarray) -> np.ndarray:
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return 1.0 / np.abs(d) ** 3


def equilibrium_positions(n_ions: int, trap: TrapConfig) -> ChainGeometry:
    """Solve the linear-chain equilibrium in the dimensionless axial potential.

    Damped Newton iteration on the potential gradient, started from a
    uniform chain whose span follows the ``2 l (0.48 + 0.37 ln N)``
    heuristic.  Converges for N up to at least 50.

    Raises
    ------
    NoConvergence
        If the gradient max-norm cannot be brought below 1e-10.
    ZigZagUnstable
        If the resulting chain is transversally unstable for either axis.
    """
    if n_ions < 1:
        raise ValidationError("n_ions must be >= 1", parameter="n_ions")
    if n_ions == 1:
        u = np.zeros(1)
    else:
        span = 2.0 * (0.48 + 0.37 * np.log(n_ions))
        u = np.linspace(-span / 2.0, span / 2.0, n_ions)
        g = _potential_gradient(u)
        for _ in range(200):
            if np.max(np.abs(g)) < _GRAD_TOL:
                break
            step = np.linalg.solve(_potential_hessian(u), -g)
            # backtracking keeps the ion ordering and shrinks |g|
            lam = 1.0
            g_norm = np.linalg.norm(g)
            for _ in range(60):
                trial = u + lam * step
                if np.all(np.diff(trial) > 0):
                    g_trial = _potential_gradient(trial)
                    if np.linalg.norm(g_trial) < g_norm:
                        u, g = trial, g_trial
                        break
                lam *= 0.5
            else:
                raise NoConvergence("line search stalled in equilibrium solver")
        else:
            raise NoConvergence("Newton iteration did not reach gradient tolerance")
    geometry = ChainGeometry(n_ions=n_ions, positions=u,
                             length_scale=trap.length_scale)
    for axis in ("X'", "Y'"):
        _transverse_eigensystem(geometry, trap, axis)  # raises if unstable
    return geometry


def _transverse_eigensystem(geometry: ChainGeometry, trap: TrapConfig, axis: str):
    omega_t = trap.transverse_frequency(axis)
    ratio2 = (omega_t / trap.omega_z) ** 2
    inv3 = _coulomb_inv3(geometry.positions)
    hess = inv3.copy()
    np.fill_diagonal(hess, ratio2 - inv3.sum(axis=1))
    eigvals, eigvecs = np.linalg.eigh(hess)
    if eigvals[0] <= 0:
        raise ZigZagUnstable(
            f"axis {axis}: lowest squared transverse mode "
            f"{eigvals[0] * trap.omega_z**2:.3e} (rad/s)^2 is not positive")
    return eigvals, eigvecs


def transverse_modes(geometry: ChainGeometry, trap: TrapConfig, axis: str) -> ModeSet:
    """Normal modes of one transverse axis.

    Returns a :class:`ModeSet` with frequencies sorted descending
    (center-of-mass first) and columns sign-fixed.  ``eta`` is left
    unset; fill it with :func:`lamb_dicke`.
    """
    eigvals, eigvecs = _transverse_eigensystem(geometry, trap, axis)
    order = np.argsort(eigvals)[::-1]
    omega_m = trap.omega_z * np.sqrt(eigvals[order])
    b = eigvecs[:, order]
    # deterministic sign: largest-magnitude component of each mode positive
    for m in range(b.shape[1]):
        k = np.argmax(np.abs(b[:, m]))
        if b[k, m] < 0:
            b[:, m] = -b[:, m]
    return ModeSet(axis=axis, omega_m=omega_m, b=b)


def lamb_dicke(modes: ModeSet, trap: TrapConfig) -> ModeSet:
    """Fill the Lamb-Dicke matrix eta_im = b_im dk sqrt(hbar / 2 M omega_m)."""
    if trap.delta_k <= 0:
        raise ValidationError("delta_k must be > 0 to compute eta",
                              parameter="delta_k")
    zero_point = np.sqrt(const.hbar / (2.0 * trap.mass * modes.omega_m))
    eta = modes.b * trap.delta_k * zero_point[None, :]
    return ModeSet(axis=modes.axis, omega_m=modes.omega_m, b=modes.b, eta=eta)
