"""Parameter set shared by the map family and every certificate."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

from .profiles import Phi, Psi, build_phi, build_psi


class ParamError(ValueError):
    """A parameter set violates one of the construction inequalities.

    ``invariant`` names the violated inequality, e.g. ``"delta < 2*theta"``.
    """

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = f"parameter invariant violated: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(frozen=True)
class MapParams:
    """Scales of the construction.

    theta, delta
        widths of the x-bump ``psi`` and the y-profile ``phi``.
    r
        radius of the sup-norm balls around (1/16, 1/4), (1/2, 1/2), (0, 0).
    epsilon
        C2 budget for the flattening diffeomorphism.
    b, beta
        half-widths of the flattening window (in the image) and of the
        critical-graph window (in the domain).
    eta
        half-width of the collapse strip used by the destroyer.
    rho
        radius of the fold-image window; ``None`` until measured.
    a
        target cone aperture; certificates use ``a0 = a / 2``.
    """

    theta: float = 0.01
    delta: float = 0.004
    r: float = 1.0 / 32.0
    epsilon: float = 1e-3
    b: float | None = None
    beta: float | None = None
    eta: float = 2e-4
    rho: float | None = None
    a: float = 2.0
    psi_peak: float = field(default=4.0, compare=True)

    def __post_init__(self):
        if self.b is None:
            object.__setattr__(self, "b", 0.4 * self.r)
        if self.beta is None:
            object.__setattr__(self, "beta", min(self.theta / 8.0, self.b / 10.0))
        self.validate()

    def validate(self):
        checks = [
            ("theta > 0", self.theta > 0),
            ("delta > 0", self.delta > 0),
            ("delta < 2*theta", self.delta < 2 * self.theta),
            ("2*theta < r", 2 * self.theta < self.r),
            ("r < 1/2", self.r < 0.5),
            ("epsilon > 0", self.epsilon > 0),
            ("beta > 0", self.beta > 0),
            ("8*beta < b", 8 * self.beta < self.b),
            ("2*b < r", 2 * self.b < self.r),
            ("beta <= theta/8", self.beta <= self.theta / 8.0 * (1 + 1e-12)),
            ("eta > 0", self.eta > 0),
            ("a > 0", self.a > 0),
        ]
        if self.rho is not None:
            checks.append(("eta < rho", self.eta < self.rho))
        for name, ok in checks:
            if not ok:
                raise ParamError(name, self._describe())

    def _describe(self):
        return ", ".join(f"{k}={v!r}" for k, v in asdict(self).items())

    def with_(self, **changes) -> "MapParams":
        return replace(self, **changes)

    @property
    def a0(self) -> float:
        return self.a / 2.0

    @property
    def y0(self) -> float:
        """Height of the two non-fold critical points."""
        return 0.25 + self.delta / 8.0

    @property
    def delta0(self) -> float:
        """Width of the bump used by the flattening map."""
        return self.r / 3.0

    @cached_property
    def psi(self) -> Psi:
        return build_psi(self.theta, peak=self.psi_peak)

    @cached_property
    def phi(self) -> Phi:
        return build_phi(self.delta)

    def to_json(self) -> dict:
        return asdict(self)
